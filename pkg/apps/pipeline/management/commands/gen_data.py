# apps/pipeline/management/commands/gen_data.py

from apps.pipeline.commands import PipelineCommand
from apps.pipeline.config import with_overrides
from apps.pipeline.dataset import gen_dataset
from apps.pipeline.manifest import read_manifest


class Command(PipelineCommand):
    help = 'Genera el corpus sintético (escenas PLY, movimientos, descripciones y manifiesto).'
    command_name = 'gen_data'

    def add_command_arguments(self, parser):
        parser.add_argument('--size', type=int, default=None, help='Número de registros (data.corpus_size).')

    def seed_overrides(self, seed):
        return {'data': {'seed': seed}}

    def load_config(self, options):
        config = super().load_config(options)
        if options['size'] is not None:
            config = with_overrides(config, data={'corpus_size': options['size']})
        return config

    def run(self, config, options, entry):
        out_dir = self.out_dir(options)
        path = gen_dataset(out_dir, config, workers=options['workers'])
        manifest = read_manifest(path, check_files=False)
        entry.artifacts = {'manifest': str(path)}
        entry.metrics = {'records': len(manifest.records), 'test_records': len(manifest.split('test'))}
        self.success(f'Corpus de {len(manifest.records)} registros escrito en {out_dir} (manifiesto: {path})')
