# apps/pipeline/management/commands/reproduce.py

from django.core.management import call_command

from apps.pipeline.commands import PipelineCommand
from apps.pipeline.dataset import MANIFEST_NAME
from apps.pipeline.training import LAST_CHECKPOINT

DEFAULT_VARIANTS = ('parallel_cross', 'concat_self')


class Command(PipelineCommand):
    help = 'Reproduce el experimento completo: gen_data → train → eval → ablate.'
    command_name = 'reproduce'
    journaled = False

    def add_command_arguments(self, parser):
        parser.add_argument('--size', type=int, default=None, help='Registros del corpus sintético.')
        parser.add_argument('--steps', type=int, default=None, help='Pasos de entrenamiento (también por variante).')
        parser.add_argument('--k', type=int, default=None, help='Muestras por condición.')
        parser.add_argument('--variant', action='append', default=[],
                            help=f'Variantes de la ablación (por defecto {", ".join(DEFAULT_VARIANTS)}).')

    def run(self, config, options, entry):
        root = self.out_dir(options)
        common = {'config': options['config'], 'seed': options['seed'], 'workers': options['workers'],
                  'stdout': self.stdout, 'stderr': self.stderr}
        manifest = root / 'data' / MANIFEST_NAME

        self.stdout.write('[1/4] Generando el corpus')
        call_command('gen_data', out=str(root / 'data'), size=options['size'], **common)
        self.stdout.write('[2/4] Entrenando')
        call_command('train', manifest=str(manifest), out=str(root / 'train'), steps=options['steps'], **common)
        self.stdout.write('[3/4] Evaluando')
        call_command('eval', manifest=str(manifest), checkpoint=str(root / 'train' / LAST_CHECKPOINT),
                     out=str(root / 'eval'), k=options['k'], **common)
        self.stdout.write('[4/4] Ablación de fusión')
        call_command('ablate', manifest=str(manifest), variant=options['variant'] or list(DEFAULT_VARIANTS),
                     out=str(root / 'ablate'), k=options['k'], steps=options['steps'], **common)
        self.success(f'Reproducción completa en {root}')
