# apps/pipeline/management/commands/import_laserhuman.py

from apps.pipeline.commands import PipelineCommand
from apps.pipeline.importer import import_laserhuman


class Command(PipelineCommand):
    help = 'Importa escenas, movimientos y descripciones con el esquema de LaserHuman a un manifiesto.'
    command_name = 'import_laserhuman'

    def add_command_arguments(self, parser):
        parser.add_argument('index', type=str, help='Índice JSON Lines (un registro por secuencia).')

    def run(self, config, options, entry):
        out_dir = self.out_dir(options)
        path, records = import_laserhuman(options['index'], out_dir, config)
        entry.artifacts = {'manifest': str(path)}
        entry.metrics = {'records': len(records)}
        if not records:
            self.stdout.write(self.style.WARNING(f'El índice está vacío; manifiesto vacío en {path}'))
            return
        self.success(f'{len(records)} registros importados en {out_dir}')
