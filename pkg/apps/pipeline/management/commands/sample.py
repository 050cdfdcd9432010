# apps/pipeline/management/commands/sample.py

from apps.pipeline.commands import PipelineCommand
from apps.pipeline.sampling import sample_cmd


class Command(PipelineCommand):
    help = 'Genera K movimientos para una escena y una descripción.'
    command_name = 'sample'
    config_required = False

    def add_command_arguments(self, parser):
        parser.add_argument('--checkpoint', type=str, required=True)
        parser.add_argument('--scene', type=str, required=True, help='Escena PLY (estática).')
        parser.add_argument('--frames', nargs='*', default=[], help='PLY de los fotogramas dinámicos, en orden.')
        parser.add_argument('--caption', type=str, required=True)
        parser.add_argument('--k', type=int, default=3, help='Número de muestras.')
        parser.add_argument('--anchor', type=float, nargs=3, default=[0.0, 0.0, 0.0],
                            help='Punto de la escena donde empieza el movimiento.')

    def run(self, config, options, entry):
        out_dir = self.out_dir(options)
        paths = sample_cmd(options['checkpoint'], options['scene'], options['caption'], options['k'],
                           options['seed'] or 0, out_dir, config=config, frame_paths=options['frames'],
                           anchor=tuple(options['anchor']), workers=options['workers'])
        entry.artifacts = {'samples': [str(p) for p in paths]}
        entry.metrics = {'count': len(paths)}
        self.success(f'{len(paths)} muestras escritas en {out_dir}')
