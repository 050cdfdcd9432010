# apps/pipeline/management/commands/ablate.py

from django.core.exceptions import ValidationError

from apps.pipeline.ablation import TABLE_NAME, ablate, rows_from_runs, write_table
from apps.pipeline.commands import PipelineCommand


class Command(PipelineCommand):
    help = 'Compara variantes de fusión: entrena y evalúa cada una con los mismos datos y semillas.'
    command_name = 'ablate'
    # Cada variante se registra por separado
    journaled = False

    def add_command_arguments(self, parser):
        parser.add_argument('--manifest', type=str, default=None)
        parser.add_argument('--variant', action='append', default=[], help='Variante de fusión (repetible).')
        parser.add_argument('--k', type=int, default=None, help='Muestras por condición.')
        parser.add_argument('--steps', type=int, default=None, help='Pasos de entrenamiento por variante.')
        parser.add_argument('--from-runs', type=int, nargs='+', default=None,
                            help='Regenera la tabla desde ejecuciones registradas, sin entrenar.')

    def run(self, config, options, entry):
        out_dir = self.out_dir(options)
        if options['from_runs']:
            table = write_table(out_dir / TABLE_NAME, rows_from_runs(options['from_runs']))
            self.success(f'Tabla regenerada desde {len(options["from_runs"])} ejecuciones: {table}')
            return
        if options['manifest'] is None:
            raise ValidationError('Se necesita --manifest (o --from-runs).')
        rows, table = ablate(config, options['manifest'], options['variant'], out_dir, seed=options['seed'],
                             k=options['k'], workers=options['workers'], steps=options['steps'])
        self.stdout.write(table.read_text(encoding='utf-8'))
        self.success(f'Comparación de {len(rows)} variantes escrita en {table}')
