# apps/pipeline/management/commands/eval.py

from apps.evaluation.report import format_report_table
from apps.pipeline.assessment import REPORT_NAME, evaluate_checkpoint
from apps.pipeline.commands import PipelineCommand


class Command(PipelineCommand):
    help = 'Evalúa un checkpoint sobre la partición de prueba y escribe el reporte de métricas.'
    command_name = 'eval'

    def add_command_arguments(self, parser):
        parser.add_argument('--manifest', type=str, required=True)
        parser.add_argument('--checkpoint', type=str, required=True)
        parser.add_argument('--k', type=int, default=None, help='Muestras por condición (evaluation.k).')
        parser.add_argument('--ground-truth', action='store_true',
                            help='Evalúa los movimientos reales como si fueran generados.')

    def seed_overrides(self, seed):
        return {'evaluation': {'seed': seed}}

    def run(self, config, options, entry):
        out_dir = self.out_dir(options)
        report = evaluate_checkpoint(config, options['manifest'], options['checkpoint'], out_dir, k=options['k'],
                                     workers=options['workers'], ground_truth=options['ground_truth'])
        entry.artifacts = {'report': str(out_dir / REPORT_NAME)}
        entry.metrics = report.as_dict()
        self.stdout.write(format_report_table(report))
        self.success(f'Reporte escrito en {out_dir / REPORT_NAME}')
