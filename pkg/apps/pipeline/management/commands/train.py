# apps/pipeline/management/commands/train.py

from apps.pipeline.commands import PipelineCommand
from apps.pipeline.training import train


class Command(PipelineCommand):
    help = 'Entrena el modelo de difusión condicionado por escena y texto.'
    command_name = 'train'

    def add_command_arguments(self, parser):
        parser.add_argument('--manifest', type=str, required=True, help='Manifiesto JSON Lines del corpus.')
        parser.add_argument('--resume', type=str, default=None, help='Checkpoint desde el que continuar.')
        parser.add_argument('--steps', type=int, default=None, help='Pasos totales (sustituye optim.steps).')

    def seed_overrides(self, seed):
        return {'optim': {'seed': seed}}

    def run(self, config, options, entry):
        result = train(config, options['manifest'], self.out_dir(options), resume=options['resume'],
                       steps=options['steps'], workers=options['workers'])
        entry.artifacts = {'checkpoint': str(result.checkpoint), 'dir': str(result.out_dir)}
        entry.metrics = {'final_loss': result.final_loss, 'steps': len(result.losses)}
        self.success(f'Entrenamiento terminado: pérdida final {result.final_loss:.5f}, checkpoint {result.checkpoint}')
