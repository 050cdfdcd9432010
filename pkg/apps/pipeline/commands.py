# apps/pipeline/commands.py
"""
Base común de los comandos del pipeline: argumentos compartidos, carga de la
configuración, registro de la ejecución y códigos de salida
(0 éxito, 1 error de validación, 2 fallo en tiempo de ejecución).
"""

import logging
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from .config import load_run_config, with_overrides
from .journal import recorded_run

logger = logging.getLogger(__name__)


def error_text(exc):
    if isinstance(exc, ValidationError):
        return '; '.join(exc.messages)
    if isinstance(exc, serializers.ValidationError):
        return str(exc.detail)
    return str(exc) or exc.__class__.__name__


class PipelineCommand(BaseCommand):
    """
    Las subclases implementan `run(config, options, entry)` y, si aceptan
    --seed, `seed_overrides(seed)` con las secciones de la configuración que
    la semilla sustituye.
    """

    command_name = ''
    config_required = True
    journaled = True

    def add_arguments(self, parser):
        parser.add_argument('--config', type=str, default=None, help='RunConfig en JSON (claves omitidas: valores por defecto).')
        parser.add_argument('--seed', type=int, default=None, help='Semilla; sustituye la de la configuración.')
        parser.add_argument('--out', type=str, default=None, help='Directorio de salida.')
        parser.add_argument('--workers', type=int, default=settings.MOTION_DEFAULT_WORKERS,
                            help='Hilos para generación, carga y evaluación.')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def seed_overrides(self, seed):
        return {}

    def out_dir(self, options):
        return Path(options['out']) if options['out'] else Path(settings.MOTION_RUNS_DIR) / self.command_name

    def load_config(self, options):
        if options['config'] is None and not self.config_required:
            return None
        config = load_run_config(options['config'])
        if options['seed'] is not None:
            config = with_overrides(config, **self.seed_overrides(options['seed']))
        return config

    def handle(self, *args, **options):
        if options['workers'] < 1:
            raise CommandError('--workers debe ser al menos 1.', returncode=1)
        logger.info(f'Iniciando {self.command_name}')
        try:
            config = self.load_config(options)
            if not self.journaled:
                return self.run(config, options, None)
            with recorded_run(self.command_name, config, options['seed'] or 0) as entry:
                return self.run(config, options, entry)
        except CommandError:
            raise
        except (ValidationError, serializers.ValidationError) as exc:
            logger.error(f'{self.command_name}: error de validación: {error_text(exc)}')
            raise CommandError(f'Error de validación: {error_text(exc)}', returncode=1)
        except Exception as exc:
            logger.exception(f'{self.command_name}: fallo en ejecución')
            raise CommandError(f'Fallo en ejecución: {error_text(exc)}', returncode=2)

    def run(self, config, options, entry):
        raise NotImplementedError

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))
