# apps/pipeline/journal.py
"""Registro de cada comando como ExperimentRun, con la bitácora asociada."""

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field

from django.db import DatabaseError

from apps.runlog.local import run_context

from .config import config_hash
from .models import ExperimentRun

logger = logging.getLogger(__name__)


@dataclass
class JournalEntry:
    """Lo que el comando quiere dejar registrado al terminar bien."""

    run: ExperimentRun = None
    metrics: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)


def _open_run(command, config, seed):
    try:
        return ExperimentRun.objects.create(
            command=command,
            seed=seed or 0,
            config_hash=config_hash(config) if config else '',
            fusion_kind=config['fusion']['kind'] if config else '',
        )
    except DatabaseError as exc:
        # Sin base de datos migrada el comando sigue; solo se pierde el registro
        logger.warning(f'No se pudo registrar la ejecución de {command}: {exc}')
        return None


def json_safe(values):
    """Sustituye los valores no finitos por None (JSON estricto en la base de datos)."""
    return {key: None if isinstance(value, float) and not math.isfinite(value) else value
            for key, value in values.items()}


@contextmanager
def recorded_run(command, config=None, seed=0):
    entry = JournalEntry(run=_open_run(command, config, seed))
    with run_context(entry.run):
        try:
            yield entry
        except BaseException as exc:
            if entry.run is not None:
                entry.run.fail(exc)
            raise
        if entry.run is not None:
            entry.run.succeed(metrics=json_safe(entry.metrics), artifacts=entry.artifacts)
