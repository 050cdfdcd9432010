# apps/runlog/local.py
import logging
import threading
from contextlib import contextmanager

_run_storage = threading.local()


def get_current_run():
    return getattr(_run_storage, 'run', None)


@contextmanager
def run_context(run):
    """Asocia `run` a los registros emitidos por este hilo mientras dure el bloque."""
    previous = get_current_run()
    _run_storage.run = run
    try:
        yield run
    finally:
        # Restaurar la ejecución externa (ablate anida una por variante)
        _run_storage.run = previous


class RunContextFilter(logging.Filter):
    """Añade `record.run` con la ejecución activa del hilo."""

    def filter(self, record):
        if not hasattr(record, 'run'):
            record.run = get_current_run()
        return True
