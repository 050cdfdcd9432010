# apps/runlog/handlers.py
import logging
import threading

from .local import get_current_run

_guard = threading.local()


class DatabaseLogHandler(logging.Handler):
    def emit(self, record):
        if getattr(_guard, 'active', False):
            return
        _guard.active = True
        try:
            # Importación tardía para evitar problemas de dependencia circular
            from .models import LogEntry

            run = getattr(record, 'run', None) or get_current_run()
            LogEntry.objects.create(
                run=run if getattr(run, 'pk', None) else None,
                level=record.levelname,
                logger=record.name[:200],
                message=self.format(record),
                details={'module': record.module, 'line': record.lineno},
            )
        except Exception:
            # Evitar bucles infinitos si hay un error al guardar en la BD
            pass
        finally:
            _guard.active = False
