# apps/runlog/tests.py
import logging

from django.test import TestCase

from apps.pipeline.models import ExperimentRun

from .handlers import DatabaseLogHandler
from .local import RunContextFilter, get_current_run, run_context
from .models import LogEntry


class RunContextTests(TestCase):
    def test_context_is_restored(self):
        outer = ExperimentRun.objects.create(command='ablate')
        inner = ExperimentRun.objects.create(command='train')
        self.assertIsNone(get_current_run())
        with run_context(outer):
            with run_context(inner):
                self.assertEqual(get_current_run(), inner)
            self.assertEqual(get_current_run(), outer)
        self.assertIsNone(get_current_run())

    def test_filter_tags_records(self):
        run = ExperimentRun.objects.create(command='train')
        record = logging.LogRecord('apps.test', logging.INFO, __file__, 1, 'hola', None, None)
        with run_context(run):
            self.assertTrue(RunContextFilter().filter(record))
        self.assertEqual(record.run, run)


class DatabaseLogHandlerTests(TestCase):
    def setUp(self):
        self.logger = logging.getLogger('apps.runlog.tests.handler')
        self.logger.setLevel(logging.INFO)
        self.logger.propagate = False
        self.handler = DatabaseLogHandler()
        self.handler.addFilter(RunContextFilter())
        self.logger.addHandler(self.handler)

    def tearDown(self):
        self.logger.removeHandler(self.handler)

    def test_records_are_stored_with_their_run(self):
        run = ExperimentRun.objects.create(command='train', seed=3)
        with run_context(run):
            self.logger.warning('pérdida estancada')
        self.logger.info('sin ejecución')

        tagged = LogEntry.objects.get(message='pérdida estancada')
        self.assertEqual(tagged.run, run)
        self.assertEqual(tagged.level, 'WARNING')
        self.assertEqual(tagged.logger, 'apps.runlog.tests.handler')
        self.assertIsNone(LogEntry.objects.get(message='sin ejecución').run)
        self.assertEqual(run.log_entries.count(), 1)

    def test_unsaved_run_is_not_linked(self):
        with run_context(ExperimentRun(command='train')):
            self.logger.info('ejecución sin guardar')
        self.assertIsNone(LogEntry.objects.get(message='ejecución sin guardar').run)

    def test_handler_never_raises(self):
        record = logging.LogRecord('apps.test', logging.INFO, __file__, 1, 'falla %s %s', ('solo uno',), None)
        self.handler.emit(record)
        self.assertFalse(LogEntry.objects.filter(logger='apps.test').exists())
