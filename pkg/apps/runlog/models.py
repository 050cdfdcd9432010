# apps/runlog/models.py
from django.db import models


class LogEntry(models.Model):
    LEVEL_CHOICES = (
        ('DEBUG', 'Debug'),
        ('INFO', 'Info'),
        ('WARNING', 'Warning'),
        ('ERROR', 'Error'),
        ('CRITICAL', 'Critical'),
    )

    run = models.ForeignKey(
        'pipeline.ExperimentRun',
        on_delete=models.SET_NULL,
        null=True,
        blank=True,
        verbose_name="Ejecución",
        related_name="log_entries"
    )
    level = models.CharField(
        max_length=10,
        choices=LEVEL_CHOICES,
        default='INFO',
        verbose_name="Nivel"
    )
    logger = models.CharField(max_length=200, blank=True, verbose_name="Logger")
    message = models.TextField(verbose_name="Mensaje")
    timestamp = models.DateTimeField(auto_now_add=True, verbose_name="Marca de Tiempo")
    details = models.JSONField(default=dict, blank=True, verbose_name="Detalles Adicionales")

    class Meta:
        verbose_name = "Registro de Ejecución"
        verbose_name_plural = "Registros de Ejecución"
        ordering = ['-timestamp', '-id']
        db_table = 'run_log_entries'

    def __str__(self):
        return f'[{self.timestamp.strftime("%Y-%m-%d %H:%M")}] [{self.level}] {self.message}'
