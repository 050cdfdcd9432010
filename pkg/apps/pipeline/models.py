# apps/pipeline/models.py
from django.db import models
from django.utils import timezone


class ExperimentRun(models.Model):
    STATUS_CHOICES = (
        ('running', 'En curso'),
        ('succeeded', 'Completada'),
        ('failed', 'Fallida'),
    )

    command = models.CharField(max_length=40, verbose_name="Comando")
    status = models.CharField(max_length=10, choices=STATUS_CHOICES, default='running', verbose_name="Estado")
    seed = models.BigIntegerField(default=0, verbose_name="Semilla")
    config_hash = models.CharField(max_length=16, blank=True, verbose_name="Hash de Configuración")
    fusion_kind = models.CharField(max_length=40, blank=True, verbose_name="Variante de Fusión")
    artifacts = models.JSONField(default=dict, blank=True, verbose_name="Artefactos")
    metrics = models.JSONField(default=dict, blank=True, verbose_name="Métricas")
    error_message = models.TextField(blank=True, verbose_name="Mensaje de Error")
    started_at = models.DateTimeField(auto_now_add=True, verbose_name="Inicio")
    finished_at = models.DateTimeField(null=True, blank=True, verbose_name="Fin")

    class Meta:
        verbose_name = "Ejecución de Experimento"
        verbose_name_plural = "Ejecuciones de Experimentos"
        ordering = ['-started_at', '-id']
        db_table = 'experiment_runs'

    def __str__(self):
        return f'{self.command} #{self.pk} ({self.get_status_display()})'

    def succeed(self, metrics=None, artifacts=None):
        self.status = 'succeeded'
        if metrics is not None:
            self.metrics = metrics
        if artifacts is not None:
            self.artifacts = artifacts
        self.finished_at = timezone.now()
        self.save()

    def fail(self, error):
        self.status = 'failed'
        self.error_message = str(error)
        self.finished_at = timezone.now()
        self.save()
