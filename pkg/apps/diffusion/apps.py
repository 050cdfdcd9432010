from django.apps import AppConfig


class DiffusionConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.diffusion'
    verbose_name = 'Difusión de Movimiento'
