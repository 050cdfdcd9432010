from django.apps import AppConfig


class RunlogConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.runlog'
    verbose_name = 'Bitácora de Ejecuciones'
