from django.apps import AppConfig


class AutogradConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.autograd'
    verbose_name = 'Tensores y Gradientes'
