from django.apps import AppConfig


class LanguageConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.language'
    verbose_name = 'Texto y Descripciones'
