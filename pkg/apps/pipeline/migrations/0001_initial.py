from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(max_length=40, verbose_name='Comando')),
                ('status', models.CharField(choices=[('running', 'En curso'), ('succeeded', 'Completada'), ('failed', 'Fallida')], default='running', max_length=10, verbose_name='Estado')),
                ('seed', models.BigIntegerField(default=0, verbose_name='Semilla')),
                ('config_hash', models.CharField(blank=True, max_length=16, verbose_name='Hash de Configuración')),
                ('fusion_kind', models.CharField(blank=True, max_length=40, verbose_name='Variante de Fusión')),
                ('artifacts', models.JSONField(blank=True, default=dict, verbose_name='Artefactos')),
                ('metrics', models.JSONField(blank=True, default=dict, verbose_name='Métricas')),
                ('error_message', models.TextField(blank=True, verbose_name='Mensaje de Error')),
                ('started_at', models.DateTimeField(auto_now_add=True, verbose_name='Inicio')),
                ('finished_at', models.DateTimeField(blank=True, null=True, verbose_name='Fin')),
            ],
            options={
                'verbose_name': 'Ejecución de Experimento',
                'verbose_name_plural': 'Ejecuciones de Experimentos',
                'db_table': 'experiment_runs',
                'ordering': ['-started_at', '-id'],
            },
        ),
    ]
