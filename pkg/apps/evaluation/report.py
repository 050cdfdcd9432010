# apps/evaluation/report.py
"""
MetricsReport: todas las métricas de una evaluación, su serialización JSON
con orden de claves fijo y la tabla legible.
"""

import json
from dataclasses import dataclass, fields
from pathlib import Path

from rest_framework import serializers

REPORT_KEYS = (
    'non_collision', 'contact', 'apd_t', 'std_t', 'apd_p', 'std_p', 'apd_m', 'std_m',
    'fid', 'r_score', 'n_conditions', 'k_per_condition', 'config_hash',
)
P_SCORE_NOTE = 'no calculable (requiere un estudio con usuarios)'


@dataclass(frozen=True)
class MetricsReport:
    non_collision: float
    contact: float
    apd_t: float
    std_t: float
    apd_p: float
    std_p: float
    apd_m: float
    std_m: float
    fid: float
    r_score: float
    n_conditions: int
    k_per_condition: int
    config_hash: str

    def as_dict(self):
        return {name: getattr(self, name) for name in REPORT_KEYS}


class MetricsReportSerializer(serializers.Serializer):
    non_collision = serializers.FloatField(min_value=0.0, max_value=1.0)
    contact = serializers.FloatField(min_value=0.0, max_value=1.0)
    apd_t = serializers.FloatField(min_value=0.0)
    std_t = serializers.FloatField(min_value=0.0)
    apd_p = serializers.FloatField(min_value=0.0)
    std_p = serializers.FloatField(min_value=0.0)
    apd_m = serializers.FloatField(min_value=0.0)
    std_m = serializers.FloatField(min_value=0.0)
    fid = serializers.FloatField(min_value=0.0)
    r_score = serializers.FloatField(min_value=0.0, max_value=1.0)
    n_conditions = serializers.IntegerField(min_value=0)
    k_per_condition = serializers.IntegerField(min_value=2)
    config_hash = serializers.CharField(max_length=64)

    def validate(self, data):
        unknown = set(self.initial_data) - set(REPORT_KEYS)
        if unknown:
            raise serializers.ValidationError(f'Claves desconocidas en el reporte: {sorted(unknown)}')
        return data


def dumps_report(report: MetricsReport):
    return json.dumps(report.as_dict(), indent=2) + '\n'


def loads_report(text):
    serializer = MetricsReportSerializer(data=json.loads(text))
    serializer.is_valid(raise_exception=True)
    data = serializer.validated_data
    return MetricsReport(**{f.name: data[f.name] for f in fields(MetricsReport)})


def write_report(path, report: MetricsReport):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(report), encoding='utf-8')
    return path


def read_report(path):
    return loads_report(Path(path).read_text(encoding='utf-8'))


def format_report_table(report: MetricsReport):
    """Tabla de dos columnas para la terminal."""
    rows = [
        ('No-colisión ↑', f'{report.non_collision:.4f}'),
        ('Contacto ↑', f'{report.contact:.4f}'),
        ('APD-t / std-t', f'{report.apd_t:.4f} / {report.std_t:.4f}'),
        ('APD-p / std-p', f'{report.apd_p:.4f} / {report.std_p:.4f}'),
        ('APD-m / std-m', f'{report.apd_m:.4f} / {report.std_m:.4f}'),
        ('FID ↓', f'{report.fid:.4f}'),
        ('R-score ↑', f'{report.r_score:.4f}'),
        ('p-score', P_SCORE_NOTE),
        ('Condiciones × K', f'{report.n_conditions} × {report.k_per_condition}'),
        ('Hash de configuración', report.config_hash),
    ]
    width = max(len(name) for name, _ in rows)
    return '\n'.join(f'{name.ljust(width)}  {value}' for name, value in rows) + '\n'


COMPARISON_COLUMNS = ('variant',) + REPORT_KEYS[:10] + ('final_loss',)


def format_comparison_table(rows):
    """Una fila por variante de fusión con todas las métricas y la pérdida final."""
    lines = ['\t'.join(COMPARISON_COLUMNS)]
    for row in rows:
        cells = [row['variant']] + [
            'nan' if row[key] is None else f'{row[key]:.6f}' for key in COMPARISON_COLUMNS[1:]]
        lines.append('\t'.join(cells))
    return '\n'.join(lines) + '\n'
