# apps/pipeline/ablation.py
"""
Comparación de variantes de fusión: cada una se entrena con los mismos datos,
orden de lotes y semillas, y se evalúa con el mismo protocolo.
"""

import logging
from pathlib import Path

from django.core.exceptions import ValidationError

from apps.evaluation.report import COMPARISON_COLUMNS, format_comparison_table
from apps.fusion.condition import FUSION_KINDS

from .assessment import evaluate_checkpoint
from .config import with_overrides
from .journal import recorded_run
from .models import ExperimentRun
from .training import train

logger = logging.getLogger(__name__)

TABLE_NAME = 'comparison.tsv'


def write_table(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_comparison_table(rows), encoding='utf-8')
    return path


def ablate(config, manifest_path, variants, out_dir, seed=None, k=None, workers=1, steps=None):
    """
    Una fila por variante, en el orden pedido. Si una variante falla, la tabla
    parcial con las filas terminadas queda escrita antes de propagar el error.
    """
    variants = list(variants)
    if len(variants) < 2:
        raise ValidationError('La ablación necesita al menos dos variantes.')
    unknown = [v for v in variants if v not in FUSION_KINDS]
    if unknown:
        raise ValidationError(f'Variantes de fusión desconocidas: {unknown}. Opciones: {list(FUSION_KINDS)}')

    out_dir = Path(out_dir)
    table = out_dir / TABLE_NAME
    overrides = {'optim': {'seed': seed}, 'evaluation': {'seed': seed}} if seed is not None else {}
    rows = []
    for position, variant in enumerate(variants):
        variant_config = with_overrides(config, fusion={'kind': variant}, **overrides)
        run_dir = out_dir / f'{position:02d}_{variant}'
        try:
            with recorded_run('ablate', variant_config, variant_config['optim']['seed']) as entry:
                result = train(variant_config, manifest_path, run_dir, steps=steps, workers=workers)
                report = evaluate_checkpoint(variant_config, manifest_path, result.checkpoint, run_dir, k=k,
                                             workers=workers)
                row = dict(report.as_dict(), variant=variant, final_loss=result.final_loss)
                entry.metrics = row
                entry.artifacts = {'checkpoint': str(result.checkpoint), 'dir': str(run_dir)}
        except Exception:
            write_table(table, rows)
            logger.error(f"La variante '{variant}' falló; tabla parcial con {len(rows)} filas en {table}")
            raise
        rows.append(row)
        write_table(table, rows)
        logger.info(f"Variante '{variant}' terminada ({position + 1}/{len(variants)})")
    return rows, table


def rows_from_runs(run_ids):
    """Filas de la tabla reconstruidas desde ExperimentRun, en el orden de `run_ids`."""
    runs = ExperimentRun.objects.in_bulk(run_ids)
    missing = [run_id for run_id in run_ids if run_id not in runs]
    if missing:
        raise ValidationError(f'No existen las ejecuciones {missing}.')
    rows = []
    for run_id in run_ids:
        run = runs[run_id]
        if run.command != 'ablate' or run.status != 'succeeded':
            raise ValidationError(f'La ejecución {run_id} no es una variante de ablación completada.')
        absent = [key for key in COMPARISON_COLUMNS if key not in run.metrics]
        if absent:
            raise ValidationError(f'La ejecución {run_id} no registró {absent}.')
        rows.append(run.metrics)
    return rows
