# apps/pipeline/assessment.py
"""
Evaluación de un checkpoint sobre la partición de prueba: K muestras por
condición y todas las métricas del reporte.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from apps.diffusion.model import ConditionInput
from apps.diffusion.sampler import features_to_motion
from apps.evaluation.diversity import apd_std
from apps.evaluation.frechet import fid
from apps.evaluation.matching import train_matching_model
from apps.evaluation.plausibility import contact_score, non_collision_score
from apps.evaluation.report import MetricsReport, format_report_table, write_report
from apps.evaluation.retrieval import r_score
from apps.language.captions import parse_caption
from apps.language.vocab import TextPrompt
from apps.motion.skeleton import skeleton_from_config

from .config import config_hash
from .dataset import load_corpus
from .manifest import read_manifest
from .sampling import generate_samples
from .training import restore_model

logger = logging.getLogger(__name__)

REPORT_NAME = 'report.json'
TABLE_NAME = 'report.txt'


def caption_key(text):
    """Etiqueta semántica si la descripción sale de una plantilla; si no, el texto."""
    try:
        return '{}:{}'.format(*parse_caption(text))
    except ValidationError:
        return text


def matching_corpus(items):
    """Un par (rasgos, descripción) por cada descripción de cada registro."""
    sequences, captions = [], []
    for item in items:
        for caption in item.record.captions:
            sequences.append(item.features)
            captions.append(caption)
    return sequences, captions


def fit_matching_model(train_items, vocab, evaluation):
    sequences, captions = matching_corpus(train_items)
    return train_matching_model(
        sequences, captions, vocab, seed=evaluation['seed'], steps=evaluation['matching_steps'],
        batch_size=evaluation['matching_batch'], lr=evaluation['matching_lr'], width=evaluation['matching_width'],
        embed_width=evaluation['embed_width'], min_pairs=evaluation['min_pairs'],
    )


def retrieval_score(motions, captions, matching_model, vocab, pool_size, seed):
    keys = [caption_key(c) for c in captions]
    distinct = len(set(keys))
    if distinct < 2:
        raise ValidationError('R-score necesita al menos dos descripciones distintas en la prueba.')
    pool = min(pool_size, distinct)
    if pool < pool_size:
        logger.warning(f'R-score: grupos de {pool} (solo hay {distinct} descripciones distintas)')
    return r_score([m.features for m in motions], captions, matching_model, vocab, pool, seed, keys)


def evaluate_checkpoint(config, manifest_path, checkpoint_path, out_dir, k=None, seed=None, workers=1,
                        ground_truth=False):
    """
    Devuelve el MetricsReport y lo escribe (JSON y tabla) en `out_dir`. Con
    `ground_truth` los movimientos reales ocupan el lugar de las muestras.
    """
    evaluation = config['evaluation']
    k = evaluation['k'] if k is None else k
    seed = evaluation['seed'] if seed is None else seed
    if k < 2:
        raise ValidationError('La diversidad requiere K ≥ 2 muestras por condición.')

    trained, _ = restore_model(checkpoint_path, config)
    manifest = read_manifest(manifest_path)
    skeleton = skeleton_from_config(config['skeleton'])
    data = config['data']
    train_items = load_corpus(manifest, config, 'train', workers)
    test_items = load_corpus(manifest, config, 'test', workers)
    if evaluation['num_conditions']:
        test_items = test_items[:evaluation['num_conditions']]
    if not test_items:
        raise ValidationError('El manifiesto no tiene registros de prueba.')

    guidance = config['diffusion']['guidance_scale']

    def motions_for(index):
        item = test_items[index]
        if ground_truth:
            return [features_to_motion(item.features, fps=data['fps'], num_joints=skeleton.joint_count)] * k
        condition = ConditionInput(f_p=item.f_p, prompt=TextPrompt.from_text(item.record.captions[0], trained.vocab))
        return generate_samples(trained, condition, k, seed, data['num_frames'], guidance, data['fps'], key=(index,))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        samples = list(pool.map(motions_for, range(len(test_items))))
    logger.info(f'{len(test_items)} condiciones × {k} muestras generadas')

    flat = [m for group in samples for m in group]
    scenes = [item.scene for item, group in zip(test_items, samples) for _ in group]
    captions = [item.record.captions[0] for item, group in zip(test_items, samples) for _ in group]
    collision = evaluation['collision_threshold']
    non_collision = float(np.mean([
        non_collision_score(m, skeleton, s, collision) for m, s in zip(flat, scenes)]))
    contact = contact_score(flat, skeleton, scenes, evaluation['contact_threshold'])
    diversity = {mode: apd_std(samples, mode, skeleton) for mode in ('t', 'p', 'm')}

    matching = fit_matching_model(train_items, trained.vocab, evaluation)
    # Con la verdad de referencia cada condición entra una sola vez, como en el conjunto de referencia
    generated = [group[0] for group in samples] if ground_truth else flat
    frechet = fid([m.features for m in generated], [item.features for item in test_items], matching)
    retrieval = retrieval_score(flat, captions, matching, trained.vocab, evaluation['pool_size'], seed)

    report = MetricsReport(
        non_collision=non_collision, contact=contact,
        apd_t=diversity['t'][0], std_t=diversity['t'][1],
        apd_p=diversity['p'][0], std_p=diversity['p'][1],
        apd_m=diversity['m'][0], std_m=diversity['m'][1],
        fid=frechet, r_score=retrieval, n_conditions=len(test_items), k_per_condition=k,
        config_hash=config_hash(config),
    )
    out_dir = Path(out_dir)
    write_report(out_dir / REPORT_NAME, report)
    (out_dir / TABLE_NAME).write_text(format_report_table(report), encoding='utf-8')
    logger.info(f'Reporte escrito en {out_dir / REPORT_NAME}: FID {frechet:.4f}, R-score {retrieval:.4f}')
    return report
