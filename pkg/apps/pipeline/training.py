# apps/pipeline/training.py
"""
Entrenamiento del modelo de difusión sobre un manifiesto: lotes sembrados por
(semilla, paso), registro de pérdidas en CSV, checkpoints periódicos y
reanudación idéntica bit a bit.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from apps.autograd.exceptions import NonFiniteError
from apps.autograd.optim import Adam
from apps.autograd.tensor import GradTape
from apps.diffusion.checkpoint import load_checkpoint, save_checkpoint, verify_checkpoint
from apps.diffusion.losses import REPORT_FIELDS, LossWeights, TrainingBatch, training_loss
from apps.diffusion.model import ConditionInput, ModelShape, MotionDiffusionModel
from apps.diffusion.normalizer import FeatureNormalizer
from apps.diffusion.schedule import build_schedule
from apps.language.vocab import TextPrompt, Vocabulary
from apps.motion.representation import PoseFeatureLayout
from apps.motion.skeleton import skeleton_from_config

from .config import config_hash
from .dataset import load_corpus
from .manifest import read_manifest

logger = logging.getLogger(__name__)

MODEL_DTYPE = np.float32
LOSS_LOG = 'loss.csv'
LAST_CHECKPOINT = 'last.stmd'
LOG_COLUMNS = ('step',) + REPORT_FIELDS


def model_shape(config, vocab: Vocabulary):
    skeleton = skeleton_from_config(config['skeleton'])
    model = config['model']
    return ModelShape(
        feature_width=PoseFeatureLayout(skeleton.joint_count).width,
        vocab_size=len(vocab),
        width=model['width'],
        text_width=model['text_width'],
        cond_width=model['cond_width'],
        heads=model['heads'],
        text_blocks=model['text_blocks'],
        denoiser_layers=model['denoiser_layers'],
        neighbours=model['neighbours'],
        global_points=model['global_points'],
        max_frames=config['data']['num_frames'],
        fusion_kind=config['fusion']['kind'],
        pad_id=vocab.pad_id,
    )


def schedule_for(config):
    diffusion = config['diffusion']
    return build_schedule(diffusion['steps'], diffusion['beta_start'], diffusion['beta_end'])


def checkpoint_meta(config, vocab, shape: ModelShape, step):
    return {
        'config_hash': config_hash(config),
        'fusion_kind': shape.fusion_kind,
        'model_shape': shape.as_dict(),
        'schedule': schedule_for(config).as_dict(),
        'seed': config['optim']['seed'],
        'step': step,
        'fps': config['data']['fps'],
        'vocab': list(vocab.tokens),
    }


@dataclass
class TrainedModel:
    """Lo necesario para muestrear: modelo, normalizador, vocabulario y metadatos del checkpoint."""

    model: MotionDiffusionModel
    normalizer: FeatureNormalizer
    vocab: Vocabulary
    meta: dict


def restore_model(path, config=None):
    """Reconstruye el modelo de un checkpoint; con `config`, exige el mismo hash y variante."""
    checkpoint = load_checkpoint(path)
    if config is not None:
        verify_checkpoint(checkpoint, config_hash(config), config['fusion']['kind'])
    meta = checkpoint.meta
    shape = ModelShape(**meta['model_shape'])
    model = MotionDiffusionModel(shape, np.random.default_rng(0), MODEL_DTYPE)
    model.load_state_dict(checkpoint.section('model'))
    normalizer = FeatureNormalizer.from_state(checkpoint.tensors)
    return TrainedModel(model, normalizer, Vocabulary(meta['vocab']), meta), checkpoint


def batch_arrays(items, chosen, normalizer, num_frames):
    """x0 normalizado B×N×d con ceros en el relleno y la máscara de validez B×N."""
    width = items[0].features.shape[1]
    x0 = np.zeros((len(chosen), num_frames, width))
    valid = np.zeros((len(chosen), num_frames), dtype=bool)
    for row, index in enumerate(chosen):
        features = items[index].features[:num_frames]
        x0[row, :len(features)] = normalizer.normalize(features)
        valid[row, :len(features)] = True
    return x0, valid


def _read_log(path, upto):
    if not path.exists():
        return []
    with path.open(newline='', encoding='utf-8') as handle:
        return [row for row in csv.DictReader(handle) if int(row['step']) <= upto]


def _write_log(path, rows):
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.DictWriter(handle, fieldnames=LOG_COLUMNS, lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)


@dataclass
class TrainingResult:
    out_dir: Path
    checkpoint: Path
    losses: list
    config_hash: str

    @property
    def final_loss(self):
        return float(self.losses[-1]['total']) if self.losses else float('nan')


def train(config, manifest_path, out_dir, resume=None, steps=None, workers=1):
    """
    Entrena `optim.steps` pasos (o `steps`). Con `resume` continúa desde un
    checkpoint con el mismo hash de configuración.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    optim = config['optim']
    total_steps = optim['steps'] if steps is None else steps
    seed = optim['seed']
    num_frames = config['data']['num_frames']

    manifest = read_manifest(manifest_path)
    items = load_corpus(manifest, config, 'train', workers)
    if not items:
        raise ValidationError('El manifiesto no tiene registros de entrenamiento.')
    skeleton = skeleton_from_config(config['skeleton'])
    layout = PoseFeatureLayout(skeleton.joint_count)
    mismatched = [it.record.id for it in items if it.features.shape[1] != layout.width]
    if mismatched:
        raise ValidationError(f'Rasgos incompatibles con el esqueleto configurado: {mismatched[:5]}')

    vocab = Vocabulary.build(manifest.captions())
    shape = model_shape(config, vocab)
    model = MotionDiffusionModel(shape, np.random.default_rng(seed), MODEL_DTYPE)
    normalizer = FeatureNormalizer.fit([it.features for it in items], layout)
    optimizer = Adam(model.named_parameters(), lr=optim['lr'])
    start = 0

    if resume is not None:
        checkpoint = load_checkpoint(resume)
        verify_checkpoint(checkpoint, config_hash(config), shape.fusion_kind)
        vocab = Vocabulary(checkpoint.meta['vocab'])
        if len(vocab) != shape.vocab_size:
            raise ValidationError('El vocabulario del checkpoint no coincide con el del manifiesto.')
        model.load_state_dict(checkpoint.section('model'))
        normalizer = FeatureNormalizer.from_state(checkpoint.tensors)
        optimizer.load_state_dict(checkpoint.tensors, checkpoint.meta['optimizer_step'])
        start = int(checkpoint.meta['step'])
        logger.info(f'Reanudando desde {resume} en el paso {start}')

    log_path = out_dir / LOSS_LOG
    rows = _read_log(log_path, start) if resume is not None else []
    schedule = schedule_for(config)
    weights = LossWeights(**config['loss'])
    foot_joints = skeleton.require_feet()
    prompts = {it.record.id: [TextPrompt.from_text(c, vocab) for c in it.record.captions] for it in items}
    batch_size = min(optim['batch_size'], len(items))
    last = out_dir / LAST_CHECKPOINT

    logger.info(f'Entrenando {shape.fusion_kind}: pasos {start}..{total_steps}, lote {batch_size}, '
                f'{model.parameter_count()} parámetros')
    for step in range(start, total_steps):
        rng = np.random.default_rng([seed, step])
        chosen = rng.choice(len(items), size=batch_size, replace=False)
        conditions = []
        for index in chosen:
            options = prompts[items[index].record.id]
            conditions.append(ConditionInput(f_p=items[index].f_p, prompt=options[int(rng.integers(len(options)))]))
        x0, valid = batch_arrays(items, chosen, normalizer, num_frames)

        with GradTape() as tape:
            z_c = model.embed_conditions(conditions)
            loss, report = training_loss(model, TrainingBatch(x0, valid, z_c), schedule, normalizer, layout,
                                         foot_joints, rng, weights, config['diffusion']['cond_dropout'])
        if not np.isfinite(report.total):
            raise NonFiniteError(f'Pérdida no finita en el paso {step + 1}.')
        optimizer.step(tape.backward(loss))
        rows.append(dict(step=step + 1, **report.as_dict()))

        if optim['log_every'] and (step + 1) % optim['log_every'] == 0:
            logger.info(f'Paso {step + 1}/{total_steps}: pérdida {report.total:.5f} '
                        f'(mov {report.motion:.4f}, pos {report.position:.4f}, '
                        f'vel {report.velocity:.4f}, pie {report.foot:.4f})')
        if (step + 1) % optim['checkpoint_every'] == 0 or step + 1 == total_steps:
            meta = checkpoint_meta(config, vocab, shape, step + 1)
            save_checkpoint(out_dir / f'ckpt_{step + 1:06d}.stmd', model, normalizer, meta, optimizer)
            save_checkpoint(last, model, normalizer, meta, optimizer)
            _write_log(log_path, rows)

    if not last.exists() or start == total_steps:
        save_checkpoint(last, model, normalizer, checkpoint_meta(config, vocab, shape, start), optimizer)
    _write_log(log_path, rows)
    return TrainingResult(out_dir=out_dir, checkpoint=last, losses=rows, config_hash=config_hash(config))
