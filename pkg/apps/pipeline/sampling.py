# apps/pipeline/sampling.py
"""Generación de K movimientos para una escena y una descripción."""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from django.core.exceptions import ValidationError

from apps.diffusion.model import ConditionInput
from apps.diffusion.sampler import sample
from apps.diffusion.schedule import build_schedule
from apps.language.vocab import TextPrompt
from apps.motion.io import write_motion
from apps.scenes.ply import read_scene

from .config import validate_run_config
from .dataset import prepare_scene
from .training import TrainedModel, restore_model

logger = logging.getLogger(__name__)


def generate_samples(trained: TrainedModel, item: ConditionInput, count, seed, num_frames, guidance_scale=1.0,
                     fps=None, key=()):
    """`count` muestras; la j-ésima usa la semilla (seed, *key, j) y no depende de las demás."""
    schedule = build_schedule(**trained.meta['schedule'])
    fps = trained.meta.get('fps', 10.0) if fps is None else fps
    return [
        sample(trained.model, item, schedule, trained.normalizer, num_frames=num_frames,
               seed=[seed, *key, j], guidance_scale=guidance_scale, fps=fps)
        for j in range(count)
    ]


def sample_cmd(checkpoint_path, scene_path, caption, count, seed, out_dir, config=None, frame_paths=(),
               anchor=(0.0, 0.0, 0.0), workers=1):
    """
    Escribe `count` archivos motion-json-v1 en `out_dir`. Con `config` se
    exige que el checkpoint tenga su mismo hash y variante de fusión.
    """
    if not caption or not caption.strip():
        raise ValidationError('Se necesita una descripción para muestrear.')
    if count < 1:
        raise ValidationError('K debe ser al menos 1.')
    if not Path(scene_path).exists():
        raise ValidationError(f'No existe el archivo de escena {scene_path}.')

    trained, _ = restore_model(checkpoint_path, config)
    if config is None:
        config = validate_run_config({'data': {'num_frames': trained.model.shape.max_frames}})
    data = config['data']
    scene = read_scene(scene_path, frame_paths)
    _, f_p = prepare_scene(scene, anchor, data, data['seed'])
    item = ConditionInput(f_p=f_p, prompt=TextPrompt.from_text(caption, trained.vocab))
    guidance = config['diffusion']['guidance_scale']

    out_dir = Path(out_dir)

    def produce(index):
        motion = generate_samples(trained, item, 1, seed, data['num_frames'], guidance, data['fps'], key=(index,))[0]
        return write_motion(out_dir / f'sample_{index:03d}.json', motion)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        paths = list(pool.map(produce, range(count)))
    logger.info(f"{count} muestras para '{caption}' escritas en {out_dir}")
    return paths
