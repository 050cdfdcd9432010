# apps/pipeline/dataset.py
"""
Generación del corpus sintético (escenas PLY, movimientos motion-json-v1,
descripciones y manifiesto) y su carga como condiciones de entrenamiento.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from apps.language.captions import synth_caption
from apps.motion.io import read_motion, write_motion
from apps.motion.representation import MotionSequence, encode_features
from apps.motion.scripts import circle, climb_stairs, sit_on, walk_and_wave, walk_to, wave
from apps.motion.skeleton import skeleton_from_config
from apps.scenes.cloud import ScenePointCloud, crop_and_normalize, downsample
from apps.scenes.ply import read_scene, write_ply
from apps.scenes.synth import SceneSpec, synth_scene

from .manifest import ManifestRecord, write_manifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.jsonl'
CAPTIONS_PER_RECORD = 3
CAPTION_VARIANTS = 36

# Guiones coherentes con cada tipo de escena
SCENE_SCRIPTS = {
    'flat': ('circle', 'wave'),
    'stairs': ('climb_stairs',),
    'box_room': ('walk_to', 'sit_on'),
    'corridor': ('walk_to',),
    'dynamic_walker': ('walk_to', 'wave'),
}


def _scene_spec(kind, rng, seed, data):
    params = dict(kind=kind, seed=seed, size=data['scene_size'], density=data['scene_density'],
                  num_frames=data['num_frames'], fps=data['fps'])
    if kind == 'stairs':
        params.update(stair_start=rng.uniform(0.8, 1.2), num_steps=int(rng.integers(3, 7)),
                      step_rise=rng.uniform(0.10, 0.18))
    elif kind == 'box_room':
        params.update(box_front=rng.uniform(1.4, 2.0), box_height=rng.uniform(0.40, 0.50))
    elif kind == 'corridor':
        params.update(corridor_width=rng.uniform(1.4, 2.0))
    elif kind == 'dynamic_walker':
        params.update(walker_speed=rng.uniform(0.6, 1.0))
    return SceneSpec(**params)


def scripted_motion(spec: SceneSpec, script, skeleton, rng):
    """Movimiento con la raíz inicial en el origen de la escena, coherente con su geometría."""
    frames, fps = spec.num_frames, spec.fps
    if script == 'circle':
        return circle(skeleton, radius=rng.uniform(0.8, 1.4), num_frames=frames, fps=fps)
    if script == 'wave' and spec.kind == 'flat':
        return wave(skeleton, num_frames=frames, fps=fps, amplitude=rng.uniform(0.2, 0.4))
    if script == 'wave':
        return walk_and_wave(skeleton, distance=rng.uniform(1.2, 1.8), num_frames=frames, fps=fps)
    if script == 'climb_stairs':
        distance = spec.stair_start + (spec.num_steps - 1) * spec.step_run + 0.5 * spec.landing
        return climb_stairs(skeleton, distance=distance, num_frames=frames, fps=fps, ground=spec.ground_height)
    if script == 'sit_on':
        return sit_on(skeleton, seat_front=spec.box_front, seat_height=spec.box_height, seat_depth=spec.box_depth,
                      num_frames=frames, fps=fps)
    if script == 'walk_to' and spec.kind == 'box_room':
        return walk_to(skeleton, distance=spec.box_front - 0.45, num_frames=frames, fps=fps)
    if script == 'walk_to' and spec.kind == 'corridor':
        return walk_to(skeleton, distance=rng.uniform(2.5, 4.0), num_frames=frames, fps=fps)
    if script == 'walk_to':
        # Acompaña al peatón a su misma velocidad
        duration = (frames - 1) / fps
        return walk_to(skeleton, distance=spec.walker_speed * duration, num_frames=frames, fps=fps)
    raise ValidationError(f"No hay guion '{script}' para escenas '{spec.kind}'.")


def _shifted(motion: MotionSequence, skeleton, offset, contact):
    moved = MotionSequence.from_pose(skeleton, motion.root_translation + offset, motion.rotations, fps=motion.fps)
    features = encode_features(moved, skeleton, contact['velocity_threshold'], contact['height_threshold'])
    return replace(moved, features=features)


def held_out_indices(size, fraction, seed):
    count = int(round(size * fraction))
    return set(int(i) for i in np.random.default_rng([seed, 0]).permutation(size)[:count])


def build_record(index, out_dir, config, test_set):
    """Genera y escribe los archivos de un registro. Depende solo de (semilla, índice)."""
    data = config['data']
    skeleton = skeleton_from_config(config['skeleton'])
    rng = np.random.default_rng([data['seed'], index + 1])
    kinds = data['scene_kinds']
    kind = kinds[index % len(kinds)]
    scripts = SCENE_SCRIPTS[kind]
    script = scripts[int(rng.integers(len(scripts)))]
    spec = _scene_spec(kind, rng, data['seed'] * 100003 + index, data)
    motion = scripted_motion(spec, script, skeleton, rng)

    # Escena y movimiento comparten un desplazamiento en el mundo; el recorte lo deshace
    offset = np.array([rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), 0.0])
    scene = synth_scene(spec).translated(offset)
    motion = _shifted(motion, skeleton, offset, config['contact'])

    record_id = f'{index:05d}_{kind}_{script}'
    scene_path = Path('scenes') / f'{record_id}.ply'
    write_ply(out_dir / scene_path, scene.static())
    frames = []
    for k, frame in enumerate(scene.dynamic_frames or ()):
        frame_path = Path('scenes') / record_id / f'frame_{k:03d}.ply'
        write_ply(out_dir / frame_path, frame)
        frames.append(frame_path.as_posix())
    motion_path = Path('motions') / f'{record_id}.json'
    write_motion(out_dir / motion_path, motion)

    seeds = rng.choice(CAPTION_VARIANTS, size=CAPTIONS_PER_RECORD, replace=False) + 1
    captions = tuple(synth_caption(kind, script, int(s)) for s in seeds)
    return ManifestRecord(
        id=record_id, kind=kind, scene=scene_path.as_posix(), motion=motion_path.as_posix(), captions=captions,
        split='test' if index in test_set else 'train', frames=tuple(frames),
    )


def gen_dataset(out_dir, config, workers=1):
    """Escribe `data.corpus_size` registros y el manifiesto. Idéntico byte a byte para la misma semilla."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = config['data']
    size = data['corpus_size']
    test_set = held_out_indices(size, data['test_fraction'], data['seed'])
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        records = list(pool.map(lambda i: build_record(i, out_dir, config, test_set), range(size)))
    path = write_manifest(out_dir / MANIFEST_NAME, records)
    logger.info(f'Corpus sintético: {size} registros ({len(test_set)} de prueba) en {out_dir}')
    return path


@dataclass
class CorpusItem:
    """Un registro cargado: rasgos, escena recortada en el ancla y f_p submuestreado."""

    record: ManifestRecord
    features: np.ndarray
    motion: MotionSequence
    scene: ScenePointCloud
    f_p: np.ndarray


def scene_anchor(motion: MotionSequence):
    """Posición horizontal inicial de la raíz sobre el suelo (z = 0)."""
    root = motion.root_translation[0]
    return np.array([root[0], root[1], 0.0])


def condition_points(scene: ScenePointCloud, data, seed=0):
    """f_p: parte estática más todos los fotogramas del interactor, submuestreado a N_p."""
    cloud = downsample(scene.condition_cloud(), data['num_points'], data['downsample'], seed)
    return cloud.features()


def prepare_scene(scene: ScenePointCloud, anchor, data, seed=0):
    cropped = crop_and_normalize(scene, anchor, data['crop_radius'])
    return cropped, condition_points(cropped, data, seed)


def load_item(manifest, record: ManifestRecord, config):
    data = config['data']
    motion = read_motion(manifest.path(record.motion))
    scene = read_scene(manifest.path(record.scene), [manifest.path(p) for p in record.frames])
    cropped, f_p = prepare_scene(scene, scene_anchor(motion), data, data['seed'])
    features = np.asarray(motion.features[:data['num_frames']], dtype=np.float64)
    return CorpusItem(record=record, features=features, motion=motion, scene=cropped, f_p=f_p)


def load_corpus(manifest, config, split=None, workers=1):
    records = manifest.records if split is None else manifest.split(split)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        items = list(pool.map(lambda r: load_item(manifest, r, config), records))
    logger.info(f'Corpus cargado: {len(items)} registros' + (f" ({split})" if split else ''))
    return items
