# apps/pipeline/importer.py
"""
Importador de datos con el esquema de LaserHuman (escena + secuencia SMPL +
descripciones). El índice es JSON Lines, un registro por secuencia:

  {"id": str, "scene": ruta, "frames": [rutas], "motion": ruta,
   "captions": [str, ...], "split": "train"|"test", "kind": str}

`frames`, `split` (por defecto "train") y `kind` son opcionales; las rutas
son relativas al índice. Escenas: PLY ASCII, o texto con columnas
x y z [r g b] (.xyz/.txt, colores en 0..255 o 0..1); sin normales, se estiman.
Movimientos: motion-json-v1, o JSON de pose {"fps", "translation": N×3,
"rotations": N×J×3 eje-ángulo} que se recodifica por cinemática directa.
Un manifiesto de gen_data es un índice válido.
"""

import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from apps.motion.io import loads_motion, write_motion
from apps.motion.representation import DEFAULT_FPS, MotionSequence, encode_features
from apps.motion.skeleton import skeleton_from_config
from apps.scenes.cloud import ScenePointCloud
from apps.scenes.normals import estimate_normals
from apps.scenes.ply import read_ply, write_ply

from .dataset import MANIFEST_NAME
from .manifest import SCENE_SOURCES, SPLITS, ManifestRecord, write_manifest

logger = logging.getLogger(__name__)

INDEX_KEYS = {'id', 'scene', 'frames', 'motion', 'captions', 'split', 'kind'}


def read_points(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f'No existe el archivo de escena {path}.')
    if path.suffix.lower() == '.ply':
        return read_ply(path)
    try:
        table = np.atleast_2d(np.loadtxt(path, dtype=np.float64))
    except ValueError as exc:
        raise ValidationError(f'{path}: archivo de puntos ilegible ({exc}).')
    if table.size == 0:
        return ScenePointCloud.empty()
    if table.shape[1] not in (3, 6):
        raise ValidationError(f'{path}: se esperaban 3 o 6 columnas, hay {table.shape[1]}.')
    points = table[:, :3]
    colors = table[:, 3:6] if table.shape[1] == 6 else np.full_like(points, 0.5)
    if colors.max(initial=0.0) > 1.0:
        colors = colors / 255.0
    return ScenePointCloud(points, colors, estimate_normals(points))


def read_source_motion(path, skeleton, contact):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f'No existe el archivo de movimiento {path}.')
    text = path.read_text(encoding='utf-8')
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f'{path}: JSON inválido ({exc}).')
    if isinstance(payload, dict) and 'layout' in payload:
        return loads_motion(text, source=str(path))
    if not isinstance(payload, dict) or not {'translation', 'rotations'} <= set(payload):
        raise ValidationError(f'{path}: se esperaba motion-json-v1 o una pose con translation y rotations.')
    motion = MotionSequence.from_pose(skeleton, payload['translation'], payload['rotations'],
                                      fps=float(payload.get('fps', DEFAULT_FPS)))
    features = encode_features(motion, skeleton, contact['velocity_threshold'], contact['height_threshold'])
    return replace(motion, features=features)


def _parse_index(path):
    records = []
    for number, line in enumerate(Path(path).read_text(encoding='utf-8').splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f'Índice, línea {number}: JSON inválido ({exc}).')
        if not isinstance(entry, dict):
            raise ValidationError(f'Índice, línea {number}: se esperaba un objeto.')
        records.append((number, entry))
    return records


def _check_entry(entry, number, seen):
    """Mensaje de rechazo del registro o None si el esquema es válido."""
    record_id = entry.get('id')
    if not isinstance(record_id, str) or not record_id:
        return f'línea {number}: falta id'
    if record_id in seen:
        return f'{record_id}: id repetido'
    unknown = sorted(set(entry) - INDEX_KEYS)
    if unknown:
        return f'{record_id}: claves desconocidas {unknown}'
    captions = entry.get('captions')
    if not isinstance(captions, list) or not captions or not all(isinstance(c, str) and c.strip() for c in captions):
        return f'{record_id}: sin descripciones'
    if entry.get('split', 'train') not in SPLITS:
        return f"{record_id}: partición '{entry.get('split')}' inválida"
    if not isinstance(entry.get('scene'), str) or not isinstance(entry.get('motion'), str):
        return f'{record_id}: faltan las rutas de escena o movimiento'
    return None


def import_laserhuman(index_path, out_dir, config):
    """Valida el índice completo, copia los datos normalizados a `out_dir` y escribe el manifiesto."""
    index_path = Path(index_path)
    if not index_path.exists():
        raise ValidationError(f'No existe el índice {index_path}.')
    out_dir = Path(out_dir)
    root = index_path.parent
    skeleton = skeleton_from_config(config['skeleton'])
    entries = _parse_index(index_path)

    rejected, seen = [], set()
    for number, entry in entries:
        problem = _check_entry(entry, number, seen)
        if problem:
            rejected.append(problem)
        seen.add(entry.get('id'))
    if rejected:
        raise ValidationError(f'Registros rechazados: {rejected}')

    records = []
    for number, entry in entries:
        record_id = entry['id']
        try:
            scene = read_points(root / entry['scene'])
            frames = [read_points(root / p) for p in entry.get('frames', [])]
            motion = read_source_motion(root / entry['motion'], skeleton, config['contact'])
        except ValidationError as exc:
            raise ValidationError(f'{record_id}: {"; ".join(exc.messages)}')
        if len(scene) == 0:
            raise ValidationError(f'{record_id}: la escena está vacía.')
        if motion.num_joints != skeleton.joint_count:
            raise ValidationError(
                f'{record_id}: {motion.num_joints} articulaciones; el esqueleto configurado tiene '
                f'{skeleton.joint_count}.')

        scene_path = Path('scenes') / f'{record_id}.ply'
        write_ply(out_dir / scene_path, scene)
        frame_paths = []
        for k, frame in enumerate(frames):
            frame_path = Path('scenes') / record_id / f'frame_{k:03d}.ply'
            write_ply(out_dir / frame_path, frame)
            frame_paths.append(frame_path.as_posix())
        motion_path = Path('motions') / f'{record_id}.json'
        write_motion(out_dir / motion_path, motion)
        kind = entry.get('kind')
        records.append(ManifestRecord(
            id=record_id, kind=kind if kind in SCENE_SOURCES else 'imported', scene=scene_path.as_posix(),
            motion=motion_path.as_posix(), captions=tuple(entry['captions']), split=entry.get('split', 'train'),
            frames=tuple(frame_paths),
        ))

    if not records:
        logger.warning(f'El índice {index_path} no contiene registros; se escribe un manifiesto vacío')
    path = write_manifest(out_dir / MANIFEST_NAME, records)
    logger.info(f'Importados {len(records)} registros en {out_dir}')
    return path, records
