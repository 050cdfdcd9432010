# apps/motion/io.py
"""
Lectura y escritura del formato de archivo "motion-json-v1".
"""

import json
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from .representation import LAYOUT_NAME, MotionSequence, PoseFeatureLayout

FORMAT_KEYS = ('layout', 'fps', 'num_frames', 'num_joints', 'features', 'root_init')


def motion_payload(features, root_position, root_yaw, fps, num_joints):
    features = np.asarray(features, dtype=np.float64)
    PoseFeatureLayout(num_joints).check(features)
    # Orden de campos fijo: la salida debe ser idéntica byte a byte
    return {
        'layout': LAYOUT_NAME,
        'fps': float(fps),
        'num_frames': int(features.shape[0]),
        'num_joints': int(num_joints),
        'features': features.tolist(),
        'root_init': {
            'pos': [float(v) for v in root_position],
            'yaw': float(root_yaw),
        },
    }


def dumps_motion(motion: MotionSequence):
    if motion.features is None:
        raise ValidationError('La secuencia no tiene matriz de rasgos; codifíquela antes de escribir.')
    root = motion.root_init()
    payload = motion_payload(motion.features, root['pos'], root['yaw'], motion.fps, motion.num_joints)
    return json.dumps(payload) + '\n'


def loads_motion(text, source='<memoria>'):
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f'{source}: JSON inválido ({exc}).')
    if not isinstance(payload, dict) or set(payload) != set(FORMAT_KEYS):
        raise ValidationError(f'{source}: se esperaban exactamente las claves {list(FORMAT_KEYS)}.')
    if payload['layout'] != LAYOUT_NAME:
        raise ValidationError(f"{source}: disposición '{payload['layout']}' no soportada.")

    num_joints = payload['num_joints']
    if not isinstance(num_joints, int) or num_joints < 2:
        raise ValidationError(f'{source}: num_joints inválido.')
    layout = PoseFeatureLayout(num_joints)
    features = np.asarray(payload['features'], dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != payload['num_frames']:
        raise ValidationError(f'{source}: num_frames no coincide con la matriz de rasgos.')
    try:
        layout.check(features)
    except ValidationError:
        raise ValidationError(
            f'{source}: se esperaban {layout.width} rasgos por fotograma, hay {features.shape[1]}.')

    root_init = payload['root_init']
    if not isinstance(root_init, dict) or len(root_init.get('pos', ())) != 3 or 'yaw' not in root_init:
        raise ValidationError(f'{source}: root_init debe tener pos (3 valores) y yaw.')
    return MotionSequence.from_features(
        features, root_init['pos'], root_init['yaw'], fps=payload['fps'], num_joints=num_joints)


def write_motion(path, motion: MotionSequence):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_motion(motion), encoding='utf-8')
    return path


def read_motion(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f'No existe el archivo de movimiento {path}.')
    return loads_motion(path.read_text(encoding='utf-8'), source=str(path))
