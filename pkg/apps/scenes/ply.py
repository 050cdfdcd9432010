# apps/scenes/ply.py
"""
Lectura/escritura de PLY ASCII: x, y, z (float), red, green, blue (uchar) y
opcionalmente nx, ny, nz (float).
"""

from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from .cloud import ScenePointCloud
from .normals import estimate_normals

REQUIRED = ('x', 'y', 'z', 'red', 'green', 'blue')
NORMALS = ('nx', 'ny', 'nz')


def dumps_ply(cloud: ScenePointCloud):
    colors = np.rint(cloud.colors * 255.0).astype(np.int64)
    lines = [
        'ply',
        'format ascii 1.0',
        f'element vertex {len(cloud)}',
        'property float x',
        'property float y',
        'property float z',
        'property uchar red',
        'property uchar green',
        'property uchar blue',
        'property float nx',
        'property float ny',
        'property float nz',
        'end_header',
    ]
    for p, c, n in zip(cloud.points, colors, cloud.normals):
        lines.append('%.9g %.9g %.9g %d %d %d %.9g %.9g %.9g' % (
            p[0], p[1], p[2], c[0], c[1], c[2], n[0], n[1], n[2]))
    return '\n'.join(lines) + '\n'


def loads_ply(text, source='<memoria>'):
    lines = text.splitlines()
    if not lines or lines[0].strip() != 'ply':
        raise ValidationError(f'{source}: no es un archivo PLY.')
    count = None
    properties = []
    header_end = None
    for i, line in enumerate(lines[1:], start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == 'format' and parts[1:2] != ['ascii']:
            raise ValidationError(f'{source}: solo se admite PLY ASCII.')
        elif parts[0] == 'element':
            if parts[1] != 'vertex':
                raise ValidationError(f"{source}: elemento '{parts[1]}' no soportado.")
            count = int(parts[2])
        elif parts[0] == 'property':
            properties.append(parts[-1])
        elif parts[0] == 'end_header':
            header_end = i + 1
            break
    if count is None or header_end is None:
        raise ValidationError(f'{source}: cabecera PLY incompleta.')
    missing = [name for name in REQUIRED if name not in properties]
    if missing:
        raise ValidationError(f'{source}: faltan las propiedades {missing}.')

    body = lines[header_end:header_end + count]
    if len(body) != count:
        raise ValidationError(f'{source}: se esperaban {count} vértices, hay {len(body)}.')
    if count == 0:
        return ScenePointCloud.empty()
    try:
        table = np.array([[float(v) for v in row.split()] for row in body], dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f'{source}: valor no numérico ({exc}).')
    if table.ndim != 2 or table.shape[1] != len(properties):
        raise ValidationError(f'{source}: las filas no coinciden con las propiedades declaradas.')

    column = {name: i for i, name in enumerate(properties)}
    points = table[:, [column['x'], column['y'], column['z']]]
    colors = table[:, [column['red'], column['green'], column['blue']]] / 255.0
    if all(name in column for name in NORMALS):
        normals = table[:, [column[n] for n in NORMALS]]
    else:
        normals = estimate_normals(points)
    return ScenePointCloud(points, colors, normals)


def write_ply(path, cloud: ScenePointCloud):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_ply(cloud), encoding='ascii')
    return path


def read_ply(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f'No existe el archivo de escena {path}.')
    return loads_ply(path.read_text(encoding='ascii'), source=str(path))


def read_scene(path, frame_paths=()):
    """Escena estática más sus fotogramas dinámicos (PLY numerados)."""
    cloud = read_ply(path)
    if not frame_paths:
        return cloud
    frames = tuple(read_ply(p) for p in frame_paths)
    return ScenePointCloud(cloud.points, cloud.colors, cloud.normals, frames)
