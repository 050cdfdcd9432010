# apps/scenes/cloud.py
"""
Nube de puntos de escena (posición, color, normal), recorte/normalización,
submuestreo y consultas de vecino más cercano.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

VOXEL_SIZE = 0.25
NORMAL_TOLERANCE = 1e-4


def _frozen(array, columns=3):
    array = np.array(array, dtype=np.float64).reshape(-1, columns)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ScenePointCloud:
    points: np.ndarray
    colors: np.ndarray
    normals: np.ndarray
    dynamic_frames: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, 'points', _frozen(self.points))
        object.__setattr__(self, 'colors', _frozen(self.colors))
        object.__setattr__(self, 'normals', _frozen(self.normals))
        if not (len(self.points) == len(self.colors) == len(self.normals)):
            raise ValidationError('Puntos, colores y normales deben tener la misma cantidad de filas.')
        for name in ('points', 'colors', 'normals'):
            if not np.isfinite(getattr(self, name)).all():
                raise ValidationError(f'La nube contiene {name} no finitos.')
        if len(self.colors) and (self.colors.min() < 0 or self.colors.max() > 1):
            raise ValidationError('Los colores deben estar en [0, 1].')
        if len(self.normals):
            lengths = np.linalg.norm(self.normals, axis=1)
            if np.abs(lengths - 1.0).max() > NORMAL_TOLERANCE:
                raise ValidationError('Las normales deben ser unitarias.')
        if self.dynamic_frames is not None:
            object.__setattr__(self, 'dynamic_frames', tuple(self.dynamic_frames))

    def __len__(self):
        return len(self.points)

    @property
    def is_dynamic(self):
        return bool(self.dynamic_frames)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)))

    def features(self):
        """f_p: M×6 (x, y, z, r, g, b)."""
        return np.concatenate([self.points, self.colors], axis=1)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return ScenePointCloud(self.points[indices], self.colors[indices], self.normals[indices],
                               self.dynamic_frames)

    def static(self):
        return ScenePointCloud(self.points, self.colors, self.normals)

    def merged(self, *others):
        clouds = (self,) + others
        return ScenePointCloud(
            np.concatenate([c.points for c in clouds]),
            np.concatenate([c.colors for c in clouds]),
            np.concatenate([c.normals for c in clouds]),
        )

    def frame_cloud(self, frame):
        """Nube que ve el fotograma `frame`: parte estática más el interactor de ese fotograma."""
        if not self.is_dynamic:
            return self.static()
        index = min(frame, len(self.dynamic_frames) - 1)
        return self.static().merged(self.dynamic_frames[index])

    def condition_cloud(self):
        """Parte estática unida a todos los fotogramas del interactor."""
        if not self.is_dynamic:
            return self.static()
        return self.static().merged(*self.dynamic_frames)

    def translated(self, offset):
        offset = np.asarray(offset, dtype=np.float64)
        frames = None
        if self.dynamic_frames is not None:
            frames = tuple(f.translated(offset) for f in self.dynamic_frames)
        return ScenePointCloud(self.points + offset, self.colors, self.normals, frames)

    @cached_property
    def index(self):
        return VoxelIndex(self.points)

    def nearest(self, query):
        """(índice, distancia sin signo, distancia con signo = (q − p)·n)."""
        query = np.asarray(query, dtype=np.float64)
        idx, dist = self.index.nearest(query)
        signed = float(np.dot(query - self.points[idx], self.normals[idx]))
        return idx, dist, signed

    def nearest_many(self, queries):
        """Vectores (índices, sin signo, con signo) para un lote Q×3."""
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        indices = np.empty(len(queries), dtype=np.int64)
        unsigned = np.empty(len(queries))
        for i, q in enumerate(queries):
            indices[i], unsigned[i] = self.index.nearest(q)
        signed = np.einsum('ij,ij->i', queries - self.points[indices], self.normals[indices])
        return indices, unsigned, signed


def squared_distances(points, query):
    d = points - query
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]


def nearest_exhaustive(points, query):
    """Recorrido completo; el empate se resuelve al menor índice."""
    if len(points) == 0:
        raise ValidationError('Consulta de vecino más cercano sobre una nube vacía.')
    d2 = squared_distances(points, np.asarray(query, dtype=np.float64))
    idx = int(np.argmin(d2))
    return idx, float(np.sqrt(d2[idx]))


class VoxelIndex:
    """
    Rejilla hash uniforme. Las celdas ocupadas se recorren por anillos de
    distancia de Chebyshev crecientes; un punto en el anillo r está a una
    distancia de al menos (r − 1)·celda de la consulta.
    """

    def __init__(self, points, cell=VOXEL_SIZE):
        self.points = np.asarray(points, dtype=np.float64)
        self.cell = float(cell)
        if len(self.points) == 0:
            self.cells = np.zeros((0, 3), dtype=np.int64)
            self.members = []
            return
        keys = np.floor(self.points / self.cell).astype(np.int64)
        self.cells, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind='stable')
        bounds = np.searchsorted(inverse[order], np.arange(len(self.cells) + 1))
        self.members = [order[bounds[i]:bounds[i + 1]] for i in range(len(self.cells))]

    def nearest(self, query):
        if len(self.points) == 0:
            raise ValidationError('Consulta de vecino más cercano sobre una nube vacía.')
        query = np.asarray(query, dtype=np.float64)
        home = np.floor(query / self.cell).astype(np.int64)
        rings = np.abs(self.cells - home).max(axis=1)
        levels = np.unique(rings)

        best_d2, best_idx = np.inf, -1
        for position, level in enumerate(levels):
            candidates = np.concatenate([self.members[c] for c in np.flatnonzero(rings == level)])
            d2 = squared_distances(self.points[candidates], query)
            local = np.flatnonzero(d2 == d2.min())
            idx = int(candidates[local].min())
            value = float(d2[local[0]])
            if value < best_d2 or (value == best_d2 and idx < best_idx):
                best_d2, best_idx = value, idx
            if position + 1 < len(levels):
                bound = (levels[position + 1] - 1) * self.cell
                if bound > 0 and np.sqrt(best_d2) < bound:
                    break
        return best_idx, float(np.sqrt(best_d2))


def crop_and_normalize(cloud: ScenePointCloud, anchor, radius):
    """
    Conserva los puntos a distancia horizontal ≤ `radius` del ancla y los
    traslada para que el ancla quede en el origen.
    """
    if radius <= 0:
        raise ValidationError('El radio de recorte debe ser positivo.')
    anchor = np.asarray(anchor, dtype=np.float64)

    def crop(part):
        horizontal = np.hypot(part.points[:, 0] - anchor[0], part.points[:, 1] - anchor[1])
        keep = np.flatnonzero(horizontal <= radius)
        return ScenePointCloud(part.points[keep] - anchor, part.colors[keep], part.normals[keep])

    static = crop(cloud)
    if len(static) == 0:
        raise ValidationError(f'El recorte de radio {radius} alrededor de {anchor.tolist()} está vacío.')
    frames = None
    if cloud.dynamic_frames is not None:
        frames = tuple(crop(frame) for frame in cloud.dynamic_frames)
    logger.debug(f'Recorte: {len(cloud)} -> {len(static)} puntos (radio {radius})')
    return ScenePointCloud(static.points, static.colors, static.normals, frames)


def farthest_point_indices(points, count):
    """Muestreo del punto más lejano empezando en el índice 0; empates al menor índice."""
    points = np.asarray(points, dtype=np.float64)
    total = len(points)
    count = min(count, total)
    selected = np.zeros(count, dtype=np.int64)
    min_d2 = np.full(total, np.inf)
    current = 0
    for i in range(count):
        selected[i] = current
        min_d2 = np.minimum(min_d2, squared_distances(points, points[current]))
        current = int(np.argmax(min_d2))
    return selected


def downsample(cloud: ScenePointCloud, count, method='fps', seed=0):
    if count < 1:
        raise ValidationError('N_p debe ser al menos 1.')
    if len(cloud) == 0:
        raise ValidationError('No se puede submuestrear una nube vacía.')
    if len(cloud) <= count:
        return cloud
    if method == 'fps':
        indices = farthest_point_indices(cloud.points, count)
    elif method == 'random':
        rng = np.random.default_rng(seed)
        indices = np.sort(rng.choice(len(cloud), size=count, replace=False))
    else:
        raise ValidationError(f"Método de submuestreo desconocido '{method}'.")
    return cloud.subset(indices)


def canonical_start(points):
    """Índice del mínimo lexicográfico (x, luego y, luego z)."""
    order = np.lexsort((points[:, 2], points[:, 1], points[:, 0]))
    return int(order[0])
