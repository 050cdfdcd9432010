# apps/scenes/synth.py
"""
Escenas procedurales: suelo plano, escaleras, habitación con caja, pasillo y
un peatón dinámico. Las normales son analíticas.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from django.core.exceptions import ValidationError

from .cloud import ScenePointCloud

logger = logging.getLogger(__name__)

SCENE_KINDS = ('flat', 'stairs', 'box_room', 'corridor', 'dynamic_walker')

BASE_COLORS = {
    'floor': (0.55, 0.55, 0.50),
    'tread': (0.60, 0.45, 0.30),
    'riser': (0.50, 0.35, 0.25),
    'box': (0.25, 0.40, 0.65),
    'wall': (0.80, 0.80, 0.75),
    'walker': (0.80, 0.30, 0.30),
}

# (mínimo, máximo) admitidos para cada parámetro geométrico
PARAMETER_RANGES = {
    'size': (2.0, 40.0),
    'density': (1.0, 2500.0),
    'step_rise': (0.05, 0.3),
    'step_run': (0.15, 0.6),
    'num_steps': (1, 20),
    'stair_start': (0.3, 5.0),
    'stair_width': (0.5, 5.0),
    'landing': (0.3, 5.0),
    'box_front': (0.8, 5.0),
    'box_depth': (0.3, 2.0),
    'box_width': (0.3, 3.0),
    'box_height': (0.2, 0.8),
    'room_half': (2.0, 10.0),
    'wall_height': (0.5, 4.0),
    'corridor_width': (0.8, 4.0),
    'corridor_length': (2.0, 20.0),
    'walker_speed': (0.0, 3.0),
    'walker_radius': (0.05, 1.0),
    'walker_height': (0.5, 2.5),
    'num_frames': (1, 1000),
    'fps': (1.0, 120.0),
}


@dataclass(frozen=True)
class SceneSpec:
    kind: str
    seed: int = 0
    size: float = 10.0
    density: float = 100.0
    step_rise: float = 0.15
    step_run: float = 0.3
    num_steps: int = 5
    stair_start: float = 1.0
    stair_width: float = 2.0
    landing: float = 2.0
    box_front: float = 1.5
    box_depth: float = 0.6
    box_width: float = 1.0
    box_height: float = 0.45
    room_half: float = 3.0
    wall_height: float = 2.0
    corridor_width: float = 1.6
    corridor_length: float = 8.0
    walker_start: tuple = field(default=(0.0, 1.5))
    walker_heading: float = 0.0
    walker_speed: float = 1.0
    walker_radius: float = 0.25
    walker_height: float = 1.7
    num_frames: int = 40
    fps: float = 10.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in SCENE_KINDS:
            raise ValidationError(f"Tipo de escena desconocido '{self.kind}'.")
        for name, (low, high) in PARAMETER_RANGES.items():
            value = getattr(self, name)
            if not low <= value <= high:
                raise ValidationError(f'{name}={value} fuera de rango [{low}, {high}].')
        if self.box_front <= self.box_depth / 2.0:
            raise ValidationError('La caja no puede cubrir el origen.')

    @property
    def spacing(self):
        return 1.0 / np.sqrt(self.density)

    def as_dict(self):
        data = asdict(self)
        data['walker_start'] = list(self.walker_start)
        return data

    def ground_height(self, x, y):
        """Altura del apoyo en (x, y); los peldaños solo existen en `stairs`."""
        if self.kind != 'stairs' or abs(y) > self.stair_width / 2.0 or x < self.stair_start:
            return 0.0
        step = min(self.num_steps, int(np.floor((x - self.stair_start) / self.step_run)) + 1)
        return step * self.step_rise

    def walker_centers(self):
        """Centro (x, y) del interactor en cada fotograma."""
        t = np.arange(self.num_frames) / self.fps
        direction = np.array([np.cos(self.walker_heading), np.sin(self.walker_heading)])
        return np.asarray(self.walker_start, dtype=np.float64) + np.outer(t * self.walker_speed, direction)


class SurfaceBuilder:
    """Acumula superficies muestreadas en rejilla con su normal y color."""

    def __init__(self, spec: SceneSpec):
        self.spacing = spec.spacing
        self.rng = np.random.default_rng(spec.seed)
        self.points, self.normals, self.colors = [], [], []

    def _grid(self, length_a, length_b):
        count_a = max(1, int(round(length_a / self.spacing)))
        count_b = max(1, int(round(length_b / self.spacing)))
        a = (np.arange(count_a) + 0.5) * (length_a / count_a)
        b = (np.arange(count_b) + 0.5) * (length_b / count_b)
        return np.meshgrid(a, b, indexing='ij')

    def _add(self, points, normal, color):
        count = len(points)
        base = np.array(BASE_COLORS[color])
        jitter = self.rng.uniform(-0.05, 0.05, size=(count, 3))
        self.points.append(points)
        self.normals.append(np.tile(normal, (count, 1)))
        self.colors.append(np.clip(base + jitter, 0.0, 1.0))

    def horizontal(self, x0, x1, y0, y1, z, color, keep=None):
        a, b = self._grid(x1 - x0, y1 - y0)
        points = np.column_stack([x0 + a.ravel(), y0 + b.ravel(), np.full(a.size, z)])
        if keep is not None:
            points = points[keep(points)]
        self._add(points, (0.0, 0.0, 1.0), color)

    def wall_x(self, x, y0, y1, z0, z1, normal_sign, color):
        """Plano x = const con normal ±X."""
        a, b = self._grid(y1 - y0, z1 - z0)
        points = np.column_stack([np.full(a.size, x), y0 + a.ravel(), z0 + b.ravel()])
        self._add(points, (normal_sign, 0.0, 0.0), color)

    def wall_y(self, y, x0, x1, z0, z1, normal_sign, color):
        a, b = self._grid(x1 - x0, z1 - z0)
        points = np.column_stack([x0 + a.ravel(), np.full(a.size, y), z0 + b.ravel()])
        self._add(points, (0.0, normal_sign, 0.0), color)

    def build(self, frames=None):
        if not self.points:
            return ScenePointCloud(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)), frames)
        return ScenePointCloud(
            np.concatenate(self.points), np.concatenate(self.colors), np.concatenate(self.normals), frames)


def _floor(builder, spec, keep=None):
    half = spec.size / 2.0
    builder.horizontal(-half, half, -half, half, 0.0, 'floor', keep)


def _build_flat(spec, builder):
    _floor(builder, spec)


def _build_stairs(spec, builder):
    half_w = spec.stair_width / 2.0
    x0 = spec.stair_start

    def outside_footprint(points):
        return ~((points[:, 0] >= x0) & (np.abs(points[:, 1]) <= half_w))

    _floor(builder, spec, outside_footprint)
    for k in range(1, spec.num_steps + 1):
        start = x0 + (k - 1) * spec.step_run
        length = spec.landing if k == spec.num_steps else spec.step_run
        builder.wall_x(start, -half_w, half_w, (k - 1) * spec.step_rise, k * spec.step_rise, -1.0, 'riser')
        builder.horizontal(start, start + length, -half_w, half_w, k * spec.step_rise, 'tread')


def _build_box_room(spec, builder):
    x0, x1 = spec.box_front, spec.box_front + spec.box_depth
    y0, y1 = -spec.box_width / 2.0, spec.box_width / 2.0
    h = spec.box_height
    half = spec.room_half

    def outside_box(points):
        return ~((points[:, 0] >= x0) & (points[:, 0] <= x1) & (points[:, 1] >= y0) & (points[:, 1] <= y1))

    builder.horizontal(-half, half, -half, half, 0.0, 'floor', outside_box)
    builder.horizontal(x0, x1, y0, y1, h, 'box')
    builder.wall_x(x0, y0, y1, 0.0, h, -1.0, 'box')
    builder.wall_x(x1, y0, y1, 0.0, h, 1.0, 'box')
    builder.wall_y(y0, x0, x1, 0.0, h, -1.0, 'box')
    builder.wall_y(y1, x0, x1, 0.0, h, 1.0, 'box')
    builder.wall_x(-half, -half, half, 0.0, spec.wall_height, 1.0, 'wall')
    builder.wall_x(half, -half, half, 0.0, spec.wall_height, -1.0, 'wall')
    builder.wall_y(-half, -half, half, 0.0, spec.wall_height, 1.0, 'wall')
    builder.wall_y(half, -half, half, 0.0, spec.wall_height, -1.0, 'wall')


def _build_corridor(spec, builder):
    half_w = spec.corridor_width / 2.0
    x0, x1 = -2.0, spec.corridor_length - 2.0
    builder.horizontal(x0, x1, -half_w, half_w, 0.0, 'floor')
    builder.wall_y(-half_w, x0, x1, 0.0, spec.wall_height, 1.0, 'wall')
    builder.wall_y(half_w, x0, x1, 0.0, spec.wall_height, -1.0, 'wall')


def walker_frames(spec: SceneSpec):
    """Un cilindro vertical por fotograma, con normales radiales hacia afuera."""
    around = max(8, int(round(2.0 * np.pi * spec.walker_radius / spec.spacing)))
    levels = max(2, int(round(spec.walker_height / spec.spacing)))
    angles = 2.0 * np.pi * np.arange(around) / around
    heights = (np.arange(levels) + 0.5) * (spec.walker_height / levels)
    ang, hgt = np.meshgrid(angles, heights, indexing='ij')
    radial = np.column_stack([np.cos(ang.ravel()), np.sin(ang.ravel()), np.zeros(ang.size)])
    base = np.array(BASE_COLORS['walker'])
    colors = np.tile(base, (len(radial), 1))
    frames = []
    for cx, cy in spec.walker_centers():
        points = np.column_stack([
            cx + spec.walker_radius * radial[:, 0],
            cy + spec.walker_radius * radial[:, 1],
            hgt.ravel(),
        ])
        frames.append(ScenePointCloud(points, colors, radial))
    return tuple(frames)


def _build_dynamic_walker(spec, builder):
    _floor(builder, spec)


BUILDERS = {
    'flat': _build_flat,
    'stairs': _build_stairs,
    'box_room': _build_box_room,
    'corridor': _build_corridor,
    'dynamic_walker': _build_dynamic_walker,
}


def synth_scene(spec: SceneSpec):
    builder = SurfaceBuilder(spec)
    BUILDERS[spec.kind](spec, builder)
    frames = walker_frames(spec) if spec.kind == 'dynamic_walker' else None
    cloud = builder.build(frames)
    logger.debug(f"Escena '{spec.kind}' (semilla {spec.seed}): {len(cloud)} puntos estáticos")
    return cloud
