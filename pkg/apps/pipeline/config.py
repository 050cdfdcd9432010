# apps/pipeline/config.py
"""
Configuración de experimentos (RunConfig): JSON validado con serializers de
DRF, valores por defecto de escritorio y el hash de configuración.
"""

import hashlib
import json
from pathlib import Path

from rest_framework import serializers

from apps.fusion.condition import FUSION_KINDS
from apps.motion.skeleton import DEFAULT_FOOT_JOINTS, DEFAULT_JOINT_NAMES, DEFAULT_OFFSETS, DEFAULT_PARENTS
from apps.scenes.synth import SCENE_KINDS

SECTIONS = ('data', 'skeleton', 'model', 'fusion', 'diffusion', 'loss', 'optim', 'evaluation', 'contact')


class StrictSerializer(serializers.Serializer):
    """Rechaza cualquier clave que no sea un campo declarado."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Clave desconocida.'] for key in unknown})
        return super().to_internal_value(data)


class DataSectionSerializer(StrictSerializer):
    num_frames = serializers.IntegerField(default=40, min_value=2, max_value=1000)
    fps = serializers.FloatField(default=10.0, min_value=1.0, max_value=120.0)
    corpus_size = serializers.IntegerField(default=256, min_value=1)
    scene_kinds = serializers.ListField(
        child=serializers.ChoiceField(choices=SCENE_KINDS), default=list(SCENE_KINDS), min_length=1)
    test_fraction = serializers.FloatField(default=0.2, min_value=0.0, max_value=1.0)
    crop_radius = serializers.FloatField(default=4.0, min_value=0.1)
    num_points = serializers.IntegerField(default=2048, min_value=1, max_value=32768)
    downsample = serializers.ChoiceField(choices=('fps', 'random'), default='fps')
    scene_size = serializers.FloatField(default=6.0, min_value=2.0, max_value=40.0)
    scene_density = serializers.FloatField(default=25.0, min_value=1.0, max_value=2500.0)
    seed = serializers.IntegerField(default=0, min_value=0)


class SkeletonSectionSerializer(StrictSerializer):
    parents = serializers.ListField(child=serializers.IntegerField(min_value=-1), default=list(DEFAULT_PARENTS))
    offsets = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=3, max_length=3),
        default=[list(row) for row in DEFAULT_OFFSETS])
    foot_joints = serializers.ListField(
        child=serializers.IntegerField(min_value=1), default=list(DEFAULT_FOOT_JOINTS), min_length=2, max_length=2)
    names = serializers.ListField(child=serializers.CharField(), default=list(DEFAULT_JOINT_NAMES))

    def validate(self, data):
        if len(data['offsets']) != len(data['parents']):
            raise serializers.ValidationError('Debe haber un desplazamiento por articulación.')
        if data['names'] and len(data['names']) != len(data['parents']):
            raise serializers.ValidationError('Debe haber un nombre por articulación.')
        return data


class ModelSectionSerializer(StrictSerializer):
    width = serializers.IntegerField(default=64, min_value=1)
    text_width = serializers.IntegerField(default=64, min_value=1)
    cond_width = serializers.IntegerField(default=128, min_value=1)
    heads = serializers.IntegerField(default=1, min_value=1)
    text_blocks = serializers.IntegerField(default=2, min_value=1)
    denoiser_layers = serializers.IntegerField(default=2, min_value=1)
    neighbours = serializers.IntegerField(default=16, min_value=1)
    global_points = serializers.IntegerField(default=256, min_value=1)

    def validate(self, data):
        for name in ('width', 'text_width', 'cond_width'):
            if data[name] % data['heads']:
                raise serializers.ValidationError(f'{name} debe ser divisible por heads={data["heads"]}.')
        return data


class FusionSectionSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=FUSION_KINDS, default='parallel_cross')


class DiffusionSectionSerializer(StrictSerializer):
    steps = serializers.IntegerField(default=100, min_value=1, max_value=10000)
    beta_start = serializers.FloatField(default=1e-4, min_value=0.0, max_value=1.0)
    beta_end = serializers.FloatField(default=0.02, min_value=0.0, max_value=1.0)
    cond_dropout = serializers.FloatField(default=0.0, min_value=0.0, max_value=1.0)
    guidance_scale = serializers.FloatField(default=1.0, min_value=0.0)

    def validate(self, data):
        if not 0.0 < data['beta_start'] <= data['beta_end'] < 1.0:
            raise serializers.ValidationError('Se requiere 0 < beta_start ≤ beta_end < 1.')
        return data


class LossSectionSerializer(StrictSerializer):
    position = serializers.FloatField(default=1.0, min_value=0.0)
    velocity = serializers.FloatField(default=1.0, min_value=0.0)
    foot = serializers.FloatField(default=1.0, min_value=0.0)


class OptimSectionSerializer(StrictSerializer):
    lr = serializers.FloatField(default=1e-4, min_value=0.0)
    batch_size = serializers.IntegerField(default=16, min_value=1)
    steps = serializers.IntegerField(default=2000, min_value=0)
    seed = serializers.IntegerField(default=0, min_value=0)
    checkpoint_every = serializers.IntegerField(default=500, min_value=1)
    log_every = serializers.IntegerField(default=100, min_value=0)


class EvaluationSectionSerializer(StrictSerializer):
    k = serializers.IntegerField(default=5, min_value=1)
    num_conditions = serializers.IntegerField(default=0, min_value=0)
    collision_threshold = serializers.FloatField(default=0.05, min_value=0.0)
    contact_threshold = serializers.FloatField(default=0.05, min_value=0.0)
    pool_size = serializers.IntegerField(default=32, min_value=2)
    matching_steps = serializers.IntegerField(default=300, min_value=0)
    matching_batch = serializers.IntegerField(default=8, min_value=2)
    matching_lr = serializers.FloatField(default=1e-3, min_value=0.0)
    matching_width = serializers.IntegerField(default=32, min_value=1)
    embed_width = serializers.IntegerField(default=32, min_value=1)
    min_pairs = serializers.IntegerField(default=64, min_value=2)
    seed = serializers.IntegerField(default=0, min_value=0)


class ContactSectionSerializer(StrictSerializer):
    velocity_threshold = serializers.FloatField(default=0.05, min_value=0.0)
    height_threshold = serializers.FloatField(default=0.08, min_value=0.0)

    def validate(self, data):
        if data['velocity_threshold'] <= 0 or data['height_threshold'] <= 0:
            raise serializers.ValidationError('Los umbrales de contacto deben ser positivos.')
        return data


class RunConfigSerializer(StrictSerializer):
    data = DataSectionSerializer()
    skeleton = SkeletonSectionSerializer()
    model = ModelSectionSerializer()
    fusion = FusionSectionSerializer()
    diffusion = DiffusionSectionSerializer()
    loss = LossSectionSerializer()
    optim = OptimSectionSerializer()
    evaluation = EvaluationSectionSerializer()
    contact = ContactSectionSerializer()


def _plain(value):
    return json.loads(json.dumps(value))


def validate_run_config(raw=None):
    """Devuelve la configuración completa (dict anidado) con los valores por defecto aplicados."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise serializers.ValidationError('La configuración debe ser un objeto JSON.')
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise serializers.ValidationError({key: ['Sección desconocida.'] for key in unknown})
    filled = {section: raw.get(section) or {} for section in SECTIONS}
    serializer = RunConfigSerializer(data=filled)
    serializer.is_valid(raise_exception=True)
    return _plain(serializer.validated_data)


def load_run_config(path=None):
    if path is None:
        return validate_run_config({})
    path = Path(path)
    if not path.exists():
        raise serializers.ValidationError(f'No existe el archivo de configuración {path}.')
    try:
        raw = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as exc:
        raise serializers.ValidationError(f'{path}: JSON inválido ({exc}).')
    return validate_run_config(raw)


def with_overrides(config, **sections):
    """Copia de `config` con claves sustituidas, p. ej. with_overrides(c, fusion={'kind': 'triple'})."""
    merged = _plain(config)
    for section, values in sections.items():
        merged.setdefault(section, {}).update(values)
    return validate_run_config(merged)


def shape_keys(config):
    """Claves que determinan la forma de los parámetros y el significado del checkpoint."""
    return {
        'data.num_frames': config['data']['num_frames'],
        'skeleton': config['skeleton'],
        'model': config['model'],
        'fusion': config['fusion'],
        'diffusion': {key: config['diffusion'][key] for key in ('steps', 'beta_start', 'beta_end')},
    }


def config_hash(config):
    canonical = json.dumps(shape_keys(config), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]


def dumps_config(config):
    return json.dumps(config, indent=2, sort_keys=True) + '\n'
