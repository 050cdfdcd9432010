# apps/pipeline/manifest.py
"""
Manifiesto del conjunto de datos en JSON Lines: un registro por secuencia con
rutas relativas al directorio del manifiesto.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from rest_framework import serializers

SPLITS = ('train', 'test')
SCENE_SOURCES = ('flat', 'stairs', 'box_room', 'corridor', 'dynamic_walker', 'imported')


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    kind: str
    scene: str
    motion: str
    captions: tuple
    split: str
    frames: tuple = field(default=())

    def as_dict(self):
        return {
            'captions': list(self.captions),
            'frames': list(self.frames),
            'id': self.id,
            'kind': self.kind,
            'motion': self.motion,
            'scene': self.scene,
            'split': self.split,
        }


class ManifestRecordSerializer(serializers.Serializer):
    id = serializers.CharField(max_length=200)
    kind = serializers.ChoiceField(choices=SCENE_SOURCES)
    scene = serializers.CharField()
    frames = serializers.ListField(child=serializers.CharField(), default=list)
    motion = serializers.CharField()
    captions = serializers.ListField(child=serializers.CharField(), min_length=1)
    split = serializers.ChoiceField(choices=SPLITS)

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Clave desconocida.'] for key in unknown})
        return super().to_internal_value(data)


@dataclass
class DatasetManifest:
    records: list
    root: Path = Path('.')

    def __len__(self):
        return len(self.records)

    def split(self, name):
        return [r for r in self.records if r.split == name]

    def path(self, relative):
        return self.root / relative

    def captions(self):
        return sorted({c for r in self.records for c in r.captions})


def record_from_dict(data, line=None):
    serializer = ManifestRecordSerializer(data=data)
    if not serializer.is_valid():
        where = data.get('id') if isinstance(data, dict) and data.get('id') else f'línea {line}'
        raise serializers.ValidationError({str(where): serializer.errors})
    values = serializer.validated_data
    return ManifestRecord(
        id=values['id'], kind=values['kind'], scene=values['scene'], motion=values['motion'],
        captions=tuple(values['captions']), split=values['split'], frames=tuple(values['frames']),
    )


def dumps_manifest(records):
    return ''.join(json.dumps(r.as_dict(), sort_keys=True) + '\n' for r in records)


def loads_manifest(text, root=Path('.')):
    records = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise serializers.ValidationError(f'Manifiesto, línea {number}: JSON inválido ({exc}).')
        records.append(record_from_dict(data, number))
    ids = [r.id for r in records]
    duplicated = sorted({i for i in ids if ids.count(i) > 1})
    if duplicated:
        raise serializers.ValidationError(f'Identificadores repetidos en el manifiesto: {duplicated}')
    return DatasetManifest(records, Path(root))


def write_manifest(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_manifest(records), encoding='utf-8')
    return path


def read_manifest(path, check_files=True):
    path = Path(path)
    if not path.exists():
        raise serializers.ValidationError(f'No existe el manifiesto {path}.')
    manifest = loads_manifest(path.read_text(encoding='utf-8'), root=path.parent)
    if check_files:
        missing = [
            r.id for r in manifest.records
            if not all(manifest.path(p).exists() for p in (r.scene, r.motion) + r.frames)
        ]
        if missing:
            raise serializers.ValidationError(f'Registros con archivos inexistentes: {missing}')
    return manifest
