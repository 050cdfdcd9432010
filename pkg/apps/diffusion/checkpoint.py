# apps/diffusion/checkpoint.py
"""
Formato binario de checkpoint "STMD1":

  b'STMD1' | longitud del manifiesto (uint32 LE) | manifiesto JSON | carga útil

El manifiesto es JSON compacto con claves ordenadas: {"meta": {...},
"tensors": [{"name", "shape", "offset"}, ...]}. La carga útil concatena los
tensores en float32 little-endian; `offset` se mide en bytes desde su inicio.
"""

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

MAGIC = b'STMD1'
PAYLOAD_DTYPE = np.dtype('<f4')


@dataclass
class Checkpoint:
    meta: dict
    tensors: dict

    def section(self, prefix):
        """Tensores cuyo nombre empieza por `prefix.`, sin el prefijo."""
        start = len(prefix) + 1
        return {name[start:]: value for name, value in self.tensors.items() if name.startswith(f'{prefix}.')}


def dumps_checkpoint(meta, tensors):
    entries, chunks, offset = [], [], 0
    for name in tensors:
        array = np.ascontiguousarray(np.asarray(tensors[name]), dtype=PAYLOAD_DTYPE)
        if not np.isfinite(array).all():
            raise ValidationError(f"El tensor '{name}' contiene valores no finitos.")
        entries.append({'name': name, 'shape': list(array.shape), 'offset': offset})
        chunks.append(array.tobytes())
        offset += array.nbytes
    manifest = json.dumps({'meta': meta, 'tensors': entries}, sort_keys=True, separators=(',', ':'))
    manifest = manifest.encode('utf-8')
    return MAGIC + struct.pack('<I', len(manifest)) + manifest + b''.join(chunks)


def loads_checkpoint(blob, source='<memoria>'):
    if not blob.startswith(MAGIC):
        raise ValidationError(f'{source}: no es un checkpoint STMD1.')
    header = len(MAGIC) + 4
    if len(blob) < header:
        raise ValidationError(f'{source}: checkpoint truncado.')
    (length,) = struct.unpack('<I', blob[len(MAGIC):header])
    try:
        manifest = json.loads(blob[header:header + length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f'{source}: manifiesto ilegible ({exc}).')
    payload = memoryview(blob)[header + length:]
    tensors = {}
    for entry in manifest.get('tensors', []):
        count = int(np.prod(entry['shape'])) if entry['shape'] else 1
        stop = entry['offset'] + count * PAYLOAD_DTYPE.itemsize
        if stop > len(payload):
            raise ValidationError(f"{source}: el tensor '{entry['name']}' excede la carga útil.")
        array = np.frombuffer(payload[entry['offset']:stop], dtype=PAYLOAD_DTYPE).reshape(entry['shape'])
        tensors[entry['name']] = array.astype(np.float32)
    return Checkpoint(meta=manifest.get('meta', {}), tensors=tensors)


def save_checkpoint(path, model, normalizer, meta, optimizer=None):
    tensors = {f'model.{name}': value for name, value in model.state_dict().items()}
    tensors.update(normalizer.state_dict())
    if optimizer is not None:
        tensors.update(optimizer.state_dict())
        meta = dict(meta, optimizer_step=optimizer.step_count)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_checkpoint(meta, tensors))
    logger.info(f'Checkpoint guardado en {path} ({len(tensors)} tensores)')
    return path


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f'No existe el checkpoint {path}.')
    return loads_checkpoint(path.read_bytes(), source=str(path))


def verify_checkpoint(checkpoint: Checkpoint, config_hash=None, fusion_kind=None):
    """Rechaza un checkpoint producido con otra forma de modelo u otra variante de fusión."""
    meta = checkpoint.meta
    if fusion_kind is not None and meta.get('fusion_kind') != fusion_kind:
        raise ValidationError(
            f"El checkpoint usa la fusión '{meta.get('fusion_kind')}', la configuración pide '{fusion_kind}'.")
    if config_hash is not None and meta.get('config_hash') != config_hash:
        raise ValidationError(
            f"Hash de configuración distinto: checkpoint {meta.get('config_hash')}, configuración {config_hash}.")
    return checkpoint
