# apps/evaluation/retrieval.py
"""
R-score: cada movimiento debe quedar primero frente a su descripción entre
`pool_size` − 1 distractores. Un empate cuenta como fallo.
"""

import numpy as np
from django.core.exceptions import ValidationError

from apps.language.vocab import TextPrompt

DEFAULT_POOL_SIZE = 32


def _unit(rows):
    rows = np.asarray(rows, dtype=np.float64)
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def draw_distractors(index, captions, pool_size, rng):
    """Índices de `pool_size` − 1 claves distintas entre sí y de la verdadera; las repetidas se vuelven a sortear."""
    seen = {captions[index]}
    chosen = []
    total = len(captions)
    while len(chosen) < pool_size - 1:
        candidate = int(rng.integers(total))
        if captions[candidate] in seen:
            continue
        seen.add(captions[candidate])
        chosen.append(candidate)
    return chosen


def r_score_from_embeddings(motion_embeddings, caption_embeddings, captions, pool_size=DEFAULT_POOL_SIZE, seed=0,
                            keys=None):
    """
    `keys` decide cuándo dos descripciones cuentan como la misma (por defecto,
    el texto exacto).
    """
    motion = _unit(motion_embeddings)
    text = _unit(caption_embeddings)
    captions = list(captions) if keys is None else list(keys)
    if not (len(motion) == len(text) == len(captions)):
        raise ValidationError('Se necesita un embedding de texto y una descripción por movimiento.')
    if pool_size < 2:
        raise ValidationError('El grupo de recuperación necesita al menos 2 candidatos.')
    if len(captions) < pool_size or len(set(captions)) < pool_size:
        raise ValidationError(
            f'R-score con grupos de {pool_size} requiere al menos {pool_size} descripciones distintas.')
    rng = np.random.default_rng(seed)
    hits = 0
    for i in range(len(captions)):
        distractors = draw_distractors(i, captions, pool_size, rng)
        true_score = float(motion[i] @ text[i])
        rival = float((text[distractors] @ motion[i]).max())
        hits += true_score > rival
    return hits / len(captions)


def r_score(sequences, captions, matching_model, vocab, pool_size=DEFAULT_POOL_SIZE, seed=0, keys=None):
    motion = matching_model.embed_motions(sequences).data
    text = matching_model.embed_texts([TextPrompt.from_text(c, vocab) for c in captions]).data
    return r_score_from_embeddings(motion, text, captions, pool_size, seed, keys)
