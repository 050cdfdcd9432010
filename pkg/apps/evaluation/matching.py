# apps/evaluation/matching.py
"""
Modelo de emparejamiento texto-movimiento entrenado de forma contrastiva.
Su rama de movimiento es también el extractor de rasgos del FID.
"""

import logging

import numpy as np
from django.core.exceptions import ValidationError

from apps.autograd import functional as F
from apps.autograd.nn import AttentionBlock, Linear, Module, sinusoidal_table
from apps.autograd.optim import Adam
from apps.autograd.tensor import GradTape, Parameter, Tensor, stack
from apps.diffusion.normalizer import FeatureNormalizer
from apps.language.encoder import TextEncoder
from apps.language.vocab import TextPrompt
from apps.motion.representation import PoseFeatureLayout

logger = logging.getLogger(__name__)

EMBED_WIDTH = 32
MIN_PAIRS = 64


def pad_sequences(sequences):
    """Rellena con ceros hasta la secuencia más larga. Devuelve (B×N×d, máscara B×N)."""
    sequences = [np.asarray(s, dtype=np.float64) for s in sequences]
    if not sequences:
        raise ValidationError('No hay secuencias que embeber.')
    frames = max(len(s) for s in sequences)
    width = sequences[0].shape[1]
    batch = np.zeros((len(sequences), frames, width))
    valid = np.zeros((len(sequences), frames), dtype=bool)
    for i, s in enumerate(sequences):
        batch[i, :len(s)] = s
        valid[i, :len(s)] = True
    return batch, valid


class MatchingModel(Module):
    def __init__(self, vocab_size, feature_width, rng, dtype=np.float64, width=32, embed_width=EMBED_WIDTH, heads=1,
                 blocks=1, max_frames=64, pad_id=0):
        self.motion_input = Linear(feature_width, width, rng, dtype)
        self.motion_blocks = [AttentionBlock(width, rng, dtype, heads=heads) for _ in range(blocks)]
        self.motion_head = Linear(width, embed_width, rng, dtype)
        self.text_encoder = TextEncoder(vocab_size, width, rng, dtype, heads=heads, pad_id=pad_id)
        self.text_head = Linear(width, embed_width, rng, dtype)
        self.logit_scale = Parameter(np.ones(1), dtype=dtype)
        self.positions = sinusoidal_table(max_frames, width, dtype)
        self.normalizer = FeatureNormalizer.identity(feature_width)
        self.dtype = dtype

    def embed_motions(self, sequences):
        """Embeddings unitarios B×E para una lista de matrices de rasgos."""
        batch, valid = pad_sequences([self.normalizer.normalize(s) for s in sequences])
        hidden = self.motion_input(Tensor(batch, dtype=self.dtype)) + Tensor(self.positions[:batch.shape[1]])
        for block in self.motion_blocks:
            hidden = block(hidden, valid=valid)
        weights = valid / valid.sum(axis=1, keepdims=True)
        pooled = (hidden * weights[:, :, None]).sum(axis=1)
        return F.l2_normalize(self.motion_head(pooled))

    def embed_texts(self, prompts):
        pooled = stack([self.text_encoder(p).mean(axis=0) for p in prompts], axis=0)
        return F.l2_normalize(self.text_head(pooled))

    def similarity(self, motion_embeddings, text_embeddings):
        return (motion_embeddings @ text_embeddings.T) * self.logit_scale


def contrastive_loss(model: MatchingModel, sequences, prompts):
    """InfoNCE simétrico con negativos dentro del lote."""
    logits = model.similarity(model.embed_motions(sequences), model.embed_texts(prompts))
    diagonal = (np.arange(len(prompts)), np.arange(len(prompts)))
    rows = -F.log_softmax(logits, axis=1)[diagonal].mean()
    columns = -F.log_softmax(logits, axis=0)[diagonal].mean()
    return (rows + columns) * 0.5


def in_batch_accuracy(model: MatchingModel, sequences, prompts, batch_size=8, seed=0, shuffle=True):
    """
    Top-1 de recuperación movimiento→texto dentro de lotes de tamaño fijo.
    Con `shuffle=False` los lotes son bloques consecutivos en el orden dado.
    """
    order = np.arange(len(prompts))
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(prompts))
    hits, total = 0, 0
    for start in range(0, len(order) - batch_size + 1, batch_size):
        chunk = order[start:start + batch_size]
        motion = model.embed_motions([sequences[i] for i in chunk]).data
        text = model.embed_texts([prompts[i] for i in chunk]).data
        scores = motion @ text.T
        hits += int((scores.argmax(axis=1) == np.arange(len(chunk))).sum())
        total += len(chunk)
    if total == 0:
        raise ValidationError(f'Se necesitan al menos {batch_size} pares para medir la precisión.')
    return hits / total


def train_matching_model(sequences, captions, vocab, seed=0, steps=300, batch_size=8, lr=1e-3, width=32,
                         embed_width=EMBED_WIDTH, heads=1, min_pairs=MIN_PAIRS, log_every=50):
    """Entrena el modelo de emparejamiento sobre pares (rasgos, descripción)."""
    if len(sequences) != len(captions):
        raise ValidationError('Cada secuencia necesita exactamente una descripción.')
    if len(sequences) < min_pairs:
        raise ValidationError(f'El modelo de emparejamiento necesita al menos {min_pairs} pares, hay {len(sequences)}.')
    if len(set(captions)) < 2:
        raise ValidationError('Conjunto degenerado: todas las descripciones son iguales.')

    feature_width = np.asarray(sequences[0]).shape[1]
    max_frames = max(len(s) for s in sequences)
    rng = np.random.default_rng(seed)
    model = MatchingModel(len(vocab), feature_width, rng, width=width, embed_width=embed_width, heads=heads,
                          max_frames=max_frames, pad_id=vocab.pad_id)
    model.normalizer = FeatureNormalizer.fit(list(sequences), PoseFeatureLayout((feature_width - 3) // 6))
    prompts = [TextPrompt.from_text(c, vocab) for c in captions]
    optimizer = Adam(model.named_parameters(), lr=lr)
    batch_size = min(batch_size, len(sequences))

    for step in range(steps):
        chunk = np.random.default_rng([seed, step]).choice(len(sequences), size=batch_size, replace=False)
        with GradTape() as tape:
            loss = contrastive_loss(model, [sequences[i] for i in chunk], [prompts[i] for i in chunk])
        optimizer.step(tape.backward(loss))
        if log_every and (step + 1) % log_every == 0:
            logger.info(f'Emparejamiento paso {step + 1}/{steps}: pérdida {loss.item():.4f}')
    return model
