# apps/language/vocab.py
"""Vocabulario, tokenización y prompts de texto."""

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from .captions import lexicon

PAD, UNK, BOS, EOS = '<pad>', '<unk>', '<bos>', '<eos>'
SPECIAL_TOKENS = (PAD, UNK, BOS, EOS)
MAX_LENGTH = 32

_PUNCTUATION = re.compile(r'[^\w\s]')


def split_words(text):
    """Minúsculas, sin puntuación, separado por espacios."""
    return _PUNCTUATION.sub('', text.lower()).split()


class Vocabulary:
    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValidationError(f'El vocabulario debe empezar por {list(SPECIAL_TOKENS)}.')
        if len(set(tokens)) != len(tokens):
            raise ValidationError('El vocabulario tiene tokens repetidos.')
        self.tokens = tuple(tokens)
        self.ids = {token: i for i, token in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    @property
    def pad_id(self):
        return self.ids[PAD]

    @property
    def unk_id(self):
        return self.ids[UNK]

    @property
    def bos_id(self):
        return self.ids[BOS]

    @property
    def eos_id(self):
        return self.ids[EOS]

    @classmethod
    def build(cls, texts=()):
        """Léxico de plantillas más las palabras del corpus, en orden alfabético."""
        words = set(lexicon())
        for text in texts:
            words.update(split_words(text))
        return cls(SPECIAL_TOKENS + tuple(sorted(words - set(SPECIAL_TOKENS))))

    def tokenize(self, text):
        words = split_words(text)
        return [self.bos_id] + [self.ids.get(w, self.unk_id) for w in words] + [self.eos_id]

    def decode(self, ids):
        return [self.tokens[i] for i in ids]

    def dumps(self):
        return '\n'.join(self.tokens) + '\n'

    @classmethod
    def loads(cls, text):
        return cls(line for line in text.splitlines() if line)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding='utf-8')
        return path

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text(encoding='utf-8'))


@dataclass(frozen=True)
class TextPrompt:
    text: str
    token_ids: tuple       # longitud fija `max_length`, rellena con <pad>
    length: int            # tokens reales, incluidos <bos> y <eos>

    @classmethod
    def from_text(cls, text, vocab: Vocabulary, max_length=MAX_LENGTH):
        ids = vocab.tokenize(text)
        if len(ids) > max_length:
            raise ValidationError(f'La descripción tiene {len(ids)} tokens; el máximo es {max_length}.')
        padded = ids + [vocab.pad_id] * (max_length - len(ids))
        return cls(text=text, token_ids=tuple(padded), length=len(ids))

    @property
    def valid_mask(self):
        mask = np.zeros(len(self.token_ids), dtype=bool)
        mask[:self.length] = True
        return mask

    def active_ids(self):
        return np.asarray(self.token_ids[:self.length], dtype=np.int64)
