# apps/language/tests.py

import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from apps.autograd.gradcheck import check_gradients
from apps.motion.scripts import MOTION_SCRIPTS

from . import captions
from .encoder import TextEncoder, encode_text
from .vocab import MAX_LENGTH, TextPrompt, Vocabulary, split_words


class TokenizeTests(SimpleTestCase):
    def setUp(self):
        self.vocab = Vocabulary.build(['Walk to the chair.'])

    def test_sentence(self):
        ids = self.vocab.tokenize('Walk to the chair.')
        self.assertEqual(self.vocab.decode(ids), ['<bos>', 'walk', 'to', 'the', 'chair', '<eos>'])

    def test_empty_text(self):
        self.assertEqual(self.vocab.tokenize(''), [self.vocab.bos_id, self.vocab.eos_id])

    def test_unknown_word_maps_to_unk(self):
        ids = self.vocab.tokenize('the zeppelin')
        self.assertEqual(ids[2], self.vocab.unk_id)
        self.assertEqual(len(ids), 4)

    def test_id_token_round_trip(self):
        text = captions.synth_caption('stairs', 'climb_stairs', 5)
        ids = self.vocab.tokenize(text)
        tokens = self.vocab.decode(ids)
        self.assertEqual([self.vocab.ids[t] for t in tokens], ids)
        self.assertEqual(tokens[1:-1], split_words(text))

    def test_build_is_deterministic(self):
        corpus = ['Hello there', 'b a c']
        self.assertEqual(Vocabulary.build(corpus), Vocabulary.build(list(reversed(corpus))))
        vocab = Vocabulary.build(corpus)
        self.assertEqual(vocab.tokens[:4], ('<pad>', '<unk>', '<bos>', '<eos>'))

    def test_save_and_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.vocab.save(Path(tmp) / 'vocab.txt')
            self.assertEqual(Vocabulary.load(path), self.vocab)

    def test_prompt_padding_and_length(self):
        prompt = TextPrompt.from_text('the person walks', self.vocab)
        self.assertEqual(len(prompt.token_ids), MAX_LENGTH)
        self.assertEqual(prompt.length, 5)
        self.assertEqual(prompt.token_ids[5:], (self.vocab.pad_id,) * (MAX_LENGTH - 5))
        with self.assertRaises(ValidationError):
            TextPrompt.from_text('word ' * 40, self.vocab)


class CaptionTests(SimpleTestCase):
    def test_canonical_caption(self):
        self.assertEqual(captions.synth_caption('stairs', 'climb_stairs', 1),
                         'the person walks forward and climbs the stairs')

    def test_seeds_change_wording_not_meaning(self):
        first = captions.synth_caption('box_room', 'sit_on', 1)
        second = captions.synth_caption('box_room', 'sit_on', 2)
        self.assertNotEqual(first, second)
        self.assertEqual(captions.parse_caption(first), captions.parse_caption(second))

    def test_corpus_parses_back(self):
        pairs = [('flat', 'circle'), ('flat', 'wave'), ('stairs', 'climb_stairs'), ('box_room', 'walk_to'),
                 ('box_room', 'sit_on'), ('corridor', 'walk_to'), ('dynamic_walker', 'walk_to'),
                 ('dynamic_walker', 'wave')]
        for seed in range(1, 1001):
            kind, script = pairs[seed % len(pairs)]
            text = captions.synth_caption(kind, script, seed)
            self.assertEqual(captions.parse_caption(text), captions.caption_label(kind, script))

    def test_every_scene_and_script_pair_has_captions(self):
        for kind in captions.REFERENTS:
            for script in MOTION_SCRIPTS:
                label = captions.caption_label(kind, script)
                self.assertEqual(label[0], script)
                for seed in range(1, 40):
                    text = captions.synth_caption(kind, script, seed)
                    self.assertEqual(captions.parse_caption(text), label)

    def test_generic_wording_for_unscripted_pair(self):
        self.assertEqual(captions.synth_caption('flat', 'sit_on', 1),
                         'the person walks near the open floor and sits down')

    def test_unknown_inputs_rejected(self):
        with self.assertRaises(ValidationError):
            captions.synth_caption('stairs', 'fly', 1)
        with self.assertRaises(ValidationError):
            captions.synth_caption('volcano', 'walk_to', 1)
        with self.assertRaises(ValidationError):
            captions.parse_caption('the person flies')

    def test_every_caption_fits_prompt(self):
        vocab = Vocabulary.build()
        for text in captions._inverse_table():
            ids = vocab.tokenize(text)
            self.assertLessEqual(len(ids), MAX_LENGTH)
            self.assertNotIn(vocab.unk_id, ids)


class TextEncoderTests(SimpleTestCase):
    def setUp(self):
        self.vocab = Vocabulary.build()
        self.encoder = TextEncoder(len(self.vocab), 8, np.random.default_rng(0), heads=2)

    def test_deterministic(self):
        prompt = TextPrompt.from_text('the person walks down the hallway', self.vocab)
        np.testing.assert_array_equal(encode_text(self.encoder, prompt).data,
                                      encode_text(self.encoder, prompt).data)

    def test_output_shape(self):
        prompt = TextPrompt.from_text('someone waves', self.vocab)
        self.assertEqual(encode_text(self.encoder, prompt).shape, (4, 8))

    def test_position_sensitive(self):
        a = self.vocab.tokenize('the person walks')
        b = [a[0], a[2], a[1], a[3], a[4]]
        self.assertFalse(np.allclose(self.encoder(a).data, self.encoder(b).data))

    def test_pad_invariance(self):
        ids = self.vocab.tokenize('a person walks up to the crate')
        padded = ids + [self.vocab.pad_id] * 6
        np.testing.assert_array_equal(self.encoder(ids).data, self.encoder(padded).data)

    def test_over_length_rejected(self):
        with self.assertRaises(ValidationError):
            self.encoder([self.vocab.bos_id] * (MAX_LENGTH + 1))

    def test_gradients(self):
        encoder = TextEncoder(len(self.vocab), 4, np.random.default_rng(1), blocks=1)
        ids = self.vocab.tokenize('the man circles around')
        error = check_gradients(lambda: (encoder(ids) ** 2).sum(), encoder.parameters())
        self.assertLess(error, 1e-4)
