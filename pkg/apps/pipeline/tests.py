# apps/pipeline/tests.py

import json
import math
import shutil
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, tag
from rest_framework import serializers

from apps.diffusion.checkpoint import load_checkpoint
from apps.diffusion.losses import training_loss
from apps.diffusion.sampler import features_to_motion
from apps.evaluation.plausibility import non_collision_score
from apps.evaluation.report import read_report
from apps.motion.io import read_motion
from apps.motion.skeleton import default_skeleton
from apps.runlog.models import LogEntry
from apps.scenes.ply import read_ply

from .ablation import TABLE_NAME, ablate, rows_from_runs
from .assessment import REPORT_NAME, caption_key, evaluate_checkpoint
from .config import config_hash, load_run_config, validate_run_config, with_overrides
from .dataset import MANIFEST_NAME, gen_dataset, load_corpus
from .importer import import_laserhuman
from .manifest import ManifestRecord, dumps_manifest, loads_manifest, read_manifest
from .models import ExperimentRun
from .sampling import sample_cmd
from .training import LAST_CHECKPOINT, LOSS_LOG, train

SKELETON = default_skeleton()

# Corpus y modelo mínimos: 20 registros, la mitad de prueba
TINY = {
    'data': {'corpus_size': 20, 'test_fraction': 0.5, 'num_points': 64, 'scene_density': 4.0, 'crop_radius': 3.0},
    'model': {'width': 8, 'text_width': 8, 'cond_width': 8, 'text_blocks': 1, 'denoiser_layers': 1,
              'neighbours': 4, 'global_points': 16},
    'diffusion': {'steps': 5},
    'optim': {'batch_size': 4, 'steps': 4, 'checkpoint_every': 2, 'log_every': 0, 'lr': 1e-3},
    'evaluation': {'k': 2, 'pool_size': 4, 'matching_steps': 5, 'matching_batch': 4, 'matching_width': 8,
                   'embed_width': 2, 'min_pairs': 8},
}


def tiny_config(**sections):
    config = validate_run_config(TINY)
    return with_overrides(config, **sections) if sections else config


def _files(root):
    root = Path(root)
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob('*')) if p.is_file()}


class TrainedCorpusMixin:
    """Corpus mínimo y un checkpoint de 4 pasos compartidos por la clase."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.workdir = Path(tempfile.mkdtemp())
        cls.addClassCleanup(shutil.rmtree, cls.workdir, True)
        cls.config = tiny_config()
        cls.manifest_path = gen_dataset(cls.workdir / 'data', cls.config)
        cls.training = train(cls.config, cls.manifest_path, cls.workdir / 'train')


class RunConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = validate_run_config({})
        self.assertEqual(config['data']['num_frames'], 40)
        self.assertEqual(config['optim']['lr'], 1e-4)
        self.assertEqual(config['optim']['batch_size'], 16)
        self.assertEqual(config['diffusion']['steps'], 100)
        self.assertEqual(config['fusion']['kind'], 'parallel_cross')
        self.assertEqual(config['evaluation']['collision_threshold'], 0.05)

    def test_unknown_keys_rejected(self):
        for raw in ({'model': {'depth': 3}}, {'training': {}}, {'data': {'num_frames': 40, 'extra': 1}}):
            with self.assertRaises(serializers.ValidationError):
                validate_run_config(raw)

    def test_widths_must_split_across_heads(self):
        with self.assertRaises(serializers.ValidationError):
            validate_run_config({'model': {'width': 10, 'heads': 4}})

    def test_unknown_fusion_kind(self):
        with self.assertRaises(serializers.ValidationError):
            validate_run_config({'fusion': {'kind': 'attention_soup'}})

    def test_hash_only_follows_shape_keys(self):
        base = validate_run_config({})
        self.assertEqual(len(config_hash(base)), 16)
        self.assertEqual(config_hash(base), config_hash(with_overrides(base, optim={'lr': 0.5, 'seed': 9})))
        self.assertNotEqual(config_hash(base), config_hash(with_overrides(base, model={'width': 32})))
        self.assertNotEqual(config_hash(base), config_hash(with_overrides(base, fusion={'kind': 'triple'})))
        self.assertNotEqual(config_hash(base), config_hash(with_overrides(base, data={'num_frames': 20})))

    def test_load_from_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'run.json'
            path.write_text(json.dumps({'optim': {'steps': 7}}), encoding='utf-8')
            self.assertEqual(load_run_config(path)['optim']['steps'], 7)
            path.write_text('{no es json', encoding='utf-8')
            with self.assertRaises(serializers.ValidationError):
                load_run_config(path)
            with self.assertRaises(serializers.ValidationError):
                load_run_config(Path(tmp) / 'missing.json')


class ManifestTests(SimpleTestCase):
    def setUp(self):
        self.records = [
            ManifestRecord(id='a', kind='flat', scene='scenes/a.ply', motion='motions/a.json',
                           captions=('the person walks in a circle',), split='train'),
            ManifestRecord(id='b', kind='dynamic_walker', scene='scenes/b.ply', motion='motions/b.json',
                           captions=('x', 'y'), split='test', frames=('scenes/b/frame_000.ply',)),
        ]

    def test_round_trip(self):
        manifest = loads_manifest(dumps_manifest(self.records))
        self.assertEqual(manifest.records, self.records)
        self.assertEqual([r.id for r in manifest.split('test')], ['b'])
        self.assertEqual(manifest.captions(), ['the person walks in a circle', 'x', 'y'])

    def test_missing_captions_rejected(self):
        line = json.dumps(dict(self.records[0].as_dict(), captions=[]))
        with self.assertRaises(serializers.ValidationError) as ctx:
            loads_manifest(line)
        self.assertIn('a', ctx.exception.detail)

    def test_duplicate_ids_rejected(self):
        with self.assertRaises(serializers.ValidationError):
            loads_manifest(dumps_manifest([self.records[0], self.records[0]]))

    def test_bad_split_rejected(self):
        with self.assertRaises(serializers.ValidationError):
            loads_manifest(json.dumps(dict(self.records[0].as_dict(), split='val')))

    def test_missing_files_listed(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / MANIFEST_NAME
            path.write_text(dumps_manifest(self.records), encoding='utf-8')
            with self.assertRaises(serializers.ValidationError) as ctx:
                read_manifest(path)
            self.assertIn("['a', 'b']", str(ctx.exception.detail))
            self.assertEqual(len(read_manifest(path, check_files=False)), 2)


class DatasetTests(SimpleTestCase):
    def test_rerun_is_byte_identical(self):
        config = tiny_config(data={'corpus_size': 8, 'seed': 7})
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            gen_dataset(first, config)
            gen_dataset(second, config, workers=3)
            files = _files(first)
            self.assertEqual(files, _files(second))
            self.assertEqual(len(read_manifest(Path(first) / MANIFEST_NAME)), 8)

    def test_split_ratio(self):
        config = tiny_config(data={'corpus_size': 10, 'test_fraction': 0.2})
        with tempfile.TemporaryDirectory() as tmp:
            manifest = read_manifest(gen_dataset(tmp, config))
            self.assertEqual(len(manifest.split('test')), 2)
            self.assertEqual(len(manifest.split('train')), 8)

    def test_records_are_consistent(self):
        config = tiny_config(data={'corpus_size': 5})
        with tempfile.TemporaryDirectory() as tmp:
            manifest = read_manifest(gen_dataset(tmp, config))
            for record in manifest.records:
                self.assertEqual(len(record.captions), 3)
                self.assertIn(record.kind, record.id)
                motion = read_motion(manifest.path(record.motion))
                self.assertEqual(motion.num_frames, 40)
                self.assertEqual(bool(record.frames), record.kind == 'dynamic_walker')
                self.assertGreater(len(read_ply(manifest.path(record.scene))), 0)

    def test_stairs_ground_truth_does_not_collide(self):
        config = validate_run_config({'data': {'corpus_size': 6, 'scene_kinds': ['stairs'], 'test_fraction': 0.0}})
        with tempfile.TemporaryDirectory() as tmp:
            manifest = read_manifest(gen_dataset(tmp, config))
            for item in load_corpus(manifest, config):
                motion = features_to_motion(item.features, fps=10.0, num_joints=SKELETON.joint_count)
                self.assertGreaterEqual(non_collision_score(motion, SKELETON, item.scene, 0.05), 0.98,
                                        item.record.id)

    def test_condition_points_are_centred(self):
        config = tiny_config(data={'corpus_size': 3})
        with tempfile.TemporaryDirectory() as tmp:
            items = load_corpus(read_manifest(gen_dataset(tmp, config)), config)
            for item in items:
                self.assertEqual(item.f_p.shape[1], 6)
                self.assertLessEqual(len(item.f_p), 64)
                self.assertTrue(np.all(np.linalg.norm(item.f_p[:, :2], axis=1) <= 3.0 + 1e-9))


class TrainingTests(TrainedCorpusMixin, SimpleTestCase):
    def test_loss_log_and_checkpoints(self):
        out = self.workdir / 'train'
        lines = (out / LOSS_LOG).read_text(encoding='utf-8').splitlines()
        self.assertEqual(lines[0], 'step,motion,position,velocity,foot,total')
        self.assertEqual(len(lines), 5)
        self.assertTrue((out / 'ckpt_000002.stmd').exists())
        self.assertTrue((out / 'ckpt_000004.stmd').exists())
        meta = load_checkpoint(out / LAST_CHECKPOINT).meta
        self.assertEqual(meta['step'], 4)
        self.assertEqual(meta['config_hash'], config_hash(self.config))
        self.assertTrue(all(math.isfinite(float(row['total'])) for row in self.training.losses))

    def test_resume_matches_uninterrupted_run(self):
        out = self.workdir / 'resumed'
        train(self.config, self.manifest_path, out, steps=2)
        train(self.config, self.manifest_path, out, resume=out / 'ckpt_000002.stmd', steps=4)
        reference = self.workdir / 'train'
        self.assertEqual((out / LOSS_LOG).read_bytes(), (reference / LOSS_LOG).read_bytes())
        resumed = load_checkpoint(out / LAST_CHECKPOINT)
        uninterrupted = load_checkpoint(reference / LAST_CHECKPOINT)
        self.assertEqual(sorted(resumed.tensors), sorted(uninterrupted.tensors))
        for name, value in uninterrupted.tensors.items():
            np.testing.assert_array_equal(resumed.tensors[name], value, err_msg=name)

    def test_resume_after_crash_keeps_full_loss_log(self):
        out = self.workdir / 'crashed'
        calls = []

        def failing_loss(*args, **kwargs):
            calls.append(1)
            if len(calls) == 3:
                raise RuntimeError('fallo simulado')
            return training_loss(*args, **kwargs)

        with mock.patch('apps.pipeline.training.training_loss', side_effect=failing_loss):
            with self.assertRaises(RuntimeError):
                train(self.config, self.manifest_path, out, steps=4)
        self.assertTrue((out / 'ckpt_000002.stmd').exists())
        self.assertEqual(len((out / LOSS_LOG).read_text(encoding='utf-8').splitlines()), 3)

        train(self.config, self.manifest_path, out, resume=out / 'ckpt_000002.stmd', steps=4)
        reference = self.workdir / 'train'
        self.assertEqual((out / LOSS_LOG).read_bytes(), (reference / LOSS_LOG).read_bytes())

    def test_resume_refuses_other_config(self):
        other = tiny_config(model={'width': 16})
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValidationError):
                train(other, self.manifest_path, tmp, resume=self.workdir / 'train' / LAST_CHECKPOINT)

    def test_zero_steps_still_writes_checkpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            result = train(self.config, self.manifest_path, tmp, steps=0)
            self.assertTrue(result.checkpoint.exists())
            self.assertTrue(math.isnan(result.final_loss))


class SamplingTests(TrainedCorpusMixin, SimpleTestCase):
    def setUp(self):
        manifest = read_manifest(self.manifest_path)
        self.record = manifest.records[0]
        self.scene = manifest.path(self.record.scene)
        root = read_motion(manifest.path(self.record.motion)).root_translation[0]
        self.anchor = (float(root[0]), float(root[1]), 0.0)
        self.checkpoint = self.workdir / 'train' / LAST_CHECKPOINT

    def _sample(self, out, seed=3, workers=1):
        return sample_cmd(self.checkpoint, self.scene, self.record.captions[0], 3, seed, out, config=self.config,
                          anchor=self.anchor, workers=workers)

    def test_three_files_of_forty_frames(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = self._sample(tmp)
            self.assertEqual([p.name for p in paths], ['sample_000.json', 'sample_001.json', 'sample_002.json'])
            for path in paths:
                motion = read_motion(path)
                self.assertEqual(motion.num_frames, 40)
                np.testing.assert_allclose(motion.root_translation[0, :2], [0.0, 0.0], atol=1e-9)

    def test_same_seed_same_bytes(self):
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            self._sample(first)
            self._sample(second, workers=3)
            self.assertEqual(_files(first), _files(second))

    def test_samples_differ_between_indices(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = self._sample(tmp)
            self.assertNotEqual(paths[0].read_bytes(), paths[1].read_bytes())

    def test_preconditions(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValidationError):
                sample_cmd(self.checkpoint, self.scene, '  ', 3, 0, tmp, config=self.config)
            with self.assertRaises(ValidationError):
                sample_cmd(self.checkpoint, Path(tmp) / 'nope.ply', 'walk', 3, 0, tmp, config=self.config)
            with self.assertRaises(ValidationError):
                sample_cmd(self.checkpoint, self.scene, 'walk', 0, 0, tmp, config=self.config)

    def test_fusion_mismatch_refused(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValidationError):
                sample_cmd(self.checkpoint, self.scene, 'walk', 1, 0, tmp,
                           config=tiny_config(fusion={'kind': 'concat_self'}))


class EvaluationTests(TrainedCorpusMixin, SimpleTestCase):
    def test_barely_trained_report_is_finite(self):
        out = self.workdir / 'eval'
        report = evaluate_checkpoint(self.config, self.manifest_path, self.workdir / 'train' / LAST_CHECKPOINT, out)
        for key, value in report.as_dict().items():
            if isinstance(value, float):
                self.assertTrue(math.isfinite(value), key)
        self.assertGreaterEqual(report.non_collision, 0.0)
        self.assertLessEqual(report.non_collision, 1.0)
        self.assertEqual(report.k_per_condition, 2)
        self.assertEqual(report.n_conditions, 10)
        self.assertEqual(report.config_hash, config_hash(self.config))
        self.assertEqual(read_report(out / REPORT_NAME), report)
        self.assertIn('p-score', (out / 'report.txt').read_text(encoding='utf-8'))

    def test_ground_truth_fid_is_zero(self):
        with tempfile.TemporaryDirectory() as tmp:
            report = evaluate_checkpoint(self.config, self.manifest_path, self.workdir / 'train' / LAST_CHECKPOINT,
                                         tmp, ground_truth=True)
            self.assertLess(report.fid, 1e-6)
            self.assertEqual(report.apd_t, 0.0)

    def test_evaluation_is_deterministic(self):
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            checkpoint = self.workdir / 'train' / LAST_CHECKPOINT
            evaluate_checkpoint(self.config, self.manifest_path, checkpoint, first, k=2)
            evaluate_checkpoint(self.config, self.manifest_path, checkpoint, second, k=2, workers=4)
            self.assertEqual(_files(first), _files(second))

    def test_single_sample_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValidationError):
                evaluate_checkpoint(self.config, self.manifest_path, self.workdir / 'train' / LAST_CHECKPOINT, tmp,
                                    k=1)

    def test_config_mismatch_refused(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValidationError):
                evaluate_checkpoint(tiny_config(diffusion={'steps': 6}), self.manifest_path,
                                    self.workdir / 'train' / LAST_CHECKPOINT, tmp)

    def test_caption_key(self):
        self.assertEqual(caption_key('no template here'), 'no template here')
        record = read_manifest(self.manifest_path).records[0]
        keys = {caption_key(c) for c in record.captions}
        self.assertEqual(len(keys), 1)


class ImporterTests(SimpleTestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, True)
        self.config = tiny_config()

    def _index(self, entries):
        path = self.tmp / 'index.jsonl'
        path.write_text(''.join(json.dumps(e) + '\n' for e in entries), encoding='utf-8')
        return path

    def test_generated_corpus_reimports_identically(self):
        config = tiny_config(data={'corpus_size': 6})
        source = gen_dataset(self.tmp / 'source', config)
        path, records = import_laserhuman(source, self.tmp / 'copy', config)
        self.assertEqual(len(records), 6)
        self.assertEqual(path.read_bytes(), source.read_bytes())
        self.assertEqual(_files(self.tmp / 'copy'), _files(self.tmp / 'source'))

    def test_point_file_and_pose_motion(self):
        rng = np.random.default_rng(0)
        points = np.column_stack([rng.uniform(-2, 2, size=(50, 2)), np.zeros(50), rng.integers(0, 256, size=(50, 3))])
        np.savetxt(self.tmp / 'room.xyz', points)
        frames = 12
        translation = np.column_stack([np.linspace(0, 1, frames), np.zeros(frames), np.full(frames, 0.9)])
        pose = {'fps': 10.0, 'translation': translation.tolist(),
                'rotations': np.zeros((frames, SKELETON.joint_count, 3)).tolist()}
        (self.tmp / 'walk.json').write_text(json.dumps(pose), encoding='utf-8')
        index = self._index([{'id': 'seq_1', 'scene': 'room.xyz', 'motion': 'walk.json',
                              'captions': ['the person walks forward'], 'kind': 'lab'}])

        path, records = import_laserhuman(index, self.tmp / 'out', self.config)
        self.assertEqual(records[0].kind, 'imported')
        self.assertEqual(records[0].split, 'train')
        manifest = read_manifest(path)
        scene = read_ply(manifest.path(records[0].scene))
        self.assertEqual(len(scene), 50)
        self.assertLessEqual(scene.colors.max(), 1.0)
        np.testing.assert_allclose(np.linalg.norm(scene.normals, axis=1), 1.0, atol=1e-6)
        motion = read_motion(manifest.path(records[0].motion))
        self.assertEqual(motion.num_frames, frames)
        np.testing.assert_allclose(motion.root_translation, translation, atol=1e-6)

    def test_record_without_captions_listed(self):
        index = self._index([
            {'id': 'good', 'scene': 's.ply', 'motion': 'm.json', 'captions': ['x']},
            {'id': 'no_text', 'scene': 's.ply', 'motion': 'm.json', 'captions': []},
        ])
        with self.assertRaises(ValidationError) as ctx:
            import_laserhuman(index, self.tmp / 'out', self.config)
        self.assertIn('no_text', ' '.join(ctx.exception.messages))
        self.assertFalse((self.tmp / 'out' / MANIFEST_NAME).exists())

    def test_unknown_keys_and_duplicates_listed(self):
        index = self._index([
            {'id': 'a', 'scene': 's.ply', 'motion': 'm.json', 'captions': ['x'], 'betas': [0.1]},
            {'id': 'b', 'scene': 's.ply', 'motion': 'm.json', 'captions': ['x']},
            {'id': 'b', 'scene': 's.ply', 'motion': 'm.json', 'captions': ['y']},
        ])
        with self.assertRaises(ValidationError) as ctx:
            import_laserhuman(index, self.tmp / 'out', self.config)
        message = ' '.join(ctx.exception.messages)
        self.assertIn('a: claves desconocidas', message)
        self.assertIn('b: id repetido', message)

    def test_empty_index_gives_empty_manifest(self):
        index = self._index([])
        with self.assertLogs('apps.pipeline.importer', level='WARNING'):
            path, records = import_laserhuman(index, self.tmp / 'out', self.config)
        self.assertEqual(records, [])
        self.assertEqual(path.read_text(encoding='utf-8'), '')


class AblationTests(TrainedCorpusMixin, TestCase):
    def test_two_variants(self):
        with tempfile.TemporaryDirectory() as tmp:
            rows, table = ablate(self.config, self.manifest_path, ['parallel_cross', 'concat_self'], tmp, steps=2)
            self.assertEqual([r['variant'] for r in rows], ['parallel_cross', 'concat_self'])
            for row in rows:
                for key, value in row.items():
                    if isinstance(value, float):
                        self.assertTrue(math.isfinite(value), key)
            lines = table.read_text(encoding='utf-8').splitlines()
            self.assertEqual(len(lines), 3)
            self.assertNotIn('nan', table.read_text(encoding='utf-8'))
            runs = ExperimentRun.objects.filter(command='ablate').order_by('id')
            self.assertEqual([r.fusion_kind for r in runs], ['parallel_cross', 'concat_self'])
            self.assertTrue(all(r.status == 'succeeded' for r in runs))
            self.assertEqual(rows_from_runs([r.id for r in runs]), rows)

    def test_repeated_variant_gives_identical_rows(self):
        with tempfile.TemporaryDirectory() as tmp:
            rows, _ = ablate(self.config, self.manifest_path, ['triple', 'triple'], tmp, steps=2)
            self.assertEqual(rows[0], rows[1])

    def test_needs_two_known_variants(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValidationError):
                ablate(self.config, self.manifest_path, ['triple'], tmp)
            with self.assertRaises(ValidationError):
                ablate(self.config, self.manifest_path, ['triple', 'mystery'], tmp)

    def test_failure_keeps_partial_table(self):
        calls = []

        def flaky(*args, **kwargs):
            calls.append(1)
            if len(calls) == 2:
                raise RuntimeError('sin memoria')
            return evaluate_checkpoint(*args, **kwargs)

        with tempfile.TemporaryDirectory() as tmp:
            with mock.patch('apps.pipeline.ablation.evaluate_checkpoint', side_effect=flaky):
                with self.assertRaises(RuntimeError):
                    ablate(self.config, self.manifest_path, ['parallel_cross', 'scene_queried'], tmp, steps=1)
            lines = (Path(tmp) / TABLE_NAME).read_text(encoding='utf-8').splitlines()
            self.assertEqual(len(lines), 2)
            self.assertTrue(lines[1].startswith('parallel_cross\t'))
        statuses = list(ExperimentRun.objects.filter(command='ablate').order_by('id').values_list('status', flat=True))
        self.assertEqual(statuses, ['succeeded', 'failed'])
        self.assertEqual(ExperimentRun.objects.get(status='failed').error_message, 'sin memoria')


class CommandTests(TestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, True)
        self.config_path = self.tmp / 'tiny.json'
        self.config_path.write_text(json.dumps(TINY), encoding='utf-8')

    def _call(self, name, *args, **options):
        out = StringIO()
        call_command(name, *args, config=str(self.config_path), stdout=out, stderr=StringIO(), **options)
        return out.getvalue()

    def test_gen_data_is_recorded(self):
        output = self._call('gen_data', out=str(self.tmp / 'data'), size=4, seed=3)
        self.assertIn('4 registros', output)
        run = ExperimentRun.objects.get(command='gen_data')
        self.assertEqual(run.status, 'succeeded')
        self.assertEqual(run.seed, 3)
        self.assertEqual(run.metrics['records'], 4)
        self.assertEqual(run.config_hash, config_hash(tiny_config()))
        self.assertTrue(LogEntry.objects.filter(run=run).exists())

    def test_validation_error_exits_with_one(self):
        self.config_path.write_text(json.dumps({'model': {'depth': 2}}), encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            self._call('gen_data', out=str(self.tmp / 'data'))
        self.assertEqual(ctx.exception.returncode, 1)

    def test_missing_manifest_exits_with_one(self):
        with self.assertRaises(CommandError) as ctx:
            self._call('train', manifest=str(self.tmp / 'nope.jsonl'), out=str(self.tmp / 'train'))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertEqual(ExperimentRun.objects.get(command='train').status, 'failed')

    def test_runtime_failure_exits_with_two(self):
        with mock.patch('apps.pipeline.management.commands.train.train', side_effect=RuntimeError('disco lleno')):
            with self.assertRaises(CommandError) as ctx:
                self._call('train', manifest=str(self.tmp / 'm.jsonl'), out=str(self.tmp / 'train'))
        self.assertEqual(ctx.exception.returncode, 2)
        run = ExperimentRun.objects.get(command='train')
        self.assertEqual(run.status, 'failed')
        self.assertEqual(run.error_message, 'disco lleno')

    def test_sample_without_caption_exits_with_one(self):
        with self.assertRaises(CommandError) as ctx:
            self._call('sample', checkpoint=str(self.tmp / 'x.stmd'), scene=str(self.tmp / 'x.ply'), caption='')
        self.assertEqual(ctx.exception.returncode, 1)

    def test_empty_import_succeeds_with_warning(self):
        index = self.tmp / 'index.jsonl'
        index.write_text('', encoding='utf-8')
        output = self._call('import_laserhuman', str(index), out=str(self.tmp / 'imported'))
        self.assertIn('vacío', output)
        self.assertEqual((self.tmp / 'imported' / MANIFEST_NAME).read_text(encoding='utf-8'), '')
        self.assertEqual(ExperimentRun.objects.get(command='import_laserhuman').metrics['records'], 0)

    def test_pipeline_end_to_end(self):
        self._call('gen_data', out=str(self.tmp / 'data'))
        manifest = self.tmp / 'data' / MANIFEST_NAME
        self._call('train', manifest=str(manifest), out=str(self.tmp / 'train'), steps=2)
        checkpoint = self.tmp / 'train' / LAST_CHECKPOINT
        table = self._call('eval', manifest=str(manifest), checkpoint=str(checkpoint), out=str(self.tmp / 'eval'))
        self.assertIn('FID', table)
        self._call('sample', checkpoint=str(checkpoint), scene=str(self.tmp / 'data' / read_manifest(manifest).records[0].scene),
                   caption='the person walks up to the box', k=2, out=str(self.tmp / 'samples'))
        self.assertEqual(len(list((self.tmp / 'samples').glob('sample_*.json'))), 2)
        commands = list(ExperimentRun.objects.order_by('id').values_list('command', 'status'))
        self.assertEqual(commands, [('gen_data', 'succeeded'), ('train', 'succeeded'), ('eval', 'succeeded'),
                                    ('sample', 'succeeded')])
        self.assertIsNotNone(ExperimentRun.objects.get(command='eval').metrics['fid'])

    def test_ablate_table_from_runs(self):
        runs = [
            ExperimentRun.objects.create(command='ablate', status='succeeded', fusion_kind=kind, metrics=dict(
                {key: 0.5 for key in ('non_collision', 'contact', 'apd_t', 'std_t', 'apd_p', 'std_p', 'apd_m',
                                      'std_m', 'fid', 'r_score', 'final_loss')}, variant=kind))
            for kind in ('triple', 'text_queried')
        ]
        self._call('ablate', from_runs=[runs[1].id, runs[0].id], out=str(self.tmp / 'ablate'))
        lines = (self.tmp / 'ablate' / TABLE_NAME).read_text(encoding='utf-8').splitlines()
        self.assertEqual([line.split('\t')[0] for line in lines[1:]], ['text_queried', 'triple'])

    def test_ablate_needs_manifest(self):
        with self.assertRaises(CommandError) as ctx:
            self._call('ablate', variant=['triple', 'concat_self'], out=str(self.tmp / 'ablate'))
        self.assertEqual(ctx.exception.returncode, 1)


@tag('slow')
class ReproductionTests(TestCase):
    def test_reproduce_chain(self):
        with tempfile.TemporaryDirectory() as tmp:
            config_path = Path(tmp) / 'tiny.json'
            config_path.write_text(json.dumps(TINY), encoding='utf-8')
            call_command('reproduce', config=str(config_path), out=tmp, steps=2, stdout=StringIO())
            self.assertTrue((Path(tmp) / 'eval' / REPORT_NAME).exists())
            self.assertEqual(len((Path(tmp) / 'ablate' / TABLE_NAME).read_text(encoding='utf-8').splitlines()), 3)
        self.assertEqual(ExperimentRun.objects.filter(status='succeeded').count(), 5)

    def test_all_fusion_variants_on_smoke_corpus(self):
        variants = ['parallel_cross', 'scene_queried', 'text_queried', 'triple', 'concat_self']
        config = tiny_config(data={'corpus_size': 64, 'test_fraction': 0.25})
        with tempfile.TemporaryDirectory() as tmp:
            manifest = gen_dataset(Path(tmp) / 'data', config)
            rows, _ = ablate(config, manifest, variants, Path(tmp) / 'ablate', steps=20)
        self.assertEqual([r['variant'] for r in rows], variants)
        self.assertTrue(all(math.isfinite(r['fid']) for r in rows))


@tag('slow')
class ConvergenceTests(SimpleTestCase):
    def test_loss_falls_on_toy_corpus(self):
        config = validate_run_config({'optim': {'log_every': 500}})
        with tempfile.TemporaryDirectory() as tmp:
            manifest = gen_dataset(Path(tmp) / 'data', config, workers=4)
            result = train(config, manifest, Path(tmp) / 'train', workers=4)
        first = float(result.losses[0]['total'])
        self.assertLessEqual(result.final_loss, 0.2 * first)
