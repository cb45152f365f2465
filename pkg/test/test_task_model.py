import math
import unittest

import numpy as np

import test_util_subnet_forge
from subnet_forge.constants import CLS_HEAD, TASK_EMBEDDING
from subnet_forge.exceptions import ConfigError, DatasetError, ShapeError
from subnet_forge.pruning import apply_mask
from subnet_forge.synthetic import generate
from subnet_forge.synthetic.example import Dataset
from subnet_forge.task_model import bias_name, trunk_prefix


class TestTaskModel(unittest.TestCase):

    def setUp(self):
        self.model = test_util_subnet_forge.small_model()
        self.theta = self.model.init_parameters(0)
        self.cls_task = self.model.task('CLS-B')
        self.seq_task = self.model.task('SEQ')
        self.frames = np.random.default_rng(3).standard_normal((5, 16))

    def test_logit_shapes(self):
        self.assertEqual(self.model.forward(self.frames, self.cls_task, self.theta).shape, (1, 32))
        self.assertEqual(self.model.forward(self.frames, self.seq_task, self.theta).shape, (5, 32))

    def test_zero_parameters_give_uniform_logits(self):
        zero = self.theta.copy()
        for name, values in zero.items():
            zero.set(name, np.zeros_like(values))
        for task in [self.cls_task, self.seq_task]:
            logits = self.model.forward(self.frames, task, zero)
            probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
            entropy = -(probs * np.log(probs)).sum(axis=1)
            np.testing.assert_allclose(entropy, math.log(32), rtol=0, atol=1e-12)

    def test_zeroed_embedding_ignores_specifier(self):
        theta = self.theta.copy()
        theta.set(TASK_EMBEDDING, np.zeros_like(theta[TASK_EMBEDDING]))
        a = self.model.forward(self.frames, self.model.task('CLS-A'), theta)
        b = self.model.forward(self.frames, self.cls_task, theta)
        np.testing.assert_array_equal(a, b)

    def test_specifier_changes_output(self):
        a = self.model.forward(self.frames, self.model.task('CLS-A'), self.theta)
        b = self.model.forward(self.frames, self.cls_task, self.theta)
        self.assertFalse(np.array_equal(a, b))

    def test_masked_forward_is_bit_exact(self):
        rng = np.random.default_rng(17)
        tasks = [self.model.task(task_id) for task_id in self.model.task_ids]
        for pair in range(100):
            task = tasks[pair % len(tasks)]
            keep = rng.uniform(0.05, 0.95)
            mask = test_util_subnet_forge.random_masks(self.theta, [task.task_id], keep=keep, seed=pair)[task.task_id]
            masked = apply_mask(self.theta, mask)
            manual = self.theta.copy()
            for name in mask.layout.names():
                values = manual[name].copy()
                values[~mask.bits(name)] = 0.0
                manual.set(name, values)
            self.assertTrue(masked.bit_equal(manual))
            length = int(rng.integers(1, self.model.config.max_seq_len + 1))
            frames = rng.standard_normal((length, self.model.config.input_dim))
            self.assertEqual(self.model.forward(frames, task, masked).tobytes(),
                             self.model.forward(frames, task, manual).tobytes(), f"pair {pair}")

    def test_predict_restricted_to_label_slice(self):
        logits = np.zeros((1, 32))
        logits[0, 0] = 10.0
        logits[0, 7] = 1.0
        self.assertEqual(self.model.predict(logits, self.cls_task), 7)

    def test_predict_ties_go_to_lower_id(self):
        logits = np.zeros((2, 32))
        logits[0, [20, 17]] = 3.0
        self.assertEqual(self.model.predict(logits, self.seq_task), (17, 0))
        self.assertEqual(self.model.predict(np.zeros((1, 32)), self.cls_task), self.cls_task.label_offset)

    def test_unknown_task(self):
        with self.assertRaises(ConfigError):
            self.model.task('NER')

    def test_length_overflow(self):
        too_long = np.zeros((self.model.config.max_seq_len + 1, 16))
        with self.assertRaises(ShapeError):
            self.model.forward(too_long, self.seq_task, self.theta)

    def test_wrong_feature_width(self):
        with self.assertRaises(ShapeError):
            self.model.forward(np.zeros((3, 15)), self.seq_task, self.theta)

    def test_evaluate_ranges(self):
        for task in self.model.tasks.values():
            dataset = generate(task.dataset, task.task_id).eval
            score = self.model.evaluate(self.theta, task, dataset)
            self.assertGreaterEqual(score, 0.0)
            if task.is_classification:
                self.assertLessEqual(score, 1.0)

    def test_evaluate_empty_dataset(self):
        with self.assertRaises(DatasetError):
            self.model.evaluate(self.theta, self.seq_task, Dataset('SEQ', []))

    def test_mixed_batch_loss_matches_parts(self):
        cls_examples = generate(self.cls_task.dataset, 'CLS-B').train.examples[:3]
        seq_examples = generate(self.seq_task.dataset, 'SEQ').train.examples[:2]
        mixed = self.model.loss(self.theta, cls_examples + seq_examples)
        cls_only = self.model.loss(self.theta, cls_examples)
        seq_only = self.model.loss(self.theta, seq_examples)
        self.assertAlmostEqual(mixed, (3 * cls_only + 2 * seq_only) / 5, places=12)

    def test_only_embedding_not_prunable(self):
        self.assertFalse(self.theta.is_prunable(TASK_EMBEDDING))
        self.assertEqual(self.theta.prunable_names(), [name for name in self.theta.names() if name != TASK_EMBEDDING])
        self.assertTrue(self.theta.is_prunable(bias_name(CLS_HEAD)))
        self.assertTrue(self.theta.is_prunable(bias_name(trunk_prefix(0))))

    def test_float32_model(self):
        model = test_util_subnet_forge.small_model(np.float32)
        theta = model.init_parameters(0)
        self.assertEqual(theta.dtype, np.float32)
        self.assertEqual(model.forward(self.frames, self.seq_task, theta).dtype, np.float32)


if __name__ == '__main__':
    unittest.main()
