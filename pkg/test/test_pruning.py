import unittest

import numpy as np

import test_data
import test_util_subnet_forge
from subnet_forge.constants import PARAM_MODE_ALL_MULTITASK, PARAM_MODE_ALL_SINGLETASK, PARAM_MODE_ONE
from subnet_forge.exceptions import LayoutError, PruningError
from subnet_forge.pruning import MaskLayout, MaskSet, PruningMask, apply_mask, expected_sparsity, \
    expected_survivors, global_magnitude_prune, mask_gradients, overlap, overlap_matrix, pack_bits, param_percent


class TestGlobalMagnitudePrune(unittest.TestCase):

    def setUp(self):
        self.theta = test_util_subnet_forge.store_from({'w': test_data.prune_values})
        self.layout = MaskLayout.from_store(self.theta)

    def test_two_rounds(self):
        mask = PruningMask.ones(self.layout, 'T')
        mask = global_magnitude_prune(self.theta, mask, 0.5)
        self.assertEqual(mask.bits('w').tolist(), test_data.prune_round_one)
        mask = global_magnitude_prune(self.theta, mask, 0.5)
        self.assertEqual(mask.bits('w').tolist(), test_data.prune_round_two)

    def test_ties_prune_lowest_flat_index(self):
        theta = test_util_subnet_forge.store_from({'a': [0.3, 0.1], 'b': [[0.1, 0.1], [0.2, 0.1]]})
        mask = global_magnitude_prune(theta, PruningMask.ones(MaskLayout.from_store(theta), 'T'), 0.5)
        self.assertEqual(mask.bits('a').tolist(), [True, False])
        self.assertEqual(mask.bits('b').tolist(), [[False, False], [True, True]])

    def test_global_across_entries(self):
        theta = test_util_subnet_forge.store_from({'a': [5.0, 4.0], 'b': [0.1, 0.2, 3.0, 6.0]})
        mask = global_magnitude_prune(theta, PruningMask.ones(MaskLayout.from_store(theta), 'T'), 0.5)
        self.assertEqual(mask.bits('a').tolist(), [True, True])
        self.assertEqual(mask.bits('b').tolist(), [False, False, False, True])

    def test_non_prunable_entries_ignored(self):
        theta = test_util_subnet_forge.store_from({'emb': [0.0, 0.0], 'w': [1.0, 2.0]}, prunable={'emb': False})
        layout = MaskLayout.from_store(theta)
        self.assertEqual(layout.names(), ['w'])
        mask = global_magnitude_prune(theta, PruningMask.ones(layout, 'T'), 0.5)
        self.assertEqual(mask.bits('w').tolist(), [False, True])
        np.testing.assert_array_equal(apply_mask(theta, mask)['emb'], [0.0, 0.0])

    def test_bad_rate(self):
        mask = PruningMask.ones(self.layout, 'T')
        for p in [0.0, 1.0, -0.1, 1.5]:
            with self.assertRaises(PruningError):
                global_magnitude_prune(self.theta, mask, p)

    def test_no_survivors(self):
        empty = PruningMask.from_flat(self.layout, 'T', np.zeros(4, dtype=bool))
        with self.assertRaises(PruningError):
            global_magnitude_prune(self.theta, empty, 0.5)

    def test_monotone(self):
        theta = test_util_subnet_forge.store_from({'w': np.random.default_rng(0).standard_normal(200)})
        mask = PruningMask.ones(MaskLayout.from_store(theta), 'T')
        for _ in range(5):
            pruned = global_magnitude_prune(theta, mask, 0.2)
            self.assertTrue(pruned.is_subset_of(mask))
            mask = pruned
        self.assertEqual(mask.surviving_count(), expected_survivors(200, 0.2, 5))


class TestSparsityLaw(unittest.TestCase):

    def test_expected_sparsity(self):
        for p, rounds, sparsity in test_data.sparsity_cases:
            self.assertAlmostEqual(expected_sparsity(p, rounds), sparsity, places=12)

    def test_survivors_track_law(self):
        n = 10000
        for p, rounds, sparsity in test_data.sparsity_cases:
            survivors = expected_survivors(n, p, rounds)
            self.assertLessEqual(abs((1 - survivors / n) - sparsity), rounds / n + 1e-12)


class TestMaskEncoding(unittest.TestCase):

    def test_little_endian_words(self):
        words = pack_bits(np.array([True, False, True]))
        self.assertEqual(words.dtype.str, '<u8')
        self.assertEqual(words.tobytes(), bytes([5, 0, 0, 0, 0, 0, 0, 0]))

    def test_word_count(self):
        self.assertEqual(pack_bits(np.ones(64, dtype=bool)).size, 1)
        self.assertEqual(pack_bits(np.ones(65, dtype=bool)).size, 2)

    def test_mask_is_immutable(self):
        mask = PruningMask.ones(MaskLayout([('w', (3,))]), 'T')
        with self.assertRaises(ValueError):
            mask.packed('w')[0] = 0
        with self.assertRaises(ValueError):
            mask.bits('w')[0] = False

    def test_padding_bits_rejected(self):
        layout = MaskLayout([('w', (3,))])
        with self.assertRaises(LayoutError):
            PruningMask.from_packed(layout, 'T', {'w': np.array([0xFF], dtype='<u8')})


class TestMaskOperations(unittest.TestCase):

    def setUp(self):
        self.theta = test_util_subnet_forge.store_from({'w': np.arange(1.0, 11.0), 'b': [1.0, 2.0]},
                                                       prunable={'b': False})
        self.layout = MaskLayout.from_store(self.theta)

    def mask(self, owner, kept):
        flat = np.zeros(self.layout.size, dtype=bool)
        flat[list(kept)] = True
        return PruningMask.from_flat(self.layout, owner, flat)

    def test_apply_mask(self):
        masked = apply_mask(self.theta, self.mask('T', [0, 9]))
        np.testing.assert_array_equal(masked['w'], [1.0] + [0.0] * 8 + [10.0])
        np.testing.assert_array_equal(masked['b'], [1.0, 2.0])
        np.testing.assert_array_equal(self.theta['w'], np.arange(1.0, 11.0))

    def test_apply_mask_idempotent(self):
        mask = self.mask('T', [1, 3, 5])
        once = apply_mask(self.theta, mask)
        self.assertTrue(apply_mask(once, mask).bit_equal(once))

    def test_apply_mask_layout_mismatch(self):
        other = test_util_subnet_forge.store_from({'w': np.ones(4)})
        with self.assertRaises(LayoutError):
            apply_mask(other, self.mask('T', [0]))

    def test_mask_gradients(self):
        grads = {'w': np.ones(10), 'b': np.ones(2)}
        masked = mask_gradients(grads, self.mask('T', [2]))
        self.assertEqual(masked['w'].tolist(), [0.0, 0.0, 1.0] + [0.0] * 7)
        self.assertEqual(masked['b'].tolist(), [1.0, 1.0])

    def test_overlap(self):
        a = self.mask('A', [0, 1, 2, 3])
        b = self.mask('B', [2, 3, 4, 5])
        self.assertAlmostEqual(overlap(a, b), 2 / 6)
        self.assertEqual(overlap(a, b), overlap(b, a))
        self.assertEqual(overlap(a, a), 1.0)

    def test_overlap_of_empty_masks(self):
        with self.assertRaises(PruningError):
            overlap(self.mask('A', []), self.mask('B', []))

    def test_overlap_matrix(self):
        masks = MaskSet([self.mask('A', [0, 1]), self.mask('B', [1, 2]), self.mask('C', [5])])
        matrix = overlap_matrix(masks)
        self.assertEqual(list(matrix.index), ['A', 'B', 'C'])
        np.testing.assert_array_equal(np.diag(matrix.values), [1.0, 1.0, 1.0])
        np.testing.assert_array_equal(matrix.values, matrix.values.T)
        self.assertAlmostEqual(matrix.loc['A', 'B'], 1 / 3)
        self.assertEqual(matrix.loc['A', 'C'], 0.0)

    def test_mask_set_layout_check(self):
        other = PruningMask.ones(MaskLayout([('v', (2,))]), 'X')
        with self.assertRaises(LayoutError):
            MaskSet([self.mask('A', [0]), other])


class TestParamPercent(unittest.TestCase):

    def setUp(self):
        self.layout = MaskLayout([('w', (1000,))])

    def mask(self, owner, kept):
        flat = np.zeros(1000, dtype=bool)
        flat[kept] = True
        return PruningMask.from_flat(self.layout, owner, flat)

    def test_one(self):
        masks = MaskSet([self.mask('A', slice(0, 640))])
        self.assertAlmostEqual(param_percent(masks, PARAM_MODE_ONE, 'A'), 64.0)

    def test_disjoint_masks(self):
        masks = MaskSet([self.mask('A', slice(0, 100)), self.mask('B', slice(100, 200)),
                         self.mask('C', slice(200, 300))])
        self.assertAlmostEqual(param_percent(masks, PARAM_MODE_ALL_MULTITASK), 30.0)
        self.assertAlmostEqual(param_percent(masks, PARAM_MODE_ALL_SINGLETASK), 30.0)

    def test_single_task_sum(self):
        masks = MaskSet([self.mask(owner, slice(0, 641)) for owner in ['A', 'B', 'C']])
        self.assertAlmostEqual(param_percent(masks, PARAM_MODE_ALL_SINGLETASK), 192.3)
        self.assertAlmostEqual(param_percent(masks, PARAM_MODE_ALL_MULTITASK), 64.1)

    def test_multitask_bounded_by_sum(self):
        masks = test_util_subnet_forge.random_masks(test_util_subnet_forge.store_from({'w': np.ones(1000)}),
                                                    ['A', 'B', 'C'], keep=0.4)
        union = param_percent(masks, PARAM_MODE_ALL_MULTITASK)
        self.assertLessEqual(union, min(100.0, param_percent(masks, PARAM_MODE_ALL_SINGLETASK)))

    def test_non_prunable_entries_counted(self):
        theta = test_util_subnet_forge.store_from({'w': [1.0, 2.0, 3.0, 4.0], 'emb': [5.0, 6.0]},
                                                  prunable={'emb': False})
        layout = MaskLayout.from_store(theta)
        masks = MaskSet([PruningMask.from_flat(layout, 'A', np.array([True, True, False, False])),
                         PruningMask.from_flat(layout, 'B', np.array([False, True, True, False]))])
        self.assertAlmostEqual(param_percent(masks, PARAM_MODE_ONE, 'A'), 400.0 / 6)
        self.assertAlmostEqual(param_percent(masks, PARAM_MODE_ALL_MULTITASK), 500.0 / 6)
        self.assertAlmostEqual(param_percent(masks, PARAM_MODE_ALL_SINGLETASK), 800.0 / 6)

    def test_full_mask_is_whole_model(self):
        theta = test_util_subnet_forge.store_from({'w': np.ones(10), 'emb': np.ones(3)}, prunable={'emb': False})
        masks = MaskSet([PruningMask.ones(MaskLayout.from_store(theta), 'A')])
        self.assertAlmostEqual(param_percent(masks, PARAM_MODE_ONE, 'A'), 100.0)

    def test_unknown_mode(self):
        masks = MaskSet([self.mask('A', slice(0, 10))])
        with self.assertRaises(PruningError):
            param_percent(masks, 'some')
        with self.assertRaises(PruningError):
            param_percent(masks, PARAM_MODE_ONE)


if __name__ == '__main__':
    unittest.main()
