import unittest

import test_util_subnet_forge
from subnet_forge.constants import *
from subnet_forge.exceptions import ConfigError
from subnet_forge.experiments import mean_quality, run_continual_experiment, run_overlap_experiment, \
    run_table_experiment
from subnet_forge.pruning import expected_sparsity


class TestExperiments(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.forge = test_util_subnet_forge.small_forge()
        cls.table = run_table_experiment(cls.forge)

    def test_table_rows(self):
        keys = [(r.experiment_id, r.variant) for r in self.table.rows]
        self.assertEqual(keys, [('dense', VARIANT_DENSE),
                                ('q1', VARIANT_MULTI_TASK), ('q1', VARIANT_SINGLE_TASK), ('q1', VARIANT_TASK_AGNOSTIC),
                                ('q2', VARIANT_MULTI_TASK), ('q2', VARIANT_SINGLE_TASK), ('q2', VARIANT_TASK_AGNOSTIC)])
        self.assertEqual(sorted(self.table.masks), [1, 2])
        for row in self.table.rows:
            self.assertEqual(list(row.scores), ['CLS-A', 'CLS-B', 'SEQ'])

    def test_table_accounting(self):
        dense = self.table.rows[0]
        self.assertEqual((dense.sparsity, dense.param_one, dense.param_all), (0.0, 100.0, 100.0))
        for row in self.table.rows[1:]:
            rounds = int(row.experiment_id[1:])
            self.assertAlmostEqual(row.sparsity, expected_sparsity(0.2, rounds), delta=0.01)
            if row.variant == VARIANT_SINGLE_TASK:
                self.assertAlmostEqual(row.param_all, 3 * row.param_one, places=9)
            else:
                self.assertLessEqual(row.param_all, 100.0)
        agnostic = [r for r in self.table.rows if r.variant == VARIANT_TASK_AGNOSTIC]
        for row in agnostic:
            self.assertAlmostEqual(row.param_all, row.param_one, places=9)

    def test_param_counts_non_prunable_scalars(self):
        masks = self.table.masks[2]
        layout = masks.layout
        self.assertGreater(layout.fixed_size, 0)
        row = next(r for r in self.table.rows if r.experiment_id == 'q2' and r.variant == VARIANT_MULTI_TASK)
        survivors = [masks[t].surviving_count() for t in masks.task_ids]
        expected = sum(100.0 * (s + layout.fixed_size) / layout.total_size for s in survivors) / len(survivors)
        self.assertAlmostEqual(row.param_one, expected, places=9)
        self.assertGreater(row.param_one, 100.0 * (1.0 - row.sparsity))

    def test_mean_quality_direction(self):
        scores = {'CLS-A': 0.9, 'CLS-B': 0.6, 'SEQ': 0.3}
        self.assertAlmostEqual(mean_quality(self.forge.tasks, scores), (0.9 + 0.6 + 0.7) / 3)
        worse_ter = dict(scores, SEQ=0.4)
        self.assertLess(mean_quality(self.forge.tasks, worse_ter), mean_quality(self.forge.tasks, scores))

    def test_table_histories(self):
        self.assertIn('dense', self.table.histories)
        self.assertIn(f"q2-{VARIANT_MULTI_TASK}", self.table.histories)
        self.assertIn(f"q2-{VARIANT_TASK_AGNOSTIC}", self.table.histories)

    def test_continual_experiment(self):
        result = run_continual_experiment(self.forge, 'SEQ')
        self.assertEqual(sorted(result.histories), sorted(CONTINUAL_MODES))
        for mode in CONTINUAL_MODES:
            history = result.histories[mode]
            self.assertEqual(history.first().step, 0)
            self.assertEqual(history.last().step, self.forge.config.continual_steps)
            self.assertIsInstance(result.forgetting[mode], float)
            self.assertIsInstance(result.improvement[mode], float)

    def test_continual_unknown_target(self):
        with self.assertRaises(ConfigError):
            run_continual_experiment(self.forge, 'NER')

    def test_overlap_experiment(self):
        result = run_overlap_experiment(self.forge, 'SEQ')
        self.assertEqual(list(result.matrix.index), ['CLS-A', 'CLS-B', 'SEQ'])
        self.assertEqual(result.classification_mean, result.matrix.loc['CLS-A', 'CLS-B'])
        self.assertGreaterEqual(result.sequence_mean, 0.0)
        self.assertLessEqual(result.sequence_mean, 1.0)


if __name__ == '__main__':
    unittest.main()
