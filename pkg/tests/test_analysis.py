import math
import unittest

import numpy as np
from on_rails import ValidationError, assert_result_with_type

from gbd_design._libs.ExitCodes import ExitCode
from gbd_design.analysis import (EfficiencyTable, TauRule, all_submodels,
                                 efficiency_table, levels_used,
                                 overall_variance_curve, sensitivity_sweep,
                                 submodel_variances)
from gbd_design.model import Design, Factor, Term, second_order_terms
from gbd_design.strata import VarianceRatios, completely_randomized
from tests._helpers import load_design, load_designs, load_spec

UNIT_ETA = VarianceRatios([1, 1])

# square-term variances per submodel (in all_submodels order); None means not estimable
SPLIT_PLOT_SQUARE_VARIANCES = {
    'D_sp2': {0: [2], 1: [.5], 2: [.5], 3: [.5], 4: [2, .5], 5: [2, .5], 6: [2, .5],
              7: [.5, .5], 8: [.5, .5], 9: [.5, .5], 14: [2, .5, .5, .5]},
    'D_sp4': {0: [2], 1: [1.38], 2: [1.38], 3: [1.38], 4: [2.17, 1.5], 5: [2.17, 1.5], 6: [2.17, 1.5],
              7: None, 8: None, 9: None, 10: None, 11: None, 12: None, 13: None, 14: None},
}


class TestAnalysis(unittest.TestCase):
    # region submodel_variances

    def test_all_submodels_order(self):
        pool = second_order_terms(4, 'squares')
        submodels = all_submodels(pool)

        self.assertEqual(15, len(submodels))
        self.assertEqual((pool[0],), submodels[0])
        self.assertEqual((pool[1], pool[2], pool[3]), submodels[13])
        self.assertEqual(tuple(pool), submodels[14])

    def test_split_plot_square_term_variances(self):
        spec = load_spec('split_plot')
        submodels = all_submodels(spec.model.potential)

        for name, expected in SPLIT_PLOT_SQUARE_VARIANCES.items():
            d = load_design(name, spec.factors)
            for index, variances in expected.items():
                report = submodel_variances(d, spec.structure, UNIT_ETA, spec.model.primary,
                                            submodels[index]).value
                if variances is None:
                    self.assertFalse(report.estimable, f"{name} model {index + 1}")
                    continue
                self.assertTrue(report.estimable, f"{name} model {index + 1}")
                np.testing.assert_allclose(variances, [report.variance_of(term) for term in submodels[index]],
                                           atol=0.005, err_msg=f"{name} model {index + 1}")

    def test_two_level_designs_cannot_estimate_squares(self):
        spec = load_spec('split_plot')
        for name, d in load_designs(spec, 'D_sp1', 'D_sp3'):
            for submodel in all_submodels(spec.model.potential):
                report = submodel_variances(d, spec.structure, UNIT_ETA, spec.model.primary, submodel).value
                self.assertFalse(report.estimable, name)
                self.assertIsNone(report.variance_of(submodel[0]))

    def test_orthogonal_factorial_variances(self):
        factors = [Factor(name, 1, [-1, 1]) for name in ('A', 'B', 'C')]
        d = Design([[a, b, c] for a in (-1, 1) for b in (-1, 1) for c in (-1, 1)])
        report = submodel_variances(d, completely_randomized(8).value, VarianceRatios([1]),
                                    second_order_terms(factors, 'main_effects'), []).value

        np.testing.assert_allclose(np.full(4, 1 / 8), report.variances)

    def test_nested_submodels_never_lower_shared_variances(self):
        spec = load_spec('split_plot')
        d = load_design('D_sp2', spec.factors)
        small = submodel_variances(d, spec.structure, UNIT_ETA, spec.model.primary, spec.model.potential[:1]).value
        large = submodel_variances(d, spec.structure, UNIT_ETA, spec.model.primary, spec.model.potential).value

        for term in small.submodel:
            self.assertLessEqual(small.variance_of(term), large.variance_of(term) + 1e-10)

    def test_submodel_variances_run_mismatch(self):
        spec = load_spec('split_plot')
        result = submodel_variances(Design(np.ones((4, 4))), spec.structure, UNIT_ETA, spec.model.primary, [])

        assert_result_with_type(self, result, expected_success=False, expected_detail_type=ValidationError)

    # endregion

    # region efficiency_table

    def test_efficiency_table_rejects_invalid_designs(self):
        spec = load_spec('split_plot')
        bad = Design(np.zeros((9, 4)) + np.arange(9)[:, None] % 3 - 1)
        result = efficiency_table([('bad', bad)], spec.scenarios, spec.structure, UNIT_ETA, 10.0)

        assert_result_with_type(self, result, expected_success=False, expected_detail_type=ValidationError)
        self.assertTrue(result.detail.message.startswith("bad: Factor 'A' changes within unit 1"))

    def test_efficiency_table_single_design(self):
        spec = load_spec('split_plot')
        table = efficiency_table(load_designs(spec, 'D_sp3'), spec.scenarios, spec.structure,
                                 UNIT_ETA, 10.0).value

        self.assertIsInstance(table, EfficiencyTable)
        np.testing.assert_array_equal(np.ones((4, 1)), table.values)
        self.assertEqual(1.0, table.value("squares", 'D_sp3'))

    def test_efficiency_table_all_singular(self):
        spec = load_spec('split_plot')
        flat = Design(np.ones((9, 4)))
        result = efficiency_table([('flat', flat)], spec.scenarios[:1], spec.structure, UNIT_ETA)

        self.assertFalse(result.success)
        self.assertEqual(ExitCode.COMPUTATION_FAILURE, result.detail.code)

    # endregion

    # region overall_variance_curve

    def test_strip_plot_curve_favours_the_gbd_design(self):
        spec = load_spec('strip_plot')
        eta = VarianceRatios([1, 1, 1])
        curve = spec.curve
        points = {}
        for name, d in load_designs(spec, 'D_GBD_st', 'D_AGJ_II'):
            points[name] = overall_variance_curve(d, spec.structure, eta, curve.primary, curve.pool,
                                                  list(range(6))).value

        for gbd, agj in zip(points['D_GBD_st'], points['D_AGJ_II']):
            self.assertFalse(gbd.sampled)
            self.assertEqual(math.comb(21, gbd.k), gbd.n_models)
            if gbd.k >= 1:
                self.assertLess(gbd.potential_overall, agj.potential_overall, f"k={gbd.k}")
            if gbd.k >= 2:
                self.assertLess(gbd.primary_overall, agj.primary_overall, f"k={gbd.k}")
            else:
                self.assertLessEqual(gbd.primary_overall, 1.05 * agj.primary_overall, f"k={gbd.k}")

    def test_curve_at_zero_is_the_primary_model(self):
        spec = load_spec('strip_plot')
        eta = VarianceRatios([1, 1, 1])
        d = load_design('D_GBD_st', spec.factors)
        point = overall_variance_curve(d, spec.structure, eta, spec.curve.primary, spec.curve.pool, [0]).value[0]
        report = submodel_variances(d, spec.structure, eta, spec.curve.primary, []).value

        self.assertEqual(1, point.n_models)
        self.assertEqual(0.0, point.potential_overall)
        self.assertAlmostEqual(float(np.sum(report.variances)), point.primary_overall, places=10)

    def test_potential_overall_sums_the_pool_term_averages(self):
        spec = load_spec('strip_plot')
        eta = VarianceRatios([1, 1, 1])
        d = load_design('D_GBD_st', spec.factors)
        p = len(spec.curve.primary)
        points = overall_variance_curve(d, spec.structure, eta, spec.curve.primary, spec.curve.pool,
                                        [1, 2]).value

        for point in points:
            pool_averages = [average for term, (average, _) in point.term_averages.items() if term >= p]
            self.assertAlmostEqual(sum(pool_averages), point.potential_overall, places=10)

        # with one pool term per submodel each average is that submodel's own variance
        single = points[0]
        self.assertEqual(single.n_estimable, sum(1 for term in single.term_averages if term >= p))
        for term, (average, count) in single.term_averages.items():
            if term < p:
                continue
            self.assertEqual(1, count)
            report = submodel_variances(d, spec.structure, eta, spec.curve.primary, [spec.curve.pool[term - p]])
            self.assertAlmostEqual(report.value.variances[-1], average, places=8)
        self.assertGreater(single.potential_overall, 1.0)

    def test_curve_sampling_is_seeded(self):
        spec = load_spec('strip_plot')
        eta = VarianceRatios([1, 1, 1])
        d = load_design('D_GBD_st', spec.factors)

        def run(seed):
            return overall_variance_curve(d, spec.structure, eta, spec.curve.primary, spec.curve.pool, [3],
                                          sample_limit=50, seed=seed).value[0]

        first, again = run(5), run(5)
        self.assertTrue(first.sampled)
        self.assertEqual(50, first.n_models)
        self.assertEqual(first.potential_overall, again.potential_overall)

    def test_curve_rejects_k_outside_pool(self):
        spec = load_spec('strip_plot')
        d = load_design('D_GBD_st', spec.factors)
        result = overall_variance_curve(d, spec.structure, VarianceRatios([1, 1, 1]), spec.curve.primary,
                                        spec.curve.pool, [22])

        assert_result_with_type(self, result, expected_success=False, expected_detail_type=ValidationError)
        self.assertEqual("k must be in 0..21, got [22].", result.detail.message)

    # endregion

    # region sensitivity_sweep

    def test_staggered_level_best_design_is_stable_over_eta(self):
        spec = load_spec('staggered_level')
        designs = load_designs(spec, 'D_sl1', 'D_sl2', 'D_sl3')
        grid = [[.1, 1, 10], [.1, 1, 10]]

        for multiple, best in ((.0001, 'D_sl1'), (1, 'D_sl2'), (3, 'D_sl3')):
            points = sensitivity_sweep(designs, [("model", spec.model)], spec.structure, grid,
                                       TauRule(sigma_y_multiple=multiple)).value
            self.assertEqual(9, len(points))
            for point in points:
                self.assertEqual(best, point.best(), f"{point}")

    def test_split_plot_sensitivity_keeps_the_optimum(self):
        spec = load_spec('split_plot')
        designs = load_designs(spec, 'D_sp1', 'D_sp2', 'D_sp3', 'D_sp4')
        scenario = [s for s in spec.scenarios if s[0] == "squares"]
        points = sensitivity_sweep(designs, scenario, spec.structure, [[.1, 1, 10]], TauRule(fixed=10)).value

        self.assertEqual(['D_sp2'] * 3, [point.best() for point in points])
        self.assertEqual([10, 10, 10], [point.tau for point in points])

    def test_strip_plot_gbd_design_stays_best_over_eta(self):
        spec = load_spec('strip_plot')
        designs = load_designs(spec, 'D_GBD_st', 'D_AGJ_II')
        points = sensitivity_sweep(designs, [("model", spec.model)], spec.structure, spec.sensitivity_eta_values,
                                   spec.tau_rule).value

        self.assertEqual(9, len(points))
        for point in points:
            self.assertEqual(14, point.tau)
            self.assertEqual('D_GBD_st', point.best(), f"{point}")

    def test_single_point_sweep_equals_efficiency_table(self):
        spec = load_spec('split_plot')
        designs = load_designs(spec, 'D_sp1', 'D_sp2')
        point, = sensitivity_sweep(designs, spec.scenarios, spec.structure, [[1]], TauRule(fixed=10)).value
        table = efficiency_table(designs, spec.scenarios, spec.structure, UNIT_ETA, 10).value

        np.testing.assert_array_equal(table.values, point.table.values)

    def test_sensitivity_sweep_errors(self):
        spec = load_spec('split_plot')
        designs = load_designs(spec, 'D_sp1')

        result = sensitivity_sweep(designs, spec.scenarios, spec.structure, [[1], [1]], TauRule(fixed=10))
        assert_result_with_type(self, result, expected_success=False, expected_detail_type=ValidationError)
        self.assertEqual("eta_grid needs 1 lists for a 2-stratum structure.", result.detail.message)

        result = sensitivity_sweep(designs, spec.scenarios, spec.structure, [[-1]], TauRule(fixed=10))
        assert_result_with_type(self, result, expected_success=False, expected_detail_type=ValidationError)

        with self.assertRaises(ValueError):
            TauRule(fixed=1, sigma_y_multiple=3)
        with self.assertRaises(ValueError):
            TauRule(fixed=0)

    # endregion

    def test_levels_used(self):
        spec = load_spec('split_plot')
        used = levels_used(load_design('D_sp1', spec.factors), spec.factors)

        self.assertEqual({'A': [-1.0, 1.0], 'B': [-1.0, 1.0], 'C': [-1.0, 1.0], 'D': [-1.0, 1.0]}, used)
        self.assertEqual([-1.0, 0.0, 1.0], levels_used(load_design('D_sp2', spec.factors), spec.factors)['A'])
        self.assertEqual(Term.intercept(), spec.model.primary[0])


if __name__ == '__main__':
    unittest.main()
