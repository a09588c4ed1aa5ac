import math
import os
import tempfile
import unittest

from on_rails import assert_result_with_type

from gbd_design._libs.ExitCodes import ExitCode
from gbd_design._libs.ProblemSpec import (DEFAULT_OUTPUT_DIRECTORY,
                                          DEFAULT_T_TOTAL, describe_tau,
                                          load_problem_spec,
                                          parse_problem_spec)
from gbd_design._libs.ResultDetails.FailResult import (FailResult,
                                                       SpecValidationFailure)
from gbd_design.model import Term
from tests._helpers import load_spec, spec_path


def _document(**changes) -> dict:
    document = {
        "factors": [{"name": "A", "stratum": 1, "levels": [-1, 0, 1]},
                    {"name": "B", "stratum": 2, "levels": [-1, 0, 1]}],
        "structure": {"type": "split_plot", "whole_plots": 3, "runs_per_plot": 2},
        "model": "squares",
    }
    document.update(changes)
    return document


def _issues(document) -> list:
    result = parse_problem_spec(document)
    assert not result.success, "the document was expected to be invalid"
    assert isinstance(result.detail, SpecValidationFailure), repr(result.detail)
    return result.detail.issues


class TestProblemSpec(unittest.TestCase):
    # region samples

    def test_split_plot_sample(self):
        spec = load_spec('split_plot')

        self.assertEqual(['A', 'B', 'C', 'D'], [factor.name for factor in spec.factors])
        self.assertEqual((2, 9), (spec.structure.g, spec.structure.n))
        self.assertEqual((5, 4), (spec.model.p, spec.model.q))
        self.assertEqual((1.0, 1.0), spec.eta.eta)
        self.assertEqual(10.0, spec.tau)
        self.assertEqual((2000, 20240601, None), (spec.search.t_total, spec.search.seed, spec.search.workers))
        self.assertEqual(["no potential terms", "squares", "interactions", "squares and interactions"],
                         [label for label, _ in spec.scenarios])
        self.assertEqual([[0.1, 1.0, 10.0]], spec.sensitivity_eta_values)
        self.assertEqual("split-plot-output", spec.output_directory)
        self.assertEqual(15, len(spec.variance_submodels))
        self.assertEqual(10.0, spec.config.tau)

    def test_strip_plot_sample(self):
        spec = load_spec('strip_plot')

        self.assertEqual([4, 8, 24], spec.structure.unit_counts())
        self.assertEqual((8, 21), (spec.model.p, spec.model.q))
        self.assertEqual((0, 5), (spec.curve.k_min, spec.curve.k_max))
        self.assertEqual(8, len(spec.curve.primary))
        self.assertEqual(21, len(spec.curve.pool))
        self.assertEqual([[0.1, 1.0, 10.0]] * 2, spec.sensitivity_eta_values)

    def test_staggered_level_sample(self):
        spec = load_spec('staggered_level')

        self.assertEqual((16, 5), (spec.model.p, spec.model.q))
        self.assertEqual(Term.intercept(), spec.model.primary[0])
        self.assertAlmostEqual(3 * math.sqrt(3), spec.tau, delta=1e-12)
        self.assertEqual(3.0, spec.tau_rule.sigma_y_multiple)

    def test_defaults(self):
        spec = parse_problem_spec(_document()).value

        self.assertEqual((10.0, 1.0), spec.eta.eta)
        self.assertAlmostEqual(3 * math.sqrt(11), spec.tau, delta=1e-12)
        self.assertEqual((DEFAULT_T_TOTAL, None, None), (spec.search.t_total, spec.search.seed, spec.search.workers))
        self.assertEqual([("model", spec.model)], spec.scenarios)
        self.assertEqual(DEFAULT_OUTPUT_DIRECTORY, spec.output_directory)
        self.assertEqual([Term.interaction(0, 1)], spec.curve.pool)
        self.assertIsNone(spec.source)

    # endregion

    # region load_problem_spec

    def test_load_reports_json_position(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "broken.json")
            with open(path, 'w') as file:
                file.write('{\n  "factors": [,]\n}\n')
            result = load_problem_spec(path)

        assert_result_with_type(self, result, expected_success=False, expected_detail_type=SpecValidationFailure)
        self.assertEqual(ExitCode.INPUT_ERROR, result.detail.code)
        self.assertEqual(["line 2, column 15: Expecting value."], result.detail.issues)
        self.assertTrue(result.detail.message.startswith(f"{path}: 1 problem(s) found."))

    def test_load_missing_file(self):
        result = load_problem_spec(os.path.join(tempfile.gettempdir(), "no-such-dir", "spec.json"))

        assert_result_with_type(self, result, expected_success=False, expected_detail_type=FailResult)
        self.assertEqual(ExitCode.INPUT_ERROR, result.detail.code)
        self.assertTrue(result.detail.message.startswith("Can not read"))

    # endregion

    # region validation

    def test_every_problem_is_reported(self):
        document = _document(model="cubic", extra=1)
        document["factors"][1]["stratum"] = 3

        issues = _issues(document)

        self.assertEqual(3, len(issues))
        self.assertEqual("$.extra: unknown field.", issues[0])
        self.assertEqual("$.factors[1].stratum: factor 'B' is in stratum 3 but the structure has 2 strata.",
                         issues[1])
        self.assertTrue(issues[2].startswith("$.model: unknown model shorthand 'cubic'"))

    def test_required_fields(self):
        self.assertEqual(["$.factors: required field is missing.", "$.structure: required field is missing.",
                          "$.model: required field is missing."], _issues({}))
        self.assertEqual(["$: the problem spec must be a JSON object."], _issues([]))

    def test_factor_shape(self):
        document = _document()
        document["factors"][0]["stratum"] = 0
        issues = _issues(document)

        self.assertEqual(1, len(issues))
        self.assertTrue(issues[0].startswith("$.factors[0]: "))
        self.assertIn("stratum must be a positive integer", issues[0])

    def test_repeated_factor_names(self):
        document = _document()
        document["factors"][1]["name"] = "A"

        self.assertIn("$.factors: factor names must be unique, repeated: ['A'].", _issues(document))

    def test_unknown_structure_type(self):
        issues = _issues(_document(structure={"type": "latin_square"}))

        self.assertTrue(issues[0].startswith("$.structure.type: must be one of split_plot, strip_plot"))

    def test_eta_variants(self):
        self.assertEqual(["$.eta: the structure has 2 strata but 3 ratios are given."],
                         _issues(_document(eta=[1, 1, 1])))
        self.assertEqual(["$.eta: The variance ratio of the run stratum must be 1."],
                         _issues(_document(eta=[2, 2])))
        self.assertEqual((0.5, 1.0), parse_problem_spec(_document(eta=[0.5, 1])).value.eta.eta)

    def test_tau_variants(self):
        spec = parse_problem_spec(_document(eta=[1, 1], tau={"sigma_y_multiple": 2})).value
        self.assertAlmostEqual(2 * math.sqrt(2), spec.tau, delta=1e-12)

        spec = parse_problem_spec(_document(tau=4)).value
        self.assertEqual(4.0, spec.tau)

        issues = _issues(_document(tau=-1))
        self.assertEqual(1, len(issues))
        self.assertTrue(issues[0].startswith("$.tau: must be a positive number"))

    def test_numeric_eta_and_tau_values(self):
        spec = parse_problem_spec(_document(eta=[2.5, 1.0], tau=0.75)).value
        self.assertEqual((2.5, 1.0), spec.eta.eta)
        self.assertEqual(0.75, spec.tau)

        spec = parse_problem_spec(_document(eta=[3, 1], tau={"sigma_y_multiple": 0.5})).value
        self.assertAlmostEqual(0.5 * 2, spec.tau, delta=1e-12)

        self.assertEqual(["$.eta: must be \"auto\" or a list of 2 positive numbers."],
                         _issues(_document(eta=[True, 1])))
        self.assertEqual(["$.eta: must be \"auto\" or a list of 2 positive numbers."],
                         _issues(_document(eta=["1", 1])))
        for tau in ("10", True, {"sigma_y_multiple": 0}, {"sigma_y_multiple": 1, "extra": 2}):
            issues = _issues(_document(tau=tau))
            self.assertEqual(1, len(issues), repr(tau))
            self.assertTrue(issues[0].startswith("$.tau: must be a positive number"), repr(tau))

    def test_bundled_specs_load(self):
        for name in ('split_plot', 'strip_plot', 'staggered_level'):
            result = load_problem_spec(spec_path(name))
            self.assertTrue(result.success, f"{name}: {result.detail}")

    def test_explicit_model(self):
        spec = parse_problem_spec(_document(model={"primary": ["B", "1", "A"], "potential": ["A*B"]})).value

        self.assertEqual([Term.intercept(), Term.main(0), Term.main(1)], list(spec.model.primary))
        self.assertEqual([Term.interaction(0, 1)], list(spec.model.potential))

        self.assertEqual(["$.model: The primary terms must contain the intercept."],
                         _issues(_document(model={"primary": ["A", "B"]})))
        self.assertEqual(["$.model.primary[1]: Unknown factor 'Z' in term 'Z'."],
                         _issues(_document(model={"primary": ["1", "Z"]})))

    def test_full_second_order_has_no_potential_terms(self):
        spec = parse_problem_spec(_document(model="full_second_order")).value

        self.assertEqual((6, 0), (spec.model.p, spec.model.q))
        self.assertIsNone(spec.tau)
        self.assertEqual({"tau": None}, describe_tau(spec))

    def test_scenario_labels_must_be_unique(self):
        scenarios = [{"label": "x", "model": "squares"}, {"label": "x", "model": "interactions"}]

        self.assertEqual(["$.scenarios: scenario labels must be unique."], _issues(_document(scenarios=scenarios)))

    def test_curve_checks(self):
        issues = _issues(_document(curve={"pool": "interactions", "k_max": 2}))
        self.assertEqual(["$.curve: need 0 <= k_min <= k_max <= 1 (the pool size)."], issues)

        issues = _issues(_document(curve={"primary": "first_order", "pool": ["A"]}))
        self.assertEqual(["$.curve: the pool may not repeat primary terms."], issues)

    def test_sensitivity_needs_one_list_per_stratum(self):
        issues = _issues(_document(sensitivity={"eta_values": [[1], [1]]}))

        self.assertEqual(["$.sensitivity.eta_values: needs one list per non-run stratum (1), got 2."], issues)

    def test_variances_submodels(self):
        spec = parse_problem_spec(_document(variances={"submodels": [["A^2"], ["A^2", "B^2"]]})).value

        self.assertEqual([(Term.square(0),), (Term.square(0), Term.square(1))], spec.variance_submodels)
        self.assertEqual(["$.variances.submodels[0]: repeats a primary term."],
                         _issues(_document(variances={"submodels": [["A"]]})))

    # endregion

    def test_describe_tau(self):
        described = describe_tau(load_spec('split_plot'))

        self.assertEqual(10.0, described["tau"])
        self.assertAlmostEqual(10 / math.sqrt(2), described["tau_over_sigma_y"], delta=1e-12)
        self.assertEqual("fixed", described["tau_rule"])
        self.assertAlmostEqual(3 * math.sqrt(2), described["recommended_tau"], delta=1e-12)

        self.assertEqual("3 * sigma_y", describe_tau(load_spec('staggered_level'))["tau_rule"])


if __name__ == '__main__':
    unittest.main()
