import os
import tempfile
import unittest

import numpy as np
from on_rails import assert_result, assert_result_with_type

from gbd_design._libs.design_io import (design_label, read_design,
                                        read_valid_design, read_valid_designs,
                                        write_design)
from gbd_design._libs.ExitCodes import ExitCode
from gbd_design._libs.ResultDetails.FailResult import (FailResult,
                                                       SpecValidationFailure)
from gbd_design.model import Design, Factor
from gbd_design.strata import split_plot
from tests._helpers import design_path, load_spec

FACTORS = [Factor('A', 1, [-1, 0, 1]), Factor('B', 2, [-1, 0, 1])]


class TestDesignIO(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.directory.cleanup()

    def _write(self, name: str, text: str) -> str:
        path = os.path.join(self.directory.name, name)
        with open(path, 'w') as file:
            file.write(text)
        return path

    def test_design_label(self):
        self.assertEqual("D_sp1", design_label(os.path.join("samples", "designs", "D_sp1.csv")))

    def test_read_sample(self):
        spec = load_spec('split_plot')
        result = read_valid_design(design_path('D_sp2'), spec.factors, spec.structure)

        self.assertTrue(result.success, result.detail)
        self.assertEqual((9, 4), result.value.settings.shape)
        np.testing.assert_array_equal([1, 0, 0, -1], result.value.settings[1])

    def test_columns_follow_the_factor_order(self):
        path = self._write("swapped.csv", "B,A\n1,-1\n0,-1\n")

        np.testing.assert_array_equal([[-1, 1], [-1, 0]], read_design(path, FACTORS).value.settings)

    def test_header_mismatch(self):
        path = self._write("header.csv", "A,C\n1,1\n")
        result = read_design(path, FACTORS)

        assert_result_with_type(self, result, expected_success=False, expected_detail_type=SpecValidationFailure)
        self.assertEqual(["line 1: the header must name the factors ['A', 'B'], got ['A', 'C']."],
                         result.detail.issues)

    def test_every_bad_row_is_reported(self):
        path = self._write("rows.csv", "A,B\n1\n\nx,1\n1,1\n")
        result = read_design(path, FACTORS)

        assert_result_with_type(self, result, expected_success=False, expected_detail_type=SpecValidationFailure)
        self.assertEqual(["line 2: expected 2 values, got 1.", "line 4: all values must be numbers."],
                         result.detail.issues)
        self.assertEqual(ExitCode.INPUT_ERROR, result.detail.code)

    def test_empty_files(self):
        self.assertEqual(["The file is empty."], read_design(self._write("empty.csv", "\n"), FACTORS).detail.issues)
        self.assertEqual(["The file has no runs."],
                         read_design(self._write("header-only.csv", "A,B\n"), FACTORS).detail.issues)

    def test_missing_file(self):
        result = read_design(os.path.join(self.directory.name, "missing.csv"), FACTORS)

        assert_result_with_type(self, result, expected_success=False, expected_detail_type=FailResult)
        self.assertEqual(ExitCode.INPUT_ERROR, result.detail.code)

    def test_read_valid_design_checks_the_structure(self):
        path = self._write("invalid.csv", "A,B\n1,1\n0,0.5\n")
        result = read_valid_design(path, FACTORS, split_plot(1, 2).value)

        assert_result_with_type(self, result, expected_success=False, expected_detail_type=SpecValidationFailure)
        self.assertEqual(["Factor 'A' changes within unit 1 of stratum 1 (runs 1, 2).",
                          "Run 2: 0.5 is not a level of factor 'B'."], sorted(result.detail.issues))

    def test_read_valid_designs_collects_all_files(self):
        good = self._write("good.csv", "A,B\n1,1\n1,0\n")
        bad = self._write("bad.csv", "A,B\n1,1\n0,0\n")
        missing = os.path.join(self.directory.name, "missing.csv")
        result = read_valid_designs([good, bad, missing], FACTORS, split_plot(1, 2).value)

        assert_result_with_type(self, result, expected_success=False, expected_detail_type=SpecValidationFailure)
        self.assertEqual(2, len(result.detail.issues))
        self.assertEqual(f"{bad}: Factor 'A' changes within unit 1 of stratum 1 (runs 1, 2).",
                         result.detail.issues[0])
        self.assertTrue(result.detail.issues[1].startswith("Can not read"))

        result = read_valid_designs([good], FACTORS, split_plot(1, 2).value)
        self.assertEqual(["good"], [label for label, _ in result.value])

    def test_read_valid_designs_rejects_repeated_labels(self):
        first = self._write("same.csv", "A,B\n1,1\n1,0\n")
        os.makedirs(os.path.join(self.directory.name, "other"))
        second = self._write(os.path.join("other", "same.csv"), "A,B\n1,1\n1,0\n")
        result = read_valid_designs([first, second], FACTORS, split_plot(1, 2).value)

        self.assertEqual(["Design file names must be unique, repeated: ['same']."], result.detail.issues)

    def test_write_design(self):
        path = os.path.join(self.directory.name, "out", "design.csv")
        result = write_design(path, Design([[-1, 0.0], [1, -0.0]]), FACTORS)

        assert_result(self, result, expected_success=True, expected_value=path)
        with open(path) as file:
            self.assertEqual("A,B\n-1,0\n1,0\n", file.read().replace("\r\n", "\n"))
        np.testing.assert_array_equal([[-1, 0], [1, 0]], read_design(path, FACTORS).value.settings)


if __name__ == '__main__':
    unittest.main()
