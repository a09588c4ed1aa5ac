import csv
import logging
import os
from typing import List, Sequence

from on_rails import Result, def_result
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Schema

from gbd_design._libs.ExitCodes import ExitCode
from gbd_design._libs.ResultDetails.FailResult import (FailResult,
                                                       SpecValidationFailure)
from gbd_design._libs.utility import format_number, write_csv
from gbd_design.model import Design, Factor, check_design
from gbd_design.strata import StratumStructure

logger = logging.getLogger(__name__)


def design_label(path: str) -> str:
    """The file name without directory and extension; used to label designs in tables."""

    return os.path.splitext(os.path.basename(path))[0]


@def_result()
@validate_func_params(schema=Schema({
    'path': And(str, len, error='The design path is required and must be a non-empty string.'),
    'factors': And([Factor], len, error='The factors must be a non-empty list of Factor.'),
}))
def read_design(path: str, factors: List[Factor]) -> Result[Design]:
    """
    Reads a design CSV: a header with the factor names (any order) and one run per row, runs in structure
    order. Every problem found is reported at once with its line number.
    """

    try:
        with open(path, newline='') as file:
            lines = list(csv.reader(file))
    except OSError as error:
        return Result.fail(FailResult(code=ExitCode.INPUT_ERROR, message=f"Can not read '{path}': {error}"))

    lines = [(number, row) for number, row in enumerate(lines, start=1) if any(cell.strip() for cell in row)]
    if not lines:
        return Result.fail(SpecValidationFailure(["The file is empty."], source=path))

    header = [cell.strip() for cell in lines[0][1]]
    names = [factor.name for factor in factors]
    if sorted(header) != sorted(names):
        return Result.fail(SpecValidationFailure(
            [f"line {lines[0][0]}: the header must name the factors {names}, got {header}."], source=path))
    order = [header.index(name) for name in names]

    issues = []
    rows = []
    for number, row in lines[1:]:
        if len(row) != len(header):
            issues.append(f"line {number}: expected {len(header)} values, got {len(row)}.")
            continue
        try:
            rows.append([float(row[index]) for index in order])
        except ValueError:
            issues.append(f"line {number}: all values must be numbers.")
    if not rows and not issues:
        issues.append("The file has no runs.")
    if issues:
        return Result.fail(SpecValidationFailure(issues, source=path))
    return Result.ok(Design(rows))


@def_result()
def read_valid_design(path: str, factors: List[Factor], structure: StratumStructure) -> Result[Design]:
    """`read_design` followed by the level and within-unit checks against the structure."""

    def validate(d: Design) -> Result[Design]:
        issues = check_design(d, factors, structure)
        if issues:
            return Result.fail(SpecValidationFailure(issues, source=path))
        return Result.ok(d)

    return read_design(path, factors) \
        .on_success(lambda d: validate(d))


@def_result()
def read_valid_designs(paths: Sequence[str], factors: List[Factor], structure: StratumStructure) -> Result[list]:
    """
    Reads every design, collecting the problems of all files before failing.
    Returns (label, Design) pairs in the given order.
    """

    designs = []
    issues = []
    for path in paths:
        result = read_valid_design(path, factors, structure)
        if result.success:
            designs.append((design_label(path), result.value))
        elif isinstance(result.detail, SpecValidationFailure):
            issues += [f"{path}: {issue}" for issue in result.detail.issues]
        elif isinstance(result.detail, FailResult):
            issues.append(result.detail.message)
        else:
            return result
    labels = [label for label, _ in designs]
    duplicated = sorted({label for label in labels if labels.count(label) > 1})
    if duplicated:
        issues.append(f"Design file names must be unique, repeated: {duplicated}.")
    if issues:
        return Result.fail(SpecValidationFailure(issues))
    return Result.ok(designs)


@def_result()
def write_design(path: str, d: Design, factors: Sequence[Factor]) -> Result[str]:
    """Writes `d` with the factor names as header and the levels printed as declared."""

    return write_csv(path, [factor.name for factor in factors],
                     [[format_number(value) for value in run] for run in d.settings.tolist()])
