"""
Randomization structures with g strata, their indicator matrices and the covariance matrix they induce.

Stratum indices are 1-based and units are labelled 1..b_l, matching how designs are usually described.
Stratum g is always the run stratum.
"""

import numbers
from typing import List, Sequence, Tuple

import numpy as np
from on_rails import Result, ValidationError, def_result
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Schema

_positive_int = And(int, lambda v: v >= 1)


class StratumStructure:
    """
    Per-stratum run-to-unit maps. `unit_of_run[l - 1][i]` is the unit of run i in stratum l.
    """

    def __init__(self, unit_of_run: Sequence[Sequence[int]]):
        maps = [np.array(units, dtype=int) for units in unit_of_run]
        issues = structure_issues(maps)
        if issues:
            raise ValueError("\n".join(issues))
        for units in maps:
            units.setflags(write=False)
        self.unit_of_run: Tuple[np.ndarray, ...] = tuple(maps)
        self._members = tuple(tuple(np.flatnonzero(units == label)
                                    for label in range(1, int(units.max()) + 1))
                              for units in maps)

    @property
    def g(self) -> int:
        return len(self.unit_of_run)

    @property
    def n(self) -> int:
        return len(self.unit_of_run[0])

    def unit_count(self, l: int) -> int:
        return len(self._members[self._index(l)])

    def unit_counts(self) -> List[int]:
        return [len(members) for members in self._members]

    def units(self, l: int) -> Tuple[np.ndarray, ...]:
        """Run indices (0-based) of every unit of stratum `l`, in unit order."""

        return self._members[self._index(l)]

    def permute_runs(self, order: Sequence[int]) -> 'StratumStructure':
        """The structure whose i-th run is run `order[i]` of this one; pairs with `Design.permuted`."""

        order = np.asarray(order)
        # the run stratum keeps unit i for run i
        return StratumStructure([units[order] for units in self.unit_of_run[:-1]] + [np.arange(1, self.n + 1)])

    def _index(self, l: int) -> int:
        if not 1 <= l <= self.g:
            raise IndexError(f"Stratum {l} is out of range 1..{self.g}.")
        return l - 1

    def __eq__(self, other):
        return isinstance(other, StratumStructure) and self.g == other.g and self.n == other.n and \
            all(np.array_equal(a, b) for a, b in zip(self.unit_of_run, other.unit_of_run))

    def __hash__(self):
        return hash(tuple(tuple(units.tolist()) for units in self.unit_of_run))

    def __repr__(self):
        return f"StratumStructure(g={self.g}, n={self.n}, units={self.unit_counts()})"


def structure_issues(maps: Sequence[np.ndarray]) -> List[str]:
    if len(maps) == 0:
        return ["A structure needs at least one stratum."]
    issues = []
    n = len(maps[0])
    if n == 0:
        issues.append("A structure needs at least one run.")
        return issues
    for index, units in enumerate(maps, start=1):
        if units.ndim != 1 or len(units) != n:
            issues.append(f"Stratum {index} must assign a unit to each of the {n} runs.")
            continue
        if units.min() < 1:
            issues.append(f"Stratum {index} uses unit labels below 1.")
            continue
        missing = sorted(set(range(1, int(units.max()) + 1)) - set(units.tolist()))
        if missing:
            issues.append(f"Stratum {index} never uses unit label(s) {missing}.")
    if not issues and not np.array_equal(maps[-1], np.arange(1, n + 1)):
        issues.append("The last stratum must be the run stratum (unit i for run i).")
    return issues


class VarianceRatios:
    """
    Variance ratios eta_l = sigma_l^2 / sigma_g^2, one per stratum, the last being exactly 1.
    """

    def __init__(self, eta: Sequence[float]):
        values = tuple(float(value) for value in eta)
        if len(values) == 0:
            raise ValueError("At least one variance ratio is required.")
        if any(not np.isfinite(value) or value <= 0 for value in values):
            raise ValueError("Every variance ratio must be a positive finite number.")
        if values[-1] != 1.0:
            raise ValueError("The variance ratio of the run stratum must be 1.")
        self.eta = values

    @property
    def g(self) -> int:
        return len(self.eta)

    def total(self) -> float:
        return float(sum(self.eta))

    def __eq__(self, other):
        return isinstance(other, VarianceRatios) and self.eta == other.eta

    def __hash__(self):
        return hash(self.eta)

    def __repr__(self):
        return f"VarianceRatios({list(self.eta)})"


@def_result()
def indicator_matrix(s: StratumStructure, l: int) -> Result[np.ndarray]:
    """
    The n x b_l 0/1 matrix with a single 1 per row, at the unit of that run in stratum `l`.
    """

    if isinstance(l, bool) or not isinstance(l, numbers.Integral) or not 1 <= l <= s.g:
        return Result.fail(ValidationError(message=f"The stratum index must be in 1..{s.g}."))
    units = s.unit_of_run[l - 1]
    matrix = np.zeros((s.n, s.unit_count(l)))
    matrix[np.arange(s.n), units - 1] = 1.0
    return Result.ok(matrix)


def same_unit(s: StratumStructure, l: int) -> np.ndarray:
    """U_l U_l': entry (i, j) is 1 when runs i and j share a stratum-l unit."""

    units = s.unit_of_run[l - 1]
    return (units[:, None] == units[None, :]).astype(float)


@def_result()
def build_sigma(s: StratumStructure, eta: VarianceRatios) -> Result[np.ndarray]:
    """
    Covariance of the responses with sigma_g^2 = 1: the sum over strata of eta_l U_l U_l'.
    """

    if eta.g != s.g:
        return Result.fail(ValidationError(
            message=f"Expected {s.g} variance ratios for a {s.g}-stratum structure, got {eta.g}."))
    sigma = np.zeros((s.n, s.n))
    for l, ratio in enumerate(eta.eta, start=1):
        sigma += ratio * same_unit(s, l)
    return Result.ok(sigma)


@def_result()
@validate_func_params(schema=Schema({
    'n': And(_positive_int, error='The run count must be a positive integer.'),
}))
def completely_randomized(n: int) -> Result[StratumStructure]:
    return Result.ok(StratumStructure([list(range(1, n + 1))]))


@def_result()
@validate_func_params(schema=Schema({
    'whole_plots': And(_positive_int, error='The number of whole plots must be a positive integer.'),
    'runs_per_plot': And(_positive_int, error='The number of runs per plot must be a positive integer.'),
}))
def split_plot(whole_plots: int, runs_per_plot: int) -> Result[StratumStructure]:
    """Two strata; whole plots are contiguous blocks of `runs_per_plot` runs."""

    n = whole_plots * runs_per_plot
    return Result.ok(StratumStructure([
        [run // runs_per_plot + 1 for run in range(n)],
        list(range(1, n + 1)),
    ]))


@def_result()
@validate_func_params(schema=Schema({
    'rows': And(_positive_int, error='The number of rows must be a positive integer.'),
    'cols': And(_positive_int, error='The number of columns must be a positive integer.'),
    'incidence': And(lambda v: v is not None, error='The incidence matrix is required.'),
}))
def strip_plot(rows: int, cols: int, incidence) -> Result[StratumStructure]:
    """
    Three strata (rows, columns, runs). One run per checked cell of `incidence`, in row-major order.
    """

    cells = np.array(incidence)
    if cells.shape != (rows, cols):
        return Result.fail(ValidationError(
            message=f"The incidence matrix must be {rows}x{cols}, got {'x'.join(map(str, cells.shape))}."))
    if not np.all(np.isin(cells, (0, 1))):
        return Result.fail(ValidationError(message="The incidence matrix may only contain 0 and 1."))
    empty_rows = [index + 1 for index in range(rows) if not cells[index].any()]
    empty_cols = [index + 1 for index in range(cols) if not cells[:, index].any()]
    if empty_rows or empty_cols:
        return Result.fail(ValidationError(
            message=f"Every row and column needs a checked cell (empty rows: {empty_rows}, "
                    f"empty columns: {empty_cols})."))

    row_units, col_units = np.nonzero(cells)
    n = len(row_units)
    return Result.ok(StratumStructure([
        (row_units + 1).tolist(),
        (col_units + 1).tolist(),
        list(range(1, n + 1)),
    ]))


@def_result()
@validate_func_params(schema=Schema({
    'class1_plots': And(int, lambda v: v >= 2, error='The number of class-I plots must be an integer >= 2.'),
    'plot_size': And(_positive_int, lambda v: v % 2 == 0, error='The plot size must be a positive even integer.'),
}))
def staggered_level(class1_plots: int, plot_size: int) -> Result[StratumStructure]:
    """
    Three strata. Class-I plots are contiguous blocks of `plot_size` runs; class-II plots are shifted by
    half a plot, so the first and the last class-II plots have half size.
    """

    n = class1_plots * plot_size
    half = plot_size // 2
    return Result.ok(StratumStructure([
        [run // plot_size + 1 for run in range(n)],
        [(run + half) // plot_size + 1 for run in range(n)],
        list(range(1, n + 1)),
    ]))


@def_result()
@validate_func_params(schema=Schema({
    'unit_of_run': And([[int]], len, error='The unit maps must be a non-empty list of integer lists.'),
}))
def from_unit_maps(unit_of_run: List[List[int]]) -> Result[StratumStructure]:
    """Arbitrary structure from explicit per-stratum unit labels."""

    issues = structure_issues([np.array(units, dtype=int) for units in unit_of_run])
    if issues:
        return Result.fail(ValidationError(message="\n".join(issues)))
    return Result.ok(StratumStructure(unit_of_run))
