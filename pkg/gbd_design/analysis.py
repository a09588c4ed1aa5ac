"""
Post-design evaluation: efficiency tables, coefficient variances of projective submodels, overall-variance
curves over families of submodels and sensitivity of the efficiency ranking to the variance ratios.

Submodel analyses use raw (unscaled) model columns and generalized least squares with sigma_g^2 = 1.
"""

import logging
import math
from itertools import combinations, islice, product
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from on_rails import Result, ValidationError, def_result
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Or, Schema

from gbd_design._libs.ExitCodes import ExitCode
from gbd_design._libs.ResultDetails.FailResult import FailResult
from gbd_design.criterion import (CriterionConfig, criterion_value,
                                  efficiency, sigma_y)
from gbd_design.model import (Design, Factor, ModelSpec, Term, check_design,
                              exponent_matrix, term_columns)
from gbd_design.numeric import (WORST_LOG_VALUE, gram, reciprocal_condition,
                                solve_spd, spd_factorize)
from gbd_design.strata import StratumStructure, VarianceRatios, build_sigma

logger = logging.getLogger(__name__)

ESTIMABILITY_RCOND = 1e-8
EXHAUSTIVE_LIMIT = 200_000
CHUNK_SIZE = 4096


class EfficiencyTable:
    """
    Efficiencies (rows: scenarios, columns: designs). `log_values` keeps the underlying log-criterion values.
    """

    def __init__(self, scenarios: Sequence[str], designs: Sequence[str], values: np.ndarray,
                 log_values: np.ndarray, criteria: Sequence[str]):
        self.scenarios = list(scenarios)
        self.designs = list(designs)
        self.values = np.asarray(values)
        self.log_values = np.asarray(log_values)
        self.criteria = list(criteria)

    def best(self, scenario: int = 0) -> str:
        """Label of the best design of a scenario; the first one on ties."""

        return self.designs[int(np.argmax(self.log_values[scenario]))]

    def value(self, scenario: str, design: str) -> float:
        return float(self.values[self.scenarios.index(scenario), self.designs.index(design)])

    def __repr__(self):
        return f"EfficiencyTable(scenarios={self.scenarios}, designs={self.designs})"


class VarianceReport:
    """
    Coefficient variances of one submodel, or `estimable = False` with `variances = None`.
    """

    def __init__(self, submodel: Sequence[Term], estimable: bool, variances: Optional[np.ndarray] = None,
                 reciprocal_condition_number: float = 0.0):
        self.submodel = list(submodel)
        self.estimable = estimable
        self.variances = variances if estimable else None
        self.reciprocal_condition_number = reciprocal_condition_number

    def variance_of(self, term: Term) -> Optional[float]:
        if not self.estimable:
            return None
        return float(self.variances[self.submodel.index(term)])

    def __repr__(self):
        return f"VarianceReport(terms={len(self.submodel)}, estimable={self.estimable})"


class CurvePoint:
    """
    One k of an overall-variance curve.

    `term_averages` maps the index of a term (primary terms first, then the pool) to its average variance
    and the number of estimable submodels containing it.
    """

    def __init__(self, k: int, primary_overall: float, potential_overall: float, n_estimable: int,
                 n_models: int, sampled: bool, term_averages: Dict[int, Tuple[float, int]]):
        self.k = k
        self.primary_overall = primary_overall
        self.potential_overall = potential_overall
        self.n_estimable = n_estimable
        self.n_models = n_models
        self.sampled = sampled
        self.term_averages = term_averages

    def __repr__(self):
        return f"CurvePoint(k={self.k}, primary={self.primary_overall:.6g}, potential={self.potential_overall:.6g}, " \
               f"estimable={self.n_estimable}/{self.n_models})"


class TauRule:
    """tau for a given eta: either a fixed value or a multiple of sigma_y(eta)."""

    def __init__(self, fixed: Optional[float] = None, sigma_y_multiple: Optional[float] = None):
        if (fixed is None) == (sigma_y_multiple is None):
            raise ValueError("Give exactly one of a fixed tau or a multiple of sigma_y.")
        value = fixed if fixed is not None else sigma_y_multiple
        if not value > 0:
            raise ValueError("tau must be positive.")
        self.fixed = fixed
        self.sigma_y_multiple = sigma_y_multiple

    def resolve(self, eta: VarianceRatios) -> float:
        if self.fixed is not None:
            return self.fixed
        return self.sigma_y_multiple * sigma_y(eta)

    def __repr__(self):
        if self.fixed is not None:
            return f"TauRule(tau={self.fixed})"
        return f"TauRule(tau={self.sigma_y_multiple} * sigma_y)"


class SensitivityPoint:
    def __init__(self, eta: VarianceRatios, tau: float, table: EfficiencyTable):
        self.eta = eta
        self.tau = tau
        self.table = table

    def best(self, scenario: int = 0) -> str:
        return self.table.best(scenario)

    def __repr__(self):
        return f"SensitivityPoint(eta={list(self.eta.eta)}, tau={self.tau:.6g}, best={self.best()})"


def _design_issues(designs: Sequence[Tuple[str, Design]], factors: Sequence[Factor],
                   structure: StratumStructure) -> List[str]:
    issues = []
    for label, d in designs:
        issues += [f"{label}: {issue}" for issue in check_design(d, factors, structure)]
    return issues


@def_result()
@validate_func_params(schema=Schema({
    'designs': And([(str, Design)], len, error='designs must be a non-empty list of (label, Design) pairs.'),
    'scenarios': And([(str, ModelSpec)], len, error='scenarios must be a non-empty list of (label, ModelSpec) pairs.'),
    'structure': And(StratumStructure, error='structure must be a StratumStructure.'),
    'eta': And(VarianceRatios, error='eta must be a VarianceRatios instance.'),
    'tau': Or(None, And(Or(int, float), lambda v: v > 0), error='tau must be None or a positive number.'),
}))
def efficiency_table(designs: List[Tuple[str, Design]], scenarios: List[Tuple[str, ModelSpec]],
                     structure: StratumStructure, eta: VarianceRatios,
                     tau: Optional[float] = None) -> Result[EfficiencyTable]:
    """
    Efficiency of every design relative to the best one, per scenario: the D criterion for scenarios without
    potential terms, the GBD criterion otherwise. The scaling of each scenario is fitted on the full-factorial
    candidate set of its factors.
    """

    issues = _design_issues(designs, scenarios[0][1].factors, structure)
    if issues:
        return Result.fail(ValidationError(message="\n".join(issues)))

    log_values = np.full((len(scenarios), len(designs)), WORST_LOG_VALUE)
    criteria = []
    for row, (label, model) in enumerate(scenarios):
        created = CriterionConfig.create(model, structure, eta, tau)
        if not created.success:
            return created
        cfg = created.value
        criteria.append("GBD" if model.q else "D")
        for col, (_, d) in enumerate(designs):
            log_values[row, col] = criterion_value(d, cfg)
        if np.all(log_values[row] == WORST_LOG_VALUE):
            return Result.fail(FailResult(code=ExitCode.COMPUTATION_FAILURE,
                                          message=f"Every design is singular under scenario '{label}'."))

    values = np.array([[efficiency(value, float(np.max(row))) for value in row] for row in log_values])
    return Result.ok(EfficiencyTable([label for label, _ in scenarios], [label for label, _ in designs],
                                     values, log_values, criteria))


def _gls_information(d: Design, structure: StratumStructure, eta: VarianceRatios,
                     terms: Sequence[Term]) -> Result[np.ndarray]:
    x = term_columns(d.settings, exponent_matrix(terms, d.m))
    return build_sigma(structure, eta) \
        .on_success(lambda sigma: spd_factorize(sigma)) \
        .on_success(lambda factor: gram(x, factor))


@def_result()
def submodel_variances(d: Design, structure: StratumStructure, eta: VarianceRatios,
                       primary: Sequence[Term], extra_terms: Sequence[Term]) -> Result[VarianceReport]:
    """
    GLS variances of the coefficients of the submodel `primary + extra_terms`, i.e. the diagonal of
    (X' Sigma^-1 X)^-1 on raw columns. A submodel whose information matrix fails to factorize or has a
    reciprocal condition number at or below 1e-8 is reported as not estimable.
    """

    terms = list(primary) + list(extra_terms)
    if d.n != structure.n:
        return Result.fail(ValidationError(message=f"The design has {d.n} runs but the structure has "
                                                   f"{structure.n}."))

    def report(information: np.ndarray) -> VarianceReport:
        rcond = float(reciprocal_condition(information))
        factor = spd_factorize(information)
        if not factor.success or rcond <= ESTIMABILITY_RCOND:
            return VarianceReport(terms, False, reciprocal_condition_number=rcond)
        inverse = solve_spd(factor.value, np.eye(len(terms))).value
        return VarianceReport(terms, True, np.diag(inverse).copy(), rcond)

    return _gls_information(d, structure, eta, terms).on_success(lambda information: report(information))


def all_submodels(pool: Sequence[Term]) -> List[Tuple[Term, ...]]:
    """Non-empty subsets of `pool`, by size and then in combination order."""

    return [subset for size in range(1, len(pool) + 1) for subset in combinations(pool, size)]


def _subsets(q: int, k: int, sample_limit: int, rng: np.random.Generator) -> Tuple[Iterator[np.ndarray], int, bool]:
    total = math.comb(q, k)
    if total <= sample_limit:
        def exhaustive():
            iterator = combinations(range(q), k)
            while True:
                block = list(islice(iterator, CHUNK_SIZE))
                if not block:
                    return
                yield np.array(block, dtype=int).reshape(len(block), k)
        return exhaustive(), total, False

    chosen = np.sort(rng.random((sample_limit, q)).argsort(axis=1)[:, :k], axis=1)
    return (chosen[start:start + CHUNK_SIZE] for start in range(0, sample_limit, CHUNK_SIZE)), sample_limit, True


@def_result()
@validate_func_params(schema=Schema({
    'd': And(Design, error='d must be a Design.'),
    'structure': And(StratumStructure, error='structure must be a StratumStructure.'),
    'eta': And(VarianceRatios, error='eta must be a VarianceRatios instance.'),
    'primary': And([Term], len, error='primary must be a non-empty list of terms.'),
    'pool': And([Term], error='pool must be a list of terms.'),
    'k_range': And([int], len, error='k_range must be a non-empty list of integers.'),
    'sample_limit': And(int, lambda v: v >= 1, error='sample_limit must be a positive integer.'),
    'seed': And(int, lambda v: v >= 0, error='The seed must be a non-negative integer.'),
}))
def overall_variance_curve(d: Design, structure: StratumStructure, eta: VarianceRatios, primary: List[Term],
                           pool: List[Term], k_range: List[int], sample_limit: int = EXHAUSTIVE_LIMIT,
                           seed: int = 0) -> Result[List[CurvePoint]]:
    """
    For each k, fits every submodel made of the primary terms plus k terms of `pool` (or a seeded sample of
    `sample_limit` of them when there are more), keeps the estimable ones and averages the coefficient
    variances over them.

    The primary overall variance is the sum of the average primary-term variances. The potential overall
    variance is the sum, over the pool terms, of the average variance of each term across the estimable
    submodels that contain it.
    """

    q = len(pool)
    bad = [k for k in k_range if not 0 <= k <= q]
    if bad:
        return Result.fail(ValidationError(message=f"k must be in 0..{q}, got {bad}."))

    p = len(primary)
    computed = _gls_information(d, structure, eta, list(primary) + list(pool))
    if not computed.success:
        return computed
    information = computed.value
    rng = np.random.default_rng(seed)

    points = []
    for k in k_range:
        chunks, n_models, sampled = _subsets(q, k, sample_limit, rng)
        sums = np.zeros(p + q)
        counts = np.zeros(p + q, dtype=int)
        n_estimable = 0
        for subsets in chunks:
            index = np.hstack([np.broadcast_to(np.arange(p), (len(subsets), p)), p + subsets])
            blocks = information[index[:, :, None], index[:, None, :]]
            keep = reciprocal_condition(blocks) > ESTIMABILITY_RCOND
            if not np.any(keep):
                continue
            variances = np.diagonal(np.linalg.inv(blocks[keep]), axis1=1, axis2=2)
            np.add.at(sums, index[keep].ravel(), variances.ravel())
            np.add.at(counts, index[keep].ravel(), 1)
            n_estimable += int(np.count_nonzero(keep))

        averages = {int(term): (float(sums[term] / counts[term]), int(counts[term]))
                    for term in np.flatnonzero(counts)}
        if n_estimable == 0:
            primary_overall = potential_overall = math.nan
        else:
            primary_overall = float(sum(averages[term][0] for term in range(p)))
            potential_overall = float(sum(average for term, (average, _) in averages.items() if term >= p))
        logger.debug(f"k={k}: {n_estimable} of {n_models} submodels estimable.")
        points.append(CurvePoint(k, primary_overall, potential_overall, n_estimable, n_models, sampled, averages))
    return Result.ok(points)


@def_result()
@validate_func_params(schema=Schema({
    'designs': And([(str, Design)], len, error='designs must be a non-empty list of (label, Design) pairs.'),
    'scenarios': And([(str, ModelSpec)], len, error='scenarios must be a non-empty list of (label, ModelSpec) pairs.'),
    'structure': And(StratumStructure, error='structure must be a StratumStructure.'),
    'eta_grid': And([And([Or(int, float)], len)], len,
                    error='eta_grid must list, per non-run stratum, the ratios to try.'),
    'tau_rule': And(TauRule, error='tau_rule must be a TauRule.'),
}))
def sensitivity_sweep(designs: List[Tuple[str, Design]], scenarios: List[Tuple[str, ModelSpec]],
                      structure: StratumStructure, eta_grid: List[List[float]],
                      tau_rule: TauRule) -> Result[List[SensitivityPoint]]:
    """
    Efficiency tables over the product grid of variance ratios (one list per non-run stratum; the run
    stratum stays at 1). tau follows `tau_rule` at every grid point.
    """

    if len(eta_grid) != structure.g - 1:
        return Result.fail(ValidationError(
            message=f"eta_grid needs {structure.g - 1} lists for a {structure.g}-stratum structure."))

    points = []
    for combination in product(*eta_grid):
        try:
            eta = VarianceRatios(list(combination) + [1.0])
        except ValueError as error:
            return Result.fail(ValidationError(message=str(error)))
        tau = tau_rule.resolve(eta)
        table = efficiency_table(designs, scenarios, structure, eta, tau)
        if not table.success:
            return table
        points.append(SensitivityPoint(eta, tau, table.value))
        logger.debug(f"{points[-1]}")
    return Result.ok(points)


def levels_used(d: Design, factors: Sequence[Factor]) -> Dict[str, List[float]]:
    """The distinct levels each factor takes in `d`, ascending."""

    return {factor.name: sorted(set(d.settings[:, j].tolist())) for j, factor in enumerate(factors)}
