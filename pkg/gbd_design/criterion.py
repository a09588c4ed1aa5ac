"""
Scaling of potential terms and the D / generalized Bayesian D criteria.

Criterion values are handled as logs: `gbd_value` returns (1/r) log det(X' Sigma^-1 X + K / tau^2) and
`d_value` returns (1/p) log det(X_pri' Sigma^-1 X_pri). Larger is better. A singular information matrix
gets `WORST_LOG_VALUE`.
"""

import logging
import math
from itertools import product
from typing import Optional, Sequence, Tuple

import numpy as np
from on_rails import Result, ValidationError, def_result
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Or, Schema

from gbd_design.model import (Design, Factor, ModelSpec, exponent_matrix,
                              term_columns)
from gbd_design.numeric import (WORST_LOG_VALUE, SpdFactorization, gram,
                                solve_spd, spd_factorize, spd_log_det)
from gbd_design.strata import StratumStructure, VarianceRatios, build_sigma

logger = logging.getLogger(__name__)

CANDIDATE_LIMIT = 100_000
RANGE_TOLERANCE = 1e-12


@validate_func_params(schema=Schema({
    'factors': And([Factor], len, error='At least one factor is required.'),
    'limit': And(int, lambda v: v >= 1, error='The candidate limit must be a positive integer.'),
    'seed': And(int, lambda v: v >= 0, error='The seed must be a non-negative integer.'),
}), raise_exception=True)
def candidate_set(factors: Sequence[Factor], limit: int = CANDIDATE_LIMIT, seed: int = 0) -> Design:
    """
    Full factorial over the declared levels. Above `limit` points, a seeded sample of `limit` points in which
    every factor's levels appear equally often (up to one).
    """

    size = math.prod(len(factor.levels) for factor in factors)
    if size <= limit:
        return Design(list(product(*(factor.levels for factor in factors))))

    logger.debug(f"Full factorial has {size} points, sampling {limit}.")
    rng = np.random.default_rng(seed)
    columns = [rng.permutation(np.resize(np.array(factor.levels), limit)) for factor in factors]
    return Design(np.column_stack(columns))


class ScalingMap:
    """
    Centering coefficients and ranges that turn raw potential columns into Z = (X_pot - X_pri alpha) / range.
    """

    def __init__(self, alpha: np.ndarray, ranges: np.ndarray, candidate_summary: str, signature: Tuple):
        self.alpha = np.array(alpha, dtype=float)
        self.ranges = np.array(ranges, dtype=float)
        self.alpha.setflags(write=False)
        self.ranges.setflags(write=False)
        self.candidate_summary = candidate_summary
        self.signature = signature

    @staticmethod
    def identity(model: ModelSpec) -> 'ScalingMap':
        """The map of a model without potential terms."""

        return ScalingMap(np.zeros((model.p, 0)), np.zeros(0), "none", model.signature())

    def __repr__(self):
        return f"ScalingMap(p={self.alpha.shape[0]}, q={self.alpha.shape[1]}, candidates={self.candidate_summary})"


@def_result()
def fit_scaling(candidates: Design, model: ModelSpec) -> Result[ScalingMap]:
    """
    Regresses every potential column on the primary columns over the candidate set and records the range
    of the residuals.

    :return: the fitted `ScalingMap`, or a `ValidationError` when the primary columns are rank deficient over
    the candidates or a residual column is constant (the message names the term).
    """

    if candidates.m != model.m:
        return Result.fail(ValidationError(
            message=f"The candidate set has {candidates.m} factors but the model declares {model.m}."))
    summary = f"{candidates.n} points"
    if model.q == 0:
        return Result.ok(ScalingMap(np.zeros((model.p, 0)), np.zeros(0), summary, model.signature()))

    x_pri = term_columns(candidates.settings, exponent_matrix(model.primary, model.m))
    x_pot = term_columns(candidates.settings, exponent_matrix(model.potential, model.m))
    if np.linalg.matrix_rank(x_pri) < model.p:
        return Result.fail(ValidationError(
            message="The primary terms are linearly dependent over the candidate set."))

    alpha = np.linalg.lstsq(x_pri, x_pot, rcond=None)[0]
    residuals = x_pot - x_pri @ alpha
    ranges = residuals.max(axis=0) - residuals.min(axis=0)
    scale = np.maximum(1.0, np.abs(x_pot).max(axis=0))
    flat = np.flatnonzero(ranges <= RANGE_TOLERANCE * scale)
    if flat.size > 0:
        names = ", ".join(model.potential[index].label(model.factors) for index in flat)
        return Result.fail(ValidationError(
            message=f"Potential term(s) {names} are fully explained by the primary terms over the candidate "
                    f"set and cannot be scaled."))
    return Result.ok(ScalingMap(alpha, ranges, summary, model.signature()))


@def_result()
def apply_scaling(d: Design, model: ModelSpec, scaling: ScalingMap) -> Result[np.ndarray]:
    """The n x r matrix [X_pri | Z] of design `d`."""

    if scaling.signature != model.signature():
        return Result.fail(ValidationError(message="The scaling map was fitted for a different model."))
    if d.m != model.m:
        return Result.fail(ValidationError(
            message=f"The design has {d.m} factors but the model declares {model.m}."))
    return Result.ok(_scaled_matrix(d.settings, exponent_matrix(model.primary, model.m),
                                    exponent_matrix(model.potential, model.m), scaling))


def _scaled_matrix(settings: np.ndarray, primary: np.ndarray, potential: np.ndarray,
                   scaling: ScalingMap) -> np.ndarray:
    x_pri = term_columns(settings, primary)
    if potential.shape[0] == 0:
        return x_pri
    z = (term_columns(settings, potential) - x_pri @ scaling.alpha) / scaling.ranges
    return np.hstack([x_pri, z])


class PosteriorMoments:
    """Posterior mean `b` and covariance `s` (in units of sigma_g^2) of the coefficients."""

    def __init__(self, b: np.ndarray, s: np.ndarray):
        self.b = b
        self.s = s

    def __repr__(self):
        return f"PosteriorMoments(r={len(self.b)})"


class CriterionConfig:
    """
    Everything the criterion needs for one problem. Sigma, its factorization and inverse, the prior precision
    diagonal and the term exponent tables are computed once here and shared by every evaluation.

    Build it with `CriterionConfig.create`.
    """

    model: ModelSpec
    structure: StratumStructure
    eta: VarianceRatios
    tau: Optional[float]
    scaling: ScalingMap

    def __init__(self, model: ModelSpec, structure: StratumStructure, eta: VarianceRatios,
                 tau: Optional[float], scaling: ScalingMap, sigma: np.ndarray, sigma_factor: SpdFactorization):
        self.model = model
        self.structure = structure
        self.eta = eta
        self.tau = tau
        self.scaling = scaling
        self.sigma = sigma
        self.sigma_factor = sigma_factor
        self.sigma_inv = solve_spd(sigma_factor, np.eye(structure.n)).value
        self.prior_precision = np.concatenate([np.zeros(model.p),
                                               np.full(model.q, 1.0 / tau ** 2 if model.q else 0.0)])
        self.primary_exponents = exponent_matrix(model.primary, model.m)
        self.potential_exponents = exponent_matrix(model.potential, model.m)

    @staticmethod
    @def_result()
    def create(model: ModelSpec, structure: StratumStructure, eta: VarianceRatios,
               tau: Optional[float] = None, scaling: Optional[ScalingMap] = None) -> Result['CriterionConfig']:
        """
        Validates the pieces against each other and caches the covariance. Without `scaling`, the map is
        fitted on the full-factorial candidate set of the model's factors.
        """

        if eta.g != structure.g:
            return Result.fail(ValidationError(
                message=f"Expected {structure.g} variance ratios, got {eta.g}."))
        outside = [factor.name for factor in model.factors if factor.stratum > structure.g]
        if outside:
            return Result.fail(ValidationError(
                message=f"Factor(s) {', '.join(outside)} belong to a stratum the structure does not have."))
        if model.q > 0 and (tau is None or not np.isfinite(tau) or tau <= 0):
            return Result.fail(ValidationError(message="tau must be a positive number when there are "
                                                       "potential terms."))

        if scaling is None:
            fitted = fit_scaling(candidate_set(list(model.factors)), model)
            if not fitted.success:
                return fitted
            scaling = fitted.value
        elif scaling.signature != model.signature():
            return Result.fail(ValidationError(message="The scaling map was fitted for a different model."))

        return build_sigma(structure, eta) \
            .on_success(lambda sigma: spd_factorize(sigma)
                        .on_success(lambda factor: CriterionConfig(model, structure, eta,
                                                                   tau if model.q else None, scaling,
                                                                   sigma, factor)))

    @property
    def r(self) -> int:
        return self.model.r

    def primary_only(self) -> 'CriterionConfig':
        """The same problem with the potential terms dropped."""

        model = self.model.with_potential(())
        return CriterionConfig(model, self.structure, self.eta, None, ScalingMap.identity(model),
                               self.sigma, self.sigma_factor)

    def with_eta(self, eta: VarianceRatios, tau: Optional[float] = None) -> Result['CriterionConfig']:
        return CriterionConfig.create(self.model, self.structure, eta, tau if tau is not None else self.tau,
                                      self.scaling)

    def matrix(self, settings: np.ndarray) -> np.ndarray:
        """[X_pri | Z] for raw settings rows; rows are independent, so any subset of runs may be passed."""

        return _scaled_matrix(settings, self.primary_exponents, self.potential_exponents, self.scaling)

    def information(self, x: np.ndarray) -> np.ndarray:
        return x.T @ self.sigma_inv @ x + np.diag(self.prior_precision)

    def log_value_of_matrix(self, x: np.ndarray) -> float:
        return spd_log_det(self.information(x)) / self.r

    def __repr__(self):
        return f"CriterionConfig(p={self.model.p}, q={self.model.q}, g={self.structure.g}, " \
               f"eta={list(self.eta.eta)}, tau={self.tau})"


def gbd_value(d: Design, cfg: CriterionConfig) -> float:
    """(1/r) log det(X' Sigma^-1 X + K / tau^2), or `WORST_LOG_VALUE` when singular."""

    return cfg.log_value_of_matrix(cfg.matrix(d.settings))


def d_value(d: Design, cfg: CriterionConfig) -> float:
    """(1/p) log det(X_pri' Sigma^-1 X_pri) on the primary terms of `cfg`."""

    x_pri = term_columns(d.settings, cfg.primary_exponents)
    return spd_log_det(x_pri.T @ cfg.sigma_inv @ x_pri) / cfg.model.p


def criterion_value(d: Design, cfg: CriterionConfig) -> float:
    """`d_value` for models without potential terms, `gbd_value` otherwise."""

    return gbd_value(d, cfg) if cfg.model.q else d_value(d, cfg)


def criterion_name(cfg: CriterionConfig) -> str:
    return "GBD" if cfg.model.q else "D"


@def_result()
def posterior_moments(d: Design, cfg: CriterionConfig, y) -> Result[PosteriorMoments]:
    """
    b = (X' Sigma^-1 X + K / tau^2)^-1 X' Sigma^-1 y and S = (X' Sigma^-1 X + K / tau^2)^-1.
    Fails with a `SingularReport` when the information matrix is singular.
    """

    response = np.array(y, dtype=float).ravel()
    if response.shape[0] != d.n:
        return Result.fail(ValidationError(message=f"Expected {d.n} responses, got {response.shape[0]}."))
    x = cfg.matrix(d.settings)

    def moments(factor: SpdFactorization) -> Result[PosteriorMoments]:
        weighted = solve_spd(cfg.sigma_factor, response).value
        return solve_spd(factor, x.T @ weighted) \
            .on_success(lambda b: solve_spd(factor, np.eye(cfg.r))
                        .on_success(lambda s: PosteriorMoments(b, (s + s.T) * 0.5)))

    return gram(x, cfg.sigma_factor) \
        .on_success(lambda info: spd_factorize(info + np.diag(cfg.prior_precision))) \
        .on_success(lambda factor: moments(factor))


@validate_func_params(schema=Schema({
    'eta': And(VarianceRatios, error='eta must be a VarianceRatios instance.'),
}), raise_exception=True)
def sigma_y(eta: VarianceRatios) -> float:
    """Standard deviation of a single response when sigma_g^2 = 1."""

    return math.sqrt(eta.total())


def recommend_tau(eta: VarianceRatios) -> float:
    """Three response standard deviations."""

    return 3.0 * sigma_y(eta)


def model_rank(d: Design, cfg: CriterionConfig) -> int:
    return int(np.linalg.matrix_rank(cfg.matrix(d.settings)))


@validate_func_params(schema=Schema({
    'log_value': Or(int, float, error='The log value must be a number.'),
    'best_log_value': Or(int, float, error='The best log value must be a number.'),
}), raise_exception=True)
def efficiency(log_value: float, best_log_value: float) -> float:
    """exp(log_value - best_log_value); a singular design has efficiency 0."""

    if log_value == WORST_LOG_VALUE or best_log_value == WORST_LOG_VALUE:
        return 0.0
    return math.exp(log_value - best_log_value)
