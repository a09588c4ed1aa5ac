"""
Factors, model terms and model matrices.

Factors are always coded on [-1, 1]. A term is a product of factor powers; the empty product is the
intercept. Term lists are kept in the canonical order: intercept, main effects, two-factor interactions
(lexicographic), squares.
"""

from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from on_rails import Result, ValidationError, def_result
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Schema

from gbd_design.strata import StratumStructure

MAX_EXPONENT = 2
LEVEL_TOLERANCE = 1e-9

TERM_KINDS = ('main_effects', 'squares', 'interactions', 'squares_and_interactions', 'full_second_order')


class Factor:
    """
    A quantitative factor set at a finite list of coded levels and changed once per unit of its stratum.
    """

    name: str
    stratum: int
    levels: Tuple[float, ...]

    @validate_func_params(schema=Schema({
        'name': And(str, lambda s: s.isidentifier(), error='The factor name must be an identifier.'),
        'stratum': And(int, lambda v: v >= 1, error='The stratum must be a positive integer.'),
        'levels': And([And(lambda v: isinstance(v, (int, float)) and not isinstance(v, bool))],
                      lambda v: len(v) >= 2, error='The levels must be a list of at least two numbers.'),
    }), raise_exception=True)
    def __init__(self, name: str, stratum: int, levels: List[float]):
        values = tuple(float(level) for level in levels)
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError(f"The levels of factor '{name}' must be strictly increasing.")
        if abs(values[0] + 1) > LEVEL_TOLERANCE or abs(values[-1] - 1) > LEVEL_TOLERANCE:
            raise ValueError(f"The levels of factor '{name}' must run from -1 to 1 (coded scale).")
        self.name = name
        self.stratum = stratum
        self.levels = values

    def level_index(self, value: float) -> Optional[int]:
        for index, level in enumerate(self.levels):
            if abs(level - value) <= LEVEL_TOLERANCE:
                return index
        return None

    def __eq__(self, other):
        return isinstance(other, Factor) and \
            (self.name, self.stratum, self.levels) == (other.name, other.stratum, other.levels)

    def __hash__(self):
        return hash((self.name, self.stratum, self.levels))

    def __repr__(self):
        return f"Factor({self.name!r}, stratum={self.stratum}, levels={list(self.levels)})"


class Term:
    """
    A product of factor powers, stored as sorted (factor index, exponent) pairs. No pairs is the intercept.
    """

    def __init__(self, powers: Iterable[Tuple[int, int]] = ()):
        merged: Dict[int, int] = {}
        for factor, exponent in powers:
            if factor in merged:
                raise ValueError(f"Factor index {factor} appears twice in one term.")
            if not isinstance(exponent, int) or exponent < 1:
                raise ValueError("Term exponents must be positive integers.")
            if exponent > MAX_EXPONENT:
                raise ValueError(f"Term exponents above {MAX_EXPONENT} are not supported.")
            if factor < 0:
                raise ValueError("Factor indices must be non-negative.")
            merged[factor] = exponent
        self.powers: Tuple[Tuple[int, int], ...] = tuple(sorted(merged.items()))

    @staticmethod
    def intercept() -> 'Term':
        return Term()

    @staticmethod
    def main(factor: int) -> 'Term':
        return Term([(factor, 1)])

    @staticmethod
    def interaction(first: int, second: int) -> 'Term':
        return Term([(first, 1), (second, 1)])

    @staticmethod
    def square(factor: int) -> 'Term':
        return Term([(factor, 2)])

    @property
    def is_intercept(self) -> bool:
        return len(self.powers) == 0

    @property
    def degree(self) -> int:
        return sum(exponent for _, exponent in self.powers)

    @property
    def factors(self) -> Tuple[int, ...]:
        return tuple(factor for factor, _ in self.powers)

    def sort_key(self):
        """Canonical order: intercept, main effects, interactions, squares, then anything else."""

        if self.is_intercept:
            kind = 0
        elif self.degree == 1:
            kind = 1
        elif len(self.powers) == 2 and self.degree == 2:
            kind = 2
        elif len(self.powers) == 1 and self.degree == 2:
            kind = 3
        else:
            kind = 4
        return kind, self.powers

    def label(self, factors: Sequence[Factor]) -> str:
        if self.is_intercept:
            return "Intercept"
        parts = []
        for factor, exponent in self.powers:
            name = factors[factor].name if factor < len(factors) else f"x{factor + 1}"
            parts.append(name if exponent == 1 else f"{name}^{exponent}")
        return "*".join(parts)

    def __eq__(self, other):
        return isinstance(other, Term) and self.powers == other.powers

    def __hash__(self):
        return hash(self.powers)

    def __repr__(self):
        return f"Term({list(self.powers)})"


class ModelSpec:
    """
    Primary terms (diffuse prior) and potential terms (prior variance tau^2) over declared factors.
    """

    def __init__(self, factors: Sequence[Factor], primary: Sequence[Term], potential: Sequence[Term] = ()):
        self.factors: Tuple[Factor, ...] = tuple(factors)
        self.primary: Tuple[Term, ...] = tuple(primary)
        self.potential: Tuple[Term, ...] = tuple(potential)

        issues = model_issues(self.factors, self.primary, self.potential)
        if issues:
            raise ValueError("\n".join(issues))

    @property
    def p(self) -> int:
        return len(self.primary)

    @property
    def q(self) -> int:
        return len(self.potential)

    @property
    def r(self) -> int:
        return self.p + self.q

    @property
    def m(self) -> int:
        return len(self.factors)

    def terms(self) -> Tuple[Term, ...]:
        return self.primary + self.potential

    def labels(self) -> List[str]:
        return [term.label(self.factors) for term in self.terms()]

    def signature(self) -> Tuple:
        return tuple(f.name for f in self.factors), \
            tuple(t.powers for t in self.primary), tuple(t.powers for t in self.potential)

    def with_potential(self, potential: Sequence[Term]) -> 'ModelSpec':
        return ModelSpec(self.factors, self.primary, potential)

    def __repr__(self):
        return f"ModelSpec(p={self.p}, q={self.q}, terms={self.labels()})"


def model_issues(factors: Sequence[Factor], primary: Sequence[Term], potential: Sequence[Term]) -> List[str]:
    issues = []
    names = [factor.name for factor in factors]
    if len(set(names)) != len(names):
        issues.append("Factor names must be unique.")
    if Term.intercept() not in primary:
        issues.append("The primary terms must contain the intercept.")
    if len(set(primary)) != len(primary) or len(set(potential)) != len(potential):
        issues.append("A term is listed twice.")
    shared = set(primary) & set(potential)
    if shared:
        issues.append("Terms cannot be both primary and potential: "
                      + ", ".join(term.label(factors) for term in shared))
    for term in list(primary) + list(potential):
        unknown = [index for index in term.factors if index >= len(factors)]
        if unknown:
            issues.append(f"Term {term.label(factors)} uses unknown factor index {unknown[0]}.")
    return issues


class Design:
    """
    An n x m matrix of factor settings, runs in structure order. Immutable.
    """

    def __init__(self, settings):
        values = np.array(settings, dtype=float)
        if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] == 0:
            raise ValueError("A design must be a non-empty n x m matrix.")
        if not np.all(np.isfinite(values)):
            raise ValueError("A design cannot contain NaN or infinite settings.")
        values.setflags(write=False)
        self.settings = values

    @property
    def n(self) -> int:
        return self.settings.shape[0]

    @property
    def m(self) -> int:
        return self.settings.shape[1]

    def permuted(self, order: Sequence[int]) -> 'Design':
        """The design whose i-th run is run `order[i]` of this one."""

        return Design(self.settings[np.asarray(order)])

    def flat_key(self) -> Tuple[float, ...]:
        return tuple(self.settings.ravel().tolist())

    def __eq__(self, other):
        return isinstance(other, Design) and self.settings.shape == other.settings.shape \
            and bool(np.all(self.settings == other.settings))

    def __hash__(self):
        return hash(self.flat_key())

    def __repr__(self):
        return f"Design(n={self.n}, m={self.m})"


def check_design(d: Design, factors: Sequence[Factor], structure: StratumStructure) -> List[str]:
    """
    Lists every way `d` breaks the declared factors or the structure: shape, undeclared levels, and factors
    that change within a unit of their stratum. An empty list means the design is valid.
    """

    issues = []
    if d.m != len(factors):
        return [f"The design has {d.m} columns but {len(factors)} factors are declared."]
    if d.n != structure.n:
        return [f"The design has {d.n} runs but the structure has {structure.n}."]

    for j, factor in enumerate(factors):
        column = d.settings[:, j]
        for run, value in enumerate(column):
            if factor.level_index(value) is None:
                issues.append(f"Run {run + 1}: {value:g} is not a level of factor '{factor.name}'.")
        if factor.stratum > structure.g:
            issues.append(f"Factor '{factor.name}' is in stratum {factor.stratum} but the structure has "
                          f"{structure.g} strata.")
            continue
        for unit, runs in enumerate(structure.units(factor.stratum), start=1):
            values = column[runs]
            if np.any(values != values[0]):
                issues.append(f"Factor '{factor.name}' changes within unit {unit} of stratum {factor.stratum} "
                              f"(runs {', '.join(str(run + 1) for run in runs)}).")
    return issues


@def_result()
def validate_design(d: Design, factors: Sequence[Factor], structure: StratumStructure) -> Result[Design]:
    issues = check_design(d, factors, structure)
    if issues:
        return Result.fail(ValidationError(message="\n".join(issues)))
    return Result.ok(d)


def exponent_matrix(terms: Sequence[Term], m: int) -> np.ndarray:
    exponents = np.zeros((len(terms), m), dtype=float)
    for row, term in enumerate(terms):
        for factor, exponent in term.powers:
            exponents[row, factor] = exponent
    return exponents


def term_columns(settings: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    """Evaluates the terms encoded by `exponents` (t x m) on each row of `settings` (n x m)."""

    if exponents.shape[0] == 0:
        return np.zeros((settings.shape[0], 0))
    return np.prod(settings[:, None, :] ** exponents[None, :, :], axis=2)


@def_result()
def model_matrix(d: Design, terms: Sequence[Term]) -> Result[np.ndarray]:
    """
    Builds the n x len(terms) model matrix of design `d`: entry (i, t) is the product over the powers of
    term t of the settings of run i. The intercept column is all ones.
    """

    for term in terms:
        unknown = [index for index in term.factors if index >= d.m]
        if unknown:
            return Result.fail(ValidationError(
                message=f"Unknown factor index {unknown[0]}: the design has {d.m} factors."))
    return Result.ok(term_columns(d.settings, exponent_matrix(terms, d.m)))


def build_k(p: int, q: int) -> np.ndarray:
    """The (p+q) x (p+q) prior-structure matrix: zero block for primary terms, identity for potential."""

    k = np.zeros((p + q, p + q))
    k[p:, p:] = np.eye(q)
    return k


@validate_func_params(schema=Schema({
    'factors': And(lambda v: isinstance(v, int) or isinstance(v, (list, tuple)),
                   error='The factors must be a count or a list of factors.'),
    'kind': And(str, lambda s: s in TERM_KINDS, error=f"The kind must be one of {', '.join(TERM_KINDS)}."),
}), raise_exception=True)
def second_order_terms(factors, kind: str) -> List[Term]:
    """
    Canonical term lists over `factors` (a count or a sequence of factors):
    main_effects (intercept first), squares, interactions, squares_and_interactions, full_second_order.
    """

    m = factors if isinstance(factors, int) else len(factors)
    mains = [Term.main(j) for j in range(m)]
    interactions = [Term.interaction(i, j) for i, j in combinations(range(m), 2)]
    squares = [Term.square(j) for j in range(m)]

    if kind == 'main_effects':
        return [Term.intercept()] + mains
    if kind == 'squares':
        return squares
    if kind == 'interactions':
        return interactions
    if kind == 'squares_and_interactions':
        return interactions + squares
    return [Term.intercept()] + mains + interactions + squares


def parse_term(text: str, factors: Sequence[Factor]) -> Term:
    """
    Parses "Intercept" / "1", "A", "A*B", "A^2" or "A*A" against the factor names.
    """

    cleaned = text.replace(" ", "")
    if cleaned.lower() in ('1', 'intercept'):
        return Term.intercept()
    index_of = {factor.name: index for index, factor in enumerate(factors)}
    powers: Dict[int, int] = {}
    for token in cleaned.split("*"):
        name, _, power = token.partition("^")
        if name not in index_of:
            raise ValueError(f"Unknown factor '{name}' in term '{text}'.")
        if power and not power.isdigit():
            raise ValueError(f"Invalid exponent in term '{text}'.")
        powers[index_of[name]] = powers.get(index_of[name], 0) + (int(power) if power else 1)
    return Term(powers.items())


def sort_terms(terms: Iterable[Term]) -> List[Term]:
    return sorted(terms, key=lambda term: term.sort_key())
