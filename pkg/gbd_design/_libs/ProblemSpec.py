"""
The JSON problem specification read by every command.

Validation is total: the shape of each section is checked with `schema`, then the sections are checked
against each other, and every violation is reported at once with the JSON path of the offending value.
"""

import json
from itertools import combinations
from typing import Any, Dict, List, Optional, Tuple

from on_rails import Result, def_result
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Or, Schema
from schema import Optional as OptionalKey

from gbd_design._libs.ExitCodes import ExitCode
from gbd_design._libs.ResultDetails.FailResult import (FailResult,
                                                       SpecValidationFailure)
from gbd_design._libs.utility import try_validation
from gbd_design.analysis import EXHAUSTIVE_LIMIT, TauRule
from gbd_design.criterion import CriterionConfig, recommend_tau, sigma_y
from gbd_design.model import (Factor, ModelSpec, Term, parse_term,
                              second_order_terms, sort_terms)
from gbd_design.strata import (StratumStructure, VarianceRatios,
                               completely_randomized, from_unit_maps,
                               split_plot, staggered_level, strip_plot)

DEFAULT_T_TOTAL = 100_000
DEFAULT_AUTO_ETA = 10.0
DEFAULT_SENSITIVITY_ETA = [0.1, 1.0, 10.0]
DEFAULT_OUTPUT_DIRECTORY = "gbd-output"

MODEL_SHORTHANDS = ('first_order', 'squares', 'interactions', 'squares_and_interactions', 'full_second_order')
TERM_SHORTHANDS = ('none', 'first_order', 'main_effects', 'squares', 'interactions', 'squares_and_interactions',
                   'full_second_order')

_integer = And(int, lambda v: not isinstance(v, bool))
_positive_integer = And(_integer, lambda v: v >= 1)
_number = And(Or(int, float), lambda v: not isinstance(v, bool))
_positive_number = And(_number, lambda v: v > 0)

_TOP_LEVEL_KEYS = ('description', 'factors', 'structure', 'model', 'eta', 'tau', 'search', 'scenarios',
                   'sensitivity', 'curve', 'variances', 'outputs')

_FACTOR_SCHEMA = Schema({
    'name': And(str, lambda s: s.isidentifier(), error='name must be an identifier'),
    'stratum': And(_positive_integer, error='stratum must be a positive integer'),
    OptionalKey('levels'): And([_number], lambda v: len(v) >= 2, error='levels must list at least two numbers'),
})

_STRUCTURE_SCHEMAS = {
    'split_plot': Schema({'type': 'split_plot',
                          'whole_plots': And(_positive_integer, error='whole_plots must be a positive integer'),
                          'runs_per_plot': And(_positive_integer, error='runs_per_plot must be a positive integer')}),
    'strip_plot': Schema({'type': 'strip_plot',
                          'incidence': And([[Or(0, 1)]], len, error='incidence must be a 0/1 matrix (list of rows)')}),
    'staggered_level': Schema({'type': 'staggered_level',
                               'class1_plots': And(_integer, lambda v: v >= 2,
                                                   error='class1_plots must be an integer >= 2'),
                               'plot_size': And(_positive_integer, lambda v: v % 2 == 0,
                                                error='plot_size must be a positive even integer')}),
    'completely_randomized': Schema({'type': 'completely_randomized',
                                     'runs': And(_positive_integer, error='runs must be a positive integer')}),
    'explicit': Schema({'type': 'explicit',
                        'unit_of_run': And([[_positive_integer]], len,
                                           error='unit_of_run must list, per stratum, the unit of every run')}),
}

_SEARCH_SCHEMA = Schema({
    OptionalKey('t_total'): And(_positive_integer, error='t_total must be a positive integer'),
    OptionalKey('seed'): And(_integer, lambda v: 0 <= v < 2 ** 64, error='seed must be an unsigned 64-bit integer'),
    OptionalKey('workers'): And(_positive_integer, error='workers must be a positive integer'),
})

_CURVE_SCHEMA = Schema({
    OptionalKey('k_min'): And(_integer, lambda v: v >= 0, error='k_min must be a non-negative integer'),
    OptionalKey('k_max'): And(_integer, lambda v: v >= 0, error='k_max must be a non-negative integer'),
    OptionalKey('sample_limit'): And(_positive_integer, error='sample_limit must be a positive integer'),
    OptionalKey('seed'): And(_integer, lambda v: v >= 0, error='seed must be a non-negative integer'),
    OptionalKey('primary'): Or(str, [str], error='primary must be a shorthand or a list of terms'),
    OptionalKey('pool'): Or(str, [str], error='pool must be a shorthand or a list of terms'),
})

_SENSITIVITY_SCHEMA = Schema({
    OptionalKey('eta_values'): And([And([_positive_number], len)], len,
                                   error='eta_values must list, per non-run stratum, positive ratios to try'),
})

_VARIANCES_SCHEMA = Schema({
    OptionalKey('primary'): Or(str, [str], error='primary must be a shorthand or a list of terms'),
    OptionalKey('submodels'): And([[str]], error='submodels must be a list of term lists'),
})

_OUTPUTS_SCHEMA = Schema({
    OptionalKey('directory'): And(str, len, error='directory must be a non-empty string'),
})


class SearchSettings:
    def __init__(self, t_total: int, seed: Optional[int], workers: Optional[int]):
        self.t_total = t_total
        self.seed = seed
        self.workers = workers


class CurveSettings:
    def __init__(self, primary: List[Term], pool: List[Term], k_min: int, k_max: int, sample_limit: int,
                 seed: int):
        self.primary = primary
        self.pool = pool
        self.k_min = k_min
        self.k_max = k_max
        self.sample_limit = sample_limit
        self.seed = seed


class ProblemSpec:
    """
    A validated problem: factors, structure, model, variance ratios, tau and the settings of each command.
    `config` is the criterion configuration of the main model, ready to use.
    """

    def __init__(self, source: Optional[str], factors: List[Factor], structure: StratumStructure,
                 model: ModelSpec, eta: VarianceRatios, tau: Optional[float], tau_rule: TauRule,
                 search: SearchSettings, scenarios: List[Tuple[str, ModelSpec]],
                 sensitivity_eta_values: List[List[float]], curve: CurveSettings,
                 variance_primary: List[Term], variance_submodels: List[Tuple[Term, ...]],
                 output_directory: str, config: CriterionConfig):
        self.source = source
        self.factors = factors
        self.structure = structure
        self.model = model
        self.eta = eta
        self.tau = tau
        self.tau_rule = tau_rule
        self.search = search
        self.scenarios = scenarios
        self.sensitivity_eta_values = sensitivity_eta_values
        self.curve = curve
        self.variance_primary = variance_primary
        self.variance_submodels = variance_submodels
        self.output_directory = output_directory
        self.config = config

    def __repr__(self):
        return f"ProblemSpec(source={self.source!r}, factors={[f.name for f in self.factors]}, " \
               f"structure={self.structure}, model={self.model})"


def _path(*parts) -> str:
    text = "$"
    for part in parts:
        text += f"[{part}]" if isinstance(part, int) else f".{part}"
    return text


def _check_shape(schema: Schema, value: Any, path: str, issues: List[str]) -> bool:
    result = try_validation(lambda: schema.validate(value))
    if not result.success:
        message = result.detail.message if result.detail.message else str(result.detail)
        issues.append(f"{path}: {message.strip()}")
    return result.success


def _parse_factors(value: Any, issues: List[str]) -> Optional[List[Factor]]:
    if not isinstance(value, list) or len(value) == 0:
        issues.append(f"{_path('factors')}: must be a non-empty list of factors.")
        return None
    factors = []
    for index, item in enumerate(value):
        path = _path('factors', index)
        if not _check_shape(_FACTOR_SCHEMA, item, path, issues):
            continue
        try:
            factors.append(Factor(item['name'], item['stratum'], list(item.get('levels', [-1, 1]))))
        except Exception as error:  # pylint: disable=broad-except
            issues.append(f"{path}: {error}")
    names = [factor.name for factor in factors]
    repeated = sorted({name for name in names if names.count(name) > 1})
    if repeated:
        issues.append(f"{_path('factors')}: factor names must be unique, repeated: {repeated}.")
    return factors if len(factors) == len(value) and not repeated else None


def _parse_structure(value: Any, issues: List[str]) -> Optional[StratumStructure]:
    path = _path('structure')
    if not isinstance(value, dict) or value.get('type') not in _STRUCTURE_SCHEMAS:
        issues.append(f"{path}.type: must be one of {', '.join(_STRUCTURE_SCHEMAS)}.")
        return None
    kind = value['type']
    if not _check_shape(_STRUCTURE_SCHEMAS[kind], value, path, issues):
        return None

    if kind == 'split_plot':
        result = split_plot(value['whole_plots'], value['runs_per_plot'])
    elif kind == 'strip_plot':
        incidence = value['incidence']
        if len({len(row) for row in incidence}) != 1:
            issues.append(f"{path}.incidence: every row must have the same number of columns.")
            return None
        result = strip_plot(len(incidence), len(incidence[0]), incidence)
    elif kind == 'staggered_level':
        result = staggered_level(value['class1_plots'], value['plot_size'])
    elif kind == 'completely_randomized':
        result = completely_randomized(value['runs'])
    else:
        result = from_unit_maps(value['unit_of_run'])

    if not result.success:
        issues.append(f"{path}: {result.detail.message}")
        return None
    return result.value


def _parse_terms(value: Any, factors: List[Factor], path: str, issues: List[str],
                 include_intercept: bool = False) -> Optional[List[Term]]:
    if isinstance(value, str):
        if value not in TERM_SHORTHANDS:
            issues.append(f"{path}: unknown shorthand '{value}', expected one of {', '.join(TERM_SHORTHANDS)}.")
            return None
        if value == 'none':
            return []
        kind = 'main_effects' if value == 'first_order' else value
        terms = second_order_terms(len(factors), kind)
        if not include_intercept:
            terms = [term for term in terms if not term.is_intercept]
        return terms
    if not isinstance(value, list) or not all(isinstance(item, str) for item in value):
        issues.append(f"{path}: must be a shorthand or a list of terms such as \"1\", \"A\", \"A*B\", \"A^2\".")
        return None
    terms = []
    for index, text in enumerate(value):
        try:
            terms.append(parse_term(text, factors))
        except ValueError as error:
            issues.append(f"{path}[{index}]: {error}")
    return terms if len(terms) == len(value) else None


def _parse_model(value: Any, factors: List[Factor], path: str, issues: List[str]) -> Optional[ModelSpec]:
    if isinstance(value, str):
        if value not in MODEL_SHORTHANDS:
            issues.append(f"{path}: unknown model shorthand '{value}', expected one of {', '.join(MODEL_SHORTHANDS)}.")
            return None
        if value == 'full_second_order':
            primary, potential = second_order_terms(len(factors), 'full_second_order'), []
        else:
            primary = second_order_terms(len(factors), 'main_effects')
            potential = [] if value == 'first_order' else second_order_terms(len(factors), value)
    elif isinstance(value, dict) and 'primary' in value and set(value) <= {'primary', 'potential'}:
        primary = _parse_terms(value['primary'], factors, f"{path}.primary", issues, include_intercept=True)
        potential = _parse_terms(value.get('potential', 'none'), factors, f"{path}.potential", issues)
        if primary is None or potential is None:
            return None
    else:
        issues.append(f"{path}: must be a shorthand ({', '.join(MODEL_SHORTHANDS)}) or an object with "
                      f"'primary' and optional 'potential' term lists.")
        return None
    try:
        return ModelSpec(factors, sort_terms(primary), sort_terms(potential))
    except ValueError as error:
        issues += [f"{path}: {line}" for line in str(error).splitlines()]
        return None


def _parse_eta(value: Any, g: int, issues: List[str]) -> Optional[VarianceRatios]:
    path = _path('eta')
    if value == 'auto':
        return VarianceRatios([DEFAULT_AUTO_ETA] * (g - 1) + [1.0])
    if not isinstance(value, list) or not all(Schema(_number).is_valid(item) for item in value):
        issues.append(f"{path}: must be \"auto\" or a list of {g} positive numbers.")
        return None
    if len(value) != g:
        issues.append(f"{path}: the structure has {g} strata but {len(value)} ratios are given.")
        return None
    try:
        return VarianceRatios(value)
    except ValueError as error:
        issues.append(f"{path}: {error}")
        return None


def _parse_tau(value: Any, issues: List[str]) -> Optional[TauRule]:
    path = _path('tau')
    if value == 'auto':
        return TauRule(sigma_y_multiple=3.0)
    if Schema(_positive_number).is_valid(value):
        return TauRule(fixed=float(value))
    if isinstance(value, dict) and set(value) == {'sigma_y_multiple'} and \
            Schema(_positive_number).is_valid(value['sigma_y_multiple']):
        return TauRule(sigma_y_multiple=float(value['sigma_y_multiple']))
    issues.append(f"{path}: must be a positive number, \"auto\" or {{\"sigma_y_multiple\": <positive number>}}.")
    return None


def _section(document: Dict, key: str, schema: Schema, issues: List[str]) -> Optional[Dict]:
    value = document.get(key, {})
    if not _check_shape(schema, value, _path(key), issues):
        return None
    return value


@def_result()
@validate_func_params(schema=Schema({
    'document': And(lambda v: v is not None, error='The document is required.'),
    'source': Or(None, str, error='The source must be None or a string.'),
}))
def parse_problem_spec(document: Any, source: Optional[str] = None) -> Result[ProblemSpec]:
    """
    Validates a decoded JSON document and builds the `ProblemSpec`.

    :return: the spec, or a `SpecValidationFailure` listing every problem found (JSON path and message).
    """

    if not isinstance(document, dict):
        return Result.fail(SpecValidationFailure(["$: the problem spec must be a JSON object."], source=source))

    issues: List[str] = []
    issues += [f"{_path(key)}: unknown field." for key in document if key not in _TOP_LEVEL_KEYS]
    issues += [f"{_path(key)}: required field is missing." for key in ('factors', 'structure', 'model')
               if key not in document]
    if 'description' in document and not isinstance(document['description'], str):
        issues.append(f"{_path('description')}: must be a string.")

    factors = _parse_factors(document['factors'], issues) if 'factors' in document else None
    structure = _parse_structure(document['structure'], issues) if 'structure' in document else None
    search = _section(document, 'search', _SEARCH_SCHEMA, issues)
    curve = _section(document, 'curve', _CURVE_SCHEMA, issues)
    sensitivity = _section(document, 'sensitivity', _SENSITIVITY_SCHEMA, issues)
    variances = _section(document, 'variances', _VARIANCES_SCHEMA, issues)
    outputs = _section(document, 'outputs', _OUTPUTS_SCHEMA, issues)
    tau_rule = _parse_tau(document.get('tau', 'auto'), issues)

    if factors is None or structure is None:
        return Result.fail(SpecValidationFailure(issues, source=source))

    for index, factor in enumerate(factors):
        if factor.stratum > structure.g:
            issues.append(f"{_path('factors', index, 'stratum')}: factor '{factor.name}' is in stratum "
                          f"{factor.stratum} but the structure has {structure.g} strata.")

    eta = _parse_eta(document.get('eta', 'auto'), structure.g, issues)
    model = _parse_model(document['model'], factors, _path('model'), issues) if 'model' in document else None

    scenarios: List[Tuple[str, ModelSpec]] = []
    raw_scenarios = document.get('scenarios')
    if raw_scenarios is None:
        if model is not None:
            scenarios.append(("model", model))
    elif not isinstance(raw_scenarios, list) or len(raw_scenarios) == 0:
        issues.append(f"{_path('scenarios')}: must be a non-empty list of {{\"label\", \"model\"}} objects.")
    else:
        for index, item in enumerate(raw_scenarios):
            path = _path('scenarios', index)
            if not isinstance(item, dict) or set(item) != {'label', 'model'} or not isinstance(item['label'], str):
                issues.append(f"{path}: must be an object with a string 'label' and a 'model'.")
                continue
            parsed = _parse_model(item['model'], factors, f"{path}.model", issues)
            if parsed is not None:
                scenarios.append((item['label'], parsed))
        labels = [label for label, _ in scenarios]
        if len(set(labels)) != len(labels):
            issues.append(f"{_path('scenarios')}: scenario labels must be unique.")

    eta_values = [list(DEFAULT_SENSITIVITY_ETA) for _ in range(structure.g - 1)]
    if sensitivity is not None and 'eta_values' in sensitivity:
        eta_values = [[float(v) for v in values] for values in sensitivity['eta_values']]
        if len(eta_values) != structure.g - 1:
            issues.append(f"{_path('sensitivity', 'eta_values')}: needs one list per non-run stratum "
                          f"({structure.g - 1}), got {len(eta_values)}.")

    curve_settings = None
    if curve is not None:
        curve_primary = _parse_terms(curve.get('primary', 'first_order'), factors, _path('curve', 'primary'),
                                     issues, include_intercept=True)
        pool = _parse_terms(curve.get('pool', 'interactions'), factors, _path('curve', 'pool'), issues)
        if curve_primary is not None and pool is not None:
            k_min = curve.get('k_min', 0)
            k_max = curve.get('k_max', len(pool))
            if not k_min <= k_max <= len(pool):
                issues.append(f"{_path('curve')}: need 0 <= k_min <= k_max <= {len(pool)} (the pool size).")
            if set(curve_primary) & set(pool):
                issues.append(f"{_path('curve')}: the pool may not repeat primary terms.")
            curve_settings = CurveSettings(sort_terms(curve_primary), pool, k_min, k_max,
                                           curve.get('sample_limit', EXHAUSTIVE_LIMIT), curve.get('seed', 0))

    variance_primary: List[Term] = []
    variance_submodels: List[Tuple[Term, ...]] = []
    if variances is not None and model is not None:
        parsed_primary = _parse_terms(variances.get('primary', [t.label(factors) for t in model.primary]),
                                      factors, _path('variances', 'primary'), issues, include_intercept=True)
        variance_primary = sort_terms(parsed_primary or [])
        if 'submodels' in variances:
            for index, terms in enumerate(variances['submodels']):
                parsed = _parse_terms(terms, factors, _path('variances', 'submodels', index), issues)
                if parsed is not None:
                    if set(parsed) & set(variance_primary):
                        issues.append(f"{_path('variances', 'submodels', index)}: repeats a primary term.")
                    variance_submodels.append(tuple(parsed))
        else:
            variance_submodels = [subset for size in range(1, model.q + 1)
                                  for subset in combinations(model.potential, size)]

    config = None
    if model is not None and eta is not None and tau_rule is not None and not issues:
        created = CriterionConfig.create(model, structure, eta, tau_rule.resolve(eta) if model.q else None)
        if created.success:
            config = created.value
        else:
            issues.append(f"{_path('model')}: {created.detail.message}")
        for index, (label, scenario) in enumerate(scenarios if raw_scenarios is not None else []):
            checked = CriterionConfig.create(scenario, structure, eta,
                                             tau_rule.resolve(eta) if scenario.q else None)
            if not checked.success:
                issues.append(f"{_path('scenarios', index, 'model')}: {checked.detail.message}")

    if issues:
        return Result.fail(SpecValidationFailure(issues, source=source))

    search = search or {}
    return Result.ok(ProblemSpec(
        source=source, factors=factors, structure=structure, model=model, eta=eta,
        tau=tau_rule.resolve(eta) if model.q else None, tau_rule=tau_rule,
        search=SearchSettings(search.get('t_total', DEFAULT_T_TOTAL), search.get('seed'), search.get('workers')),
        scenarios=scenarios, sensitivity_eta_values=eta_values,
        curve=curve_settings or _default_curve(factors),
        variance_primary=variance_primary or list(model.primary),
        variance_submodels=variance_submodels or [subset for size in range(1, model.q + 1)
                                                  for subset in combinations(model.potential, size)],
        output_directory=(outputs or {}).get('directory', DEFAULT_OUTPUT_DIRECTORY),
        config=config))


def _default_curve(factors: List[Factor]) -> CurveSettings:
    pool = second_order_terms(len(factors), 'interactions')
    return CurveSettings(second_order_terms(len(factors), 'main_effects'), pool, 0, len(pool),
                         EXHAUSTIVE_LIMIT, 0)


@def_result()
@validate_func_params(schema=Schema({
    'path': And(str, len, error='The spec path is required and must be a non-empty string.'),
}))
def load_problem_spec(path: str) -> Result[ProblemSpec]:
    """
    Reads and validates a problem spec file. JSON syntax errors are reported with their line and column.
    """

    try:
        with open(path) as file:
            text = file.read()
    except OSError as error:
        return Result.fail(FailResult(code=ExitCode.INPUT_ERROR, message=f"Can not read '{path}': {error}"))

    try:
        document = json.loads(text)
    except json.JSONDecodeError as error:
        return Result.fail(SpecValidationFailure(
            [f"line {error.lineno}, column {error.colno}: {error.msg}."], source=path))
    return parse_problem_spec(document, path)


def describe_tau(spec: ProblemSpec) -> Dict[str, Any]:
    """How tau was chosen, for the JSON records."""

    if spec.model.q == 0:
        return {"tau": None}
    rule = spec.tau_rule
    return {"tau": spec.tau, "tau_over_sigma_y": spec.tau / sigma_y(spec.eta),
            "tau_rule": "fixed" if rule.fixed is not None else f"{rule.sigma_y_multiple:g} * sigma_y",
            "recommended_tau": recommend_tau(spec.eta)}
