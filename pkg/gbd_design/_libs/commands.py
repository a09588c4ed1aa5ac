import logging
import math
import os
import time
from typing import Dict, List, Optional, Tuple

import numpy as np
from on_rails import Result, ValidationError, def_result
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Or, Schema

from gbd_design._libs.design_io import read_valid_designs, write_design
from gbd_design._libs.ExitCodes import ExitCode
from gbd_design._libs.ProblemSpec import (ProblemSpec, describe_tau,
                                          load_problem_spec)
from gbd_design._libs.ProgramEnvironments import ProgramEnvironments
from gbd_design._libs.ResultDetails.FailResult import FailResult
from gbd_design._libs.utility import write_csv, write_json
from gbd_design.analysis import (EfficiencyTable, efficiency_table,
                                 levels_used, overall_variance_curve,
                                 sensitivity_sweep, submodel_variances)
from gbd_design.criterion import (criterion_name, criterion_value, d_value,
                                  model_rank, sigma_y)
from gbd_design.numeric import WORST_LOG_VALUE
from gbd_design.search import MAX_SEED, SearchConfig, optimize

PROGRESS_STEPS = 10

_COMMON_PARAMS = {
    'logger': And(logging.Logger, error='logger is required and must be a logging.Logger object'),
    'spec_path': And(str, lambda s: len(s.strip()) > 0, error='The spec path is required and must be a non-empty '
                                                              'string'),
    'out': Or(None, And(str, lambda s: len(s.strip()) > 0), error='out must be None or a non-empty string'),
}
_DESIGN_PARAMS = dict(_COMMON_PARAMS, design_paths=And([str], len, error='design_paths must be a non-empty list '
                                                                        'of strings'))
_FORMAT_PARAM = {'table_format': Or('csv', 'json', error="table_format must be 'csv' or 'json'")}


def _handled(result: Result) -> Result:
    """Argument problems reported by the library become input errors of the command."""

    if not result.success and result.detail is not None and result.detail.is_instance_of(ValidationError):
        return Result.fail(FailResult(code=ExitCode.INPUT_ERROR, message=result.detail.message))
    return result


def _output_directory(spec: ProblemSpec, out: Optional[str]) -> str:
    return out if out else spec.output_directory


def _exp(log_value: float) -> float:
    return 0.0 if log_value == WORST_LOG_VALUE else math.exp(log_value)


@def_result()
def _load_with_designs(spec_path: str, design_paths: List[str]) -> Result[Tuple[ProblemSpec, list]]:
    return load_problem_spec(spec_path) \
        .on_success(lambda spec: read_valid_designs(design_paths, spec.factors, spec.structure)
                    .on_success(lambda designs: (spec, designs)))


def _resolve_seed(flag: Optional[int], spec: ProblemSpec) -> int:
    if flag is not None:
        return flag
    if spec.search.seed is not None:
        return spec.search.seed
    return int(np.random.SeedSequence().entropy % (MAX_SEED + 1))


def _progress_logger(logger: logging.Logger, t_total: int):
    step = max(1, t_total // PROGRESS_STEPS)
    next_report = [step]

    def report(completed: int, best: float):
        if completed >= next_report[0] or completed == t_total:
            logger.info(f"{completed}/{t_total} restarts, best log_d = {best:.12g}")
            next_report[0] = (completed // step + 1) * step

    return report


@def_result()
@validate_func_params(schema=Schema(dict(_COMMON_PARAMS, **{
    'environments': And(ProgramEnvironments,
                        error='environments is required and must be an instance of `ProgramEnvironments`'),
    'seed': Or(None, And(int, lambda v: 0 <= v <= MAX_SEED), error='seed must be None or an unsigned 64-bit '
                                                                   'integer'),
    'workers': Or(None, And(int, lambda v: v >= 1), error='workers must be None or a positive integer'),
    't_total': Or(None, And(int, lambda v: v >= 1), error='t_total must be None or a positive integer'),
})))
def command_optimize(logger: logging.Logger, spec_path: str, environments: ProgramEnvironments,
                     out: Optional[str] = None, seed: Optional[int] = None, workers: Optional[int] = None,
                     t_total: Optional[int] = None) -> Result:
    """
    Searches for the optimal design of the spec and writes `design.csv` and `result.json` to the output
    directory. Flags take precedence over the spec, the spec over the environment.

    :param environments: supplies the default worker count.
    :type environments: ProgramEnvironments

    :return: `Result.ok()`, a `SpecValidationFailure` (exit 2) or a `FailResult` with exit code 3 when every
    design found is singular.
    """

    loaded = load_problem_spec(spec_path)
    if not loaded.success:
        return loaded
    spec: ProblemSpec = loaded.value

    settings = SearchConfig(t_total=t_total or spec.search.t_total, seed=_resolve_seed(seed, spec),
                            workers=workers or spec.search.workers or environments.default_workers)
    cfg = spec.config
    logger.info(f"Searching {criterion_name(cfg)}-optimal design: n={spec.structure.n}, p={cfg.model.p}, "
                f"q={cfg.model.q}, {settings}")

    started = time.perf_counter()
    searched = optimize(cfg, settings, _progress_logger(logger, settings.t_total))
    elapsed = time.perf_counter() - started
    if not searched.success:
        return _handled(searched)
    found = searched.value

    log_d = criterion_value(found.design, cfg)
    directory = _output_directory(spec, out)
    record = {
        "spec": spec_path,
        "criterion": criterion_name(cfg),
        "log_d": log_d,
        "d": _exp(log_d),
        "r": cfg.r,
        "p": cfg.model.p,
        "q": cfg.model.q,
        "primary": [term.label(spec.factors) for term in cfg.model.primary],
        "potential": [term.label(spec.factors) for term in cfg.model.potential],
        **describe_tau(spec),
        "eta": list(spec.eta.eta),
        "seed": found.seed,
        "t_total": settings.t_total,
        "workers": settings.workers,
        "restarts_completed": found.restarts_completed,
        "elapsed_seconds": elapsed,
        "levels_used": levels_used(found.design, spec.factors),
        "improving_passes_histogram": found.improving_passes_histogram,
    }
    return write_design(os.path.join(directory, "design.csv"), found.design, spec.factors) \
        .on_success(lambda: write_json(os.path.join(directory, "result.json"), record)) \
        .on_success(lambda: logger.info(f"{record['criterion']} log_d = {log_d:.12g} (d = {record['d']:.12g}) "
                                        f"after {found.restarts_completed} restarts in {elapsed:.3g} s; "
                                        f"written to {directory}"))


@def_result()
@validate_func_params(schema=Schema(_DESIGN_PARAMS))
def command_evaluate(logger: logging.Logger, spec_path: str, design_paths: List[str],
                     out: Optional[str] = None) -> Result:
    """
    Criterion value, primary-only D value, model rank and levels of each design; written to `evaluation.json`.
    A design that breaks the structure (a factor varying within one of its units) is an input error.
    """

    loaded = _load_with_designs(spec_path, design_paths)
    if not loaded.success:
        return loaded
    spec, designs = loaded.value
    cfg = spec.config

    records = []
    for (label, d), path in zip(designs, design_paths):
        log_d = criterion_value(d, cfg)
        primary_log_d = d_value(d, cfg)
        rank = model_rank(d, cfg)
        records.append({
            "design": label,
            "path": path,
            "valid": True,
            "log_d": log_d,
            "d": _exp(log_d),
            "primary_log_d": primary_log_d,
            "primary_d": _exp(primary_log_d),
            "rank": rank,
            "full_model_estimable": rank == cfg.r,
            "levels_used": levels_used(d, spec.factors),
        })
        logger.info(f"{label}: {criterion_name(cfg)} log_d = {log_d:.12g}, d = {_exp(log_d):.12g}, "
                    f"rank {rank} of {cfg.r}")

    document = {"spec": spec_path, "criterion": criterion_name(cfg), **describe_tau(spec),
                "eta": list(spec.eta.eta), "designs": records}
    return write_json(os.path.join(_output_directory(spec, out), "evaluation.json"), document) \
        .on_success(lambda path: logger.debug(f"Written {path}"))


def _table_rows(table: EfficiencyTable) -> List[list]:
    return [[scenario, table.criteria[i]] + table.values[i].tolist() + [table.best(i)]
            for i, scenario in enumerate(table.scenarios)]


def _table_document(table: EfficiencyTable) -> List[Dict]:
    return [{"scenario": scenario, "criterion": table.criteria[i],
             "efficiency": dict(zip(table.designs, table.values[i].tolist())),
             "log_value": dict(zip(table.designs, table.log_values[i].tolist())),
             "best": table.best(i)}
            for i, scenario in enumerate(table.scenarios)]


@def_result()
@validate_func_params(schema=Schema(dict(_DESIGN_PARAMS, **_FORMAT_PARAM)))
def command_compare(logger: logging.Logger, spec_path: str, design_paths: List[str], out: Optional[str] = None,
                    table_format: str = 'csv') -> Result:
    """
    Efficiency of every design relative to the best one under each scenario of the spec
    (`efficiency.csv` or `efficiency.json`).
    """

    loaded = _load_with_designs(spec_path, design_paths)
    if not loaded.success:
        return loaded
    spec, designs = loaded.value

    tau = spec.tau_rule.resolve(spec.eta)
    computed = _handled(efficiency_table(designs, spec.scenarios, spec.structure, spec.eta, tau))
    if not computed.success:
        return computed
    table: EfficiencyTable = computed.value
    for i, scenario in enumerate(table.scenarios):
        logger.info(f"{scenario}: " + ", ".join(f"{label} {value:.3f}" for label, value
                                                in zip(table.designs, table.values[i])))

    directory = _output_directory(spec, out)
    if table_format == 'json':
        return write_json(os.path.join(directory, "efficiency.json"),
                          {"eta": list(spec.eta.eta), "tau": tau, "scenarios": _table_document(table)})
    return write_csv(os.path.join(directory, "efficiency.csv"), ["scenario", "criterion"] + table.designs + ["best"],
                     _table_rows(table))


@def_result()
@validate_func_params(schema=Schema(dict(_DESIGN_PARAMS, **_FORMAT_PARAM)))
def command_variances(logger: logging.Logger, spec_path: str, design_paths: List[str], out: Optional[str] = None,
                      table_format: str = 'csv') -> Result:
    """
    GLS variances of the coefficients of every submodel (primary terms plus one subset of potential terms),
    one row per (design, model, term). Models are numbered from 1 in the order of the spec.
    """

    loaded = _load_with_designs(spec_path, design_paths)
    if not loaded.success:
        return loaded
    spec, designs = loaded.value
    factors = spec.factors

    rows = []
    for label, d in designs:
        for number, extra in enumerate(spec.variance_submodels, start=1):
            computed = _handled(submodel_variances(d, spec.structure, spec.eta, spec.variance_primary, extra))
            if not computed.success:
                return computed
            report = computed.value
            model_terms = "+".join(term.label(factors) for term in extra)
            if not report.estimable:
                logger.debug(f"{label} model {number} ({model_terms}): not estimable")
                rows.append([label, number, model_terms, "false", "", ""])
                continue
            for term, variance in zip(report.submodel, report.variances.tolist()):
                rows.append([label, number, model_terms, "true", term.label(factors), variance])
        logger.info(f"{label}: {len(spec.variance_submodels)} submodels evaluated")

    directory = _output_directory(spec, out)
    header = ["design", "model", "terms", "estimable", "term", "variance"]
    if table_format == 'json':
        return write_json(os.path.join(directory, "variances.json"),
                          {"eta": list(spec.eta.eta),
                           "primary": [term.label(factors) for term in spec.variance_primary],
                           "rows": [dict(zip(header, row)) for row in rows]})
    return write_csv(os.path.join(directory, "variances.csv"), header, rows)


@def_result()
@validate_func_params(schema=Schema(dict(_DESIGN_PARAMS, **{
    'k_max': Or(None, And(int, lambda v: v >= 0), error='k_max must be None or a non-negative integer'),
    'seed': Or(None, And(int, lambda v: v >= 0), error='seed must be None or a non-negative integer'),
})))
def command_curve(logger: logging.Logger, spec_path: str, design_paths: List[str], out: Optional[str] = None,
                  k_max: Optional[int] = None, seed: Optional[int] = None) -> Result:
    """
    Overall-variance curves of every design: `curve.csv` (one row per design and k), `curve_terms.csv`
    (average variance of every coefficient) and `curve_summary.json` (settings, including the sampling seed).
    """

    loaded = _load_with_designs(spec_path, design_paths)
    if not loaded.success:
        return loaded
    spec, designs = loaded.value
    curve = spec.curve
    k_max = curve.k_max if k_max is None else k_max
    seed = curve.seed if seed is None else seed
    if not curve.k_min <= k_max <= len(curve.pool):
        return Result.fail(FailResult(code=ExitCode.INPUT_ERROR,
                                      message=f"k-max must be between {curve.k_min} and {len(curve.pool)} "
                                              f"(the pool size), got {k_max}."))

    terms = [term.label(spec.factors) for term in list(curve.primary) + list(curve.pool)]
    k_range = list(range(curve.k_min, k_max + 1))
    rows, term_rows = [], []
    for label, d in designs:
        computed = _handled(overall_variance_curve(d, spec.structure, spec.eta, list(curve.primary),
                                                   list(curve.pool), k_range, curve.sample_limit, seed))
        if not computed.success:
            return computed
        for point in computed.value:
            rows.append([label, point.k, point.primary_overall, point.potential_overall, point.n_estimable,
                         point.n_models, "true" if point.sampled else "false"])
            term_rows += [[label, point.k, terms[index], average, count]
                          for index, (average, count) in sorted(point.term_averages.items())]
            logger.info(f"{label} k={point.k}: primary {point.primary_overall:.6g}, "
                        f"potential {point.potential_overall:.6g} ({point.n_estimable}/{point.n_models} estimable)")

    directory = _output_directory(spec, out)
    summary = {"eta": list(spec.eta.eta), "primary": terms[:len(curve.primary)], "pool": terms[len(curve.primary):],
               "k_min": curve.k_min, "k_max": k_max, "sample_limit": curve.sample_limit, "seed": seed,
               "designs": [label for label, _ in designs]}
    return write_csv(os.path.join(directory, "curve.csv"),
                     ["design", "k", "primary_overall", "potential_overall", "n_estimable", "n_models", "sampled"],
                     rows) \
        .on_success(lambda: write_csv(os.path.join(directory, "curve_terms.csv"),
                                      ["design", "k", "term", "average_variance", "n_models"], term_rows)) \
        .on_success(lambda: write_json(os.path.join(directory, "curve_summary.json"), summary))


@def_result()
@validate_func_params(schema=Schema(dict(_DESIGN_PARAMS, **_FORMAT_PARAM)))
def command_sensitivity(logger: logging.Logger, spec_path: str, design_paths: List[str], out: Optional[str] = None,
                        table_format: str = 'csv') -> Result:
    """
    Efficiency tables over the grid of variance ratios of the spec. tau follows the spec's rule at every
    grid point, so a tau given as a multiple of sigma_y keeps that ratio across the grid.
    """

    loaded = _load_with_designs(spec_path, design_paths)
    if not loaded.success:
        return loaded
    spec, designs = loaded.value

    computed = _handled(sensitivity_sweep(designs, spec.scenarios, spec.structure, spec.sensitivity_eta_values,
                                          spec.tau_rule))
    if not computed.success:
        return computed
    points = computed.value

    g = spec.structure.g
    labels = [label for label, _ in designs]
    rows, documents = [], []
    for point in points:
        ratios = list(point.eta.eta[:-1])
        tau_ratio = point.tau / sigma_y(point.eta)
        rows += [ratios + [point.tau, tau_ratio] + row for row in _table_rows(point.table)]
        documents.append({"eta": list(point.eta.eta), "tau": point.tau, "tau_over_sigma_y": tau_ratio,
                          "scenarios": _table_document(point.table)})
        logger.info(f"eta={list(point.eta.eta)}: best {point.best()}")

    directory = _output_directory(spec, out)
    if table_format == 'json':
        return write_json(os.path.join(directory, "sensitivity.json"), {"points": documents})
    header = [f"eta_{l}" for l in range(1, g)] + ["tau", "tau_over_sigma_y", "scenario", "criterion"] + labels \
        + ["best"]
    return write_csv(os.path.join(directory, "sensitivity.csv"), header, rows)
