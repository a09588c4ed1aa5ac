"""
Multi-start coordinate exchange over designs that respect the stratum structure.

Each restart draws a random valid design, then sweeps every (unit, factor) coordinate stratum by stratum,
trying every other level on all runs of the unit and keeping strict improvements, until a sweep changes
nothing. The best restart wins; ties go to the lexicographically smaller design.
"""

import logging
import multiprocessing as mp
from collections import Counter
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from on_rails import Result, def_result
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Or, Schema

from gbd_design._libs.ExitCodes import ExitCode
from gbd_design._libs.ResultDetails.FailResult import FailResult
from gbd_design.criterion import CriterionConfig
from gbd_design.model import Design
from gbd_design.numeric import WORST_LOG_VALUE

logger = logging.getLogger(__name__)

IMPROVEMENT_EPSILON = 1e-12
MAX_SEED = 2 ** 64 - 1
CHUNKS_PER_WORKER = 4

ProgressHook = Callable[[int, float], None]


class SearchConfig:
    """
    Restart count, seed and worker count. The result depends only on (t_total, seed), never on workers.
    """

    t_total: int
    seed: int
    workers: int

    @validate_func_params(schema=Schema({
        't_total': And(int, lambda v: v >= 1, error='t_total must be a positive integer.'),
        'seed': And(int, lambda v: 0 <= v <= MAX_SEED, error='The seed must be an unsigned 64-bit integer.'),
        'workers': And(int, lambda v: v >= 1, error='workers must be a positive integer.'),
    }), raise_exception=True)
    def __init__(self, t_total: int, seed: int = 0, workers: int = 1):
        self.t_total = t_total
        self.seed = seed
        self.workers = workers

    def __repr__(self):
        return f"SearchConfig(t_total={self.t_total}, seed={self.seed}, workers={self.workers})"


class SearchResult:
    design: Design
    log_d: float
    restarts_completed: int
    improving_passes_histogram: Dict[int, int]
    seed: int

    def __init__(self, design: Design, log_d: float, restarts_completed: int,
                 improving_passes_histogram: Dict[int, int], seed: int):
        self.design = design
        self.log_d = log_d
        self.restarts_completed = restarts_completed
        self.improving_passes_histogram = dict(sorted(improving_passes_histogram.items()))
        self.seed = seed

    def __repr__(self):
        return f"SearchResult(log_d={self.log_d:.12g}, restarts={self.restarts_completed}, seed={self.seed})"


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    """The random stream of one restart; independent of how restarts are spread over workers."""

    return np.random.default_rng([seed, restart])


def random_start(cfg: CriterionConfig, rng: np.random.Generator) -> Design:
    """Draws one level per (unit, factor) uniformly at random, so each factor is constant within its units."""

    structure = cfg.structure
    settings = np.empty((structure.n, cfg.model.m))
    for j, factor in enumerate(cfg.model.factors):
        levels = np.array(factor.levels)
        picks = rng.integers(len(levels), size=structure.unit_count(factor.stratum))
        settings[:, j] = levels[picks][structure.unit_of_run[factor.stratum - 1] - 1]
    return Design(settings)


def improves(candidate: float, current: float) -> bool:
    if candidate == WORST_LOG_VALUE:
        return False
    if current == WORST_LOG_VALUE:
        return True
    return candidate > current + IMPROVEMENT_EPSILON * max(1.0, abs(current))


class _Exchanger:
    """Holds the working copy of one design and its scaled model matrix during a restart."""

    def __init__(self, cfg: CriterionConfig, settings: np.ndarray):
        self.cfg = cfg
        self.settings = np.array(settings, dtype=float)
        self.x = cfg.matrix(self.settings)
        self.current = cfg.log_value_of_matrix(self.x)

        structure = cfg.structure
        self.coordinates: List[Tuple[np.ndarray, int, Tuple[float, ...]]] = []
        for l in range(1, structure.g + 1):
            factors = [j for j, factor in enumerate(cfg.model.factors) if factor.stratum == l]
            for runs in structure.units(l):
                for j in factors:
                    self.coordinates.append((runs, j, cfg.model.factors[j].levels))

        # leaders[i, j]: first run of the unit that run i belongs to, in the stratum of factor j
        self.leaders = np.column_stack([
            np.array([runs[0] for runs in structure.units(factor.stratum)])[
                structure.unit_of_run[factor.stratum - 1] - 1]
            for factor in cfg.model.factors])

    def _set(self, runs: np.ndarray, j: int, level: float):
        self.settings[runs, j] = level
        self.x[runs] = self.cfg.matrix(self.settings[runs])

    def units_constant(self) -> bool:
        return bool(np.all(self.settings == self.settings[self.leaders, np.arange(self.settings.shape[1])]))

    def sweep(self) -> bool:
        improved = False
        for runs, j, levels in self.coordinates:
            kept = self.settings[runs[0], j]
            for level in levels:
                if level == kept:
                    continue
                self._set(runs, j, level)
                value = self.cfg.log_value_of_matrix(self.x)
                if improves(value, self.current):
                    self.current = value
                    kept = level
                    improved = True
                    assert self.units_constant(), "A factor changed within one of its units."
                else:
                    self._set(runs, j, kept)
        return improved


def exchange_pass(d: Design, cfg: CriterionConfig) -> Tuple[Design, bool]:
    """
    One sweep over every coordinate, strata in order. Returns the resulting design and whether any exchange
    was accepted.
    """

    exchanger = _Exchanger(cfg, d.settings)
    improved = exchanger.sweep()
    return Design(exchanger.settings), improved


def _restart(cfg: CriterionConfig, seed: int, restart: int) -> Tuple[np.ndarray, float, int]:
    exchanger = _Exchanger(cfg, random_start(cfg, restart_rng(seed, restart)).settings)
    passes = 0
    while exchanger.sweep():
        passes += 1
    final = cfg.log_value_of_matrix(cfg.matrix(exchanger.settings))
    return exchanger.settings, final, passes


def _better(candidate: Tuple[np.ndarray, float], best: Optional[Tuple[np.ndarray, float]]) -> bool:
    if best is None:
        return True
    settings, value = candidate
    best_settings, best_value = best
    if value != best_value:
        return value > best_value
    return tuple(settings.ravel()) < tuple(best_settings.ravel())


def _run_chunk(cfg: CriterionConfig, seed: int, start: int, stop: int):
    best = None
    histogram: Counter = Counter()
    for restart in range(start, stop):
        settings, value, passes = _restart(cfg, seed, restart)
        histogram[passes] += 1
        if _better((settings, value), best):
            best = (settings, value)
    return best, histogram, stop - start


def _run_chunk_packed(arguments):
    return _run_chunk(*arguments)


def _chunks(t_total: int, workers: int) -> List[Tuple[int, int]]:
    count = min(t_total, workers * CHUNKS_PER_WORKER)
    bounds = np.linspace(0, t_total, count + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


@def_result()
@validate_func_params(schema=Schema({
    'cfg': And(CriterionConfig, error='cfg must be a CriterionConfig.'),
    'scfg': And(SearchConfig, error='scfg must be a SearchConfig.'),
    'progress': Or(None, callable, error='progress must be None or a callable.'),
}))
def optimize(cfg: CriterionConfig, scfg: SearchConfig, progress: Optional[ProgressHook] = None) \
        -> Result[SearchResult]:
    """
    Runs `scfg.t_total` restarts and returns the best design found.

    :param progress: called as `progress(restarts_completed, best_log_d)` as restarts finish (per restart with
    one worker, per chunk otherwise).

    :return: the `SearchResult`, or a `FailResult` with `ExitCode.COMPUTATION_FAILURE` when every restart
    ended on a singular design.
    """

    best = None
    histogram: Counter = Counter()
    completed = 0

    def merge(chunk_best, chunk_histogram, count):
        nonlocal best, completed
        histogram.update(chunk_histogram)
        completed += count
        if chunk_best is not None and _better(chunk_best, best):
            best = chunk_best
        if progress is not None:
            progress(completed, best[1] if best else WORST_LOG_VALUE)

    if scfg.workers == 1:
        for restart in range(scfg.t_total):
            merge(*_run_chunk(cfg, scfg.seed, restart, restart + 1))
    else:
        tasks = [(cfg, scfg.seed, start, stop) for start, stop in _chunks(scfg.t_total, scfg.workers)]
        logger.debug(f"Running {scfg.t_total} restarts in {len(tasks)} chunks on {scfg.workers} workers.")
        with mp.Pool(processes=scfg.workers) as pool:
            for chunk in pool.imap(_run_chunk_packed, tasks):
                merge(*chunk)

    settings, value = best
    if value == WORST_LOG_VALUE:
        return Result.fail(FailResult(code=ExitCode.COMPUTATION_FAILURE,
                                      message="Every design found by the search has a singular information "
                                              "matrix."))
    return Result.ok(SearchResult(Design(settings), value, completed, dict(histogram), scfg.seed))
