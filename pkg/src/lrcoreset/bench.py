"""Benchmark harness: size grids, replicated coreset fits, aggregation, Dunn tests.

Seeds
-----
Every (dataset, method, size, rep) cell gets its own seed,
``derive_seed(base_seed, dataset, method, size, rep)``: the first 8 bytes
(big-endian) of the SHA-256 of ``"base_seed|dataset|method|size|rep"``. That
seed is split with ``numpy.random.SeedSequence(seed).spawn(2)`` into a stream
for score computation (k-means, OSMAC pilot) and a stream for the coreset
draw. Results therefore do not depend on execution order or worker count.
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import logging
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import kruskal, norm, rankdata
from threadpoolctl import threadpool_limits

from .data import (PreprocessSpec, SplitDataset, read_prepared,
                   split_dataset, synthesize_logistic, with_intercept)
from .errors import CoresetError, ConfigError, DataError
from .glm import FitConfig, fit_weighted
from .metrics import METRIC_NAMES, MetricSet, evaluate
from .samplers import RANDOMIZED, SamplerConfig, compute_scores, sample_coreset

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("dataset", "method", "size", "rep", "rel_nll_error", "coef_mse", "rel_roc",
                  "support_acc", "wall_time_ms", "fallback_used", "error")
AGGREGATE_COLUMNS = ("dataset", "method", "size", "metric", "median", "q25", "q75", "n_ok")
COMPARISON_COLUMNS = ("metric", "method_a", "method_b", "z", "p_corrected")
BASELINE = "uniform"


# --- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    """Where a dataset comes from.

    ``kind="synthetic"`` draws a logistic-model dataset of ``n`` rows (before
    the test split); ``kind="csv"`` reads files written by ``prep`` from
    ``data_dir/<name>`` and uses ``preprocess`` to build them.
    """

    name: str
    kind: str = "synthetic"
    n: int = 0
    d: int = 0
    beta_true: Optional[tuple] = None
    seed: Optional[int] = None
    test_fraction: float = 0.05
    intercept: bool = True
    raw_path: Optional[str] = None
    preprocess: Optional[PreprocessSpec] = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "csv"):
            raise ConfigError(f"dataset {self.name!r}: kind must be 'synthetic' or 'csv'")
        if self.kind == "synthetic":
            if self.n < 2 or self.d < 1:
                raise ConfigError(f"dataset {self.name!r}: synthetic data needs n >= 2 and d >= 1")
            if self.beta_true is not None and len(self.beta_true) != self.d:
                raise ConfigError(f"dataset {self.name!r}: beta_true must have length d={self.d}")
        if self.beta_true is not None:
            object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))

    def coefficients(self) -> np.ndarray:
        if self.beta_true is not None:
            return np.asarray(self.beta_true)
        return np.linspace(-1.0, 1.0, self.d)

    def load(self, base_seed: int, data_dir: Optional[str] = None) -> SplitDataset:
        if self.kind == "synthetic":
            seed = self.seed if self.seed is not None else derive_seed(base_seed, self.name, "data")
            full = synthesize_logistic(self.n, self.d, self.coefficients(), seed, self.name)
            split = split_dataset(full, self.test_fraction, seed)
        else:
            directory = os.path.join(data_dir or ".", self.name)
            split = read_prepared(directory, self.name)
        return with_intercept(split) if self.intercept else split


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple
    methods: tuple
    size_lo: int = 200
    size_hi: int = 100000
    size_count: int = 25
    sizes: Optional[tuple] = None
    replications: int = 50
    base_seed: int = 0
    fit: FitConfig = field(default_factory=FitConfig)
    l1_mode: bool = False
    osmac_fallback: bool = True
    record_wall_time: bool = False
    identity_mode: bool = False

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.sizes is not None:
            object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if not self.datasets:
            raise ConfigError("no datasets configured")
        if not self.methods:
            raise ConfigError("no methods configured")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate dataset names: {names}")
        labels = [method_label(m) for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate method labels: {labels}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.l1_mode and self.fit.lambda1 <= 0:
            raise ConfigError("l1_mode needs fit.lambda1 > 0")


def method_label(cfg: SamplerConfig) -> str:
    return cfg.label or cfg.method


# --- grids and seeds ---------------------------------------------------------

def size_grid(lo: int, hi: int, count: int, n_train: int) -> List[int]:
    """``count`` geometrically spaced sizes from ``lo`` to ``hi``, rounded, deduplicated, capped at n_train."""
    if not 1 <= lo <= hi:
        raise ConfigError(f"need 1 <= lo <= hi, got lo={lo}, hi={hi}")
    if count < 2:
        raise ConfigError(f"size grid needs count >= 2, got {count}")
    raw = np.geomspace(lo, hi, count)
    sizes = []
    for value in raw:
        size = int(math.floor(value + 0.5))
        if size not in sizes:
            sizes.append(size)
    sizes = [s for s in sizes if s <= n_train]
    if not sizes:
        raise ConfigError(f"no grid size fits in {n_train} training rows")
    return sizes


def derive_seed(base_seed, *parts) -> int:
    key = "|".join(str(p) for p in (base_seed,) + parts)
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


# --- records -----------------------------------------------------------------

@dataclass(frozen=True)
class ResultRecord:
    dataset: str
    method: str
    size: int
    rep: int
    metrics: Optional[MetricSet]
    wall_time_ms: Optional[float] = None
    fallback_used: bool = False
    error: str = ""


@dataclass(frozen=True)
class AggregateRecord:
    dataset: str
    method: str
    size: int
    metric: str
    median: float
    q25: float
    q75: float
    n_ok: int
    n_skipped: int = 0


# --- running -----------------------------------------------------------------

@dataclass
class _DatasetState:
    split: SplitDataset
    beta_full: np.ndarray
    sizes: List[int]
    cached_scores: Dict[str, object]


_STATE: dict = {}


def _init_worker(state):
    _STATE.clear()
    _STATE.update(state)
    threadpool_limits(1)


def _fit_config(cfg: ExperimentConfig) -> FitConfig:
    if cfg.l1_mode:
        return cfg.fit
    return FitConfig(cfg.fit.lambda2, 0.0, cfg.fit.tol, cfg.fit.max_iter)


def _run_cell(task) -> ResultRecord:
    ds_name, method_idx, size, rep = task
    cfg: ExperimentConfig = _STATE["cfg"]
    state: _DatasetState = _STATE["datasets"][ds_name]
    sampler = cfg.methods[method_idx]
    label = method_label(sampler)
    fit = _fit_config(cfg)
    train = state.split.train
    start = time.perf_counter()
    fallback = False
    try:
        if cfg.identity_mode:
            coreset_ds, weights = train, np.ones(train.n)
        else:
            seed = derive_seed(cfg.base_seed, ds_name, label, size, rep)
            score_seq, sample_seq = np.random.SeedSequence(seed).spawn(2)
            cached = state.cached_scores.get(label)
            if isinstance(cached, Exception):
                raise cached
            if cached is not None:
                scores = cached
            else:
                scores, fallback = compute_scores(train, sampler, m=size, seed=score_seq, fit=fit,
                                                  allow_fallback=cfg.osmac_fallback)
            sample = sample_coreset(scores, size, sample_seq)
            coreset_ds, weights = train.take(sample.indices), sample.weights
        result = fit_weighted(coreset_ds, weights, fit)
        if not result.converged:
            log.info("%s/%s m=%d rep=%d: fit did not converge (residual %.2e)",
                     ds_name, label, size, rep, result.grad_norm)
        metrics = evaluate(result.beta, state.beta_full, train, state.split.test, cfg.l1_mode)
        error = ""
    except (CoresetError, np.linalg.LinAlgError) as exc:
        metrics, error = None, f"{type(exc).__name__}: {exc}"
    elapsed = (time.perf_counter() - start) * 1000.0
    return ResultRecord(ds_name, label, size, rep, metrics, elapsed, fallback, error)


def prepare_datasets(cfg: ExperimentConfig, data_dir=None, preloaded=None) -> Dict[str, _DatasetState]:
    """Load every dataset, fit the full-data model once and cache deterministic scores."""
    fit = _fit_config(cfg)
    states = {}
    for spec in cfg.datasets:
        if preloaded and spec.name in preloaded:
            split = preloaded[spec.name]
        else:
            split = spec.load(cfg.base_seed, data_dir)
        full = fit_weighted(split.train, np.ones(split.train.n), fit)
        if not full.converged:
            log.warning("full-data fit on %s did not converge (residual %.2e)", spec.name, full.grad_norm)
        if cfg.sizes is not None:
            sizes = sorted({s for s in cfg.sizes if s <= split.train.n})
            if not sizes:
                raise ConfigError(f"no configured size fits in {split.train.n} training rows of {spec.name}")
        else:
            sizes = size_grid(cfg.size_lo, cfg.size_hi, cfg.size_count, split.train.n)
        cache = {}
        if not cfg.identity_mode:
            for sampler in cfg.methods:
                if sampler.method in RANDOMIZED:
                    continue
                try:
                    cache[method_label(sampler)] = compute_scores(split.train, sampler, m=sizes[0], fit=fit)[0]
                except CoresetError as exc:
                    cache[method_label(sampler)] = exc
        states[spec.name] = _DatasetState(split, full.beta, sizes, cache)
    return states


def run_experiment(cfg: ExperimentConfig, data_dir=None, parallelism: int = 1,
                   preloaded: Optional[Dict[str, SplitDataset]] = None) -> List[ResultRecord]:
    """Run every (dataset, method, size, rep) cell; records come back in canonical order.

    Parameters
    ----------
    cfg : ExperimentConfig
    data_dir : str, optional
        Directory holding prepared csv datasets (``<data_dir>/<name>/train.csv``).
    parallelism : int
        Worker processes. Output is identical for every value.
    preloaded : dict, optional
        Ready-made splits by dataset name, bypassing ``DatasetSpec.load``.
    """
    with threadpool_limits(1):
        states = prepare_datasets(cfg, data_dir, preloaded)
        tasks = [(spec.name, mi, size, rep)
                 for spec in cfg.datasets
                 for mi in range(len(cfg.methods))
                 for size in states[spec.name].sizes
                 for rep in range(cfg.replications)]
        shared = {"cfg": cfg, "datasets": states}
        if parallelism <= 1:
            _init_worker(shared)
            records = [_run_cell(t) for t in tasks]
        else:
            methods = multiprocessing.get_all_start_methods()
            ctx = multiprocessing.get_context("fork" if "fork" in methods else "spawn")
            chunk = max(1, len(tasks) // (parallelism * 8))
            with ProcessPoolExecutor(parallelism, mp_context=ctx, initializer=_init_worker,
                                     initargs=(shared,)) as pool:
                records = list(pool.map(_run_cell, tasks, chunksize=chunk))
    order = {spec.name: i for i, spec in enumerate(cfg.datasets)}
    morder = {method_label(m): i for i, m in enumerate(cfg.methods)}
    records.sort(key=lambda r: (order[r.dataset], morder[r.method], r.size, r.rep))
    return records


# --- CSV i/o -----------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def results_to_csv(records: Sequence[ResultRecord], include_timing: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for r in records:
        row = r.metrics.as_row() if r.metrics else dict.fromkeys(METRIC_NAMES)
        writer.writerow([r.dataset, r.method, r.size, r.rep] +
                        [_fmt(row[m]) for m in METRIC_NAMES] +
                        [_fmt(r.wall_time_ms if include_timing else None), _fmt(r.fallback_used), r.error])
    return buf.getvalue()


def write_results(records, path, include_timing: bool = False):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(results_to_csv(records, include_timing))


def _float_or_none(text, path, line, column):
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise DataError(f"{path}:{line}: column {column!r}: not a number: {text!r}") from None


def read_results(path) -> List[ResultRecord]:
    """Parse a results CSV, checking the header against the documented schema."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RESULT_COLUMNS:
            raise ConfigError(f"{path}: header {header} does not match {','.join(RESULT_COLUMNS)}")
        records = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(RESULT_COLUMNS):
                raise ConfigError(f"{path}:{line}: expected {len(RESULT_COLUMNS)} fields, got {len(row)}")
            rec = dict(zip(RESULT_COLUMNS, row))
            values = {m: _float_or_none(rec[m], path, line, m) for m in METRIC_NAMES}
            metrics = None
            if not rec["error"]:
                metrics = MetricSet(values["rel_nll_error"], values["coef_mse"], values["rel_roc"],
                                    values["support_acc"])
            try:
                size, rep = int(rec["size"]), int(rec["rep"])
            except ValueError:
                raise ConfigError(f"{path}:{line}: size/rep must be integers") from None
            records.append(ResultRecord(rec["dataset"], rec["method"], size, rep, metrics,
                                        _float_or_none(rec["wall_time_ms"], path, line, "wall_time_ms"),
                                        rec["fallback_used"] == "true", rec["error"]))
    return records


# --- aggregation -------------------------------------------------------------

def aggregate(records: Sequence[ResultRecord]) -> List[AggregateRecord]:
    """Median and linear-interpolation quartiles per (dataset, method, size, metric).

    Error-tagged records are skipped; ``n_ok`` counts the values used.
    """
    cells: Dict[tuple, List[ResultRecord]] = {}
    for r in records:
        cells.setdefault((r.dataset, r.method, r.size), []).append(r)
    present = [m for m in METRIC_NAMES
               if any(r.metrics is not None and r.metrics.as_row()[m] is not None for r in records)]
    out = []
    for (ds, method, size), recs in cells.items():
        ok = [r for r in recs if not r.error and r.metrics is not None]
        skipped = len(recs) - len(ok)
        if skipped:
            log.info("%s/%s m=%d: skipped %d error-tagged records", ds, method, size, skipped)
        for metric in present:
            values = np.array([r.metrics.as_row()[metric] for r in ok
                               if r.metrics.as_row()[metric] is not None], dtype=float)
            if values.size:
                q25, med, q75 = np.quantile(values, [0.25, 0.5, 0.75])
            else:
                q25 = med = q75 = float("nan")
            out.append(AggregateRecord(ds, method, size, metric, float(med), float(q25), float(q75),
                                       int(values.size), skipped))
    return out


def aggregates_to_csv(aggs: Sequence[AggregateRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AGGREGATE_COLUMNS)
    for a in aggs:
        writer.writerow([a.dataset, a.method, a.size, a.metric, _fmt(a.median), _fmt(a.q25),
                         _fmt(a.q75), a.n_ok])
    return buf.getvalue()


# --- significance tests ------------------------------------------------------

@dataclass(frozen=True)
class DunnComparison:
    method_a: str
    method_b: str
    z: float
    p_raw: float
    p_corrected: float


def _pooled_ranks(observations: Dict[str, np.ndarray]):
    groups = list(observations)
    values = np.concatenate([np.asarray(observations[g], dtype=float) for g in groups])
    ranks = rankdata(values, method="average")
    mean_rank, sizes = {}, {}
    offset = 0
    for g in groups:
        k = len(observations[g])
        sizes[g] = k
        mean_rank[g] = float(ranks[offset:offset + k].mean()) if k else float("nan")
        offset += k
    _, ties = np.unique(values, return_counts=True)
    return mean_rank, sizes, values.size, float(np.sum(ties.astype(float) ** 3 - ties))


def kruskal_dunn(observations: Dict[str, Sequence[float]], correction_factor: int = 1) -> List[DunnComparison]:
    """Dunn's pairwise test on ranks pooled over all groups.

    ``z = (Rbar_a - Rbar_b) / sqrt((N(N+1)/12 - T) (1/n_a + 1/n_b))`` with the
    tie term ``T = sum(t^3 - t) / (12 (N - 1))``; two-sided normal p-values are
    multiplied by ``correction_factor`` and capped at 1.
    """
    if len(observations) < 2:
        raise ConfigError("Dunn's test needs at least two groups")
    if correction_factor < 1:
        raise ConfigError("correction_factor must be >= 1")
    mean_rank, sizes, N, tie_sum = _pooled_ranks(observations)
    T = tie_sum / (12.0 * (N - 1)) if N > 1 else 0.0
    spread = N * (N + 1) / 12.0 - T
    out = []
    for a, b in itertools.combinations(observations, 2):
        if sizes[a] == 0 or sizes[b] == 0:
            continue
        var = spread * (1.0 / sizes[a] + 1.0 / sizes[b])
        diff = mean_rank[a] - mean_rank[b]
        if var <= 1e-12 * N * N or diff == 0.0:
            z, p = 0.0, 1.0
        else:
            z = diff / math.sqrt(var)
            p = float(2.0 * norm.sf(abs(z)))
        out.append(DunnComparison(a, b, z, p, min(1.0, p * correction_factor)))
    return out


def kruskal_wallis(observations: Dict[str, Sequence[float]]):
    """Omnibus H statistic and p-value; identical observations give (0, 1)."""
    groups = [np.asarray(v, dtype=float) for v in observations.values() if len(v)]
    try:
        res = kruskal(*groups)
    except ValueError:
        return 0.0, 1.0
    if not np.isfinite(res.statistic):
        return 0.0, 1.0
    return float(res.statistic), float(res.pvalue)


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    method_a: str
    method_b: str
    z: float
    p_corrected: float


def method_observations(aggs: Sequence[AggregateRecord], metric: str) -> Dict[str, np.ndarray]:
    """Per method, the cell medians of ``metric`` ordered by (dataset, size)."""
    cells: Dict[str, List[tuple]] = {}
    for a in aggs:
        if a.metric == metric and a.n_ok > 0 and np.isfinite(a.median):
            cells.setdefault(a.method, []).append((a.dataset, a.size, a.median))
    return {m: np.array([v for _, _, v in sorted(c, key=lambda t: (t[0], t[1]))])
            for m, c in cells.items()}


def compare_report(aggs: Sequence[AggregateRecord], family: str = "vs_uniform",
                   baseline: str = BASELINE, exclude_baseline: bool = True,
                   metrics: Optional[Sequence[str]] = None) -> List[ComparisonRow]:
    """Bonferroni-corrected Dunn p-values for one comparison family, per metric.

    ``vs_uniform`` compares every method against ``baseline`` (k-1 tests);
    ``all_pairs`` compares every pair, leaving the baseline out when
    ``exclude_baseline`` is set. The correction factor is the family size.
    """
    if family not in ("vs_uniform", "all_pairs"):
        raise ConfigError(f"unknown comparison family {family!r}")
    method_order = list(dict.fromkeys(a.method for a in aggs))
    if metrics is None:
        metrics = [m for m in METRIC_NAMES if any(a.metric == m for a in aggs)]
    rows = []
    for metric in metrics:
        obs = method_observations(aggs, metric)
        obs = {m: obs[m] for m in method_order if m in obs}
        if len(obs) < 2:
            continue
        if family == "vs_uniform":
            if baseline not in obs:
                log.warning("no %s baseline results for %s; skipping vs_uniform family", baseline, metric)
                continue
            pairs = [(m, baseline) for m in obs if m != baseline]
        else:
            pool = [m for m in obs if not (exclude_baseline and m == baseline)]
            pairs = list(itertools.combinations(pool, 2))
        if not pairs:
            continue
        table = {(c.method_a, c.method_b): c for c in kruskal_dunn(obs, len(pairs))}
        for a, b in pairs:
            if (a, b) in table:
                c = table[(a, b)]
                rows.append(ComparisonRow(metric, a, b, c.z, c.p_corrected))
            else:
                c = table[(b, a)]
                rows.append(ComparisonRow(metric, a, b, -c.z, c.p_corrected))
    return rows


def comparisons_to_csv(rows: Sequence[ComparisonRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMPARISON_COLUMNS)
    for r in rows:
        writer.writerow([r.metric, r.method_a, r.method_b, _fmt(r.z), _fmt(r.p_corrected)])
    return buf.getvalue()
