"""Trial execution, error measurement, scaling fits and result files.

Trial ``i`` of a run uses seed ``base_seed + i``. Wall-clock runtimes are
only recorded when asked for, so that default outputs are byte-identical
across repeated invocations.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dp_apsd import AlgoConfig, run_config
from .graph import WeightedGraph, exact_apsd, generate, write_graph
from .mechanisms import make_rng

CSV_COLUMNS = (
    "n",
    "mode",
    "epsilon",
    "delta",
    "k",
    "s",
    "t",
    "trials",
    "err_median",
    "err_mean",
    "err_p90",
    "err_max",
    "runtime_ms_median",
)


@dataclass(frozen=True)
class TrialSpec:
    config: AlgoConfig
    trials: int
    base_seed: int
    graph_path: str | None = None
    out: str | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass
class TrialResult:
    config: AlgoConfig
    n: int
    base_seed: int
    errors: list[float] = field(default_factory=list)
    runtimes_ms: list[float | None] = field(default_factory=list)
    violations: list[float] = field(default_factory=list)
    s: int | None = None
    t: int | None = None

    @property
    def stretch(self) -> int | None:
        return 2 * self.config.k - 1 if self.config.mode.startswith("oracle") else None

    def aggregate(self) -> dict:
        e = np.asarray(self.errors, dtype=float)
        agg = {
            "err_median": float(np.median(e)),
            "err_mean": float(np.mean(e)),
            "err_p90": float(np.percentile(e, 90)),
            "err_max": float(np.max(e)),
            "runtime_ms_median": None,
        }
        rt = [r for r in self.runtimes_ms if r is not None]
        if rt:
            agg["runtime_ms_median"] = float(np.median(rt))
        if self.violations:
            agg["violation_median"] = float(np.median(self.violations))
            agg["violation_max"] = float(np.max(self.violations))
        return agg

    def to_json(self) -> dict:
        c = self.config
        trials = []
        for i, err in enumerate(self.errors):
            row = {
                "mode": c.mode,
                "n": self.n,
                "epsilon": c.budget.epsilon,
                "delta": c.budget.delta,
                "s": self.s,
                "t": self.t,
                "k": c.k,
                "seed": self.base_seed + i,
                "linf_error": err,
                "runtime_ms": self.runtimes_ms[i],
            }
            if self.violations:
                row["violation"] = self.violations[i]
            trials.append(row)
        return {
            "mode": c.mode,
            "n": self.n,
            "epsilon": c.budget.epsilon,
            "delta": c.budget.delta,
            "k": c.k,
            "s": self.s,
            "t": self.t,
            "noise_off": c.noise_off,
            "clamp_nonnegative": c.clamp_nonnegative,
            "base_seed": self.base_seed,
            "trials": trials,
            "aggregate": self.aggregate(),
        }


def linf_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """``max |estimate - truth|`` over all pairs."""
    return float(np.max(np.abs(np.asarray(estimate) - truth))) if truth.size else 0.0


def stretch_violation(estimate: np.ndarray, truth: np.ndarray, stretch: float) -> float:
    """Smallest α with ``dist - α <= est <= stretch·dist + α`` on every pair."""
    if truth.size == 0:
        return 0.0
    est = np.asarray(estimate)
    return float(max(0.0, np.max(np.maximum(truth - est, est - stretch * truth))))


def graph_digest(g: WeightedGraph | None = None, path: str | Path | None = None) -> str:
    """sha256 of the graph file, or of its canonical text form."""
    if path is not None:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    buf = io.StringIO()
    buf.write(f"{g.n} {g.m}\n")
    for a, b, c in zip(g.u.tolist(), g.v.tolist(), g.w.tolist()):
        buf.write(f"{a} {b} {c:.17g}\n")
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()


def default_cache_dir() -> Path:
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "dpapsd"


def exact_truth(
    g: WeightedGraph,
    path: str | Path | None = None,
    cache_dir: str | Path | None = None,
) -> np.ndarray:
    """Exact distances, cached on disk under the graph's content hash.

    ``cache_dir=None`` disables the cache.
    """
    if cache_dir is None:
        return exact_apsd(g)
    cache = Path(cache_dir)
    f = cache / f"{graph_digest(g, path)}.npy"
    if f.exists():
        d = np.load(f)
        if d.shape == (g.n, g.n):
            return d
    d = exact_apsd(g)
    cache.mkdir(parents=True, exist_ok=True)
    tmp = f.with_suffix(f".{os.getpid()}.tmp.npy")
    np.save(tmp, d)
    os.replace(tmp, f)
    return d


def run_trials(
    g: WeightedGraph,
    config: AlgoConfig,
    trials: int,
    base_seed: int,
    truth: np.ndarray | None = None,
    timing: bool = False,
    keep_first: bool = False,
) -> tuple[TrialResult, np.ndarray | None]:
    """Run ``trials`` independent releases and measure ℓ∞ error.

    Returns the result and, if ``keep_first``, the first trial's matrix.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not g.is_connected():
        raise ValueError("graph is disconnected; exact distances would be infinite")
    truth = exact_apsd(g) if truth is None else truth
    res = TrialResult(config, g.n, base_seed)
    first = None
    for i in range(trials):
        seed = base_seed + i
        rng = make_rng(seed)
        t0 = time.perf_counter()
        est = run_config(g, config, rng, seed)
        elapsed = (time.perf_counter() - t0) * 1000.0
        res.errors.append(linf_error(est.matrix, truth))
        res.runtimes_ms.append(elapsed if timing else None)
        if res.stretch is not None:
            res.violations.append(stretch_violation(est.matrix, truth, res.stretch))
        res.s, res.t = est.s, est.t
        if keep_first and i == 0:
            first = est.matrix
    return res, first


def fit_loglog_slope(points) -> float:
    """Least-squares slope of ``ln(error)`` against ``ln(n)``."""
    pts = [(float(n), float(e)) for n, e in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if any(not (n > 0 and e > 0) or not (math.isfinite(n) and math.isfinite(e)) for n, e in pts):
        raise ValueError("log-log fit needs positive finite values")
    x = np.log([n for n, _ in pts])
    y = np.log([e for _, e in pts])
    if np.ptp(x) == 0:
        raise ValueError("need at least two distinct sizes")
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def scaling_run(
    kind: str,
    sizes: list[int],
    weights: str,
    config: AlgoConfig,
    trials: int,
    seed: int,
    p: float | None = None,
    cache_dir: str | Path | None = None,
    timing: bool = False,
) -> tuple[list[TrialResult], float | None]:
    """One :func:`run_trials` per size on a freshly generated graph.

    The graph for size ``n`` is drawn from seed ``seed``; trials use seeds
    ``seed, seed + 1, ...``. Returns the results and the fitted slope of
    median error (``None`` when undefined, e.g. all-zero errors).
    """
    results = []
    for n in sizes:
        g = generate(kind, n, weights, make_rng(seed), p=p)
        truth = exact_truth(g, cache_dir=cache_dir)
        res, _ = run_trials(g, config, trials, seed, truth=truth, timing=timing)
        results.append(res)
    pts = [(r.n, r.aggregate()["err_median"]) for r in results]
    try:
        slope = fit_loglog_slope(pts)
    except ValueError:
        slope = None
    return results, slope


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def scaling_csv(results: list[TrialResult], slope: float | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        a = r.aggregate()
        c = r.config
        w.writerow(
            [
                _fmt(v)
                for v in (
                    r.n,
                    c.mode,
                    c.budget.epsilon,
                    c.budget.delta,
                    c.k,
                    r.s,
                    r.t,
                    len(r.errors),
                    a["err_median"],
                    a["err_mean"],
                    a["err_p90"],
                    a["err_max"],
                    a["runtime_ms_median"],
                )
            ]
        )
    buf.write(f"# slope={_fmt(slope) if slope is not None else 'nan'}\n")
    return buf.getvalue()


def dump_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def write_generated_graph(kind: str, n: int, weights: str, seed: int, out: str | Path, p: float | None = None) -> WeightedGraph:
    g = generate(kind, n, weights, make_rng(seed), p=p)
    write_graph(g, out)
    return g
