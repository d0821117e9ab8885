"""Acceptance criteria, one test each.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary ends
with one PASS/FAIL line per criterion.
"""

import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from dpapsd.discrepancy import PartialColoringProblem, full_coloring, full_coloring_ppls, gamma_coloring, partial_coloring
from dpapsd.dp_apsd import AlgoConfig, apsd_approx, apsd_pure, run_config, sample_hubs
from dpapsd.graph import WeightedGraph, exact_apsd, generate, t_hop_distances
from dpapsd.hardness import (
    brute_force_disc,
    grid_ppls,
    incidence_matrix,
    instantiate,
    metrize,
    path_system_from_ppls,
    reduce_to_apsd,
    verify_reduction,
)
from dpapsd.harness import fit_loglog_slope, run_trials, stretch_violation
from dpapsd.mechanisms import NOISE_OFF, PrivacyBudget, gaussian_noise, laplace_noise, make_rng
from dpapsd.oracle import build_oracle, oracle_all_pairs, oracle_query

criterion = pytest.mark.criterion
TOPOLOGIES = ("path", "cycle", "grid", "complete", "erdos_renyi")


def random_connected(rng, n_max, weights="uniform:0,10"):
    n = int(rng.integers(1, n_max + 1))
    kind = TOPOLOGIES[int(rng.integers(len(TOPOLOGIES)))]
    if kind == "cycle" and n < 3:
        kind = "path"
    return generate(kind, n, weights, rng, p=0.3)


# --- 1 ----------------------------------------------------------------------

@criterion(1, "noise-off exactness")
def test_ac1_noise_off_exactness(report):
    rng = make_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        g = random_connected(rng, 30)
        d = exact_apsd(g)
        t = max(g.n - 1, 1)
        for est in (apsd_pure(g, NOISE_OFF, rng, t=t), apsd_approx(g, NOISE_OFF, 1e-6, rng, t=t)):
            worst = max(worst, float(np.max(np.abs(est.matrix - d))))
    elapsed = time.perf_counter() - t0
    report.update(max_abs_diff=worst, seconds=elapsed)
    assert worst <= 1e-9
    assert elapsed < 10


# --- 2 ----------------------------------------------------------------------

def enumerate_edge_sequences(g: WeightedGraph, t: int) -> np.ndarray:
    """Minimum weight over all sequences of at most t edges, by expansion."""
    adj = [[] for _ in range(g.n)]
    for a, b, w in g.edges:
        adj[a].append((b, w))
        adj[b].append((a, w))
    best = np.full((g.n, g.n), math.inf)
    for u in range(g.n):
        best[u, u] = 0.0
        frontier = [(u, 0.0)]
        for _ in range(t):
            frontier = [(y, c + w) for x, c in frontier for y, w in adj[x]]
            for y, c in frontier:
                if c < best[u, y]:
                    best[u, y] = c
    return best


@criterion(2, "hop-DP oracle equivalence")
def test_ac2_hop_dp_equivalence(report):
    rng = make_rng(202)
    t0 = time.perf_counter()
    worst, negatives = 0.0, 0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        pairs = [p for p in itertools.combinations(range(n), 2) if rng.random() < 0.5]
        w = rng.uniform(-3.0, 6.0, len(pairs))
        negatives += int(np.sum(w < 0))
        g = WeightedGraph.from_edges(n, [(a, b, float(c)) for (a, b), c in zip(pairs, w)])
        for t in range(5):
            got = t_hop_distances(g, t).matrix
            want = enumerate_edge_sequences(g, t)
            assert np.array_equal(np.isinf(got), np.isinf(want))
            fin = np.isfinite(want)
            if fin.any():
                worst = max(worst, float(np.max(np.abs(got[fin] - want[fin]))))
    elapsed = time.perf_counter() - t0
    report.update(max_abs_diff=worst, negative_edges=negatives, seconds=elapsed)
    assert negatives > 0
    assert worst <= 1e-9
    assert elapsed < 30


# --- 3 and 4 ------------------------------------------------------------------

SCALING_SIZES = (128, 256, 512, 1024)
SCALING_TRIALS = 20
SCALING_SEED = 3000


@pytest.fixture(scope="module")
def path_scaling():
    """Per-trial errors for pure, approx and input perturbation on
    constant-weight paths; trial i of every algorithm uses seed base + i."""
    out = {"pure": {}, "approx": {}, "input": {}, "seconds": {"pure": 0.0, "approx": 0.0, "input": 0.0}}
    for n in SCALING_SIZES:
        g = generate("path", n, "const:1", make_rng(0))
        truth = exact_apsd(g)
        configs = {
            "pure": AlgoConfig("pure", PrivacyBudget(1.0)),
            "approx": AlgoConfig("approx", PrivacyBudget(1.0, 1e-6)),
        }
        if n == SCALING_SIZES[-1]:
            configs["input"] = AlgoConfig("input", PrivacyBudget(1.0), t=n - 1)
        for name, cfg in configs.items():
            t0 = time.perf_counter()
            res, _ = run_trials(g, cfg, SCALING_TRIALS, SCALING_SEED, truth=truth)
            out["seconds"][name] += time.perf_counter() - t0
            out[name][n] = np.asarray(res.errors)
    return out


@criterion(3, "sublinear error scaling, pure")
def test_ac3_pure_scaling(path_scaling, report):
    pure = path_scaling["pure"]
    slope = fit_loglog_slope([(n, float(np.median(pure[n]))) for n in SCALING_SIZES])
    n = SCALING_SIZES[-1]
    wins = float(np.mean(pure[n] < path_scaling["input"][n]))
    seconds = path_scaling["seconds"]["pure"] + path_scaling["seconds"]["input"]
    report.update(
        slope=slope,
        medians=[float(np.median(pure[m])) for m in SCALING_SIZES],
        input_median=float(np.median(path_scaling["input"][n])),
        beats_input=wins,
        seconds=seconds,
    )
    assert seconds < 600
    assert slope <= 0.85, f"fitted slope {slope:.3f} > 0.85"
    assert wins >= 0.90, f"pure beats input perturbation in {wins:.0%} of paired trials"


@criterion(4, "Gaussian improvement, approx")
def test_ac4_approx_scaling(path_scaling, report):
    approx, pure = path_scaling["approx"], path_scaling["pure"]
    slope = fit_loglog_slope([(n, float(np.median(approx[n]))) for n in SCALING_SIZES])
    n = SCALING_SIZES[-1]
    frac = float(np.mean(approx[n] <= pure[n]))
    seconds = path_scaling["seconds"]["approx"]
    report.update(
        slope=slope,
        medians=[float(np.median(approx[m])) for m in SCALING_SIZES],
        approx_le_pure=frac,
        seconds=seconds,
    )
    assert seconds < 600
    assert frac >= 0.80, f"approx <= pure in only {frac:.0%} of paired trials"
    assert slope <= 0.70, f"fitted slope {slope:.3f} > 0.70"


# --- 5 ----------------------------------------------------------------------

@criterion(5, "oracle stretch and noisy additive error")
def test_ac5_oracle(report):
    t0 = time.perf_counter()
    rng = make_rng(505)
    checked = 0
    for k in (1, 2, 3):
        for _ in range(10):
            g = generate("erdos_renyi", int(rng.integers(10, 41)), "uniform:1,10", rng, p=0.25)
            d = exact_apsd(g)
            hubs = np.sort(rng.choice(g.n, int(rng.integers(1, min(20, g.n) + 1)), replace=False))
            state = build_oracle(g, hubs, k, PrivacyBudget(NOISE_OFF), "pure", rng)
            for u in hubs.tolist():
                for v in hubs.tolist():
                    q = oracle_query(state, u, v)
                    assert d[u, v] - 1e-9 <= q <= (2 * k - 1) * d[u, v] + 1e-9, (k, u, v, q, d[u, v])
                    checked += 1

    g = generate("erdos_renyi", 128, "uniform:1,10", make_rng(5), p=0.08)
    assert g.is_connected()
    d = exact_apsd(g)
    sizes = (8, 16, 32)
    slopes = {}
    for k in (2, 3):
        medians = []
        for s in sizes:
            alphas = []
            for i in range(10):
                r = make_rng(5000 + 100 * k + i)
                hubs = sample_hubs(g.n, s, r).members
                est = oracle_all_pairs(build_oracle(g, hubs, k, PrivacyBudget(1.0), "pure", r)).estimates
                alpha = stretch_violation(est, d[np.ix_(hubs, hubs)], 2 * k - 1)
                assert math.isfinite(alpha)
                alphas.append(alpha)
            medians.append(float(np.median(alphas)))
        slopes[k] = fit_loglog_slope(list(zip(sizes, medians)))
    elapsed = time.perf_counter() - t0
    report.update(noise_off_pairs=checked, slope_k2=slopes[2], slope_k3=slopes[3], seconds=elapsed)
    assert elapsed < 180
    # k = 3 is the smallest k whose theory exponent 1 + 1/k lies below 1.5.
    assert slopes[3] < 1.5, f"alpha slope vs |S| is {slopes[3]:.3f} for k=3"


# --- 6 ----------------------------------------------------------------------

@criterion(6, "reduction exactness")
def test_ac6_reduction(report):
    t0 = time.perf_counter()
    rng = make_rng(606)
    checked = 0
    for m in (2, 3, 4):
        p = grid_ppls(m)
        base = reduce_to_apsd(path_system_from_ppls(p), metrize(p), np.zeros(p.N, dtype=int))
        for _ in range(20):
            z = rng.integers(0, 2, p.N)
            inst = instantiate(base, z)
            check = verify_reduction(inst)
            assert check, check.failures[:3]
            d = exact_apsd(inst.graph)
            A = incidence_matrix(p)
            for e in inst.paths:
                assert math.isclose(d[e.u_in, e.v_out] - e.offset, float(A[e.pi_index] @ z), abs_tol=1e-9 * max(1, e.offset))
            checked += len(inst.paths)
    elapsed = time.perf_counter() - t0
    report.update(paths_checked=checked, seconds=elapsed)
    assert elapsed < 60


# --- 7 ----------------------------------------------------------------------

def random_feasible_problem(rng):
    n = int(rng.integers(1, 65))
    m = int(rng.integers(0, 2 * n + 1))
    kind = int(rng.integers(3))
    if kind == 0:
        V = (rng.random((m, n)) < rng.uniform(0.1, 0.9)).astype(float)
    elif kind == 1:
        V = rng.standard_normal((m, n))
    else:
        V = rng.integers(-2, 3, (m, n)).astype(float)
    # Smallest common threshold meeting the feasibility test, plus slack.
    base = math.sqrt(16 * math.log(max(16 * m / n, 1.0))) if m else 1.0
    c = base + rng.uniform(0.1, 3.0, m)
    start = rng.uniform(-1, 1, n) * rng.random()
    return PartialColoringProblem(V, c, start)


@criterion(7, "partial-coloring contract")
def test_ac7_partial_coloring(report):
    t0 = time.perf_counter()
    rng = make_rng(707)
    bad_i = bad_ii = 0
    for _ in range(200):
        prob = random_feasible_problem(rng)
        assert prob.feasible()
        col = partial_coloring(prob, rng)
        x = np.asarray(col.x, dtype=float)
        V = prob.vectors.toarray()
        move = np.abs(V @ (x - prob.start))
        bound = prob.c * np.linalg.norm(V, axis=1)
        if not np.all(move <= bound + 1e-7 * np.maximum(1.0, bound)):
            bad_i += 1
        if not (np.all(np.abs(x) <= 1) and 2 * int(np.sum(np.abs(x) == 1)) >= prob.n):
            bad_ii += 1
    elapsed = time.perf_counter() - t0
    report.update(violations_i=bad_i, violations_ii=bad_ii, seconds=elapsed)
    assert bad_i == 0 and bad_ii == 0
    assert elapsed < 120


# --- 8 ----------------------------------------------------------------------

@criterion(8, "discrepancy sandwich and grid scaling")
def test_ac8_discrepancy(report):
    t0 = time.perf_counter()
    rng = make_rng(808)
    matrices = [incidence_matrix(grid_ppls(2)), incidence_matrix(grid_ppls(3))]
    for _ in range(60):
        N = int(rng.integers(1, 13))
        D = int(rng.integers(1, 16))
        matrices.append((rng.random((D, N)) < rng.uniform(0.2, 0.8)).astype(int))
    sandwiched = 0
    for A in matrices:
        full = full_coloring(A, rng)
        assert full.value >= brute_force_disc(A, 1.0)
        for gamma in (0.25, 0.5, 0.75):
            res = gamma_coloring(A, gamma, 1.0, rng)
            assert res.value >= brute_force_disc(A, gamma)
        sandwiched += 1

    sides = (16, 32, 64)
    medians = []
    for m in sides:
        p = grid_ppls(m)
        vals = [full_coloring_ppls(p, 1.0, make_rng(8000 + 10 * m + i)).value for i in range(3)]
        medians.append(float(np.median(vals)))
    slope = fit_loglog_slope([(m * m, v) for m, v in zip(sides, medians)])
    elapsed = time.perf_counter() - t0
    report.update(matrices=sandwiched, grid_values=medians, slope=slope, seconds=elapsed)
    assert elapsed < 300
    assert slope <= 0.4


# --- 9 ----------------------------------------------------------------------

def recompose(ledger) -> tuple[float, float]:
    eps, delta = [], []
    for c in ledger:
        if c.composition == "advanced":
            g = c.group_total
            per_eps = g.epsilon / (2 * math.sqrt(2 * c.count * math.log(2 / g.delta)))
            per_delta = g.delta / (2 * c.count)
            assert math.isclose(c.epsilon, per_eps, rel_tol=1e-12)
            assert math.isclose(c.delta, per_delta, rel_tol=1e-12)
            eps.append(g.epsilon)
            delta.append(g.delta)
        else:
            eps.append(c.epsilon * c.count)
            delta.append(c.delta * c.count)
    return math.fsum(eps), math.fsum(delta)


_GRAPHS = [generate(k, 24, "uniform:1,5", make_rng(9), p=0.3) for k in ("path", "grid", "erdos_renyi")]
_AC9_ELAPSED = []


@criterion(9, "budget accounting")
@settings(max_examples=100, deadline=None, derandomize=True, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    mode=st.sampled_from(["pure", "approx", "oracle_pure", "oracle_approx", "input"]),
    eps=st.floats(0.05, 1.0),
    log_delta=st.floats(-9, -3),
    k=st.integers(1, 3),
    graph=st.integers(0, len(_GRAPHS) - 1),
    seed=st.integers(0, 2**31),
)
def test_ac9_budget_accounting(report, mode, eps, log_delta, k, graph, seed):
    t0 = time.perf_counter()
    delta = 10.0**log_delta if mode in ("approx", "oracle_approx") else 0.0
    cfg = AlgoConfig(mode, PrivacyBudget(eps, delta), k=k if mode.startswith("oracle") else None)
    est = run_config(_GRAPHS[graph], cfg, make_rng(seed))
    assert est.accountant is not None and est.accountant.ledger
    got_eps, got_delta = recompose(est.accountant.ledger)
    assert math.isclose(got_eps, eps, rel_tol=1e-12)
    assert math.isclose(got_delta, delta, rel_tol=1e-12, abs_tol=0.0)
    _AC9_ELAPSED.append(time.perf_counter() - t0)
    total = math.fsum(_AC9_ELAPSED)
    report.update(configs=len(_AC9_ELAPSED), seconds=total)
    assert total < 5


# --- 10 -----------------------------------------------------------------------

@criterion(10, "sampler calibration")
def test_ac10_samplers(report):
    t0 = time.perf_counter()
    n = 10**6
    r = make_rng(1010)
    lap2 = laplace_noise(2.0, n, r)
    lap1 = laplace_noise(1.0, n, r)
    g3 = gaussian_noise(3.0, n, r)
    g1 = gaussian_noise(1.0, n, r)
    stats = {
        "laplace_var": float(lap2.var()),
        "laplace_tail": float(np.mean(np.abs(lap1) > math.log(100))),
        "gauss_var": float(g3.var()),
        "gauss_tail": float(np.mean(g1 > 1.96)),
    }
    elapsed = time.perf_counter() - t0
    report.update(**stats, seconds=elapsed)
    assert 7.76 <= stats["laplace_var"] <= 8.24
    assert 0.008 <= stats["laplace_tail"] <= 0.012
    assert 8.7 <= stats["gauss_var"] <= 9.3
    assert 0.023 <= stats["gauss_tail"] <= 0.027
    assert elapsed < 30
