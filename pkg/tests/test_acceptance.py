"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line into the terminal summary. Tolerances are pinned here and
nowhere else."""

import math
import time
from collections import defaultdict

import numpy as np
import pytest

from conftest import detect_run, record_acceptance
from uavlink.config import default_config
from uavlink.metrics import beta_factor, cpdf, kw_distance
from uavlink.heatmap import census_transform, rank_transform
from uavlink.preprocess import METRIC_REGISTRY, MetricSeries, cubic_spline_smooth, impute
from uavlink.relations import partial_corr_trend, pearson, spearman
from uavlink.simulate import run_simulation
from uavlink.traceio import write_trace_csv

from test_metrics import cpdf_oracle
from test_preprocess import EXPECTED_TABLE, dense_solve_second_derivatives, spline_eval_oracle
from test_relations import pearson_oracle, rank_oracle, residual_oracle

AFFECTED = {(3, 2), (2, 1), (1, 0)}
EVENT_START, EVENT_END = 100.0, 200.0
ALPHA = 0.05


def _check(criterion: str, ok: bool, detail: str):
    record_acceptance(f"{criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"{criterion}: {detail}"


def first_violation_start(verdicts, mr: str, grace_s: float = 5.0):
    hits = [
        v.t_start
        for v in verdicts
        if v.mr == mr
        and v.violated
        and tuple(v.link) in AFFECTED
        and v.t_end >= EVENT_START
        and v.t_start <= EVENT_END + grace_s
    ]
    return min(hits, default=None)


def pre_onset_rates(verdicts):
    viol = defaultdict(int)
    total = defaultdict(int)
    for v in verdicts:
        if v.t_end <= EVENT_START:
            total[v.mr] += 1
            if v.violated:
                viol[v.mr] += 1
    return {mr: viol[mr] / total[mr] for mr in total}


def test_c1_end_to_end_default_scenario():
    """C1: default chain, fixed seed: MR7/MR8 fire within 5 windows,
    pre-onset violations stay inside the false-positive budget, and the
    whole pass completes within 10 s."""
    cfg, _ = default_config()
    t0 = time.perf_counter()
    result, detection = detect_run(cfg)
    elapsed = time.perf_counter() - t0

    d7 = first_violation_start(detection.verdicts, "MR7")
    d8 = first_violation_start(detection.verdicts, "MR8")
    rates = pre_onset_rates(detection.verdicts)
    worst = max(rates.values())
    ok = (
        d7 is not None
        and d7 - EVENT_START <= 5.0
        and d8 is not None
        and d8 - EVENT_START <= 5.0
        and worst <= 2 * ALPHA
        and elapsed <= 10.0
    )
    _check(
        "C1 end-to-end detection",
        ok,
        f"MR7 first={d7}, MR8 first={d8}, worst pre-onset rate={worst:.3f}, "
        f"runtime={elapsed:.2f}s",
    )


def test_c2_throughput_relation_beats_queue_drop(failure_batch):
    """C2: over 20 seeds the throughput relation detects with recall >= 0.9
    and no more delay than the queue-drop auxiliary relation."""
    delays7, delaysq = [], []
    detected7 = 0
    for _seed, _result, _detection, perfs in failure_batch:
        if perfs["MR7"].events_detected:
            detected7 += 1
        if perfs["MR7"].mean_delay_s is not None:
            delays7.append(perfs["MR7"].mean_delay_s)
        if perfs["MRQ"].mean_delay_s is not None:
            delaysq.append(perfs["MRQ"].mean_delay_s)
    recall = detected7 / len(failure_batch)
    mean7 = float(np.mean(delays7)) if delays7 else math.inf
    meanq = float(np.mean(delaysq)) if delaysq else math.inf
    ok = recall >= 0.9 and mean7 <= meanq and len(delaysq) > 0
    _check(
        "C2 qualitative MR ranking",
        ok,
        f"MR7 recall={recall:.2f} ({detected7}/{len(failure_batch)}), "
        f"mean delay MR7={mean7:.1f}s vs MRQ={meanq:.1f}s "
        f"(MRQ detected {len(delaysq)}/{len(failure_batch)})",
    )


def test_c3_localization_accuracy(failure_batch):
    """C3: the PRR heat map localizes node 2 with onset in [100, 105] s in
    at least 18 of 20 seeds."""
    hits = 0
    for _seed, _result, detection, _perfs in failure_batch:
        loc = detection.localization
        if loc is not None and loc.node == 2 and 100.0 <= loc.onset_s <= 105.0:
            hits += 1
    ok = hits >= 18
    _check("C3 localization", ok, f"{hits}/{len(failure_batch)} seeds localized correctly")


def test_c4_false_positive_control(clean_batch):
    """C4: anomaly-free runs: per-relation violation rate <= 2*alpha and
    no-anomaly localization in >= 19 of 20 runs."""
    viol = defaultdict(int)
    total = defaultdict(int)
    quiet = 0
    for _seed, _result, detection in clean_batch:
        for v in detection.verdicts:
            total[v.mr] += 1
            if v.violated:
                viol[v.mr] += 1
        if detection.localization is None:
            quiet += 1
    rates = {mr: viol[mr] / total[mr] for mr in total}
    worst_mr, worst = max(rates.items(), key=lambda kv: kv[1])
    ok = worst <= 2 * ALPHA and quiet >= 19
    _check(
        "C4 false-positive control",
        ok,
        f"worst violation rate {worst:.4f} ({worst_mr}), "
        f"no-anomaly in {quiet}/{len(clean_batch)} runs",
    )


def test_c5_statistical_kernels_vs_oracles():
    """C5: correlation kernels match direct-formula references to 1e-12,
    the partial trend matches the residual oracle to 1e-9, and CPDF/KW
    match brute-force enumeration."""
    rng = np.random.default_rng(1234)
    worst_p = worst_s = worst_t = worst_c = 0.0
    for _ in range(100):
        x = rng.normal(size=50)
        y = rng.normal(size=50) + rng.uniform(-1, 1) * x
        rp, _ = pearson(x, y)
        worst_p = max(worst_p, abs(rp - pearson_oracle(x, y)))
        rs, _ = spearman(x, y)
        worst_s = max(worst_s, abs(rs - pearson_oracle(rank_oracle(x), rank_oracle(y))))
        t = np.arange(50.0)
        z = rng.normal(size=50)
        xt = rng.uniform(-2, 2) * t + rng.uniform(-3, 3) * z + rng.normal(size=50)
        rt, _ = partial_corr_trend(t, xt, z, kind="pearson")
        worst_t = max(worst_t, abs(rt - residual_oracle(t, xt, z)))
    for _ in range(200):
        n = int(rng.integers(1, 21))
        v = list(rng.random(n) < rng.uniform(0.1, 0.9))
        for lag in (1, 3, 5):
            got = cpdf(v, lag)
            ref = cpdf_oracle(v, lag)
            worst_c = max(worst_c, max(abs(a - b) for a, b in zip(got, ref)))
        a, b = rng.random((2, max(1, n)))
        direct = sum(abs(p - q) for p, q in zip(a, b)) / len(a)
        worst_c = max(worst_c, abs(kw_distance(a, b) - direct))
    ok = worst_p < 1e-12 and worst_s < 1e-12 and worst_t < 1e-9 and worst_c < 1e-12
    _check(
        "C5 statistical kernels",
        ok,
        f"pearson err={worst_p:.2e}, spearman err={worst_s:.2e}, "
        f"partial trend err={worst_t:.2e}, cpdf/kw err={worst_c:.2e}",
    )


def test_c6_beta_factor_bounds_and_endpoints():
    """C6: beta stays in [0,1] on 1000 random vectors; iid Bernoulli(0.5)
    (n=10^4) scores < 0.1; a maximally bursty vector scores > 0.9."""
    rng = np.random.default_rng(99)
    in_bounds = True
    for _ in range(1000):
        n = int(rng.integers(2, 300))
        v = list(rng.random(n) < rng.uniform(0.02, 0.98))
        b = beta_factor(v, 5)
        if b is not None and not 0.0 <= b <= 1.0:
            in_bounds = False
    iid = beta_factor(list(rng.random(10_000) < 0.5), 5)
    bursty = beta_factor([True] * 5000 + [False] * 5000, 5)
    ok = in_bounds and iid < 0.1 and bursty > 0.9
    _check(
        "C6 beta-factor endpoints",
        ok,
        f"bounds ok={in_bounds}, iid beta={iid:.4f} (<0.1), bursty beta={bursty:.4f} (>0.9)",
    )


def test_c7_morphological_invariance():
    """C7: rank and census transforms are bit-identical under the monotone
    rescalings v -> 3v+11 and v -> exp(v), 100 random maps."""
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(100):
        m = rng.random((int(rng.integers(5, 16)), int(rng.integers(3, 10)))) * 4.0 - 2.0
        for f in (lambda v: 3.0 * v + 11.0, np.exp):
            if not np.array_equal(rank_transform(m, 3), rank_transform(f(m), 3)):
                ok = False
            if not np.array_equal(census_transform(m, 3), census_transform(f(m), 3)):
                ok = False
    _check("C7 morphological invariance", ok, "rank/census identical under 3v+11 and exp(v)")


def test_c8_preprocessing_fidelity():
    """C8: the imputation registry reproduces all 10 table rows; the spline
    interpolates knots to 1e-9 and matches the dense tridiagonal oracle at
    100 interior queries."""
    table_ok = len(METRIC_REGISTRY) == 10
    for d in METRIC_REGISTRY:
        mtype, level, imp = EXPECTED_TABLE[d.name]
        if d.measurement_type != mtype or d.level != level:
            table_ok = False
        if math.isinf(imp) != math.isinf(d.imputation_value):
            table_ok = False
        if not math.isinf(imp) and d.imputation_value != imp:
            table_ok = False
        series = MetricSeries(d.column, np.arange(3.0), np.array([2.0, np.nan, 4.0]))
        filled = impute(series, d)
        expected = 40.0 if math.isinf(imp) else imp
        if filled.values[1] != pytest.approx(expected):
            table_ok = False

    rng = np.random.default_rng(8)
    t = np.sort(rng.uniform(0.0, 20.0, 15))
    t[0], t[-1] = 0.0, 20.0
    y = rng.normal(size=15) * 5.0
    knot_err = float(np.max(np.abs(cubic_spline_smooth(t, y, t) - y)))
    q = np.linspace(t[0] + 0.01, t[-1] - 0.01, 100)
    oracle = spline_eval_oracle(t, y, dense_solve_second_derivatives(t, y), q)
    oracle_err = float(np.max(np.abs(cubic_spline_smooth(t, y, q) - oracle)))
    ok = table_ok and knot_err < 1e-9 and oracle_err < 1e-9
    _check(
        "C8 preprocessing fidelity",
        ok,
        f"table ok={table_ok}, knot err={knot_err:.2e}, oracle err={oracle_err:.2e}",
    )


def test_c9_determinism_and_conservation(tmp_path, failure_batch, clean_batch):
    """C9: same config+seed gives a byte-identical trace CSV; the per-link
    packet conservation identity holds on every run in the suite."""
    cfg, _ = default_config()
    res_a = run_simulation(cfg)
    res_b = run_simulation(cfg)
    write_trace_csv(res_a.records, tmp_path / "a.csv")
    write_trace_csv(res_b.records, tmp_path / "b.csv")
    identical = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    conserved = True
    runs = [res_a] + [r for _, r, _, _ in failure_batch] + [r for _, r, _ in clean_batch]
    for run in runs:
        per_link = defaultdict(lambda: defaultdict(int))
        for rec in run.records:
            per_link[(rec.link_src, rec.link_dst)][rec.outcome] += 1
        for counts in per_link.values():
            total = sum(counts.values())
            terminal = (
                counts["delivered"]
                + counts["corrupted"]
                + counts["dropped_queue"]
                + counts["lost_link"]
            )
            if total != terminal:
                conserved = False
    ok = identical and conserved
    _check(
        "C9 determinism and conservation",
        ok,
        f"byte-identical={identical}, conservation on {len(runs)} runs={conserved}",
    )
