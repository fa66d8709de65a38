"""Acceptance criteria 1-12.

Each test records a PASS/FAIL line (printed in the terminal summary) and
then asserts. The training-based criteria share module-scoped pipelines
run through the command line, so the whole file takes several minutes.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from cwss.bfgs import BfgsError, CwssMatrix, StopCriteria, default_x0, init_state, run, search_direction
from cwss.bfgs import update_inverse_hessian
from cwss.harness import cli
from cwss.harness.bench import instance_x0
from cwss.harness.dataset import load_dataset
from cwss.harness.verify import contraction_steps, convex_quadratic, sample_state
from cwss.l2o import L2OModel, L2OStrategy, init_run_state, l2o_backward, l2o_forward, meta_loss
from cwss.l2o.checkpoint import load_checkpoint
from cwss.numerics import cholesky_probe, finite_diff_grad
from cwss.problems import gen_least_squares, gen_logistic, gen_logsumexp, least_squares_problem
from cwss.seeding import stream_rng
from cwss.strategies import FixedStep, Hgd, HgdConfig, LineSearch, hgd_refine, hypergradient
from cwss.theory import check_theorem2, gain_radius, monitor_theorem2_contraction, monitor_theorem3
from cwss.theory import verify_gain_inequality
from oracles import scalar_bfgs

SEED = 2024
FD_STEP = 1e-4


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def rel_err(a, b, floor=1e-12):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def desk_problem(family, seed):
    if family == "least_squares":
        return gen_least_squares(60, 120, seed)
    if family == "logistic":
        return gen_logistic(120, 60, 1e-2, seed)
    return gen_logsumexp(120, 20, seed)


def test_criterion_01_gradient_oracle():
    t0 = time.perf_counter()
    worst = {}
    for family in ("least_squares", "logistic", "logsumexp"):
        rng = stream_rng(SEED, f"c1_{family}")
        errs = []
        for i in range(100):
            p = desk_problem(family, SEED + i)
            x = rng.standard_normal(p.n)
            errs.append(rel_err(p.grad(x), finite_diff_grad(p.value, x)))
        worst[family] = max(errs)
    elapsed = time.perf_counter() - t0
    ok = all(v < 1e-5 for v in worst.values()) and elapsed < 30
    detail = ", ".join(f"{k} max rel err {v:.2e}" for k, v in worst.items())
    record(1, ok, f"{detail}; {elapsed:.1f} s")


def test_criterion_02_secant_invariant():
    t0 = time.perf_counter()
    rng = stream_rng(SEED, "c2")
    accepted = secant_bad = chol_bad = 0
    worst = 0.0
    while accepted < 1000:
        n = int(rng.integers(2, 30))
        M = rng.standard_normal((n, n))
        H = M @ M.T / n + 0.1 * np.eye(n)
        # curvature pair from a convex quadratic model, y = B s with B SPD
        N = rng.standard_normal((n, n))
        s = rng.standard_normal(n)
        y = (N @ N.T / n + 0.1 * np.eye(n)) @ s
        Hn, skipped = update_inverse_hessian(H, s, y)
        if skipped:
            continue
        accepted += 1
        r = np.linalg.norm(Hn @ y - s) / np.linalg.norm(s)
        worst = max(worst, r)
        secant_bad += not r <= 1e-10
        chol_bad += not cholesky_probe(Hn)
    elapsed = time.perf_counter() - t0
    ok = secant_bad == 0 and chol_bad == 0 and elapsed < 10
    record(2, ok, f"1000 accepted updates: secant failures {secant_bad} (worst {worst:.1e}), "
                  f"Cholesky failures {chol_bad}; {elapsed:.1f} s")


def test_criterion_03_scalar_reduction():
    worst = 0.0
    for i in range(20):
        p = desk_problem("least_squares", SEED + i)
        x0 = default_x0(p.n, stream_rng(SEED, "c3", i))
        alpha = 1.0 / p.lipschitz
        trace = run(p, x0, FixedStep(alpha), StopCriteria(1e-300, 50), keep_iterates=True)
        ref = scalar_bfgs(p.grad, x0, alpha, 50)
        assert len(trace) == 51
        for rec, xr in zip(trace, ref):
            worst = max(worst, float(np.max(np.abs(rec.x - xr))))
    record(3, worst <= 1e-14, f"max per-coordinate deviation {worst:.1e} over 20 instances x 50 iterations")


def test_criterion_04_hypergradient_exactness():
    rng = stream_rng(SEED, "c4")
    worst = 0.0
    families = ("least_squares", "logistic", "logsumexp")
    for i in range(100):
        p = desk_problem(families[i % 3], SEED + i)
        x = rng.standard_normal(p.n)
        M = rng.standard_normal((p.n, p.n)) / np.sqrt(p.n)
        H = M @ M.T + 0.5 * np.eye(p.n)
        d = H @ p.grad(x)
        P = rng.uniform(0.05, 1.5, p.n) / max(1.0, p.lipschitz * float(np.max(np.abs(d))) / 10)
        hg = hypergradient(p, x, d, CwssMatrix(P))
        fd = np.empty(p.n)
        for j in range(p.n):
            h = 1e-6 * max(1.0, P[j])
            e = np.zeros(p.n)
            e[j] = h
            fd[j] = (p.value(x - (P + e) * d) - p.value(x - (P - e) * d)) / (2 * h)
        worst = max(worst, rel_err(hg, fd))
    record(4, worst < 1e-5, f"max rel err {worst:.2e} over 100 (instance, state, P) triples")


def test_criterion_05_hgd_inner_pattern():
    small = big = 0
    for i in range(200):
        p = desk_problem("least_squares", SEED + i)
        st = init_state(p, default_x0(p.n, stream_rng(SEED, "c5", i)))
        d = search_direction(st)
        _, phis = hgd_refine(p, st.x, d, HgdConfig(eta=1e-4), record=True)
        small += all(b <= a for a, b in zip(phis, phis[1:]))
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                _, phis = hgd_refine(p, st.x, d, HgdConfig(eta=1e-2), record=True)
            big += bool(phis[-1] <= phis[0])
        except BfgsError:
            pass
    ok = small == 200 and big >= 190
    record(5, ok, f"eta=1e-4 monotone on {small}/200; eta=1e-2 final <= identity on {big}/200 (need 190)")


def test_criterion_06_theorem2_contraction():
    checked = violations = 0
    bad_instances = set()
    for i in range(100):
        q = convex_quadratic(SEED + i)
        x0 = default_x0(q.n, stream_rng(SEED, "c6_x0", i))
        rng = stream_rng(SEED, "c6_p", i)
        sources = [
            ("ls", LineSearch(), None),
            ("hgd", Hgd(), None),
            ("scalar_max", LineSearch(), lambda st, g, L: CwssMatrix.scalar(q.n, 2 * g / L)),
            ("diag_uniform", LineSearch(), lambda st, g, L: CwssMatrix(2 * g / L * (1 - rng.uniform(size=q.n)))),
        ]
        for name, strat, override in sources:
            for k, t2, ok, st, P in contraction_steps(q, strat, x0, max_iters=200, p_override=override):
                if t2:
                    checked += 1
                    if not ok:
                        violations += 1
                        bad_instances.add(i)
    record(6, violations == 0 and checked > 0,
           f"{violations} violations in {checked} admissible steps ({len(bad_instances)}/100 quadratics)")


def test_criterion_07_gain_certificate():
    counts = {}
    for family, gen in (("least_squares", lambda s: gen_least_squares(60, 120, s)),
                        ("logsumexp", lambda s: gen_logsumexp(120, 20, s))):
        bad = states = 0
        for i in range(200):
            p = gen(SEED + i)
            st, rmax = sample_state(p, stream_rng(SEED, f"c7_{family}", i))
            d = st.h_inv @ st.grad
            if np.linalg.norm(d) == 0:
                continue
            states += 1
            bad += not verify_gain_inequality(p, st.x, st.h_inv, p.lipschitz, gain_radius(d, rmax))[2]
        counts[family] = (bad, states)
    ok = all(b == 0 for b, _ in counts.values()) and all(s == 200 for _, s in counts.values())
    record(7, ok, ", ".join(f"{k}: {b} violations / {s} states" for k, (b, s) in counts.items()))


def test_criterion_08_l2o_backprop():
    t0 = time.perf_counter()
    rng = stream_rng(SEED, "c8")
    A = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    p = least_squares_problem(A, rng.standard_normal(3))
    m = L2OModel.init(rng)
    x = rng.standard_normal(3)
    M = rng.standard_normal((3, 3))
    d = (M @ M.T / 3 + np.eye(3)) @ p.grad(x)
    rs = init_run_state(3, m.hd, rng, 0.5)
    lam = 1e-3

    def loss():
        P = l2o_forward(m, rs, x, p.grad(x), d)[0]
        return meta_loss(p.value(x - P.p * d), P, lam)

    P, _, tape = l2o_forward(m, rs, x, p.grad(x), d)
    grads = l2o_backward(m, tape, x, d, p.grad(x - P.p * d), P, lam)
    worst, worst_key = 0.0, None
    for key, arr in m.params.items():
        scale = float(np.max(np.abs(grads[key])))
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            vals = []
            for k in (2, 1, -1, -2):
                arr[idx] = orig + k * FD_STEP
                vals.append(loss())
            arr[idx] = orig
            # fourth-order central stencil
            fd = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * FD_STEP)
            # entrywise, relative to the larger of the two values or 1e-6 of the group scale
            e = abs(grads[key][idx] - fd) / max(abs(grads[key][idx]), abs(fd), 1e-6 * scale, 1e-12)
            if e > worst:
                worst, worst_key = e, f"{key}{list(idx)}"
    elapsed = time.perf_counter() - t0
    record(8, worst < 1e-4 and elapsed < 120,
           f"max entrywise rel err {worst:.1e} at {worst_key} over {m.n_params} parameters; {elapsed:.1f} s")


def test_criterion_09_l2o_output_bound():
    rng = stream_rng(SEED, "c9")
    lo, hi = 2.0, 0.0
    for i in range(10_000):
        if i % 100 == 0:
            m = L2OModel.init(rng)
            scale = 10.0 ** rng.uniform(-1, 2)
            for k in m.params:
                m.params[k] = m.params[k] * scale
        n = int(rng.integers(1, 8))
        mag = 10.0 ** rng.uniform(-4, 4)
        P, _, _ = l2o_forward(m, init_run_state(n, m.hd, rng, 10.0 ** rng.uniform(-2, 1)),
                              rng.standard_normal(n) * mag, rng.standard_normal(n) * mag,
                              rng.standard_normal(n) * mag)
        lo, hi = min(lo, float(P.p.min())), max(hi, float(P.p.max()))
    record(9, 0.0 < lo and hi < 2.0, f"10000 forward passes, entries in [{lo:.3g}, {hi!r}]")


# ---- trained pipelines -------------------------------------------------------


def _pipeline(root, config: dict, workers: int):
    cfg_path = root / "config.json"
    root.mkdir(parents=True, exist_ok=True)
    cfg_path.write_text(json.dumps(config))
    data, ck, bench = root / "data", root / "checkpoint.json", root / "bench"
    base = ["--config", str(cfg_path), "--seed", str(SEED)]
    assert cli.main(["generate", *base, "--out", str(data)]) == 0
    assert cli.main(["train", *base, "--data", str(data), "--checkpoint", str(ck), "--out", str(root)]) == 0
    assert cli.main(["bench", *base, "--data", str(data), "--checkpoint", str(ck), "--out", str(bench),
                     "--workers", str(workers)]) == 0
    return {"root": root, "data": data, "checkpoint": ck,
            "summary": json.loads((bench / "summary.json").read_text()),
            "summary_text": (bench / "summary.json").read_text()}


DESK_LS = {"family": "least_squares", "strategies": ["ls", "hgd", "l2o"]}


@pytest.fixture(scope="module")
def desk_ls(tmp_path_factory):
    return _pipeline(tmp_path_factory.mktemp("desk_ls"), DESK_LS, workers=1)


@pytest.fixture(scope="module")
def lse_pipelines(tmp_path_factory):
    out = {}
    for d in (20, 100):
        cfg = {"family": "logsumexp", "dims": {"m": 120, "d": d}, "strategies": ["ls", "l2o"]}
        out[d] = _pipeline(tmp_path_factory.mktemp(f"lse{d}"), cfg, workers=1)
    return out


def _iters(summary, s):
    it = summary["strategies"][s]["iterations"]
    return tuple(math.inf if it[k] is None else it[k] for k in ("median", "iqr"))


def test_criterion_10_speedup_direction(desk_ls, lse_pipelines):
    ls_med, ls_iqr = _iters(desk_ls["summary"], "ls")
    l2o_med, l2o_iqr = _iters(desk_ls["summary"], "l2o")
    reduction = 1.0 - l2o_med / ls_med if math.isfinite(l2o_med) else -math.inf
    full = l2o_med < ls_med and reduction >= 0.15
    directional = l2o_med < ls_med and l2o_iqr <= ls_iqr
    ratios = {}
    for d, pipe in lse_pipelines.items():
        a, _ = _iters(pipe["summary"], "l2o")
        b, _ = _iters(pipe["summary"], "ls")
        ratios[d] = a / b
    trend = ratios[100] <= ratios[20]
    tier = "full" if full else ("directional" if directional else "none")
    ok = (full or directional) and trend
    record(10, ok, f"least squares median iterations l2o {l2o_med} (IQR {l2o_iqr}) vs ls {ls_med} (IQR {ls_iqr}), "
                   f"reduction {reduction:.1%}, tier {tier}; log-sum-exp l2o/ls ratio d=20 {ratios[20]:.3f}, "
                   f"d=100 {ratios[100]:.3f}")


def test_criterion_11_theorem3_trend(desk_ls):
    ds = load_dataset(desk_ls["data"])
    cfg = ds.config
    model = load_checkpoint(desk_ls["checkpoint"])[0]
    flags = []
    for i, p in enumerate(ds.test):
        strat = L2OStrategy(model, stream_rng(cfg.seed, "bench_runstate", i), cfg.meta.hidden_init_std)
        try:
            trace = run(p, instance_x0(cfg.seed, i, p.n), strat, cfg.stop, keep_iterates=True)
        except BfgsError as exc:
            trace = exc.trace
        flags.append(monitor_theorem3([r.p for r in trace[1:]])[1])
    rate = sum(flags) / len(flags)
    record(11, rate >= 0.9, f"final-quartile mean |P-I|_F below first-quartile mean on {sum(flags)}/{len(flags)} "
                            f"held-out runs ({rate:.0%}, need 90%)")


def test_criterion_12_determinism(desk_ls, tmp_path_factory):
    again = _pipeline(tmp_path_factory.mktemp("desk_ls_again"), DESK_LS, workers=2)
    same_summary = again["summary_text"] == desk_ls["summary_text"]
    same_ckpt = again["checkpoint"].read_bytes() == desk_ls["checkpoint"].read_bytes()
    record(12, same_summary and same_ckpt,
           f"repeat run with 2 workers: summary.json identical {same_summary}, checkpoint identical {same_ckpt}")
