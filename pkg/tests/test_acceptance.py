"""Acceptance criteria 1-8.

Each test records a one-line PASS/FAIL verdict (printed in the pytest
terminal summary by ``conftest.py``) and then asserts it.  The flow runs
shared by criteria 4-8 are executed twice through the CLI writer so that
criterion 8 can compare the monitor CSV bytes.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from curvflow import lemmas as lab
from curvflow.cones import cone_ratio
from curvflow.cli import execute_run, sphere_comparison
from curvflow.estimates import (
    cylindrical_trend,
    decay_fit,
    harmonic_alpha,
    nonincreasing_per_step,
    series,
    speed_floor,
    theorem_trend,
)
from curvflow.flow import ProfileConfig, RunConfig, Status, sphere_exact, sphere_speed_constant
from curvflow.speed import (
    SpeedSpec,
    eval_speed,
    grad_eigen,
    hess_eigen,
    matrix_first_derivative,
    matrix_second_form,
)

from oracles import fd_directional_second, fd_gradient, fd_hessian, speed_bruteforce

SEED = 20240601
CASES = [(n, k, rho) for n in (4, 5, 6) for k in range(3, n) for rho in (1.0, 0.5, 0.05)]


def record(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    assert passed, f"criterion {number}: {detail}"


def cone_points(rng, n, k, count, min_margin=0.1):
    """Vectorized rejection sampling of sorted tuples with k-margin >= min_margin (trace normalized to n)."""
    out, have = [], 0
    while have < count:
        z = np.sort(rng.normal(size=(4 * count, n)) + rng.uniform(0.2, 2.0, size=(4 * count, 1)), axis=1)
        tr = z.sum(axis=1)
        ok = (tr > 0) & (z[:, :k].sum(axis=1) >= min_margin * np.where(tr > 0, tr, 1))
        z = z[ok] / tr[ok, None] * n
        out.append(z)
        have += len(z)
    return np.concatenate(out)[:count]


# ----- criterion 1 -----------------------------------------------------------------


def test_criterion_1_speed_calculus_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    per_case = math.ceil(1000 / len(CASES))
    worst = {"grad": 0.0, "hess": 0.0, "form": 0.0}
    points = 0
    for n, k, rho in CASES:
        spec = SpeedSpec(n, k, rho)
        Z = cone_points(rng, n, k, per_case)
        for z in Z:
            f = lambda v: speed_bruteforce(np.sort(v), k, rho)  # noqa: E731
            g = grad_eigen(spec, z)
            worst["grad"] = max(worst["grad"], np.max(np.abs(g - fd_gradient(f, z, 1e-6)) / np.abs(g)))
            H = hess_eigen(spec, z)
            worst["hess"] = max(worst["hess"], np.max(np.abs(H - fd_hessian(f, z, 1e-4))) / np.max(np.abs(H) + 1e-300))
            q, r = np.linalg.qr(rng.normal(size=(n, n)))
            O = q * np.sign(np.diag(r))
            M = O @ np.diag(z) @ O.T
            M = 0.5 * (M + M.T)
            B = rng.normal(size=(n, n))
            B = 0.5 * (B + B.T)
            fm = lambda A: speed_bruteforce(np.linalg.eigvalsh(A), k, rho)  # noqa: E731
            exact = matrix_second_form(spec, M, B)
            fd = fd_directional_second(fm, M, B, 1e-3)
            worst["form"] = max(worst["form"], abs(exact - fd) / max(abs(exact), 1e-2 * np.sum(B * B) / z.sum()))
            points += 1
    elapsed = time.perf_counter() - start
    passed = worst["grad"] <= 1e-6 and worst["hess"] <= 1e-4 and worst["form"] <= 1e-4 and elapsed < 60
    record(1, passed, f"{points} points; worst rel err grad {worst['grad']:.2e}, hess {worst['hess']:.2e}, "
                      f"second form {worst['form']:.2e}; {elapsed:.1f}s")


# ----- criterion 2 -----------------------------------------------------------------


def test_criterion_2_structural_identities():
    rng = np.random.default_rng(SEED + 1)
    per_case = math.ceil(10_000 / len(CASES))
    bad = {"homogeneity": 0, "permutation": 0, "euler": 0, "radial_kernel": 0, "orthogonal": 0}
    total = 0
    for n, k, rho in CASES:
        spec = SpeedSpec(n, k, rho)
        z = cone_points(rng, n, k, per_case, min_margin=0.02)
        t = rng.uniform(0.01, 100, size=(len(z), 1))
        g, d, H = eval_speed(spec, z), grad_eigen(spec, z), hess_eigen(spec, z)
        hom = (
            (np.abs(eval_speed(spec, t * z) - t[:, 0] * g) > 1e-12 * t[:, 0] * g)
            | (np.max(np.abs(grad_eigen(spec, t * z) - d), axis=1) > 1e-10 * np.max(d, axis=1))
            | (np.max(np.abs(hess_eigen(spec, t * z) * t[:, :, None] - H), axis=(1, 2))
               > 1e-9 * np.max(np.abs(H), axis=(1, 2)))
        )
        bad["homogeneity"] += int(hom.sum())
        perm = np.argsort(rng.random((len(z), n)), axis=1)
        zp = np.take_along_axis(z, perm, axis=1)
        bad["permutation"] += int(np.sum(np.abs(eval_speed(spec, zp) - g) > 1e-14 * g))
        bad["euler"] += int(np.sum(np.abs(np.sum(d * z, axis=1) - g) > 1e-12 * g))
        Hz = np.einsum("cpq,cq->cp", H, z)
        scale = np.max(np.abs(H), axis=(1, 2)) * np.max(np.abs(z), axis=1)
        bad["radial_kernel"] += int(np.sum(np.max(np.abs(Hz), axis=1) > 1e-10 * scale))
        q, r = np.linalg.qr(rng.normal(size=(len(z), n, n)))
        O = q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]
        q, r = np.linalg.qr(rng.normal(size=(len(z), n, n)))
        P = q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]
        Z = np.einsum("cip,cp,cjp->cij", O, z, O)
        Z = 0.5 * (Z + np.swapaxes(Z, 1, 2))
        PZ = P @ Z @ np.swapaxes(P, 1, 2)
        PZ = 0.5 * (PZ + np.swapaxes(PZ, 1, 2))
        lhs = matrix_first_derivative(spec, PZ)
        rhs = P @ matrix_first_derivative(spec, Z) @ np.swapaxes(P, 1, 2)
        bad["orthogonal"] += int(np.sum(np.max(np.abs(lhs - rhs), axis=(1, 2)) > 1e-10 * np.max(d, axis=1)))
        total += len(z)
    record(2, not any(bad.values()), f"{total} samples per identity; violations {bad}")


# ----- criterion 3 -----------------------------------------------------------------


def test_criterion_3_lemma_suite():
    start = time.perf_counter()
    violations = {}
    for rho in (1.0, 0.5, 0.05):
        spec = SpeedSpec(4, 3, rho)
        s = lab.SliceSampler(spec, 7.0, SEED, 100_000)
        z = s.draw()
        for check in (lab.check_sandwich, lab.check_first_order, lab.check_second_order):
            r = check(s, z)
            violations[f"{r.lemma}@{rho:g}"] = r.violation_count
        mu = 1.0 / (2.0 * (1.0 + 1e-10) * harmonic_alpha(spec))
        r = lab.check_min_eig_derivative(lab.SliceSampler(spec, 1.0 / mu, SEED, 100_000), mu)
        violations[f"{r.lemma}@{rho:g}"] = r.violation_count
    infs = {}
    for n, k, rho in CASES:
        spec = SpeedSpec(n, k, rho)
        s = lab.SliceSampler(spec, 1.3 * cone_ratio(spec, np.ones(n)), SEED, 3000)
        infs[(n, k, rho)] = lab.estimate_grad_constant(s, iterations=100).estimates["inv_C_hat"].value
    elapsed = time.perf_counter() - start
    smallest = min(infs, key=infs.get)
    passed = not any(violations.values()) and min(infs.values()) > 0 and elapsed < 300
    record(3, passed, f"violations {sum(violations.values())} over {len(violations)} checks x 1e5 samples; "
                      f"smallest gradient quotient inf {infs[smallest]:.4g} at (n,k,rho)={smallest}; {elapsed:.0f}s")


# ----- shared flow runs (criteria 4-8) ----------------------------------------------


def sphere_config():
    return RunConfig(SpeedSpec(4, 3, 1.0), ProfileConfig("sphere", R=1.0, N=400), stop_G_factor=25.0,
                     output_stride=5000, seed=SEED)


def neck_config():
    cfg = RunConfig(SpeedSpec(4, 3, 0.05), ProfileConfig("neck", 1.0, 0.2, 8.0, 400), output_stride=500, seed=SEED)
    g0 = float(np.max(eval_speed(cfg.spec, _initial_lam(cfg))))
    return RunConfig(**{**cfg.__dict__, "stop_G_max": 1e3 * g0, "stop_G_factor": None})


def _initial_lam(cfg):
    from curvflow.flow import initial_state

    return initial_state(cfg).field.lam


def monotonicity_configs():
    rng = np.random.default_rng(SEED)
    out = {"cylinder_perturbation": RunConfig(
        SpeedSpec(4, 3, 0.3), ProfileConfig("cylinder", R=1.0, L=6.0, N=200, jitter=0.05),
        stop_G_factor=20.0, output_stride=200, seed=SEED)}
    for i in range(3):
        rho = float(10 ** rng.uniform(-1.3, 0))
        prof = ProfileConfig("neck", R=1.0, a=float(rng.uniform(0.1, 0.3)), L=float(rng.uniform(5.0, 10.0)), N=200,
                             phase=float(rng.uniform(0, 2 * np.pi)))
        out[f"neck_{i}"] = RunConfig(SpeedSpec(4, 3, rho), prof, stop_G_factor=20.0, output_stride=200, seed=SEED)
    return out


def all_configs():
    return {"sphere": sphere_config(), "neck": neck_config(), **monotonicity_configs()}


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """Two independent executions of every flow run, written through the CLI writer."""
    passes = []
    for p in range(2):
        results = {}
        for name, cfg in all_configs().items():
            out = tmp_path_factory.mktemp(f"pass{p}_{name}")
            result, summary = execute_run(cfg, out)
            results[name] = (result, summary, out / "monitors.csv")
        passes.append(results)
    return passes


@pytest.mark.slow
def test_criterion_4_sphere_benchmark(runs):
    result, _, _ = runs[0]["sphere"]
    cmp = sphere_comparison(result)
    spec = result.config.spec
    c = sphere_speed_constant(spec)
    # floor with c_hat = 1.125 along the closed-form speed c / r(t)
    t = series(result.monitors, "t")
    t = t[t < 0.99 * (1 / (2 * c))]
    exact_G = c / sphere_exact(spec, 1.0, t)
    floor = speed_floor(exact_G[0], t, 1.125)
    closed_form_ok = bool(np.all(exact_G >= floor))
    passed = (result.status is Status.BLOW_UP and cmp["radius_ok"] and closed_form_ok
              and cmp["speed_floor"]["reference"]["ok"] and cmp["smallest_compared_radius"] < 0.0501)
    record(4, passed, f"max rel radius error {cmp['max_relative_error']:.2e} down to r={cmp['smallest_compared_radius']:.4f}; "
                      f"floor c_hat=1.125 holds (simulated: {cmp['speed_floor']['reference']['ok']}, "
                      f"closed form: {closed_form_ok}); equality constant 2/c={2 / c:.6g} "
                      f"worst margin {cmp['speed_floor']['exact']['worst_relative_margin']:.1e}")


@pytest.mark.slow
def test_criterion_5_ratio_monotonicity(runs):
    names = ["sphere", "cylinder_perturbation", "neck_0", "neck_1", "neck_2"]
    worst_rise, worst_ident, details = -np.inf, 0.0, []
    ok = True
    for name in names:
        result, _, _ = runs[0][name]
        mono, rise = nonincreasing_per_step(series(result.monitors, "max_H_over_Grho"), rtol=1e-7)
        rho = result.config.spec.rho
        for snap in result.snapshots:
            f = snap.field
            G1 = eval_speed(SpeedSpec(4, 3, 1.0), f.lam)
            lhs = f.H / f.G
            resid = np.max(np.abs(lhs - (rho * f.H / G1 + 1 - rho)) / lhs)
            worst_ident = max(worst_ident, float(resid))
        ok &= mono and result.status is Status.BLOW_UP
        worst_rise = max(worst_rise, rise)
        details.append(f"{name}(rho={rho:.3g}) rise {rise:.1e}")
    passed = ok and worst_ident <= 1e-12
    record(5, passed, f"worst relative rise {worst_rise:.1e}, identity residual {worst_ident:.1e}; " + ", ".join(details))


@pytest.mark.slow
def test_criterion_6_neckpinch_convexity_trend(runs):
    result, _, _ = runs[0]["neck"]
    rows = result.monitors
    trend = theorem_trend(rows)
    fit = decay_fit(series(rows, "max_neg_l1_over_Grho_hi"), series(rows, "max_G"))
    passed = result.status is Status.BLOW_UP and trend["ok"] and fit.sigma > 0 and fit.r2 >= 0.8
    record(6, passed, f"{result.status.value} after {result.steps} steps; {trend['windows']} windows, "
                      f"median {trend['medians'][0]:.4g} -> {trend['medians'][-1]:.4g}; "
                      f"sigma={fit.sigma:.3f}, r2={fit.r2:.3f}")


@pytest.mark.slow
def test_criterion_7_cylindrical_trend(runs):
    result, _, _ = runs[0]["neck"]
    trend = cylindrical_trend(result.monitors, result.params)
    alpha1 = result.params.alpha1
    passed = trend["ok"] and alpha1 == pytest.approx(6.0)
    record(7, passed, f"max H/G_1 at peak {trend['max_ratio']:.4f} <= alpha_bar {result.params.alpha_bar:.4f}: "
                      f"{trend['bounded_by_alpha_bar']}; final-decade median max {trend['max_final_decade_median']:.4f} "
                      f"vs alpha_1 + 0.1 = {alpha1 + 0.1:.4f}")


@pytest.mark.slow
def test_criterion_8_determinism(runs):
    first, second = runs
    same = {name: first[name][2].read_bytes() == second[name][2].read_bytes() for name in first}
    record(8, all(same.values()), f"byte-identical monitor CSVs: {same}")
