"""Acceptance criteria A1-A10, one PASS/FAIL line each.

The physics scans run on the default 4096-point grid with 256 thermal
samples and take several minutes in total.  Criteria that the model cannot
meet are asserted anyway and fail; the numbers are printed either way.
"""
import math
import time

import numpy as np
import pytest

from zenosim.config import parse_config
from zenosim.fitting import (damped_sinusoid_model, fit_damped_sinusoid, fit_inverse_n,
                             fit_quadratic_vertex, inverse_n_model, quadratic_vertex_model)
from zenosim.grid import Grid, gaussian_state
from zenosim.io import scan_csv
from zenosim.measurement import composite_transport_operator
from zenosim.oracle import check_coherent_period, check_free_dispersion, \
    check_split_step_vs_dense
from zenosim.propagator import stationary_state
from zenosim.protocols import (EnsembleSpec, RunSetup, first_order_zeno, run_pulse_width_scan,
                               run_strength_scan, run_zeno_scan)
from zenosim.units import PhysicalParams, ground_state_width
from zenosim.windows import MeasurementWindow

pytestmark = pytest.mark.slow

P = PhysicalParams()
SETUP = RunSetup(absorbing=0.1)
TAUS = np.round(np.arange(0.25, 14.01, 0.25), 2)


@pytest.fixture
def report(capsys):
    def emit(label, passed, detail):
        with capsys.disabled():
            print(f"\n{label}: {'PASS' if passed else 'FAIL'} | {detail}")
        return passed
    return emit


@pytest.fixture(scope="module")
def pulse_width_scans():
    return {i: run_pulse_width_scan(TAUS, 30.0, 15, i, SETUP) for i in (1.0, 0.5)}


def test_a1_free_dispersion(report):
    out = check_free_dispersion(P)
    ok = out["passed"] and out["seconds"] < 5.0
    report("A1 free dispersion", ok,
           f"relative error {out['value']:.2e} (< 1e-6), {out['seconds']:.2f} s (< 5 s)")
    assert ok


def test_a2_dense_oracle(report):
    out = check_split_step_vs_dense(P)
    report("A2 split-step vs dense oracle", out["passed"],
           f"infidelity {out['value']:.2e} (< 1e-6) on a 128-point grid")
    assert out["passed"]


def test_a3_coherent_period(report):
    out = check_coherent_period(P)
    report("A3 coherent-state period", out["passed"], f"fidelity {out['value']:.6f} (> 0.999)")
    assert out["passed"]


def test_a4_zeno_scaling(report):
    ns = [1, 2, 3, 5, 10, 15, 20, 30]
    start = time.perf_counter()
    sr = run_zeno_scan(ns, 45.0, 0.4, SETUP)
    seconds = time.perf_counter() - start
    loss = sr.loss
    monotone = bool(np.all(np.diff(loss[1:]) <= 1e-12))
    fit = fit_inverse_n(sr.params, loss)
    # zero-temperature trajectory, instantaneous projections onto the ground state
    win = MeasurementWindow(radius=P.waist, profile="bound_subspace", n_modes=1,
                            depth=P.trap_depth, waist=P.waist, kappa=P.kappa)
    cold = RunSetup(ensemble=EnsembleSpec(v_th=0.0, initial="ground"), window=win,
                    recapture=win)
    big = [30, 40, 60]
    cold_sr = run_zeno_scan(big, 45.0, 0.0, cold, placement="after")
    phi0 = stationary_state("gaussian", P.trap_depth, P.waist)
    closed, product = [], []
    for pt in cold_sr.points:
        z = first_order_zeno(int(pt.param), 45.0, phi0, kappa=P.kappa)
        closed.append(abs(z.closed_form / pt.loss_prob - 1))
        product.append(abs(z.product / pt.loss_prob - 1))
    ok_scan = monotone and fit.r_squared >= 0.95 and seconds < 120
    ok_theory = max(closed) < 0.10
    report("A4 Zeno scaling", ok_scan and ok_theory,
           f"losses {', '.join(f'{v:.3g}' for v in loss)}, non-increasing N>=2 {monotone}, "
           f"a/N+b R^2 {fit.r_squared:.3f} (>= 0.95), scan {seconds:.0f} s (< 120 s); "
           f"closed form vs zero-T scan rel. dev. {np.round(closed, 2).tolist()} at N={big} "
           f"(< 0.10), exact product form {max(product):.1e}")
    assert ok_scan
    assert ok_theory, "the mean-energy closed form tends to half the exact loss"


def test_a5_oscillation_frequency(report, pulse_width_scans):
    omega = {i: fit_damped_sinusoid(sr.params, sr.loss, "free").params["omega"]
             for i, sr in pulse_width_scans.items()}
    target = 2 * P.omega
    err = abs(omega[1.0] / target - 1)
    ratio = omega[1.0] / omega[0.5]
    ok = err < 0.15 and abs(ratio / math.sqrt(2) - 1) < 0.10
    report("A5 loss-oscillation frequency", ok,
           f"omega full {omega[1.0]:.3f} vs 2 Omega {target:.3f} ({err:.1%}, < 15%); "
           f"full/half {ratio:.3f} vs sqrt 2 ({abs(ratio / math.sqrt(2) - 1):.1%}, < 10%)")
    assert ok


def test_a6_inert_dwell_time(report, pulse_width_scans):
    full = pulse_width_scans[1.0].meta["inert_dwell_time"]
    half = pulse_width_scans[0.5].meta["inert_dwell_time"]
    shift = abs(half / full - 1) if full and half else math.inf
    ok = shift < 0.25
    report("A6 inert dwell time", ok,
           f"full depth {full} us, half depth {half} us, shift {shift:.0%} (< 25%)")
    assert ok


def test_a7_transport(report):
    psi = gaussian_state(Grid(), 0.0, ground_state_width(P), 0.0)
    final = {}
    for n in (20, 40):
        out = composite_transport_operator(psi, n, 0.1, 0.4, 1.4, P.trap_depth, params=P)
        final[n] = (out.final_mean_x, out.survival)
    close = all(abs(final[n][0] / (0.1 * n) - 1) < 0.10 for n in final)
    alive = all(final[n][1] > 0.5 for n in final)
    ratio = final[40][0] / final[20][0]
    ok = close and alive and abs(ratio - 2.0) <= 0.1
    report("A7 transport", ok,
           f"final x {final[20][0]:.3f} um (N=20), {final[40][0]:.3f} um (N=40), "
           f"survival {final[20][1]:.3f}/{final[40][1]:.3f} (> 0.5), "
           f"ratio {ratio:.3f} (2.0 +- 0.1)")
    assert close and alive
    assert abs(ratio - 2.0) <= 0.1, "lag behind the moving trap differs between N=20 and N=40"


def test_a8_strength_crossover(report):
    levels = np.round(np.arange(0.0, 1.01, 0.1), 2)
    res = run_strength_scan(levels, (5, 15), 0.4, 30.0,
                            RunSetup(mode="unitary", absorbing=0.1))
    sr = res[15]
    onset = sr.meta["plateau_onset"]
    seg = sr.params <= onset
    monotone = bool(np.all(np.diff(sr.loss[seg]) <= 1e-12))
    fit = fit_quadratic_vertex(sr.params[seg], sr.loss[seg]) if seg.sum() >= 4 else None
    fit_ok = fit is not None and fit.converged and fit.params["a"] > 0
    ordered = res[15].meta["plateau_loss"] < res[5].meta["plateau_loss"]
    ok = monotone and fit_ok and ordered
    a = fit.params["a"] if fit is not None else float("nan")
    report("A8 strength crossover", ok,
           f"N=15 onset I={onset}, non-increasing {monotone}, quadratic a={a:.3g} (> 0); "
           f"plateau N=15 {res[15].meta['plateau_loss']:.2e} < N=5 "
           f"{res[5].meta['plateau_loss']:.2e}: {ordered}")
    assert ok


def test_a9_fit_kernels(report):
    worst = {}
    n = np.array([1, 2, 3, 5, 10, 15, 20, 30], float)
    r = fit_inverse_n(n, inverse_n_model(n, 2.99, -0.09))
    worst["inverse_n"] = max(abs(r.params["a"] / 2.99 - 1), abs(r.params["b"] / -0.09 - 1))
    tau = np.arange(2.0, 14.01, 0.5)
    cases = {"tied": ("tied", dict(A=0.5, gamma=0.11, omega=1.77, phi=1.94)),
             "free": ("free", dict(A=0.415, gamma=0.09, omega=1.19, phi=2.12, c=0.83,
                                 A2=0.5, gamma2=0.11))}
    for key, (variant, true) in cases.items():
        r = fit_damped_sinusoid(tau, damped_sinusoid_model(tau, **true), variant)
        worst[key] = max(abs(r.params[k] / v - 1) for k, v in true.items())
    x = np.round(np.arange(0.0, 0.61, 0.1), 2)
    for key, (a, i0, c) in {"N5": (1.56, 0.63, 0.37), "N10": (1.40, 0.55, 0.28),
                            "N15": (2.05, 0.55, 0.14)}.items():
        r = fit_quadratic_vertex(x, quadratic_vertex_model(x, a, i0, c))
        worst[key] = max(abs(r.params["a"] / a - 1), abs(r.params["I0"] / i0 - 1),
                         abs(r.params["c"] / c - 1))
    ok = max(worst.values()) <= 0.01
    report("A9 fit-kernel exactness", ok,
           "worst relative error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
           + " (<= 1%)")
    assert ok


def test_a10_determinism(report):
    cfg = parse_config({"protocol": {"name": "zeno", "N_list": [1, 5, 15]},
                        "ensemble": {"n_samples": 64, "rng_seed": 11}})
    texts = []
    for workers in (1, 3):
        p = cfg.protocol
        sr = run_zeno_scan(p.N_list, p.T, p.tau, cfg.setup(workers))
        texts.append(scan_csv(sr, cfg.config_hash(), cfg.seed).encode())
    ok = texts[0] == texts[1]
    report("A10 determinism", ok,
           f"two runs (1 and 3 workers) give byte-identical CSV ({len(texts[0])} bytes)")
    assert ok
