import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zenosim.errors import ConfigError, GridOverflowError
from zenosim.grid import Grid, gaussian_state
from zenosim.potentials import pulse_train
from zenosim.protocols import (Engine, EnsembleSpec, RunSetup, ScanPoint, ScanResult,
                               detect_plateau, first_order_zeno, inert_dwell_time,
                               representative_trace, run_duration_scan,
                               run_pulse_width_scan, run_strength_scan, run_transport,
                               run_zeno_scan)
from zenosim.units import PhysicalParams, ground_state_width
from zenosim.windows import MeasurementWindow

G = Grid(-3.2, 3.2, 1024)


def setup(n=32, **kw):
    return RunSetup(grid=G, ensemble=EnsembleSpec(n_samples=n), **kw)


def test_ensemble_is_seeded(params):
    a = EnsembleSpec(n_samples=16, rng_seed=3).wavevectors(params)
    b = EnsembleSpec(n_samples=16, rng_seed=3).wavevectors(params)
    c = EnsembleSpec(n_samples=16, rng_seed=4).wavevectors(params)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert len(EnsembleSpec(v_th=0.0).wavevectors(params)) == 1


def test_ensemble_spread(params):
    k = EnsembleSpec(n_samples=20000).wavevectors(params)
    assert np.std(k) == pytest.approx(params.temperature / params.kappa, rel=0.02)


@pytest.mark.parametrize("kw", [dict(n_samples=0), dict(v_th=-1), dict(sigma0=0),
                                dict(initial="plane")])
def test_ensemble_validation(kw):
    with pytest.raises(ConfigError):
        EnsembleSpec(**kw)


def test_engine_validation(params):
    with pytest.raises(ConfigError):
        Engine(G, params, MeasurementWindow(), mode="weak")
    with pytest.raises(ConfigError):
        Engine(G, params, MeasurementWindow(), method="rk4")
    with pytest.raises(ConfigError):
        Engine(G, params, MeasurementWindow(radius=0))


def test_reduced_path_equals_direct_path(params):
    s = setup(8)
    amps = s.initial()
    tl = pulse_train(8.0, 5, 0.4, params.trap_depth, placement="inserted")
    fast = s.engine()
    slow = Engine(G, params, fast.window, fast=False)
    assert fast._fast_ok(tl)
    a, b = fast.run(amps, tl), slow.run(amps, tl)
    for key in ("survival", "kept", "x_moment"):
        assert np.allclose(a[key], b[key], rtol=1e-10, atol=1e-14)


def test_reduced_path_with_moving_centres(params):
    from zenosim.potentials import stepped_train
    s = setup(4)
    amps = s.initial()
    tl = stepped_train(6, 0.4, 1.4, params.trap_depth, 0.1)
    fast = s.engine()
    slow = Engine(G, params, fast.window, fast=False)
    a, b = fast.run(amps, tl, 0.5), slow.run(amps, tl, 0.5)
    assert np.allclose(a["kept"], b["kept"], atol=1e-12)
    assert np.allclose(a["x_moment"], b["x_moment"], atol=1e-12)


def test_exact_and_split_step_agree(params):
    tl = pulse_train(6.0, 3, 0.4, params.trap_depth)
    s = setup(4)
    amps = s.initial()
    a = s.engine().run(amps, tl)
    b = Engine(G, params, s.engine().window, method="split-step").run(amps, tl)
    assert np.allclose(a["kept"], b["kept"], atol=1e-7)


def test_zeno_scan_basic(params):
    sr = run_zeno_scan([1, 3, 10], T=12.0, setup=setup(32))
    assert sr.protocol == "zeno"
    assert list(sr.params) == [1, 3, 10]
    assert np.all((sr.loss >= 0) & (sr.loss <= 1))
    assert np.all(sr.stderr >= 0)
    assert sr.loss[0] > sr.loss[-1]
    assert sr.meta["n_samples"] == 32


def test_scan_determinism_and_worker_independence(params):
    a = run_zeno_scan([2, 5], T=10.0, setup=setup(16))
    b = run_zeno_scan([5, 2], T=10.0, setup=setup(16))
    c = run_zeno_scan([2, 5], T=10.0, setup=setup(16, workers=2))
    assert a.to_dict() == b.to_dict() == c.to_dict()


def test_stderr_scales_with_samples(params):
    # free flight judged by a narrow recapture window: loss near one half
    narrow = MeasurementWindow(radius=0.3)
    lo = run_zeno_scan([0], T=12.0, setup=setup(64, recapture=narrow)).stderr[0]
    hi = run_zeno_scan([0], T=12.0, setup=setup(256, recapture=narrow)).stderr[0]
    assert 2 / 1.5 <= lo / hi <= 2 * 1.5


def test_grid_guard_trips(params):
    s = RunSetup(grid=G, ensemble=EnsembleSpec(n_samples=8))
    with pytest.raises(GridOverflowError):
        run_zeno_scan([0], T=200.0, setup=s)


def test_absorbing_mask_prevents_guard(params):
    s = RunSetup(grid=G, ensemble=EnsembleSpec(n_samples=8), absorbing=0.1)
    sr = run_zeno_scan([0], T=200.0, setup=s)
    assert sr.loss[0] > 0.8


def test_nyquist_check_before_run():
    s = RunSetup(grid=Grid(-3.2, 3.2, 256), ensemble=EnsembleSpec(n_samples=4))
    with pytest.raises(GridOverflowError):
        s.initial()


def zero_temperature(params, n_modes=1):
    win = MeasurementWindow(profile="bound_subspace", n_modes=n_modes,
                            depth=params.trap_depth, waist=params.waist, kappa=params.kappa)
    return RunSetup(grid=G, ensemble=EnsembleSpec(v_th=0.0, initial="ground"),
                    window=win, recapture=win)


def test_first_order_product_matches_ideal_scan(params):
    s = zero_temperature(params)
    from zenosim.propagator import stationary_state
    phi0 = stationary_state("gaussian", params.trap_depth, params.waist, 0, G, params.kappa)
    win = s.window
    sr = run_zeno_scan([5, 10, 20], T=5.0, tau=0.0, setup=s, placement="after")
    for n, loss in zip(sr.params, sr.loss):
        pred = first_order_zeno(int(n), 5.0, phi0, win, params.kappa)
        assert pred.product == pytest.approx(loss, rel=1e-8, abs=1e-12)


@given(st.integers(1, 500))
@settings(max_examples=15)
def test_first_order_closed_form_is_one_over_n(n):
    phi0 = gaussian_state(G, 0, 0.05)
    a = first_order_zeno(1, 10.0, phi0)
    b = first_order_zeno(n, 10.0, phi0)
    assert b.closed_form * n == pytest.approx(a.closed_form, rel=1e-12)
    assert b.variance_form * n == pytest.approx(a.variance_form, rel=1e-12)


def test_zeno_limit():
    phi0 = gaussian_state(G, 0, 0.05)
    prods = [first_order_zeno(n, 10.0, phi0).product for n in (10, 100, 1000, 10000)]
    assert all(x > y for x, y in zip(prods, prods[1:]))
    assert prods[-1] < 0.01
    with pytest.raises(ValueError):
        first_order_zeno(0, 10.0, phi0)


def test_variance_form_is_short_time_limit():
    phi0 = gaussian_state(G, 0, 0.1)
    p = first_order_zeno(100000, 10.0, phi0)
    assert p.product == pytest.approx(p.variance_form, rel=1e-3)


def test_detect_plateau():
    x = np.linspace(0, 1, 11)
    y = np.r_[np.linspace(0.5, 0.1, 6), [0.1, 0.1, 0.1, 0.1, 0.1]]
    onset, level = detect_plateau(x, y, 0.005)
    assert onset == pytest.approx(0.5)
    assert level == pytest.approx(0.1)
    assert detect_plateau([1.0], [0.5]) == (None, None)


def _sr(taus, loss):
    return ScanResult("pulse-width", "tau", [ScanPoint(t, l, 0.0, 0.0)
                                             for t, l in zip(taus, loss)])


def test_inert_dwell_time():
    assert inert_dwell_time(_sr([0.5, 1, 1.5, 2, 2.5, 3],
                                [0.3, 0.05, 0.0, 0.02, 0.2, 0.5])) == 2.5
    assert inert_dwell_time(_sr([1, 2], [0.5, 0.6])) is None
    assert inert_dwell_time(_sr([1, 2], [0.0, 0.05])) is None


def test_pulse_width_scan_small(params):
    sr = run_pulse_width_scan([0.2, 0.6], T=6.0, N=3, setup=setup(8))
    assert len(sr.points) == 2
    assert sr.trace is not None and len(sr.trace) > 10
    assert "inert_dwell_time" in sr.meta


def test_strength_scan_small(params):
    res = run_strength_scan([0.0, 0.25, 0.5, 0.75, 1.0], N_list=(2,), T=6.0,
                            setup=setup(8, mode="unitary"))
    sr = res[2]
    assert sr.meta["N"] == 2
    assert "plateau_onset" in sr.meta and "quadratic_fit" in sr.meta
    assert sr.loss[0] >= sr.loss[-1]


def test_duration_scan_small(params):
    res = run_duration_scan([2.0, 4.0], taus=(1.0,), setup=setup(8))
    assert list(res) == [1.0]
    assert list(res[1.0].params) == [2.0, 4.0]


def test_transport_small(params):
    sr = run_transport([2, 4], setup=setup(4))
    assert sr.meta["schedule_speed"] == pytest.approx(0.1 / 1.8)
    assert sr.mean_final_x[1] > sr.mean_final_x[0] > 0


def test_representative_trace_state(params):
    tl = pulse_train(4.0, 2, 0.4, params.trap_depth)
    trace, state = representative_trace(tl, setup(4), dt=0.2, return_state=True)
    assert trace.t[0] == 0.0 and trace.t[-1] == pytest.approx(tl.duration)
    assert 0 < state.norm() <= 1 + 1e-12


@given(st.floats(0.02, 0.2), st.integers(1, 10**4))
@settings(max_examples=20)
def test_first_order_closed_form_is_half_variance_form_for_gaussians(sigma, n):
    # centred Gaussian: Var(k^2) = 2 <k^2>^2, so the mean-energy shortcut is off by 2
    psi = gaussian_state(G, 0.0, sigma, 0.0)
    z = first_order_zeno(n, 45.0, psi)
    assert z.closed_form / z.variance_form == pytest.approx(0.5, rel=1e-6)
