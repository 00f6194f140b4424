import numpy as np
import pytest
from hypothesis import given, strategies as st

from zenosim.errors import ConfigError, GridOverflowError
from zenosim.grid import Grid, Wavefunction, edge_probability, gaussian_state, observables


def test_default_grid_layout():
    g = Grid()
    assert g.n_points == 4096
    assert g.dx == 0.00625
    assert g.index_of(0.0) == 2048
    assert g.index_of(0.1) == 2048 + 16
    assert g.index_of(0.003) is None


@pytest.mark.parametrize("kw", [dict(n_points=1000), dict(n_points=8), dict(x_max=-20)])
def test_invalid_grid(kw):
    with pytest.raises(ConfigError):
        Grid(**kw)


def test_nyquist_check():
    g = Grid(-10, 10, 256)
    with pytest.raises(GridOverflowError):
        g.check_nyquist(100.0)
    g.check_nyquist(10.0)


def test_displacement_is_minimum_image():
    g = Grid(-1, 1, 16)
    d = g.displacement(0.875)
    assert np.all(np.abs(d) <= g.length / 2 + 1e-12)


def test_gaussian_moments(small_grid):
    psi = gaussian_state(small_grid, 0.3, 0.05, 40.0)
    obs = observables(psi)
    assert psi.norm() == pytest.approx(1, abs=1e-12)
    assert obs["mean_x"] == pytest.approx(0.3, abs=1e-12)
    assert obs["std_x"] == pytest.approx(0.05, rel=1e-10)
    assert obs["mean_k"] == pytest.approx(40.0, rel=1e-10)


def test_gaussian_rejects_bad_inputs(small_grid):
    with pytest.raises(ValueError):
        gaussian_state(small_grid, 0, small_grid.dx, 0)
    with pytest.raises(ValueError):
        gaussian_state(small_grid, 10.0, 0.05, 0)
    with pytest.raises(ValueError):
        gaussian_state(small_grid, 3.1, 0.3, 0)


def test_wavefunction_validation(small_grid):
    with pytest.raises(ValueError):
        Wavefunction(small_grid, np.zeros(10))
    with pytest.raises(ValueError):
        Wavefunction(small_grid, np.zeros(small_grid.n_points), survival_weight=1.5)


def test_observables_need_normalized_state(small_grid):
    psi = gaussian_state(small_grid, 0, 0.05)
    with pytest.raises(ValueError):
        observables(psi.replace(psi.amplitudes * 2))


@given(st.integers(0, 2**31 - 1))
def test_parseval(seed):
    g = Grid(-1, 1, 64)
    r = np.random.default_rng(seed)
    psi = Wavefunction(g, r.normal(size=64) + 1j * r.normal(size=64))
    assert psi.spectral_norm() == pytest.approx(psi.norm(), rel=1e-12)


@given(st.floats(-0.5, 0.5), st.floats(0.05, 0.2), st.floats(-50, 50))
def test_fidelity_properties(x0, sigma, k0):
    g = Grid(-3.2, 3.2, 1024)
    a = gaussian_state(g, 0.0, 0.1, 0.0)
    b = gaussian_state(g, x0, sigma, k0)
    f = a.fidelity(b)
    assert 0 <= f <= 1 + 1e-12
    assert f == pytest.approx(b.fidelity(a), abs=1e-12)
    assert b.fidelity(b) == pytest.approx(1, abs=1e-12)


def test_absorbing_mask_shape():
    g = Grid(-1, 1, 256)
    m = g.absorbing_mask(0.1)
    assert m.min() == 0 and m.max() == 1
    assert np.all(m[100:156] == 1)


def test_edge_probability_band(small_grid):
    psi = gaussian_state(small_grid, 0, 0.05)
    assert edge_probability(psi.density, small_grid.dx) < 1e-30


def test_wavefunction_csv(small_grid):
    psi = gaussian_state(small_grid, 0, 0.05)
    lines = psi.to_csv().splitlines()
    assert lines[0] == "x,re,im,prob"
    assert len(lines) == small_grid.n_points + 1
