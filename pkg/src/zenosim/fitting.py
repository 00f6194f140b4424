"""Curve fits for loss-probability scans.

Three model families are supported:

* ``inverse_n``: ``P = a / N + b`` (linear least squares),
* ``damped_sinusoid``: ``P = A e^{-g t} sin(w t + phi) + c (1 - A' e^{-g' t})``
  (Levenberg-Marquardt with periodogram multi-start); the ``tied`` variant
  fixes ``A' = A``, ``g' = g``, ``c = 1``,
* ``quadratic_vertex``: ``P = a (I - I0)^2 + c`` (linear least squares in
  ``{I^2, I, 1}`` converted to vertex form).

The estimator classes at the bottom wrap the same functions behind the
scikit-learn ``fit``/``predict`` interface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.signal import lombscargle
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import ConvergenceError, FitError

TIED_NAMES = ("A", "gamma", "omega", "phi")
FREE_NAMES = ("A", "gamma", "omega", "phi", "c", "A2", "gamma2")


@dataclass
class FitResult:
    """Fitted parameters with residual diagnostics.

    ``uncertainties`` holds bootstrap standard deviations when requested;
    ``history`` is the cost after every accepted Levenberg-Marquardt step.
    """

    family: str
    params: dict
    residual_rms: float
    r_squared: float
    converged: bool
    iterations: int = 0
    flags: dict = field(default_factory=dict)
    uncertainties: Optional[dict] = None
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"family": self.family, "params": dict(self.params),
               "residual_rms": self.residual_rms, "r_squared": self.r_squared,
               "converged": self.converged, "iterations": self.iterations,
               "flags": dict(self.flags)}
        if self.uncertainties is not None:
            out["uncertainties"] = dict(self.uncertainties)
        return out


# ---------------------------------------------------------------------------
# input handling and diagnostics


def as_xy(x, y=None, sigma=None):
    """Normalize the accepted point formats to float arrays ``(x, y, sigma)``.

    ``x`` may be an array (with ``y``), a ScanResult, or a sequence of
    ``(param, value[, stderr])`` tuples or objects with ``param``/``loss_prob``.
    """
    if y is None:
        if hasattr(x, "points"):
            x = x.points
        rows = list(x)
        if rows and hasattr(rows[0], "param"):
            x = [r.param for r in rows]
            y = [r.loss_prob for r in rows]
            sigma = [r.stderr for r in rows] if sigma is None else sigma
        else:
            arr = np.asarray(rows, dtype=float)
            if arr.ndim != 2 or arr.shape[1] not in (2, 3):
                raise FitError("points must be (param, value[, stderr]) rows")
            x, y = arr[:, 0], arr[:, 1]
            if arr.shape[1] == 3 and sigma is None:
                sigma = arr[:, 2]
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise FitError(f"x and y lengths differ ({len(x)} vs {len(y)})")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FitError("non-finite data")
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float).ravel()
    return x, y, sigma


def _diagnostics(y, model):
    res = y - model
    ss_res = float(res @ res)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    return math.sqrt(ss_res / len(y)), min(r2, 1.0)


# ---------------------------------------------------------------------------
# model functions


def inverse_n_model(n, a, b):
    return a / np.asarray(n, dtype=float) + b


def quadratic_vertex_model(i, a, i0, c):
    return a * (np.asarray(i, dtype=float) - i0) ** 2 + c


def damped_sinusoid_model(t, A, gamma, omega, phi, c=1.0, A2=None, gamma2=None):
    """``A e^{-gamma t} sin(omega t + phi) + c (1 - A2 e^{-gamma2 t})``.

    ``A2`` and ``gamma2`` default to ``A`` and ``gamma`` (the tied envelope).
    """
    t = np.asarray(t, dtype=float)
    A2 = A if A2 is None else A2
    gamma2 = gamma if gamma2 is None else gamma2
    return (A * np.exp(-gamma * t) * np.sin(omega * t + phi)
            + c * (1 - A2 * np.exp(-gamma2 * t)))


def _tied(p, t):
    A, g, w, ph = p
    e = np.exp(-g * t)
    s, co = np.sin(w * t + ph), np.cos(w * t + ph)
    f = A * e * (s - 1) + 1
    jac = np.column_stack([e * (s - 1), -t * A * e * (s - 1), A * e * t * co, A * e * co])
    return f, jac


def _free(p, t):
    A, g, w, ph, c, A2, g2 = p
    e, e2 = np.exp(-g * t), np.exp(-g2 * t)
    s, co = np.sin(w * t + ph), np.cos(w * t + ph)
    f = A * e * s + c * (1 - A2 * e2)
    jac = np.column_stack([e * s, -t * A * e * s, A * e * t * co, A * e * co,
                           1 - A2 * e2, -c * e2, c * A2 * t * e2])
    return f, jac


# ---------------------------------------------------------------------------
# Levenberg-Marquardt


@dataclass
class LMOutcome:
    p: np.ndarray
    cost: float
    converged: bool
    iterations: int
    history: list


def levenberg_marquardt(fun: Callable, p0, y, weights=None, lam0: float = 1e-3,
                        up: float = 3.0, down: float = 2.0, max_iter: int = 200,
                        rtol: float = 1e-10) -> LMOutcome:
    """Minimize ``sum(w (y - f(p))^2)`` where ``fun(p) -> (f, jacobian)``.

    Marquardt-scaled damping: the normal matrix diagonal is inflated by
    ``lam``, which is multiplied by ``up`` after a rejected step and divided
    by ``down`` after an accepted one.  Convergence is declared when an
    accepted step changes the cost by less than ``rtol`` relatively (or the
    cost itself underflows to zero).
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _lm(fun, p0, y, weights, lam0, up, down, max_iter, rtol)


def _lm(fun, p0, y, weights, lam0, up, down, max_iter, rtol):
    p = np.asarray(p0, dtype=float).copy()
    sw = np.ones_like(y) if weights is None else np.sqrt(np.asarray(weights, float))
    f, jac = fun(p)
    r = (y - f) * sw
    cost = float(r @ r)
    history = [cost]
    lam = lam0
    it = 0
    converged = cost <= 1e-30
    while not converged and it < max_iter:
        it += 1
        jw = jac * sw[:, None]
        a = jw.T @ jw
        g = jw.T @ r
        d = np.diag(a).copy()
        d[d <= 0] = 1e-12
        try:
            step = np.linalg.solve(a + lam * np.diag(d), g)
        except np.linalg.LinAlgError:
            lam *= up
            continue
        p_new = p + step
        f_new, jac_new = fun(p_new)
        r_new = (y - f_new) * sw
        cost_new = float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new <= cost:
            rel = (cost - cost_new) / max(cost, 1e-300)
            p, f, jac, r, cost = p_new, f_new, jac_new, r_new, cost_new
            history.append(cost)
            lam = max(lam / down, 1e-15)
            if rel < rtol or cost <= 1e-30:
                converged = True
        else:
            lam *= up
            if lam > 1e16:
                # no descent direction left: a stationary point
                converged = bool(np.max(np.abs(g)) <= 1e-8 * (1 + cost))
                break
    return LMOutcome(p, cost, converged, it, history)


# ---------------------------------------------------------------------------
# fitters


def fit_inverse_n(x, y=None, sigma=None, bootstrap: int = 0, seed: int = 0) -> FitResult:
    """Least-squares fit of ``P = a / N + b`` (exact minimizer via the normal basis)."""
    n, p, _ = as_xy(x, y, sigma)
    if len(n) < 3:
        raise FitError("fit_inverse_n needs at least 3 points")
    if np.any(n == 0):
        raise FitError("N = 0 has no 1/N term")
    if len(np.unique(n)) < 2:
        raise FitError("rank deficient: all N are equal")
    basis = np.column_stack([1.0 / n, np.ones_like(n)])
    coef, *_ = np.linalg.lstsq(basis, p, rcond=None)
    a, b = (float(v) for v in coef)
    rms, r2 = _diagnostics(p, basis @ coef)
    res = FitResult("inverse_n", {"a": a, "b": b}, rms, r2, True, 1)
    if bootstrap:
        res.uncertainties = bootstrap_uncertainty(fit_inverse_n, n, p, bootstrap, seed)
    return res


def fit_quadratic_vertex(x, y=None, domain_max: Optional[float] = None, sigma=None,
                         bootstrap: int = 0, seed: int = 0) -> FitResult:
    """Fit ``P = a (I - I0)^2 + c`` on ``I <= domain_max``.

    A best fit with ``a <= 0`` (concave or flat) cannot be written with a
    minimum; it is returned with ``converged=False`` and
    ``flags["model_mismatch"] = True``.
    """
    i, p, _ = as_xy(x, y, sigma)
    if domain_max is not None:
        keep = i <= domain_max
        i, p = i[keep], p[keep]
    if len(i) < 4:
        raise FitError("fit_quadratic_vertex needs at least 4 points in the domain")
    if len(np.unique(i)) < 3:
        raise FitError("rank deficient: fewer than 3 distinct abscissae")
    basis = np.column_stack([i**2, i, np.ones_like(i)])
    coef, *_ = np.linalg.lstsq(basis, p, rcond=None)
    c2, c1, c0 = (float(v) for v in coef)
    rms, r2 = _diagnostics(p, basis @ coef)
    scale = (np.ptp(p) + 1e-300) / np.ptp(i) ** 2
    mismatch = c2 <= 1e-9 * scale
    if c2 != 0:
        i0 = -c1 / (2 * c2)
        c = c0 - c2 * i0**2
    else:
        i0 = c = math.nan
    res = FitResult("quadratic_vertex", {"a": c2, "I0": float(i0), "c": float(c)}, rms, r2,
                    not mismatch, 1, {"model_mismatch": bool(mismatch)})
    if bootstrap:
        res.uncertainties = bootstrap_uncertainty(
            lambda a, b: fit_quadratic_vertex(a, b), i, p, bootstrap, seed)
    return res


def periodogram_peaks(t, y, n_peaks: int = 3, n_freq: int = 2000):
    """Angular frequencies of the strongest Lomb-Scargle peaks of detrended data."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    span = np.ptp(t)
    dt = np.median(np.diff(np.sort(t)))
    trend = np.polyval(np.polyfit(t, y, 2), t)
    resid = y - trend
    if np.allclose(resid, 0):
        resid = y - y.mean()
    w = np.linspace(np.pi / span, np.pi / dt, n_freq)
    power = lombscargle(t, resid, w, precenter=True)
    inner = np.flatnonzero((power[1:-1] > power[:-2]) & (power[1:-1] >= power[2:])) + 1
    if len(inner) == 0:
        inner = np.array([int(np.argmax(power))])
    best = inner[np.argsort(power[inner])[::-1][:n_peaks]]
    return w[best]


def _normalize_sinusoid(p, variant="free"):
    # A -> -A, phi -> phi + pi is a symmetry only when A does not also set the baseline
    p = np.array(p, dtype=float)
    if p[0] < 0 and variant == "free":
        p[0] = -p[0]
        p[3] += np.pi
    if p[2] < 0:
        p[2], p[3] = -p[2], np.pi - p[3]
    p[3] = p[3] % (2 * np.pi)
    return p


def _linear_start(t, y, omega, gamma, variant, gamma2=0.1):
    """Starting point from a linear solve at fixed decay rates and frequency."""
    e = np.exp(-gamma * t)
    if variant == "tied":
        # y - 1 = A e (sin - 1) -> fit u = A cos(phi), v = A sin(phi), plus A for the -1
        basis = np.column_stack([e * np.sin(omega * t), e * np.cos(omega * t)])
        coef, *_ = np.linalg.lstsq(basis, y - 1 + 0.5 * e, rcond=None)
        amp = math.hypot(*coef)
        phi = math.atan2(coef[1], coef[0])
        return np.array([amp if amp > 0 else 0.1, gamma, omega, phi])
    e2 = np.exp(-gamma2 * t)
    basis = np.column_stack([e * np.sin(omega * t), e * np.cos(omega * t),
                             np.ones_like(t), e2])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    amp = math.hypot(coef[0], coef[1])
    phi = math.atan2(coef[1], coef[0])
    c = coef[2] if abs(coef[2]) > 1e-12 else 1e-3
    return np.array([amp, gamma, omega, phi, c, -coef[3] / c, gamma2])


def fit_damped_sinusoid(x, y=None, variant: str = "tied", sigma=None,
                        n_peaks: int = 3, spread: float = 0.2, max_iter: int = 200,
                        bootstrap: int = 0, seed: int = 0) -> FitResult:
    """Damped-sinusoid fit by Levenberg-Marquardt with multi-start over ``omega``.

    Starting frequencies are the top ``n_peaks`` periodogram peaks of the
    detrended data and their ``+-spread`` perturbations; for each, the
    amplitude and phase start from a linear solve.  The best local minimum is
    returned with ``phi`` in ``[0, 2 pi)`` and, for the free variant, ``A >= 0``
    (in the tied variant ``A`` also scales the baseline, so its sign is kept).

    Raises
    ------
    FitError
        Fewer than 8 points, or the fitted period is not spanned by the data.
    ConvergenceError
        No start converged within ``max_iter`` iterations.
    """
    t, p, s = as_xy(x, y, sigma)
    if variant not in ("tied", "free"):
        raise FitError(f"unknown variant {variant!r}")
    if len(t) < 8:
        raise FitError("fit_damped_sinusoid needs at least 8 points")
    order = np.argsort(t)
    t, p = t[order], p[order]
    weights = None
    if s is not None:
        s = s[order]
        floor = max(float(np.median(s[s > 0])) if np.any(s > 0) else 1.0, 1e-12) * 1e-3
        weights = 1.0 / np.maximum(s, floor) ** 2
    fun_base = _tied if variant == "tied" else _free
    names = TIED_NAMES if variant == "tied" else FREE_NAMES
    omegas = []
    for w in periodogram_peaks(t, p, n_peaks):
        omegas.extend([w, w * (1 - spread), w * (1 + spread)])
    gammas = (0.0, 0.05, 0.15)
    best = None
    for w in omegas:
        for g in gammas:
            p0 = _linear_start(t, p, w, g, variant)
            out = levenberg_marquardt(lambda q: fun_base(q, t), p0, p, weights,
                                      max_iter=max_iter)
            if not np.all(np.isfinite(out.p)):
                continue
            key = (not out.converged, out.cost)
            if best is None or key < (not best.converged, best.cost):
                best = out
    if best is None or not best.converged:
        raise ConvergenceError(
            f"damped-sinusoid fit did not converge within {max_iter} iterations")
    q = _normalize_sinusoid(best.p, variant)
    if np.ptp(t) * q[2] < 2 * np.pi * (1 - 1e-9):
        raise FitError(
            f"data span {np.ptp(t):.3g} covers less than one period 2pi/omega = "
            f"{2 * np.pi / q[2]:.3g}")
    model, _ = fun_base(q, t)
    rms, r2 = _diagnostics(p, model)
    res = FitResult(f"damped_sinusoid_{variant}", dict(zip(names, map(float, q))), rms, r2,
                    True, best.iterations, {}, None, best.history)
    if bootstrap:
        res.uncertainties = bootstrap_uncertainty(
            lambda a, b: fit_damped_sinusoid(a, b, variant, n_peaks=n_peaks,
                                             max_iter=max_iter), t, p, bootstrap, seed)
    return res


def bootstrap_uncertainty(fitter: Callable, x, y, n_resamples: int = 200,
                          seed: int = 0) -> dict:
    """Standard deviation of each parameter over seeded bootstrap resamples.

    Resample ``i`` draws its indices from a generator seeded by the ``i``-th
    child of ``SeedSequence(seed)``, so results do not depend on execution
    order.  Resamples whose fit fails are skipped.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    children = np.random.SeedSequence(seed).spawn(n_resamples)
    draws = []
    for ss in children:
        idx = np.random.default_rng(ss).integers(0, len(x), len(x))
        try:
            draws.append(fitter(x[idx], y[idx]).params)
        except (FitError, np.linalg.LinAlgError):
            continue
    if not draws:
        raise FitError("every bootstrap resample failed")
    return {k: float(np.std([d[k] for d in draws], ddof=1)) if len(draws) > 1 else 0.0
            for k in draws[0]}


# ---------------------------------------------------------------------------
# scikit-learn style estimators


def _column(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError("expected a single feature column")
        X = X[:, 0]
    return X


class InverseNRegressor(RegressorMixin, BaseEstimator):
    """``P = a / N + b`` as a scikit-learn regressor (one feature: N)."""

    def __init__(self, n_bootstrap: int = 0, random_state: int = 0):
        self.n_bootstrap = n_bootstrap
        self.random_state = random_state

    def fit(self, X, y):
        self.result_ = fit_inverse_n(_column(X), y, bootstrap=self.n_bootstrap,
                                     seed=self.random_state)
        self.a_, self.b_ = self.result_.params["a"], self.result_.params["b"]
        return self

    def predict(self, X):
        return inverse_n_model(_column(X), self.a_, self.b_)


class DampedSinusoidRegressor(RegressorMixin, BaseEstimator):
    """Damped-sinusoid loss model as a scikit-learn regressor (one feature: tau)."""

    def __init__(self, variant: str = "tied", n_peaks: int = 3, max_iter: int = 200,
                 n_bootstrap: int = 0, random_state: int = 0):
        self.variant = variant
        self.n_peaks = n_peaks
        self.max_iter = max_iter
        self.n_bootstrap = n_bootstrap
        self.random_state = random_state

    def fit(self, X, y):
        self.result_ = fit_damped_sinusoid(_column(X), y, self.variant,
                                           n_peaks=self.n_peaks, max_iter=self.max_iter,
                                           bootstrap=self.n_bootstrap,
                                           seed=self.random_state)
        self.params_ = dict(self.result_.params)
        return self

    def predict(self, X):
        return damped_sinusoid_model(_column(X), **self.params_)


class QuadraticVertexRegressor(RegressorMixin, BaseEstimator):
    """Vertex-form quadratic as a scikit-learn regressor (one feature: I)."""

    def __init__(self, domain_max: Optional[float] = None):
        self.domain_max = domain_max

    def fit(self, X, y):
        self.result_ = fit_quadratic_vertex(_column(X), y, domain_max=self.domain_max)
        self.a_ = self.result_.params["a"]
        self.I0_ = self.result_.params["I0"]
        self.c_ = self.result_.params["c"]
        return self

    def predict(self, X):
        return quadratic_vertex_model(_column(X), self.a_, self.I0_, self.c_)


FITTERS = {
    "inverse_n": fit_inverse_n,
    "damped_sinusoid": fit_damped_sinusoid,
    "quadratic_vertex": fit_quadratic_vertex,
}
