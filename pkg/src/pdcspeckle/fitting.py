"""Curve fits: gain curve k sinh^2(sigma sqrt(P)), line y = a (x - b), power law y = a x^b.

Least squares, unweighted unless ``y_errs`` are given (then 1/y_err^2).
Reported uncertainties are standard errors from the (weighted) normal
equations, scaled by the reduced chi-square.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import FitConvergenceError, FitDomainError, FitError

SIGMA_STARTS = (0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class CurveData:
    xs: np.ndarray
    ys: np.ndarray
    y_errs: np.ndarray | None = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 1:
            raise FitError("xs and ys must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise FitError("non-finite data")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if self.y_errs is not None:
            e = np.asarray(self.y_errs, dtype=float)
            if e.shape != xs.shape or np.any(e <= 0):
                raise FitError("y_errs must be positive and match xs")
            object.__setattr__(self, "y_errs", e)

    def __len__(self):
        return len(self.xs)

    @property
    def weights(self) -> np.ndarray:
        if self.y_errs is None:
            return np.ones_like(self.xs)
        return 1.0 / self.y_errs**2


@dataclass
class FitResult:
    model_id: str
    params: dict[str, float]
    param_errs: dict[str, float]
    residual_rms: float
    n_points: int
    extra: dict[str, float] = field(default_factory=dict)

    def predict(self, x):
        return MODELS[self.model_id](np.asarray(x, dtype=float), **self.params)


def sinh2_model(x, k, sigma):
    return k * np.sinh(sigma * np.sqrt(x)) ** 2


def linear_model(x, a, b):
    return a * (x - b)


def power_model(x, a, b):
    return a * np.power(x, b)


MODELS = {"sinh2": sinh2_model, "linear": linear_model, "powerlaw": power_model}


def _check_size(data: CurveData, n_params: int):
    if len(data) < n_params + 1:
        raise FitError(f"need at least {n_params + 1} points, got {len(data)}")


def _rms(data: CurveData, model, **params) -> float:
    r = data.ys - model(data.xs, **params)
    return float(np.sqrt(np.mean(r * r)))


def _covariance(jac: np.ndarray, resid: np.ndarray, w: np.ndarray) -> np.ndarray:
    n, p = jac.shape
    jw = jac * w[:, None]
    chi2 = float(np.sum(w * resid**2))
    dof = max(n - p, 1)
    try:
        return np.linalg.inv(jac.T @ jw) * (chi2 / dof)
    except np.linalg.LinAlgError:
        return np.full((p, p), np.nan)


def fit_sinh2(data: CurveData, init: dict[str, float] | None = None,
              max_iter: int = 20000) -> FitResult:
    """k sinh^2(sigma sqrt(x)) by Nelder-Mead on (ln k, ln sigma), multi-start."""
    _check_size(data, 2)
    if np.any(data.xs < 0):
        raise FitDomainError("power values must be >= 0")
    x, y, w = data.xs, data.ys, data.weights
    scale = float(np.sum(w * y * y)) or 1.0

    def cost(theta):
        k, s = np.exp(theta)
        with np.errstate(over="ignore", invalid="ignore"):
            r = y - k * np.sinh(s * np.sqrt(x)) ** 2
            f = float(np.sum(w * r * r)) / scale
        return f if np.isfinite(f) else 1e300

    xmax = float(np.max(x))
    ymax = float(np.max(np.abs(y))) or 1.0
    starts = []
    if init is not None:
        starts.append((init["k"], init["sigma"]))
    for s0 in SIGMA_STARTS:
        with np.errstate(over="ignore"):
            denom = np.sinh(s0 * np.sqrt(xmax)) ** 2
        if np.isfinite(denom) and denom > 0:
            starts.append((ymax / denom, s0))

    best = None
    for k0, s0 in starts:
        res = minimize(cost, np.log([k0, s0]), method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": max_iter,
                                "maxfev": 2 * max_iter})
        if best is None or res.fun < best.fun:
            best = res
    k, s = np.exp(best.x)
    if not best.success:
        raise FitConvergenceError(f"simplex did not converge: {best.message}",
                                  best={"k": float(k), "sigma": float(s)})
    sq = np.sqrt(x)
    sh = np.sinh(s * sq)
    jac = np.column_stack([sh**2, k * 2 * sh * np.cosh(s * sq) * sq])
    cov = _covariance(jac, y - sinh2_model(x, k, s), w)
    return FitResult("sinh2", {"k": float(k), "sigma": float(s)},
                     {"k": float(np.sqrt(cov[0, 0])), "sigma": float(np.sqrt(cov[1, 1]))},
                     _rms(data, sinh2_model, k=k, sigma=s), len(data),
                     {"cost": float(best.fun * scale)})


def _weighted_line(x, y, w):
    """Closed-form weighted least squares y = c0 + c1 x; returns coeffs and covariance."""
    sw = np.sum(w)
    xm = np.sum(w * x) / sw
    ym = np.sum(w * y) / sw
    sxx = np.sum(w * (x - xm) ** 2)
    if sxx == 0:
        raise FitDomainError("need at least two distinct x values")
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    icpt = ym - slope * xm
    resid = y - (icpt + slope * x)
    dof = max(len(x) - 2, 1)
    s2 = np.sum(w * resid**2) / dof
    var_slope = s2 / sxx
    var_icpt = s2 * (1 / sw + xm**2 / sxx)
    cov_is = -xm * s2 / sxx
    return icpt, slope, var_icpt, var_slope, cov_is


def fit_linear_shifted(data: CurveData) -> FitResult:
    """y = a (x - b): slope a, and b from the intercept -a b."""
    _check_size(data, 1)
    x, y, w = data.xs, data.ys, data.weights
    c0, a, v0, va, c0a = _weighted_line(x, y, w)
    yscale = np.max(np.abs(y)) + np.ptp(y)
    if abs(a) * np.ptp(x) <= 1e-12 * (yscale or 1.0):
        raise FitDomainError("slope is zero: shift b undefined")
    b = -c0 / a
    # delta method on b = -c0 / a
    db_dc0, db_da = -1 / a, c0 / a**2
    vb = db_dc0**2 * v0 + db_da**2 * va + 2 * db_dc0 * db_da * c0a
    return FitResult("linear", {"a": float(a), "b": float(b)},
                     {"a": float(np.sqrt(va)), "b": float(np.sqrt(max(vb, 0.0)))},
                     _rms(data, linear_model, a=a, b=b), len(data))


def fit_power_law(data: CurveData) -> FitResult:
    """y = a x^b by regression of ln y on ln x."""
    _check_size(data, 1)
    if np.any(data.xs <= 0) or np.any(data.ys <= 0):
        raise FitDomainError("power-law fit needs strictly positive x and y")
    lx, ly = np.log(data.xs), np.log(data.ys)
    # relative y errors become absolute errors in ln y
    w = np.ones_like(lx) if data.y_errs is None else (data.ys / data.y_errs) ** 2
    lna, b, v_lna, vb, _ = _weighted_line(lx, ly, w)
    a = np.exp(lna)
    return FitResult("powerlaw", {"a": float(a), "b": float(b)},
                     {"a": float(a * np.sqrt(v_lna)), "b": float(np.sqrt(vb))},
                     _rms(data, power_model, a=a, b=b), len(data))


FITTERS = {"sinh2": fit_sinh2, "linear": fit_linear_shifted, "powerlaw": fit_power_law}


def fit(model_id: str, data: CurveData) -> FitResult:
    if model_id not in FITTERS:
        raise FitError(f"unknown model {model_id!r}")
    return FITTERS[model_id](data)
