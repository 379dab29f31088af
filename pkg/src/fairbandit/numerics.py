"""Numerical kernels shared by every policy.

Least-squares fits, predictive variances, the standard normal quantile and
seeded random streams. Everything here is a pure function of its inputs.
"""
from __future__ import annotations

import math
import zlib

import numpy as np
from scipy import linalg

DEFAULT_RIDGE = 1e-6

__all__ = [
    "DEFAULT_RIDGE",
    "InvalidInputError",
    "SingularSystemError",
    "ols_fit",
    "ols_fit_gram",
    "predictive_variance",
    "batch_fit",
    "normal_cdf",
    "normal_quantile",
    "interval_halfwidth",
    "rng_stream",
]


class InvalidInputError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    pass


def _as_design(X, d=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, d if d is not None else 0)
    if X.ndim != 2:
        raise InvalidInputError(f"design matrix must be 2-D, got shape {X.shape}")
    if d is not None and X.shape[1] != d:
        raise InvalidInputError(f"design matrix has {X.shape[1]} columns, expected {d}")
    return X


def _cholesky(A):
    """Cholesky factor of an SPD matrix; raises SingularSystemError otherwise."""
    try:
        c, lower = linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularSystemError("Gram matrix is not positive definite") from exc
    diag = np.diag(c)
    scale = max(float(np.max(np.abs(np.diag(A)))), 1.0) if A.size else 1.0
    if A.size and float(np.min(diag)) ** 2 <= A.shape[0] * np.finfo(float).eps * scale:
        raise SingularSystemError("Gram matrix is numerically singular")
    return c, lower


def ols_fit_gram(gram, xty, ridge: float = 0.0) -> np.ndarray:
    """Solve ``(gram + ridge*I) beta = xty``."""
    if ridge < 0:
        raise InvalidInputError("ridge must be nonnegative")
    gram = np.asarray(gram, dtype=float)
    xty = np.asarray(xty, dtype=float)
    d = xty.shape[0]
    if gram.shape != (d, d):
        raise InvalidInputError(f"Gram shape {gram.shape} does not match target length {d}")
    factor = _cholesky(gram + ridge * np.eye(d))
    return linalg.cho_solve(factor, xty)


def ols_fit(X, Y, ridge: float = 0.0) -> np.ndarray:
    """Ridge-regularized least squares, argmin ||X b - Y||^2 + ridge ||b||^2.

    With ``ridge=0`` this is plain OLS and requires ``X.T @ X`` to be full rank.
    """
    X = _as_design(X)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if X.shape[0] != Y.shape[0]:
        raise InvalidInputError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} values")
    return ols_fit_gram(X.T @ X, X.T @ Y, ridge)


def predictive_variance(X, x, sigma2: float = 1.0, ridge: float = 0.0) -> float:
    """sigma2 * x^T (X^T X + ridge I)^{-1} x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    X = _as_design(X, d=x.shape[0])
    if sigma2 <= 0:
        raise InvalidInputError("sigma2 must be positive")
    if ridge < 0:
        raise InvalidInputError("ridge must be nonnegative")
    if not np.any(x):
        return 0.0
    factor = _cholesky(X.T @ X + ridge * np.eye(x.shape[0]))
    v = float(x @ linalg.cho_solve(factor, x))
    return sigma2 * max(v, 0.0)


def batch_fit(grams, xtys, contexts, ridge: float):
    """Coefficients and quadratic forms for a stack of regularized Gram systems.

    ``grams`` is (k, d, d), ``xtys`` is (k, d) and ``contexts`` is (k, d).
    Returns ``(coef, quad)`` where ``coef[j]`` solves system j and
    ``quad[j] = contexts[j] @ inv(A_j) @ contexts[j]``.
    """
    grams = np.asarray(grams, dtype=float)
    k, d, _ = grams.shape
    A = grams + ridge * np.eye(d)
    rhs = np.concatenate([np.asarray(xtys)[:, :, None], np.asarray(contexts)[:, :, None]], axis=2)
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    coef = sol[:, :, 0]
    quad = np.einsum("kd,kd->k", contexts, sol[:, :, 1])
    return coef, np.maximum(quad, 0.0)


# Wichura (1988) PPND16 coefficients.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coefs, x):
    acc = 0.0
    for c in reversed(coefs):
        acc = acc * x + c
    return acc


def _ppnd16(p: float) -> float:
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = math.sqrt(-math.log(min(p, 1.0 - p)))
    if r <= 5.0:
        r -= 1.6
        z = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        z = _poly(_E, r) / _poly(_F, r)
    return -z if q < 0 else z


_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


def _lower_quantile(p: float) -> float:
    # p <= 0.5, so z <= 0 and erfc keeps full relative accuracy in the tail
    z = _ppnd16(p)
    pdf = math.exp(-0.5 * z * z) / _SQRT2PI
    if pdf > 0.0:
        z -= (normal_cdf(z) - p) / pdf
    return z


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"quantile probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return _lower_quantile(p)
    # 1 - p is exact for p in [0.5, 1)
    return -_lower_quantile(1.0 - p)


def interval_halfwidth(variance: float, tail_prob: float) -> float:
    """Nonnegative radius sqrt(variance) * Q(1 - tail_prob)."""
    if not 0.0 < tail_prob < 0.5:
        raise InvalidInputError(f"tail probability must lie in (0, 0.5), got {tail_prob}")
    if variance < 0:
        raise InvalidInputError("variance must be nonnegative")
    if variance == 0:
        return 0.0
    return math.sqrt(variance) * -normal_quantile(tail_prob)


def _purpose_code(purpose) -> int:
    if isinstance(purpose, (int, np.integer)):
        return int(purpose)
    return zlib.crc32(str(purpose).encode("utf-8"))


def rng_stream(seed: int, purpose="default", trial: int = 0) -> np.random.Generator:
    """Generator keyed by ``seed`` and the stream id ``(trial, purpose)``.

    Equal keys reproduce the same draws; distinct keys give independent
    streams through numpy's SeedSequence spawn keys.
    """
    if seed < 0 or trial < 0:
        raise InvalidInputError("seed and trial must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial), _purpose_code(purpose)))
    return np.random.Generator(np.random.PCG64(ss))
