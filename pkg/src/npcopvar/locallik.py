"""
Local log-polynomial density estimation with a Gaussian kernel.

For a Gaussian kernel K_H and a local log-quadratic polynomial P, the local
log-likelihood

    L(P) = sum_j K_H(t_j - s) P(t_j - s) - n * int K_H(z) exp(P(z)) dz

is concave, and its stationarity conditions say that the Gaussian law
proportional to K_H(z) exp(P(z)) has the same mean and covariance as the
kernel-weighted sample of offsets t_j - s. Solving those conditions gives

    log f(s) = log(S0 / n) + 0.5 log(|H| / |Sigma|) - 0.5 m' Sigma^{-1} m

with S0, m, Sigma the kernel-weighted total mass, mean and covariance. The
vectorized estimators below evaluate this directly. ``newton_logquad_2d``
maximizes the same objective numerically (safeguarded Newton, Gauss-Hermite
integrals) and is kept as an independent route for checking and for
non-standard bandwidth matrices.

When the weighted covariance is numerically singular the fit degrades to a
local log-linear polynomial, and when the kernel mass vanishes to a positive
floor. Each point reports which rung of that ladder produced it.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

FLOOR = 1e-12

QUADRATIC = 0
LINEAR = 1
FLOORED = 2

# rows of eval points per block, chosen so that block * n stays near this
_BLOCK_ELEMENTS = 1_000_000
_DET_TOL = 1e-8
_VAR_TOL = 1e-4
_LOG_2PI = math.log(2.0 * math.pi)


def _blocks(m: int, n: int):
    step = max(1, _BLOCK_ELEMENTS // max(n, 1))
    for start in range(0, m, step):
        yield slice(start, min(start + step, m))


def logquad_density_1d(data, points, h, leave_one_out=False):
    """Local log-quadratic density estimate at ``points``.

    Parameters
    ----------
    data : array_like, shape (n,)
        Sample.
    points : array_like, shape (m,)
        Evaluation points. With ``leave_one_out`` they must be ``data`` itself.
    h : float
        Gaussian kernel standard deviation.
    leave_one_out : bool
        Drop the j-th observation when evaluating at the j-th point.

    Returns
    -------
    density : ndarray, shape (m,)
    method : ndarray of int, shape (m,)
        QUADRATIC, LINEAR or FLOORED per point.
    """
    data = np.asarray(data, dtype=float)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    n = data.size
    n_eff = n - 1 if leave_one_out else n
    out = np.empty(points.size)
    method = np.zeros(points.size, dtype=int)
    for sl in _blocks(points.size, n):
        z = (data[None, :] - points[sl, None]) / h
        logw = -0.5 * z * z
        if leave_one_out:
            idx = np.arange(sl.start, sl.stop)
            logw[idx - sl.start, idx] = -np.inf
        shift = logw.max(axis=1, keepdims=True)
        w = np.exp(logw - shift)
        mass = w.sum(axis=1)
        mean = (w * z).sum(axis=1) / mass
        dz = z - mean[:, None]
        var = (w * dz * dz).sum(axis=1) / mass
        base = np.log(mass) + shift[:, 0] - 0.5 * _LOG_2PI - math.log(n_eff)
        quad = var > _VAR_TOL
        safe_var = np.where(quad, var, 1.0)
        logf = np.where(
            quad,
            base - 0.5 * np.log(safe_var) - 0.5 * mean * mean / safe_var,
            base - 0.5 * mean * mean,
        )
        # z is in kernel units, the density is per unit of data
        logf -= math.log(h)
        block_method = np.where(quad, QUADRATIC, LINEAR)
        bad = ~np.isfinite(logf) | (logf < math.log(FLOOR))
        out[sl] = np.where(bad, FLOOR, np.exp(np.where(bad, 0.0, logf)))
        method[sl] = np.where(bad, FLOORED, block_method)
    return out, method


def logquad_density_2d(data, points, chol, leave_one_out=False):
    """Bivariate local log-quadratic density estimate at ``points``.

    ``chol`` is the lower Cholesky factor L of the bandwidth matrix H = L L'.
    Returns ``(density, method)`` as :func:`logquad_density_1d`.
    """
    data = np.asarray(data, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    chol = np.asarray(chol, dtype=float)
    n = data.shape[0]
    n_eff = n - 1 if leave_one_out else n
    linv = np.linalg.inv(chol)
    # standardize once; offsets in kernel units are differences of these
    d = data @ linv.T
    p = points @ linv.T
    m = p.shape[0]
    out = np.empty(m)
    method = np.zeros(m, dtype=int)
    log_n = math.log(n_eff)
    for sl in _blocks(m, n):
        z1 = d[None, :, 0] - p[sl, 0, None]
        z2 = d[None, :, 1] - p[sl, 1, None]
        logw = -0.5 * (z1 * z1 + z2 * z2)
        if leave_one_out:
            idx = np.arange(sl.start, sl.stop)
            logw[idx - sl.start, idx] = -np.inf
        shift = logw.max(axis=1, keepdims=True)
        w = np.exp(logw - shift)
        mass = w.sum(axis=1)
        m1 = (w * z1).sum(axis=1) / mass
        m2 = (w * z2).sum(axis=1) / mass
        d1 = z1 - m1[:, None]
        d2 = z2 - m2[:, None]
        c11 = (w * d1 * d1).sum(axis=1) / mass
        c12 = (w * (d1 * d2)).sum(axis=1) / mass
        c22 = (w * d2 * d2).sum(axis=1) / mass
        det = c11 * c22 - c12 * c12
        base = np.log(mass) + shift[:, 0] - _LOG_2PI - log_n
        quad = det > _DET_TOL
        sdet = np.where(quad, det, 1.0)
        # written symmetric in the two coordinates so swapped inputs agree bit for bit
        qform = (c22 * (m1 * m1) + c11 * (m2 * m2) - 2.0 * c12 * (m1 * m2)) / sdet
        logf = np.where(
            quad,
            base - 0.5 * np.log(sdet) - 0.5 * qform,
            base - 0.5 * (m1 * m1 + m2 * m2),
        )
        logf -= math.log(abs(np.linalg.det(chol)))
        block_method = np.where(quad, QUADRATIC, LINEAR)
        bad = ~np.isfinite(logf) | (logf < math.log(FLOOR))
        out[sl] = np.where(bad, FLOOR, np.exp(np.where(bad, 0.0, logf)))
        method[sl] = np.where(bad, FLOORED, block_method)
    return out, method


# ---------------------------------------------------------------------------
# Newton route
# ---------------------------------------------------------------------------

_GH_X, _GH_W = hermegauss(32)
_GH_X1, _GH_X2 = np.meshgrid(_GH_X, _GH_X, indexing="ij")
_GH_NODES = np.stack([_GH_X1.ravel(), _GH_X2.ravel()], axis=1)
_GH_WEIGHTS = np.outer(_GH_W, _GH_W).ravel() / (2.0 * math.pi)


def _features(z):
    z = np.atleast_2d(z)
    return np.stack(
        [np.ones(len(z)), z[:, 0], z[:, 1], z[:, 0] ** 2, z[:, 0] * z[:, 1], z[:, 1] ** 2],
        axis=1,
    )


def _split(theta):
    b = theta[1:3]
    a = np.array([[theta[3], 0.5 * theta[4]], [0.5 * theta[4], theta[5]]])
    return theta[0], b, a


def _tilted_moments(theta, hinv, chol_h):
    """Integral I = int N(z; 0, H) exp(P(z)) dz with E[phi] and E[phi phi'] under
    the tilted law. Closed form plus exact Gaussian quadrature when the tilted
    precision H^{-1} - 2A is positive definite, plain quadrature otherwise."""
    a0, b, a = _split(theta)
    prec = hinv - 2.0 * a
    try:
        c = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        c = None
    if c is not None:
        cov = np.linalg.inv(prec)
        mu = cov @ b
        logi = (
            a0
            - np.sum(np.log(np.diag(chol_h)))
            - np.sum(np.log(np.diag(c)))
            + 0.5 * b @ mu
        )
        nodes = mu + _GH_NODES @ np.linalg.cholesky(cov).T
        f = _features(nodes)
        ef = _GH_WEIGHTS @ f
        eff = (f * _GH_WEIGHTS[:, None]).T @ f
        return math.exp(min(logi, 700.0)), ef, eff, True
    nodes = _GH_NODES @ chol_h.T
    f = _features(nodes)
    e = _GH_WEIGHTS * np.exp(np.clip(f @ theta, -745.0, 700.0))
    total = e.sum()
    if not total > 0:
        return 0.0, f[0], np.outer(f[0], f[0]), False
    return total, (e @ f) / total, (f * e[:, None]).T @ f / total, False


def newton_logquad_2d(points, s, bandwidth, max_iter=50, tol=1e-8):
    """Maximize the local log-quadratic likelihood at ``s`` by safeguarded Newton.

    Parameters
    ----------
    points : array_like, shape (n, 2)
    s : array_like, shape (2,)
    bandwidth : array_like, shape (2, 2)
        Positive definite kernel covariance H.

    Returns
    -------
    density : float
    method : int
        QUADRATIC on convergence, otherwise the fallback rung used.
    theta : ndarray or None
        Fitted coefficients (1, z1, z2, z1^2, z1 z2, z2^2) when QUADRATIC.
    """
    t = np.asarray(points, dtype=float)
    s = np.asarray(s, dtype=float)
    h = np.asarray(bandwidth, dtype=float)
    n = t.shape[0]
    chol_h = np.linalg.cholesky(h)
    hinv = np.linalg.inv(h)
    z = t - s
    u = np.linalg.solve(chol_h, z.T).T
    k = np.exp(-0.5 * np.sum(u * u, axis=1)) / (2.0 * math.pi * np.prod(np.diag(chol_h)))
    stats = (k @ _features(z)) / n
    if stats[0] <= 0.0:
        return FLOOR, FLOORED, None

    def objective(theta):
        i, ef, eff, _ = _tilted_moments(theta, hinv, chol_h)
        return theta @ stats - i, i, ef, eff

    theta = np.zeros(6)
    theta[0] = math.log(stats[0])
    val, i, ef, eff = objective(theta)
    converged = False
    for _ in range(max_iter):
        grad = stats - i * ef
        if np.max(np.abs(grad)) <= tol:
            converged = True
            break
        hess = i * eff
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        t_step = 1.0
        while t_step > 1e-10:
            cand = theta + t_step * step
            cval, ci, cef, ceff = objective(cand)
            if np.isfinite(cval) and cval >= val:
                break
            t_step *= 0.5
        else:
            break
        theta, val, i, ef, eff = cand, cval, ci, cef, ceff
    if converged and np.isfinite(theta[0]):
        return max(math.exp(theta[0]), FLOOR), QUADRATIC, theta
    # log-linear rung, closed form
    mass = stats[0]
    mean = stats[1:3] / mass
    b = hinv @ mean
    logf = math.log(mass) - 0.5 * mean @ b
    if np.isfinite(logf) and logf > math.log(FLOOR):
        return math.exp(logf), LINEAR, None
    return FLOOR, FLOORED, None
