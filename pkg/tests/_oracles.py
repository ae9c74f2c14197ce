"""Independent reference implementations used as test oracles.

Nothing here imports the package: each helper recomputes a quantity from
its textbook definition with plain math/numpy so that agreement is a real
cross-check.
"""

import math

import numpy as np


def bisect(f, lo, hi, n_iter=200):
    """Root of an increasing function on [lo, hi] by plain bisection."""
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def normal_cdf(z):
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def normal_pdf(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def normal_quantile(p):
    return bisect(lambda z: normal_cdf(z) - p, -40.0, 40.0)


def t3_cdf(t):
    s = math.sqrt(3.0)
    return 0.5 + (t / (s * (1.0 + t * t / 3.0)) + math.atan(t / s)) / math.pi


def t3_pdf(t):
    return 6.0 * math.sqrt(3.0) / (math.pi * (3.0 + t * t) ** 2)


def t3_quantile(p):
    return bisect(lambda t: t3_cdf(t) - p, -1e6, 1e6, n_iter=400)


def chi2_sf(x, k):
    """Regularized upper incomplete gamma Q(k/2, x/2).

    Power series for x < a + 1, Lentz continued fraction otherwise.
    """
    a, z = 0.5 * k, 0.5 * x
    if z <= 0:
        return 1.0
    log_pref = -z + a * math.log(z) - math.lgamma(a)
    if z < a + 1.0:
        term = total = 1.0 / a
        ap = a
        for _ in range(10000):
            ap += 1.0
            term *= z / ap
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        return 1.0 - total * math.exp(log_pref)
    tiny = 1e-300
    b = z + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return math.exp(log_pref) * h


def kupiec_terms(n, k, p):
    """LR_UC from its four log-likelihood terms, 0 log 0 = 0."""

    def xlog(a, b):
        return 0.0 if a == 0 else a * math.log(b)

    pi = k / n
    return -2.0 * (xlog(n - k, 1 - p) + xlog(k, p) - xlog(n - k, 1 - pi) - xlog(k, pi))


def gaussian_copula_density(u, v, rho):
    from scipy.special import ndtri

    a, b = ndtri(np.asarray(u, float)), ndtri(np.asarray(v, float))
    q = (rho * rho * (a * a + b * b) - 2.0 * rho * a * b) / (2.0 * (1.0 - rho * rho))
    return np.exp(-q) / math.sqrt(1.0 - rho * rho)


def gaussian_pseudo_pairs(n, rho, rng):
    """Rank-transformed draws from a Gaussian copula, ranks / (n + 1)."""
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + math.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
    u = (np.argsort(np.argsort(z1)) + 1.0) / (n + 1.0)
    v = (np.argsort(np.argsort(z2)) + 1.0) / (n + 1.0)
    return np.column_stack([u, v])


def pinball(x, q, alpha):
    x = np.asarray(x, float)
    q = np.asarray(q, float)
    return np.where(x > q, alpha * (x - q), (1.0 - alpha) * (q - x))


def gaussian_ar1(n, phi, rng, burn=200):
    e = rng.standard_normal(n + burn)
    x = np.empty(n + burn)
    x[0] = e[0] / math.sqrt(1.0 - phi * phi)
    for t in range(1, n + burn):
        x[t] = phi * x[t - 1] + e[t]
    return x[burn:]


BENCHMARK = dict(a=0.4, b=0.3, c=1.657, d=0.1175, omega=0.007, arch=0.2)


def benchmark_step(x, eps, a=0.4, b=0.3, c=1.657, d=0.1175, omega=0.007, arch=0.2):
    """One transition of the AR(1)-ARCH(1) benchmark written out from its
    definition; vectorized in eps."""
    bump = 0.0 if x == 0 else math.sqrt(2.0) / x * math.exp(-0.5 * ((x - c) / d) ** 2) / (d * math.sqrt(2 * math.pi))
    return a + b * x + bump + math.sqrt(omega + arch * x * x) * np.asarray(eps, float)


INNOVATIONS = {
    "standard_normal": (lambda rng, n: rng.standard_normal(n), normal_quantile, normal_pdf),
    "standard_exponential": (
        lambda rng, n: rng.standard_exponential(n),
        lambda p: -math.log(1.0 - p),
        lambda z: math.exp(-z) if z >= 0 else 0.0,
    ),
    "student_t3": (lambda rng, n: rng.standard_t(3, n), t3_quantile, t3_pdf),
}
