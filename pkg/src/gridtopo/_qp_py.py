"""Pure-Python accelerated projected gradient; fallback for ``_qp_ext``.

The feasible set is a product: the first ``ns`` coordinates live in the
clipped simplex {x >= 0, sum(x) <= 1}, the rest in {-1 <= x <= 1, sum(x) = 0}.
"""

import math

import numpy as np


def project_clipped_simplex(z):
    z = np.asarray(z, dtype=float)
    x = np.maximum(z, 0.0)
    if x.sum() <= 1.0:
        return x
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(u) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    lam = css[rho] / (rho + 1)
    return np.maximum(z - lam, 0.0)


def project_box_zero_sum(z):
    z = np.asarray(z, dtype=float)
    n = len(z)
    if n == 0:
        return z.copy()
    lo, hi = z.min() - 1.0, z.max() + 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.clip(z - mid, -1.0, 1.0).sum() > 0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    w = z - lam
    free = (w > -1.0) & (w < 1.0)
    if free.any():
        lam = (z[free].sum() + np.count_nonzero(w >= 1.0) - np.count_nonzero(w <= -1.0)) / free.sum()
    return np.clip(z - lam, -1.0, 1.0)


def project(z, ns):
    if ns == len(z):
        return project_clipped_simplex(z)
    return np.concatenate([project_clipped_simplex(z[:ns]), project_box_zero_sum(z[ns:])])


def apg(Q, c, ns, x0, L, tol, max_iter):
    """Minimise x'Qx - 2c'x over the feasible set.

    Returns ``(x, iterations, pg_norm)`` where ``pg_norm`` is the norm of
    the gradient mapping ``L * (x - P(x - grad/L))``.
    """
    x = project(np.asarray(x0, dtype=float), ns)
    Qx = Q @ x
    fx = x @ Qx - 2.0 * c @ x
    y, Qy = x, Qx
    t = 1.0
    pg = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = 2.0 * (Qy - c)
        xn = project(y - g / L, ns)
        Qxn = Q @ xn
        fn = xn @ Qxn - 2.0 * c @ xn
        if fn > fx:
            # restart from the last accepted iterate
            t = 1.0
            y, Qy = x, Qx
            g = 2.0 * (Qx - c)
            xn = project(x - g / L, ns)
            Qxn = Q @ xn
            fn = xn @ Qxn - 2.0 * c @ xn
        gx = 2.0 * (Qxn - c)
        pg = L * np.linalg.norm(xn - project(xn - gx / L, ns))
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / tn
        y = xn + mom * (xn - x)
        Qy = Qxn + mom * (Qxn - Qx)
        x, Qx, fx, t = xn, Qxn, fn, tn
        if pg <= tol:
            break
    return x, it, pg
