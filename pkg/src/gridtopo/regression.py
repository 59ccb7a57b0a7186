"""Constrained quadratic regressions over the clipped simplex.

The nodal regressions all reduce to

    minimise  x'Qx - 2c'x + d   subject to   x >= 0,  sum(x) <= 1

(plus a box/zero-sum block for the imaginary part of complex coefficients),
solved by accelerated projected gradient with objective restarts. The inner
loop runs in the compiled ``_qp_ext`` kernel when it is importable and in
``_qp_py`` otherwise; set ``GRIDTOPO_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _qp_py
from .covariance import CovarianceMatrix

try:
    from . import _qp_ext
except ImportError:  # extension not built
    _qp_ext = None

_KERNELS = {"python": _qp_py}
if _qp_ext is not None:
    _KERNELS["cython"] = _qp_ext

BACKEND = "python" if os.environ.get("GRIDTOPO_PURE_PYTHON") or _qp_ext is None else "cython"

TOL = 1e-9
MAX_ITER = 100_000
PSD_TOL = 1e-9


class NotPSDError(ValueError):
    pass


def available_backends() -> list[str]:
    return sorted(_KERNELS)


@dataclass(frozen=True)
class QuadraticObjective:
    """``x'Qx - 2c'x + d``; equals a regression residual variance when
    ``Q``, ``c``, ``d`` are covariance blocks."""

    Q: np.ndarray
    c: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(-1))
        object.__setattr__(self, "d", float(self.d))
        if self.Q.shape != (len(self.c), len(self.c)):
            raise ValueError("Q and c dimensions differ")

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x - 2.0 * self.c @ x + self.d)


@dataclass(frozen=True)
class RegressionSolution:
    x: np.ndarray
    cost: float
    kkt_residual: float
    iterations: int
    labels: tuple = ()
    backend: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def coefficient(self, label) -> float | complex:
        return self.x[self.labels.index(label)]

    def support(self, threshold: float) -> list:
        mag = np.real(self.x)
        return [k for k, a in zip(self.labels, mag) if a >= threshold]


def project_clipped_simplex(z) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) <= 1}``."""
    return _qp_py.project_clipped_simplex(np.asarray(z, dtype=float))


def _project(z, ns):
    return _qp_py.project(z, ns)


def _gradient_map_norm(Q, c, x, ns, L):
    g = 2.0 * (Q @ x - c)
    return float(L * np.linalg.norm(x - _project(x - g / L, ns)))


def _constraints(n, ns):
    """Inequalities ``G x <= h`` and equalities ``E x = e`` of the feasible set."""
    G, h = [], []
    for i in range(ns):
        r = np.zeros(n); r[i] = -1.0
        G.append(r); h.append(0.0)
    if ns:
        r = np.zeros(n); r[:ns] = 1.0
        G.append(r); h.append(1.0)
    for i in range(ns, n):
        for sgn in (1.0, -1.0):
            r = np.zeros(n); r[i] = sgn
            G.append(r); h.append(1.0)
    E = np.zeros((1 if n > ns else 0, n))
    if n > ns:
        E[0, ns:] = 1.0
    return np.array(G).reshape(-1, n), np.array(h), E


def _polish(Q, c, x, ns, L, pg, max_rounds=None):
    """Primal active-set refinement started from the iterative solution.

    Each round solves the equality-constrained problem on the current
    working set, then either steps to the first blocking constraint or drops
    the constraint with the most negative multiplier. Returns the refined
    point when it is a better stationary point, otherwise ``x``.
    """
    n = len(c)
    if n == 0:
        return x, pg
    G, h, E = _constraints(n, ns)
    z = _project(x, ns)
    W = [k for k in np.flatnonzero(G @ z >= h - 1e-12)]
    for _ in range(max_rounds or 3 * n + 10):
        A = np.vstack([G[W], E]) if W else E
        m = A.shape[0]
        K = np.zeros((n + m, n + m))
        K[:n, :n] = 2.0 * Q
        K[:n, n:] = A.T
        K[n:, :n] = A
        rhs = np.concatenate([-2.0 * (Q @ z - c), np.zeros(m)])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=1e-13)[0]
        d, lam = sol[:n], sol[n:n + len(W)]
        if np.linalg.norm(d) <= 1e-13 * (1.0 + np.linalg.norm(z)):
            if not W or lam.min() >= -1e-12:
                break
            W.pop(int(np.argmin(lam)))
            continue
        Gd = G @ d
        slack = h - G @ z
        cand = Gd > 1e-15
        cand[W] = False
        ratio = np.full(len(h), np.inf)
        ratio[cand] = np.maximum(slack[cand], 0.0) / Gd[cand]
        block = int(np.argmin(ratio))
        alpha = min(1.0, ratio[block])
        if ratio[block] >= 1.0:
            block = None
        z = z + alpha * d
        if block is not None:
            W.append(block)
    z = _project(z, ns)
    pg_z = _gradient_map_norm(Q, c, z, ns, L)
    f = lambda y: y @ Q @ y - 2.0 * c @ y
    if pg_z < pg and f(z) <= f(x) + 1e-15:
        return z, pg_z
    return x, pg


def qp_solve(obj: QuadraticObjective, n_simplex: int | None = None, *, tol: float = TOL,
             max_iter: int = MAX_ITER, backend: str | None = None, x0=None) -> RegressionSolution:
    """Global minimiser of a convex quadratic over the clipped simplex.

    The first ``n_simplex`` coordinates (default: all) are constrained to
    the clipped simplex; any remaining coordinates to ``[-1, 1]`` with zero
    sum. The problem is rescaled so that ``max(diag(Q)) = 1`` before
    solving; ``kkt_residual`` is the gradient-map norm in that scale.
    """
    Q, c = obj.Q, obj.c
    n = len(c)
    ns = n if n_simplex is None else int(n_simplex)
    kernel = _KERNELS[backend or BACKEND]
    if n == 0:
        return RegressionSolution(np.zeros(0), obj.d, 0.0, 0, backend=backend or BACKEND)
    scale = float(np.max(np.abs(np.diag(Q))))
    if scale == 0.0:
        scale = max(float(np.max(np.abs(c))), 1.0)
    Qs, cs = Q / scale, c / scale
    ev = np.linalg.eigvalsh(Qs)
    if ev[0] < -PSD_TOL * max(ev[-1], 1.0):
        raise NotPSDError(f"Q is not positive semidefinite (min eigenvalue {ev[0] * scale:.3g})")
    L = max(2.0 * ev[-1], 1e-12)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    # chunks of growing length; the support polish between chunks usually
    # certifies the optimum long before the gradient iteration converges
    it, chunk, pg = 0, 50, np.inf
    while it < max_iter:
        x, k, pg = kernel.apg(Qs, cs, ns, x, L, tol, min(chunk, max_iter - it))
        x = np.asarray(x)
        it += int(k)
        x, pg = _polish(Qs, cs, x, ns, L, pg)
        if pg <= tol:
            break
        chunk = min(chunk * 2, 400)
    cost = scale * float(x @ Qs @ x - 2.0 * cs @ x) + obj.d
    return RegressionSolution(x, cost, pg, int(it), backend=backend or BACKEND)


def _label_block(Sigma: CovarianceMatrix, rows, cols) -> np.ndarray:
    return Sigma.values[np.ix_(Sigma.index(rows), Sigma.index(cols))]


def regress(target, regressors, Sigma: CovarianceMatrix, **kw) -> RegressionSolution:
    """Regress ``theta_target`` on ``theta_regressors`` over the clipped simplex."""
    regressors = tuple(regressors)
    Q = _label_block(Sigma, regressors, regressors)
    c = _label_block(Sigma, regressors, [target]).reshape(-1)
    d = float(_label_block(Sigma, [target], [target])[0, 0])
    sol = qp_solve(QuadraticObjective(Q, c, d), **kw)
    return RegressionSolution(sol.x, sol.cost, sol.kkt_residual, sol.iterations, regressors, sol.backend)


def _theta(Sigma: CovarianceMatrix) -> CovarianceMatrix:
    return Sigma if Sigma.channels == ("theta",) else Sigma.channel("theta")


def solve_nodal_regression(i, Sigma: CovarianceMatrix, **kw) -> RegressionSolution:
    """Regress node ``i`` on every other node; zero cost marks an unexcited node."""
    Sigma = _theta(Sigma)
    return regress(i, [k for k in Sigma.labels if k != i], Sigma, **kw)


def solve_constrained_nodal_regression(i, U, Sigma: CovarianceMatrix, **kw) -> RegressionSolution:
    """Regress unexcited node ``i`` on the excited nodes only."""
    U = set(U)
    if i not in U:
        raise ValueError(f"node {i} is not in the zero-injection set; constrained regression needs i in U")
    Sigma = _theta(Sigma)
    return regress(i, [k for k in Sigma.labels if k not in U], Sigma, **kw)


def complex_objective(i, regressors, Sigma_vtheta: CovarianceMatrix) -> QuadraticObjective:
    """Residual variance of ``(v_i - j theta_i) - (v_r - j theta_r)' x`` in
    stacked ``(Re x, Im x)`` coordinates."""
    if Sigma_vtheta.channels != ("v", "theta"):
        raise ValueError("complex regression needs the joint (v, theta) covariance")
    N = len(Sigma_vtheta.labels)
    pos = {k: n for n, k in enumerate(Sigma_vtheta.labels)}
    r = [pos[k] for k in regressors]
    vi, ti = pos[i], N + pos[i]
    vr = r
    tr = [N + k for k in r]
    S = Sigma_vtheta.values
    A = S[np.ix_(vr, vr)]
    B = S[np.ix_(vr, tr)]
    C = S[np.ix_(tr, tr)]
    Q = np.block([[A + C, B - B.T], [B.T - B, A + C]])
    c = np.concatenate([S[vr, vi] + S[tr, ti], S[tr, vi] - S[vr, ti]])
    d = S[vi, vi] + S[ti, ti]
    return QuadraticObjective(Q, c, d)


def solve_complex_regression(i, Sigma_vtheta: CovarianceMatrix, regressors=None, **kw) -> RegressionSolution:
    """Complex-coefficient nodal regression for the linearised AC model.

    ``Re x`` lives in the clipped simplex, ``Im x`` in ``[-1, 1]`` with zero
    sum. Pass ``regressors`` to restrict the coefficients (the constrained
    variant uses the excited nodes only).
    """
    if regressors is None:
        regressors = [k for k in Sigma_vtheta.labels if k != i]
    regressors = tuple(regressors)
    m = len(regressors)
    obj = complex_objective(i, regressors, Sigma_vtheta)
    sol = qp_solve(obj, n_simplex=m, **kw)
    x = sol.x[:m] + 1j * sol.x[m:]
    return RegressionSolution(x, sol.cost, sol.kkt_residual, sol.iterations, regressors, sol.backend)
