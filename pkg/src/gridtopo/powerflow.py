"""Injection sampling and DC / linearised-AC / full AC power-flow solvers.

Injections and voltages are per-unit and indexed by the grid's
non-reference nodes in ascending id order unless a Laplacian with its own
label order is passed in. Angles are deviations from the reference bus,
magnitudes deviations from 1.0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .grid import Grid, LaplacianMatrix, build_laplacian
from .samples import NoiseModel, SampleSet, add_noise

MODELS = ("dc-linear", "dc-nonlinear", "lc-linear", "ac-nonlinear")
KAPPA = 0.3


class PowerFlowError(RuntimeError):
    def __init__(self, msg, mismatch=None, failed=None):
        super().__init__(msg)
        self.mismatch = mismatch
        self.failed = failed


@dataclass(frozen=True)
class InjectionModel:
    labels: tuple[int, ...]
    sigma: np.ndarray
    base_p: np.ndarray
    base_q: np.ndarray
    rho: float = 0.0
    zero_injection: frozenset = frozenset()

    def __post_init__(self):
        N = len(self.labels)
        for name in ("sigma", "base_p", "base_q"):
            a = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (N,)).copy()
            object.__setattr__(self, name, a)
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        z = np.array([k in self.zero_injection for k in self.labels])
        if np.any(self.sigma[z] != 0) or np.any(self.base_p[z] != 0) or np.any(self.base_q[z] != 0):
            raise ValueError("zero-injection nodes must have zero base and zero fluctuation")

    @classmethod
    def for_grid(cls, grid: Grid, sigma: float = 0.1, rho: float = 0.0, base_p=0.0, base_q=0.0):
        labels = tuple(grid.node_ids)
        U = grid.zero_injection
        mask = np.array([0.0 if k in U else 1.0 for k in labels])
        return cls(labels, sigma * mask, np.asarray(base_p, float) * mask,
                   np.asarray(base_q, float) * mask, rho, frozenset(U))

    def covariance(self) -> np.ndarray:
        """Covariance of one injection draw."""
        s = self.sigma
        return np.diag(s ** 2) + self.rho ** 2 * np.outer(s, s)


def sample_injections(model: InjectionModel, T: int, seed=None, kappa: float | None = None):
    """``T x N`` active-power injections; rows i.i.d.

    With ``kappa`` set, also returns reactive injections ``(p, q)`` whose
    fluctuations are independent of ``p`` with standard deviation
    ``kappa * sigma``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(seed)
    N = len(model.labels)

    def draw():
        z = rng.standard_normal((T, N))
        if model.rho:
            z = z + model.rho * rng.standard_normal((T, 1))
        return z

    p = model.base_p + draw() * model.sigma
    if kappa is None:
        return p
    q = model.base_q + draw() * (kappa * model.sigma)
    return p, q


def dc_pf(H_beta: LaplacianMatrix | np.ndarray, p: np.ndarray) -> np.ndarray:
    """Angles solving ``H theta = p``; ``p`` may hold one injection per row."""
    H = H_beta.values if isinstance(H_beta, LaplacianMatrix) else np.asarray(H_beta, dtype=float)
    p = np.asarray(p, dtype=float)
    try:
        cf = linalg.cho_factor(H)
    except linalg.LinAlgError as exc:
        raise PowerFlowError("Laplacian is singular or not positive definite") from exc
    theta = linalg.cho_solve(cf, p.T).T
    return theta


def lc_pf(H_beta, H_g, p, q) -> tuple[np.ndarray, np.ndarray]:
    """Linearised AC power flow: ``[p; q] = [[Hg, Hb], [Hb, -Hg]] [v; theta]``."""
    Hb = H_beta.values if isinstance(H_beta, LaplacianMatrix) else np.asarray(H_beta, dtype=float)
    Hg = H_g.values if isinstance(H_g, LaplacianMatrix) else np.asarray(H_g, dtype=float)
    N = Hb.shape[0]
    M = np.block([[Hg, Hb], [Hb, -Hg]])
    rhs = np.concatenate([np.atleast_2d(p), np.atleast_2d(q)], axis=1).T
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu = linalg.lu_factor(M, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise PowerFlowError("singular linearised power-flow matrix") from exc
    if np.any(np.abs(np.diag(lu[0])) <= 1e-14 * np.abs(M).max()):
        raise PowerFlowError("singular linearised power-flow matrix")
    sol = linalg.lu_solve(lu, rhs).T
    v, theta = sol[:, :N], sol[:, N:]
    if np.ndim(p) == 1:
        return v[0], theta[0]
    return v, theta


def _ybus(grid: Grid) -> tuple[np.ndarray, list[int]]:
    ids = [n.id for n in grid.nodes]
    pos = {k: n for n, k in enumerate(ids)}
    Y = np.zeros((len(ids), len(ids)), dtype=complex)
    for e in grid.edges:
        y = e.g - 1j * e.beta
        a, b = pos[e.i], pos[e.j]
        Y[a, a] += y
        Y[b, b] += y
        Y[a, b] -= y
        Y[b, a] -= y
    return Y, ids


def ac_pf(grid: Grid, p, q, *, tol: float = 1e-8, max_iter: int = 50, batch: int = 512):
    """Newton-Raphson AC power flow from a flat start.

    The reference bus is the slack (magnitude 1, angle 0); every other bus
    is PQ. ``p``/``q`` hold one injection vector per row over
    ``grid.node_ids``. Returns magnitude and angle deviations ``(v, theta)``
    with the shape of ``p``. Raises :class:`PowerFlowError` naming the rows
    that fail to reach ``tol`` within ``max_iter`` iterations.
    """
    single = np.ndim(p) == 1
    P = np.atleast_2d(np.asarray(p, dtype=float))
    Qd = np.atleast_2d(np.asarray(q, dtype=float))
    Y, ids = _ybus(grid)
    ref = ids.index(grid.reference)
    nr = [k for k in range(len(ids)) if k != ref]
    order = [ids[k] for k in nr]
    if order != grid.node_ids:
        raise AssertionError("node order mismatch")
    vm_out = np.empty_like(P)
    va_out = np.empty_like(P)
    for start in range(0, P.shape[0], batch):
        sl = slice(start, start + batch)
        vm, va = _newton_batch(Y, ref, nr, P[sl], Qd[sl], tol, max_iter, start)
        vm_out[sl], va_out[sl] = vm, va
    v, theta = vm_out - 1.0, va_out
    return (v[0], theta[0]) if single else (v, theta)


def _mismatch(Y, V, nr, P, Q):
    S = V * np.conj(V @ Y.T)
    return np.concatenate([P - S[:, nr].real, Q - S[:, nr].imag], axis=1)


def _newton_batch(Y, ref, nr, P, Q, tol, max_iter, offset):
    B, n = P.shape[0], len(nr) + 1
    Vm = np.ones((B, n))
    Va = np.zeros((B, n))
    V = Vm * np.exp(1j * Va)
    F = _mismatch(Y, V, nr, P, Q)
    norm = np.abs(F).max(axis=1)
    active = norm > tol
    it = 0
    while active.any() and it < max_iter:
        it += 1
        idx = np.flatnonzero(active)
        Va_ = V[idx]
        I = Va_ @ Y.T
        Vn = Va_ / np.abs(Va_)
        diagV = Va_[:, :, None]
        dS_dVa = 1j * diagV * np.conj(I[:, :, None] * np.eye(n) - Y[None] * Va_[:, None, :])
        dS_dVm = diagV * np.conj(Y[None] * Vn[:, None, :]) + np.eye(n) * (np.conj(I) * Vn)[:, :, None]
        sub = np.ix_(range(len(idx)), nr, nr)
        A = dS_dVa[sub]
        Bm = dS_dVm[sub]
        J = np.block([[A.real, Bm.real], [A.imag, Bm.imag]])
        dx = np.linalg.solve(J, F[idx][:, :, None])[:, :, 0]
        k = len(nr)
        Va[np.ix_(idx, nr)] += dx[:, :k]
        Vm[np.ix_(idx, nr)] += dx[:, k:]
        V[idx] = Vm[idx] * np.exp(1j * Va[idx])
        F[idx] = _mismatch(Y, V[idx], nr, P[idx], Q[idx])
        norm[idx] = np.abs(F[idx]).max(axis=1)
        active = norm > tol
        bad = ~np.all(np.isfinite(F), axis=1)
        if bad.any():
            active &= ~bad
            norm[bad] = np.inf
    failed = np.flatnonzero(norm > tol)
    if failed.size:
        raise PowerFlowError(
            f"AC power flow did not converge for {failed.size} sample(s) "
            f"(first row {offset + failed[0]}, mismatch {norm[failed[0]]:.3g})",
            mismatch=float(norm[failed].max()), failed=(offset + failed).tolist())
    return Vm[:, nr], Va[:, nr] - Va[:, [ref]]


def simulate(grid: Grid, model: str, T: int, sigma: float = 0.1, rho: float = 0.0, seed=None,
             noise: float = 0.0, kappa: float = KAPPA, injections: np.ndarray | None = None,
             reactive: np.ndarray | None = None) -> SampleSet:
    """Voltage samples for ``grid`` under one of :data:`MODELS`.

    Reactive fluctuations are independent of the active ones with standard
    deviation ``kappa * sigma``. ``dc-nonlinear`` runs the full AC solver on
    a copy of the grid with all conductances set to zero. ``injections``
    overrides the active-power draw (rows over ``grid.node_ids``);
    ``reactive`` does the same for ``q``, which otherwise gets independent
    Gaussian fluctuations scaled to ``kappa`` times each column's spread.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    labels = tuple(grid.node_ids)
    if injections is None:
        inj = InjectionModel.for_grid(grid, sigma, rho)
        p, q = sample_injections(inj, T, seed, kappa)
    else:
        mask = np.array([0.0 if k in grid.zero_injection else 1.0 for k in labels])
        p = np.asarray(injections, dtype=float) * mask
        if reactive is None:
            rng = np.random.default_rng(None if seed is None else [int(seed), 2])
            q = kappa * p.std(axis=0) * rng.standard_normal(p.shape)
        else:
            q = np.asarray(reactive, dtype=float) * mask
    v = None
    if model == "dc-linear":
        theta = dc_pf(build_laplacian(grid).reorder(labels), p)
    elif model == "lc-linear":
        Hb = build_laplacian(grid).reorder(labels)
        Hg = build_laplacian(grid, "conductance").reorder(labels)
        v, theta = lc_pf(Hb, Hg, p, q)
    elif model == "dc-nonlinear":
        lossless = grid.with_conductance_ratio(0.0)
        _, theta = ac_pf(lossless, p, q)
    else:
        v, theta = ac_pf(grid, p, q)
    meta = {"model": model, "seed": seed, "r": 0.0}
    samples = SampleSet(theta, labels, v, meta)
    if noise:
        samples = add_noise(samples, NoiseModel(noise), None if seed is None else [int(seed), 1])
    return samples
