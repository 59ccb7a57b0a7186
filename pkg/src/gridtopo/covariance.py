"""Second-order statistics of voltage samples and the noise margins built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, LaplacianMatrix, build_laplacian
from .samples import SampleSet

MAX_CONDITION = 1e12


class IllConditionedCovariance(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric covariance over ``labels``.

    ``channels`` lists the stacked measurement channels: ``("theta",)`` for
    phase angles, ``("v", "theta")`` for the joint magnitude/angle matrix
    whose rows run over all ``v`` labels first, then all ``theta`` labels.
    ``sample_count`` is ``None`` for analytic covariances.
    """

    values: np.ndarray
    labels: tuple[int, ...]
    sample_count: int | None = None
    channels: tuple[str, ...] = ("theta",)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v = 0.5 * (v + v.T)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", tuple(int(k) for k in self.labels))
        if v.shape != (len(self.channels) * len(self.labels),) * 2:
            raise ValueError("covariance shape does not match labels and channels")

    def index(self, labels) -> list[int]:
        pos = {k: n for n, k in enumerate(self.labels)}
        N = len(self.labels)
        idx = [pos[k] for k in labels]
        return [c * N + n for c in range(len(self.channels)) for n in idx]

    def sub(self, labels) -> "CovarianceMatrix":
        labels = tuple(labels)
        idx = self.index(labels)
        return CovarianceMatrix(self.values[np.ix_(idx, idx)], labels, self.sample_count, self.channels)

    def channel(self, name: str) -> "CovarianceMatrix":
        c = self.channels.index(name)
        N = len(self.labels)
        blk = self.values[c * N:(c + 1) * N, c * N:(c + 1) * N]
        return CovarianceMatrix(blk, self.labels, self.sample_count, (name,))

    def __add__(self, other: "CovarianceMatrix") -> "CovarianceMatrix":
        if other.labels != self.labels or other.channels != self.channels:
            raise ValueError("covariances over different labels")
        return CovarianceMatrix(self.values + other.values, self.labels, self.sample_count, self.channels)

    def to_csv(self) -> str:
        N = len(self.labels)
        names = [f"{ch}_{k}" for ch in self.channels for k in self.labels]
        rows = [",".join([""] + names)]
        for n, row in zip(names, self.values):
            rows.append(",".join([n] + [f"{x:.10g}" for x in row]))
        assert len(rows) == len(self.channels) * N + 1
        return "\n".join(rows) + "\n"


def sigma_min(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(np.asarray(a))[0])


def sigma_max(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(np.asarray(a))[-1])


def sigma_min_positive(a: np.ndarray, rtol: float = 1e-9) -> float:
    """Smallest eigenvalue above ``rtol * largest`` of a PSD matrix."""
    ev = np.linalg.eigvalsh(np.asarray(a))
    return float(ev[ev > rtol * max(ev[-1], 0.0)][0])


def empirical_covariance(samples: SampleSet, joint: bool = False) -> CovarianceMatrix:
    """Mean-removed ``(1/T) sum x x'``; ``joint`` stacks ``(v, theta)``."""
    if samples.T < 2:
        raise ValueError(f"need at least 2 samples, got {samples.T}")
    if joint:
        if samples.v is None:
            raise ValueError("joint covariance needs magnitude samples")
        x = np.hstack([samples.v, samples.theta])
        channels = ("v", "theta")
    else:
        x = samples.theta
        channels = ("theta",)
    xc = x - x.mean(axis=0)
    return CovarianceMatrix(xc.T @ xc / samples.T, samples.labels, samples.T, channels)


def _diag_vector(Sigma, labels, H: LaplacianMatrix) -> np.ndarray:
    if isinstance(Sigma, dict):
        return np.array([float(Sigma.get(k, 0.0)) for k in labels])
    s = np.asarray(Sigma, dtype=float)
    if s.ndim == 0:
        return np.full(len(labels), float(s))
    if s.ndim == 2:
        off = s - np.diag(np.diag(s))
        if np.any(np.abs(off) > 0):
            raise ValueError("injection covariance must be diagonal")
        s = np.diag(s)
    if s.shape != (len(labels),):
        raise ValueError("injection variances do not match Laplacian labels")
    return s


def analytic_theta_covariance(H_beta: LaplacianMatrix, Sigma_p, U=()) -> CovarianceMatrix:
    """DC power-flow covariance ``J Sigma_p J`` with ``J = H^{-1}``.

    ``Sigma_p`` is a diagonal matrix, a variance vector aligned with
    ``H_beta.labels``, a ``{node: variance}`` dict, or a scalar applied to
    the excited nodes.
    """
    U = set(U)
    if np.ndim(Sigma_p) == 0 and not isinstance(Sigma_p, dict):
        s = np.array([0.0 if k in U else float(Sigma_p) for k in H_beta.labels])
    else:
        s = _diag_vector(Sigma_p, H_beta.labels, H_beta)
    for k, var in zip(H_beta.labels, s):
        if k in U and var != 0:
            raise ValueError(f"injection variance must be zero on zero-injection node {k}")
    J = np.linalg.inv(H_beta.values)
    return CovarianceMatrix(J @ np.diag(s) @ J, H_beta.labels, None)


def lc_transfer(H_beta: LaplacianMatrix, H_g: LaplacianMatrix) -> np.ndarray:
    """Map ``(p, q) -> (v, theta)`` of the linearised AC model."""
    M = np.block([[H_g.values, H_beta.values], [H_beta.values, -H_g.values]])
    return np.linalg.inv(M)


def analytic_lc_covariance(H_beta: LaplacianMatrix, H_g: LaplacianMatrix, Sigma_p, U=(),
                           kappa: float = 0.3) -> CovarianceMatrix:
    """Joint ``(v, theta)`` covariance of the linearised AC model.

    Reactive fluctuations are independent of active ones with covariance
    ``kappa**2 * Sigma_p``.
    """
    if H_beta.labels != H_g.labels:
        raise ValueError("Laplacians over different labels")
    U = set(U)
    if np.ndim(Sigma_p) == 0 and not isinstance(Sigma_p, dict):
        s = np.array([0.0 if k in U else float(Sigma_p) for k in H_beta.labels])
    else:
        s = _diag_vector(Sigma_p, H_beta.labels, H_beta)
    A = lc_transfer(H_beta, H_g)
    S_pq = np.diag(np.concatenate([s, kappa ** 2 * s]))
    return CovarianceMatrix(A @ S_pq @ A.T, H_beta.labels, None, ("v", "theta"))


def inverse_covariance(C: CovarianceMatrix | np.ndarray) -> np.ndarray:
    """Symmetric inverse; refuses singular or ill-conditioned input."""
    a = C.values if isinstance(C, CovarianceMatrix) else np.asarray(C, dtype=float)
    a = 0.5 * (a + a.T)
    ev = np.linalg.eigvalsh(a)
    if ev[0] <= 0 or ev[-1] / ev[0] > MAX_CONDITION:
        cond = np.inf if ev[0] <= 0 else ev[-1] / ev[0]
        raise IllConditionedCovariance(
            f"covariance is rank-deficient or ill-conditioned (condition number {cond:.3g}); "
            "with zero-injection nodes present the full phase covariance is singular, "
            "so restrict it to the excited nodes first")
    inv = np.linalg.inv(a)
    inv = 0.5 * (inv + inv.T)
    return inv


@dataclass(frozen=True)
class SnrParams:
    beta_min: float
    s_id: float
    snr: float
    sigma_min_signal: float = float("nan")
    sigma_max_noise: float = 0.0


def snr_params(grid: Grid, Sigma_theta_Uc, Sigma_n=None) -> SnrParams:
    """Minimum susceptance, weighted-degree ratio and signal-to-noise ratio."""
    H = build_laplacian(grid)
    beta_min = min(e.beta for e in grid.edges)
    s_id = float(np.max(np.diag(H.values))) / beta_min
    S = Sigma_theta_Uc.values if isinstance(Sigma_theta_Uc, CovarianceMatrix) else np.asarray(Sigma_theta_Uc)
    smin = sigma_min(S)
    if Sigma_n is None:
        smax_n = 0.0
    else:
        Sn = Sigma_n.values if isinstance(Sigma_n, CovarianceMatrix) else np.asarray(Sigma_n)
        smax_n = sigma_max(Sn) if np.ndim(Sn) == 2 else float(np.max(Sn))
    snr = np.inf if smax_n == 0 else smin / smax_n
    return SnrParams(beta_min, s_id, snr, smin, smax_n)


def woodbury_deviation(Sigma_theta_Uc, Sigma_n_Uc, rtol: float = 1e-8) -> np.ndarray:
    """``Sigma^{-1} - (Sigma + Sigma_n)^{-1}``, cross-checked against its Woodbury form."""
    S = Sigma_theta_Uc.values if isinstance(Sigma_theta_Uc, CovarianceMatrix) else np.asarray(Sigma_theta_Uc, float)
    Sn = Sigma_n_Uc.values if isinstance(Sigma_n_Uc, CovarianceMatrix) else np.asarray(Sigma_n_Uc, float)
    Si = inverse_covariance(S)
    direct = Si - inverse_covariance(S + Sn)
    wood = Si @ np.linalg.solve(inverse_covariance(Sn) + Si, Si)
    wood = 0.5 * (wood + wood.T)
    scale = max(np.abs(Si).max(), 1.0)
    if np.abs(direct - wood).max() > rtol * scale:
        raise ArithmeticError(
            f"Woodbury identity mismatch {np.abs(direct - wood).max():.3g} (scale {scale:.3g})")
    return direct
