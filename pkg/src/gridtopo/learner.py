"""Topology learning for grids with unexcited internal buses.

Three stages:

1. every node is regressed on all others over the clipped simplex; nodes
   whose residual variance is at most ``tau1`` carry no injection (``U``);
2. each ``u`` in ``U`` is regressed on the excited nodes only; coefficients
   of at least ``tau2`` are its neighbours, and any two neighbours of the
   same ``u`` go into the exclusion set ``N2`` (an edge between them would
   close a triangle);
3. the excited-node covariance is inverted; an entry at or below ``-tau3``
   marks an edge unless the pair is in ``N2``.

``mode="lc"`` runs the same pipeline on joint magnitude/angle samples with
complex regression coefficients and the summed-entry edge statistic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .covariance import (CovarianceMatrix, analytic_theta_covariance, empirical_covariance,
                         inverse_covariance, sigma_min, snr_params)
from .grid import Grid, TopologyEstimate, build_laplacian, edge_key
from .regression import (RegressionSolution, regress, solve_complex_regression,
                         solve_constrained_nodal_regression, solve_nodal_regression)
from .samples import SampleSet, detrend

DEFAULT_OVERLAP_TOL = 1e-10


class LearnError(RuntimeError):
    """A stage failed; ``diagnostics`` holds whatever finished before it."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class LearnerConfig:
    tau1: float
    tau2: float
    tau3: float
    mode: str = "dc"
    joint_mode: bool = False
    overlap_tolerance: float | None = None  # None: chosen from the samples' noise level
    detrend: bool = True

    def __post_init__(self):
        for name in ("tau1", "tau2", "tau3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mode not in ("dc", "lc"):
            raise ValueError(f"mode must be 'dc' or 'lc', not {self.mode!r}")
        if self.overlap_tolerance is not None and self.overlap_tolerance < 0:
            raise ValueError("overlap_tolerance must be >= 0")


@dataclass(frozen=True)
class MergeReport:
    representative: dict  # removed node -> kept node

    @property
    def removed(self) -> list[int]:
        return sorted(self.representative)


@dataclass(frozen=True)
class LearnOutcome:
    estimate: TopologyEstimate
    n2: frozenset
    costs: dict
    coefficients: dict
    pair_statistics: dict
    thresholds: dict
    merge: MergeReport = field(default_factory=lambda: MergeReport({}))

    @property
    def edges(self) -> frozenset:
        return self.estimate.edges

    @property
    def zero_injection(self) -> frozenset:
        return self.estimate.zero_injection_nodes


def merge_overlapping_nodes(samples: SampleSet, tol: float = DEFAULT_OVERLAP_TOL,
                            noise_fraction: float = 0.0):
    """Collapse nodes whose angles coincide (``mean (theta_i - theta_j)^2 <= tol``).

    With ``noise_fraction`` r > 0 each pair's tolerance grows by 1.5 times
    the distance two noisy copies of one clean signal would show,
    ``r / (1 + r) * (var_i + var_j)``. The lowest id of every group is kept;
    the rest are reported as terminal zero-injection candidates hanging
    off it.
    """
    if samples.T < 2:
        raise ValueError("need at least 2 samples")
    X = samples.theta
    labels = samples.labels
    sq = np.einsum("ti,ti->i", X, X) / samples.T
    D = sq[:, None] + sq[None, :] - 2.0 * (X.T @ X) / samples.T
    limit = np.full(D.shape, float(tol))
    if noise_fraction > 0:
        var = np.var(X, axis=0)
        limit += 1.5 * noise_fraction / (1.0 + noise_fraction) * (var[:, None] + var[None, :])
    parent = list(range(len(labels)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(*np.nonzero(np.triu(D <= limit, 1))):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for n in range(len(labels)):
        groups.setdefault(find(n), []).append(n)
    rep = {}
    for members in groups.values():
        keep = min(members, key=lambda n: labels[n])
        for n in members:
            if n != keep:
                rep[labels[n]] = labels[keep]
    if not rep:
        return samples, MergeReport({})
    kept = [k for k in labels if k not in rep]
    return samples.select(kept), MergeReport(rep)


def _regress_target(i, regressors, Sigma: CovarianceMatrix, mode: str) -> RegressionSolution:
    if mode == "lc":
        return solve_complex_regression(i, Sigma, regressors=regressors)
    return regress(i, regressors, Sigma)


def identify_zero_injection(Sigma: CovarianceMatrix, tau1: float, mode: str = "dc"):
    """Nodes whose nodal regression cost is at most ``tau1``.

    Returns ``(U, costs, solutions)``.
    """
    sols = {i: _regress_target(i, [k for k in Sigma.labels if k != i], Sigma, mode) for i in Sigma.labels}
    costs = {i: s.cost for i, s in sols.items()}
    U = frozenset(i for i, c in costs.items() if c <= tau1)
    return U, costs, sols


def _neighbours_from(sols: dict, tau2: float):
    edges, n2, coef = set(), set(), {}
    for i, sol in sols.items():
        coef[i] = {k: a for k, a in zip(sol.labels, sol.x)}
        nb = sorted(k for k, a in zip(sol.labels, np.real(sol.x)) if a >= tau2)
        edges.update(edge_key(i, k) for k in nb)
        n2.update(edge_key(j, k) for j, k in itertools.combinations(nb, 2))
    return frozenset(edges), frozenset(n2), coef


def estimate_u_neighbors(U, Sigma: CovarianceMatrix, tau2: float, mode: str = "dc"):
    """Edges from each unexcited node to the excited nodes, and the set ``N2``.

    Returns ``(edges, n2, coefficients)``.
    """
    U = frozenset(U)
    Uc = [k for k in Sigma.labels if k not in U]
    sols = {i: _regress_target(i, Uc, Sigma, mode) for i in sorted(U)}
    return _neighbours_from(sols, tau2)


def uc_statistics(Sigma_Uc: CovarianceMatrix, mode: str = "dc") -> dict:
    """Per-pair inverse-covariance statistic over the excited nodes."""
    inv = inverse_covariance(Sigma_Uc)
    labels = Sigma_Uc.labels
    N = len(labels)
    stats = {}
    for a, b in itertools.combinations(range(N), 2):
        val = inv[a, b]
        if mode == "lc":
            val = val + inv[a + N, b + N]
        stats[edge_key(labels[a], labels[b])] = float(val)
    return stats


def detect_uc_edges(Sigma_Uc: CovarianceMatrix, n2, tau3: float, mode: str = "dc", stats=None):
    """Edges between excited nodes: statistic ``<= -tau3`` and pair not in ``N2``."""
    if stats is None:
        stats = uc_statistics(Sigma_Uc, mode)
    n2 = {edge_key(*p) for p in n2}
    return frozenset(p for p, s in stats.items() if s <= -tau3 and p not in n2)


def joint_identify(Sigma: CovarianceMatrix, tau1: float, tau2: float, mode: str = "dc"):
    """Zero-injection nodes and their neighbours from one regression per node.

    Only sound when no unexcited node's neighbourhood is contained in
    another's (implied by girth >= 4 with no unexcited node on a 4-loop).
    Returns ``(U, edges, n2, costs, coefficients)``.
    """
    U, costs, sols = identify_zero_injection(Sigma, tau1, mode)
    edges, n2, coef = _neighbours_from({i: sols[i] for i in sorted(U)}, tau2)
    return U, edges, n2, costs, coef


class StageCache:
    """Threshold-independent work of the learner, memoised per ``U``.

    Regression costs do not depend on any threshold, and the neighbour
    regressions and excited-node statistics depend only on the identified
    set ``U``. Threshold searches evaluate many configurations against one
    covariance through :meth:`outcome`.
    """

    def __init__(self, Sigma: CovarianceMatrix, mode: str = "dc"):
        self.Sigma = Sigma
        self.mode = mode
        self._ident = None
        self._nbr: dict = {}
        self._stats: dict = {}

    @classmethod
    def from_samples(cls, samples: SampleSet, config: LearnerConfig):
        samples, merge = _prepare(samples, config)
        cache = cls(_covariance(samples, config.mode), config.mode)
        cache.merge = merge
        return cache

    merge = MergeReport({})

    def identification(self):
        if self._ident is None:
            self._ident = identify_zero_injection(self.Sigma, math.inf, self.mode)[1:]
        return self._ident

    def costs(self) -> dict:
        return self.identification()[0]

    def neighbour_solutions(self, U) -> dict:
        U = frozenset(U)
        Uc = tuple(k for k in self.Sigma.labels if k not in U)
        out = {}
        for i in sorted(U):
            key = (i, Uc)
            if key not in self._nbr:
                self._nbr[key] = _regress_target(i, Uc, self.Sigma, self.mode)
            out[i] = self._nbr[key]
        return out

    def statistics(self, U) -> dict:
        U = frozenset(U)
        if U not in self._stats:
            Uc = [k for k in self.Sigma.labels if k not in U]
            self._stats[U] = uc_statistics(self.Sigma.sub(Uc), self.mode) if len(Uc) > 1 else {}
        return self._stats[U]

    def outcome(self, config: LearnerConfig) -> LearnOutcome:
        diag = {"thresholds": {"tau1": config.tau1, "tau2": config.tau2, "tau3": config.tau3}}
        try:
            costs = self.costs()
            diag["costs"] = costs
            U = frozenset(i for i, c in costs.items() if c <= config.tau1)
            if config.joint_mode:
                sols = self.identification()[1]
                e_u, n2, coef = _neighbours_from({i: sols[i] for i in sorted(U)}, config.tau2)
            else:
                e_u, n2, coef = _neighbours_from(self.neighbour_solutions(U), config.tau2)
            diag["coefficients"] = coef
            stats = self.statistics(U)
            diag["pair_statistics"] = stats
            e_uc = frozenset(p for p, s in stats.items() if s <= -config.tau3 and p not in n2)
        except LearnError:
            raise
        except Exception as exc:
            raise LearnError(f"{type(exc).__name__}: {exc}", diag) from exc
        merged = {edge_key(k, r) for k, r in self.merge.representative.items()}
        est = TopologyEstimate(e_u | e_uc | merged, U)
        return LearnOutcome(est, n2, costs, coef, stats, diag["thresholds"], self.merge)


def _prepare(samples: SampleSet, config: LearnerConfig):
    if samples.T < 2:
        raise ValueError(f"need at least 2 samples, got {samples.T}")
    if config.mode == "lc" and samples.v is None:
        raise ValueError("lc mode needs magnitude samples")
    if config.detrend and samples.T >= 3:
        samples = detrend(samples)
    if config.overlap_tolerance is not None:
        return merge_overlapping_nodes(samples, config.overlap_tolerance)
    # automatic: exact-coincidence tolerance widened by the recorded noise level
    r = float(samples.meta.get("r", 0.0) or 0.0)
    return merge_overlapping_nodes(samples, DEFAULT_OVERLAP_TOL, r)


def _covariance(samples: SampleSet, mode: str) -> CovarianceMatrix:
    return empirical_covariance(samples, joint=(mode == "lc"))


def learn_topology(samples: SampleSet, config: LearnerConfig) -> LearnOutcome:
    """Full pipeline: merge, covariance, identify ``U``, neighbours, excited edges."""
    return StageCache.from_samples(samples, config).outcome(config)


def learn_from_covariance(Sigma: CovarianceMatrix, config: LearnerConfig) -> LearnOutcome:
    """Same pipeline driven by a given (e.g. analytic) covariance."""
    mode = "lc" if Sigma.channels == ("v", "theta") else "dc"
    return StageCache(Sigma, mode).outcome(replace(config, mode=mode))


# -- thresholds ---------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdReport:
    tau1: float
    tau2: float
    tau3: float
    beta_min: float
    s_id: float
    sigma_min_signal: float
    snr: float
    snr_bounds: tuple[float, float, float]

    @property
    def snr_required(self) -> float:
        return max(self.snr_bounds)

    @property
    def snr_ok(self) -> bool:
        return self.snr >= self.snr_required

    def config(self, **kw) -> LearnerConfig:
        return LearnerConfig(self.tau1, self.tau2, self.tau3, **kw)


def injection_variances(grid: Grid, Sigma_p) -> dict:
    """``{node: variance}`` over non-reference nodes, zero on ``U``."""
    U = grid.zero_injection
    if isinstance(Sigma_p, dict):
        return {k: (0.0 if k in U else float(Sigma_p.get(k, 0.0))) for k in grid.node_ids}
    s = np.asarray(Sigma_p, dtype=float)
    if s.ndim == 0:
        return {k: (0.0 if k in U else float(s)) for k in grid.node_ids}
    if s.ndim == 2:
        s = np.diag(s)
    return {k: (0.0 if k in U else float(v)) for k, v in zip(grid.node_ids, s)}


def noise_covariance(Sigma_n, labels) -> np.ndarray:
    """Noise covariance over ``labels`` from a scalar, vector, dict or matrix."""
    if Sigma_n is None:
        return np.zeros((len(labels), len(labels)))
    if isinstance(Sigma_n, CovarianceMatrix):
        return Sigma_n.sub(labels).values
    if isinstance(Sigma_n, dict):
        return np.diag([float(Sigma_n.get(k, 0.0)) for k in labels])
    s = np.asarray(Sigma_n, dtype=float)
    if s.ndim == 0:
        return float(s) * np.eye(len(labels))
    if s.ndim == 1:
        return np.diag(s)
    return s


def theoretical_thresholds(grid: Grid, Sigma_p, Sigma_n=None, mode: str = "dc",
                           kappa: float = 0.3) -> ThresholdReport:
    """Noise-robust thresholds from the true grid and injection/noise statistics.

    ``Sigma_n`` may be a scalar (times identity), a per-node vector/dict
    over ``grid.node_ids``, a matrix, or ``None`` for noiseless data. With
    ``mode="lc"`` the edge threshold adds the reactive channel's share,
    ``beta_min**2 / (kappa**2 max Sigma_p)``, since the summed statistic
    collects both precision blocks.
    """
    H = build_laplacian(grid)
    var = injection_variances(grid, Sigma_p)
    S = analytic_theta_covariance(H, var, grid.zero_injection)
    S_uc = S.sub(grid.excited)
    if isinstance(Sigma_n, np.ndarray) and Sigma_n.ndim == 1:
        Sigma_n = dict(zip(grid.node_ids, Sigma_n))
    Sn = noise_covariance(Sigma_n, grid.node_ids)
    params = snr_params(grid, S_uc, Sn)
    s = params.s_id
    smin = params.sigma_min_signal
    poly = 1.0 + s ** 4 + s ** 2
    pmax = max(var.values())
    bounds = (pmax / (params.beta_min ** 2 * smin), 16.0 * math.sqrt(2.0) * s ** 2, 2.0 * poly)
    tau3 = params.beta_min ** 2 / pmax
    if mode == "lc":
        tau3 *= 1.0 + 1.0 / kappa ** 2
    return ThresholdReport(smin / poly, 1.0 / (2.0 * s), tau3,
                           params.beta_min, s, smin, params.snr, bounds)


# -- report file ----------------------------------------------------------------

def format_report(outcome: LearnOutcome) -> str:
    lines = ["# section: thresholds", "name,value"]
    lines += [f"{k},{v!r}" for k, v in outcome.thresholds.items()]
    lines += ["# section: zero_injection", "node"]
    lines += [str(k) for k in sorted(outcome.zero_injection)]
    lines += ["# section: edges", "i,j"]
    lines += [f"{i},{j}" for i, j in sorted(outcome.edges)]
    lines += ["# section: n2", "i,j"]
    lines += [f"{i},{j}" for i, j in sorted(outcome.n2)]
    lines += ["# section: merged", "node,representative"]
    lines += [f"{k},{r}" for k, r in sorted(outcome.merge.representative.items())]
    lines += ["# section: costs", "node,cost"]
    lines += [f"{k},{c!r}" for k, c in sorted(outcome.costs.items())]
    lines += ["# section: pair_statistics", "i,j,value"]
    lines += [f"{i},{j},{v!r}" for (i, j), v in sorted(outcome.pair_statistics.items())]
    return "\n".join(lines) + "\n"


def write_report(outcome: LearnOutcome, path) -> None:
    Path(path).write_text(format_report(outcome), encoding="utf-8")


def read_report_sections(path) -> dict[str, list[list[str]]]:
    sections: dict[str, list[list[str]]] = {}
    current = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# section:"):
            current = line.split(":", 1)[1].strip()
            sections[current] = []
        elif current is not None and line:
            sections[current].append(line.split(","))
    return {k: v[1:] for k, v in sections.items()}
