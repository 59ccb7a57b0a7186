"""Voltage sample sets, measurement noise, detrending and the sample CSV format."""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SampleSet:
    """``T x N`` phase-angle deviations, optional magnitude deviations.

    Column ``k`` of both matrices belongs to node ``labels[k]``.
    """

    theta: np.ndarray
    labels: tuple[int, ...]
    v: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        labels = tuple(int(k) for k in self.labels)
        if theta.shape[1] != len(labels):
            raise ValueError(f"theta has {theta.shape[1]} columns for {len(labels)} labels")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta contains non-finite entries")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "labels", labels)
        if self.v is not None:
            v = np.atleast_2d(np.asarray(self.v, dtype=float))
            if v.shape != theta.shape:
                raise ValueError("v and theta shapes differ")
            if not np.all(np.isfinite(v)):
                raise ValueError("v contains non-finite entries")
            object.__setattr__(self, "v", v)

    @property
    def T(self) -> int:
        return self.theta.shape[0]

    @property
    def N(self) -> int:
        return self.theta.shape[1]

    def select(self, labels) -> "SampleSet":
        pos = {k: n for n, k in enumerate(self.labels)}
        idx = [pos[k] for k in labels]
        return replace(self, theta=self.theta[:, idx], labels=tuple(labels),
                       v=None if self.v is None else self.v[:, idx])

    def head(self, T: int) -> "SampleSet":
        return replace(self, theta=self.theta[:T], v=None if self.v is None else self.v[:T])


@dataclass(frozen=True)
class NoiseModel:
    """Per-node noise variance = ``relative_variance`` x clean column variance."""

    relative_variance: float = 0.0

    def __post_init__(self):
        if self.relative_variance < 0:
            raise ValueError("relative noise variance must be >= 0")

    def variances(self, x: np.ndarray) -> np.ndarray:
        return self.relative_variance * np.var(x, axis=0)


def add_noise(samples: SampleSet, noise: NoiseModel | float, seed=None) -> SampleSet:
    if not isinstance(noise, NoiseModel):
        noise = NoiseModel(float(noise))
    r = noise.relative_variance
    meta = dict(samples.meta, r=r)
    if r == 0:
        return replace(samples, meta=meta)
    rng = np.random.default_rng(seed)
    theta = samples.theta + rng.standard_normal(samples.theta.shape) * np.sqrt(noise.variances(samples.theta))
    v = samples.v
    if v is not None:
        v = v + rng.standard_normal(v.shape) * np.sqrt(noise.variances(v))
    return replace(samples, theta=theta, v=v, meta=meta)


def _detrend_matrix(x: np.ndarray) -> np.ndarray:
    T = x.shape[0]
    t = np.arange(T, dtype=float)
    t -= t.mean()
    xc = x - x.mean(axis=0)
    slope = (t @ xc) / (t @ t)
    return xc - np.outer(t, slope)


def detrend(samples: SampleSet) -> SampleSet:
    """Remove the least-squares linear-in-time fit from every column."""
    if samples.T < 3:
        raise ValueError("detrending needs at least 3 samples")
    v = None if samples.v is None else _detrend_matrix(samples.v)
    return replace(samples, theta=_detrend_matrix(samples.theta), v=v)


# -- CSV ---------------------------------------------------------------------

def _format_meta(meta: dict) -> str:
    return "# meta: " + " ".join(f"{k}={meta[k]}" for k in meta)


def _parse_meta(line: str) -> dict:
    out = {}
    for tok in line.split(":", 1)[1].split():
        k, _, v = tok.partition("=")
        for conv in (int, float):
            try:
                v = conv(v)
                break
            except ValueError:
                pass
        out[k] = v
    return out


def write_samples_csv(samples: SampleSet, path) -> None:
    cols = [f"theta_{k}" for k in samples.labels]
    data = [samples.theta]
    if samples.v is not None:
        cols += [f"v_{k}" for k in samples.labels]
        data.append(samples.v)
    mat = np.hstack(data)
    buf = io.StringIO()
    if samples.meta:
        buf.write(_format_meta(samples.meta) + "\n")
    buf.write(",".join(["t"] + cols) + "\n")
    for t, row in enumerate(mat):
        buf.write(str(t) + "," + ",".join(repr(float(x)) for x in row) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_samples_csv(path) -> SampleSet:
    meta, header, rows = {}, None, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line[1:].strip().startswith("meta:"):
                    meta = _parse_meta(line[1:].strip())
                continue
            if header is None:
                header = line.split(",")
                continue
            cells = line.split(",")
            if len(cells) != len(header):
                raise ValueError(f"line {lineno}: expected {len(header)} cells, got {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(n for n, c in enumerate(cells) if not _isfloat(c))
                raise ValueError(f"line {lineno}, column {header[bad]!r}: non-numeric cell {cells[bad]!r}") from None
    if header is None:
        raise ValueError(f"{path}: no header row")
    mat = np.array(rows, dtype=float).reshape(len(rows), len(header))
    theta_cols = [(n, int(h[6:])) for n, h in enumerate(header) if h.startswith("theta_")]
    v_cols = [(n, int(h[2:])) for n, h in enumerate(header) if h.startswith("v_")]
    labels = tuple(k for _, k in theta_cols)
    theta = mat[:, [n for n, _ in theta_cols]]
    v = None
    if v_cols:
        vpos = {k: n for n, k in v_cols}
        v = mat[:, [vpos[k] for k in labels]]
    return SampleSet(theta, labels, v, meta)


def _isfloat(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False
