"""Monte Carlo experiments: threshold tuning, error curves and their files.

An experiment sweeps sample sizes and noise fractions for one grid and one
power-flow model. Trial ``k`` draws its injections with seed ``seed + k``;
every sample size and noise level of that trial reuses the same clean draw
(the first ``T`` rows), and the noise is drawn per cell.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .fixtures import fixture_grids, get_fixture
from .grid import Grid, TopologyEstimate, load_grid, topology_error
from .learner import LearnError, LearnerConfig, StageCache, theoretical_thresholds
from .powerflow import MODELS, PowerFlowError, simulate
from .samples import NoiseModel, SampleSet, add_noise, _detrend_matrix

THRESHOLD_SOURCES = ("oracle", "tuned", "explicit")
# spellings accepted in spec files for the ground-truth threshold formulas
ORACLE_ALIASES = ("oracle", "theorem8")
INJECTION_SOURCES = ("gaussian", "common-factor", "csv")
LC_MODELS = ("lc-linear", "ac-nonlinear")

# threshold search grid: factors relative to the oracle thresholds
TUNE_POINTS = 20
TUNE_SPAN = {"tau1": (-6.0, 6.0), "tau2": (-6.0, 1.0), "tau3": (-6.0, 1.0)}
TUNE_SEEDS = 3
TUNE_SEED_OFFSET = 1_000_000


class SpecError(ValueError):
    pass


class ZeroVarianceWarning(UserWarning):
    pass


def resolve_grid(ref) -> Grid:
    """A fixture name (case-insensitive) or a path to a grid file."""
    if isinstance(ref, Grid):
        return ref
    ref = str(ref)
    if ref.upper() in fixture_grids():
        return get_fixture(ref)
    path = Path(ref)
    if not path.exists():
        raise SpecError(f"{ref!r} is neither a fixture ({', '.join(sorted(fixture_grids()))}) nor a file")
    return load_grid(path)


@dataclass(frozen=True)
class ExperimentSpec:
    grid: str
    model: str = "dc-linear"
    sample_sizes: tuple[int, ...] = (100, 300, 1000)
    noise_fractions: tuple[float, ...] = (0.0,)
    trials: int = 15
    seed: int = 0
    thresholds: str = "tuned"
    T_tune: int = 10_000
    taus: tuple[float, float, float] | None = None
    injections: str = "gaussian"
    sigma: float = 0.1
    rho: float = 0.0
    csv: str | None = None
    columns: dict | None = None
    base: float = 1.0
    tune_seeds: int = TUNE_SEEDS

    def __post_init__(self):
        object.__setattr__(self, "sample_sizes", tuple(int(t) for t in self.sample_sizes))
        object.__setattr__(self, "noise_fractions", tuple(float(r) for r in self.noise_fractions))
        if self.model not in MODELS:
            raise SpecError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.trials < 1:
            raise SpecError("trials must be >= 1")
        T = self.sample_sizes
        if not T or any(t < 2 for t in T) or any(a >= b for a, b in zip(T, T[1:])):
            raise SpecError(f"sample sizes must be ascending and >= 2, got {list(T)}")
        if not self.noise_fractions or any(r < 0 for r in self.noise_fractions):
            raise SpecError("noise fractions must be non-empty and >= 0")
        if len(set(self.noise_fractions)) != len(self.noise_fractions):
            raise SpecError("noise fractions must be distinct")
        if self.thresholds in ORACLE_ALIASES:
            object.__setattr__(self, "thresholds", "oracle")
        if self.thresholds not in THRESHOLD_SOURCES:
            raise SpecError(f"thresholds must be one of {THRESHOLD_SOURCES}")
        if self.thresholds == "explicit":
            if self.taus is None or len(self.taus) != 3 or min(self.taus) <= 0:
                raise SpecError("explicit thresholds need three positive values tau1, tau2, tau3")
        if self.thresholds == "tuned" and self.T_tune < 2:
            raise SpecError("T_tune must be >= 2")
        if self.injections not in INJECTION_SOURCES:
            raise SpecError(f"injections must be one of {INJECTION_SOURCES}")
        if self.injections != "csv" and not self.sigma > 0:
            raise SpecError("sigma must be > 0 for synthetic injections")
        if not 0.0 <= self.rho <= 1.0:
            raise SpecError("rho must lie in [0, 1]")
        if self.injections == "csv" and not self.csv:
            raise SpecError("csv injections need a csv path")
        if not self.base > 0:
            raise SpecError("base must be > 0")
        if self.tune_seeds < 1:
            raise SpecError("tune_seeds must be >= 1")

    @property
    def mode(self) -> str:
        return "lc" if self.model in LC_MODELS else "dc"


# -- spec file -------------------------------------------------------------------

_CALL = re.compile(r"^([a-z0-9-]+)\s*\((.*)\)$", re.IGNORECASE)
_KEYS = {"grid", "model", "T", "sample_sizes", "noise", "noise_fractions", "trials", "seed",
         "thresholds", "T_tune", "tau1", "tau2", "tau3", "injections", "sigma", "rho", "csv",
         "columns", "base", "tune_seeds"}


def _unquote(v: str) -> str:
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "'\"":
        return v[1:-1]
    return v


def _list(v: str, conv) -> list:
    v = v.strip()
    if v.startswith("[") and v.endswith("]"):
        v = v[1:-1]
    return [conv(x) for x in v.split(",") if x.strip()]


def _columns(v: str) -> dict:
    out = {}
    for item in _list(v, str):
        node, sep, col = item.partition(":")
        if not sep:
            raise ValueError(f"column map entry {item.strip()!r} is not node:column")
        out[int(node)] = _unquote(col)
    return out


def parse_spec(text: str, base_dir=None) -> ExperimentSpec:
    """Parse ``key = value`` lines (``#`` comments, lists comma-separated).

    ``thresholds`` accepts ``oracle`` (alias ``theorem8``), ``tuned``, ``tuned(<T>)`` or
    ``explicit(<tau1>, <tau2>, <tau3>)``; ``injections`` accepts
    ``gaussian``, ``gaussian(<sigma>)``, ``common-factor(<sigma>, <rho>)`` or
    ``csv(<path>)``. Relative csv paths are resolved against ``base_dir``.
    """
    raw: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise SpecError(f"line {lineno}: expected key = value")
        if key not in _KEYS:
            raise SpecError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise SpecError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = (lineno, value.strip())

    kw: dict = {}
    taus = {}

    def conv(key, fn):
        lineno, value = raw[key]
        try:
            return fn(value)
        except (ValueError, TypeError) as exc:
            raise SpecError(f"line {lineno}: bad value for {key}: {exc}") from None

    for key, (lineno, value) in raw.items():
        if key == "grid":
            kw["grid"] = _unquote(value)
        elif key == "model":
            kw["model"] = _unquote(value)
        elif key in ("T", "sample_sizes"):
            kw["sample_sizes"] = conv(key, lambda v: _list(v, lambda x: int(float(x))))
        elif key in ("noise", "noise_fractions"):
            kw["noise_fractions"] = conv(key, lambda v: _list(v, float))
        elif key in ("trials", "seed", "T_tune", "tune_seeds"):
            kw[key] = conv(key, lambda v: int(float(v)))
        elif key in ("sigma", "rho", "base"):
            kw[key] = conv(key, float)
        elif key in ("tau1", "tau2", "tau3"):
            taus[key] = conv(key, float)
        elif key == "csv":
            kw["csv"] = _unquote(value)
        elif key == "columns":
            kw["columns"] = conv(key, _columns)
        elif key == "thresholds":
            m = _CALL.match(value)
            name = (m.group(1) if m else value).strip().lower()
            kw["thresholds"] = name
            if m and name == "tuned":
                kw["T_tune"] = conv(key, lambda v: int(float(_CALL.match(v).group(2))))
            elif m and name == "explicit":
                vals = conv(key, lambda v: _list(_CALL.match(v).group(2), float))
                if len(vals) != 3:
                    raise SpecError(f"line {lineno}: explicit thresholds need three values")
                taus = dict(zip(("tau1", "tau2", "tau3"), vals)) | taus
        elif key == "injections":
            m = _CALL.match(value)
            name = (m.group(1) if m else value).strip().lower()
            kw["injections"] = name
            if m:
                args = [a.strip() for a in m.group(2).split(",") if a.strip()]
                try:
                    if name == "csv":
                        kw["csv"] = _unquote(args[0])
                    else:
                        kw["sigma"] = float(args[0])
                        if name == "common-factor":
                            kw["rho"] = float(args[1])
                except (ValueError, IndexError):
                    raise SpecError(f"line {lineno}: bad injections value {value!r}") from None
    if "grid" not in kw:
        raise SpecError("spec needs a grid")
    if taus:
        if set(taus) != {"tau1", "tau2", "tau3"}:
            raise SpecError("give all of tau1, tau2, tau3")
        kw["taus"] = (taus["tau1"], taus["tau2"], taus["tau3"])
        kw.setdefault("thresholds", "explicit")
    if kw.get("csv") and base_dir is not None and not Path(kw["csv"]).is_absolute():
        kw["csv"] = str(Path(base_dir) / kw["csv"])
    try:
        return ExperimentSpec(**kw)
    except TypeError as exc:
        raise SpecError(str(exc)) from None


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    return parse_spec(path.read_text(encoding="utf-8"), base_dir=path.parent)


# -- load CSV ingestion ------------------------------------------------------------

@dataclass(frozen=True)
class LoadData:
    """Active-power injections (per-unit) over ``labels``; ``U`` columns zero."""

    p: np.ndarray
    labels: tuple[int, ...]
    source: str = ""

    @property
    def T(self) -> int:
        return self.p.shape[0]

    def variances(self) -> np.ndarray:
        return np.var(self.p, axis=0)


def write_load_csv(p: np.ndarray, labels, path, base: float = 1.0, zero=()) -> None:
    """Write per-node load series as ``t,p_<id>,...`` in physical units (``p * base``)."""
    zero = set(zero)
    cols = [n for n, k in enumerate(labels) if k not in zero]
    lines = [",".join(["t"] + [f"p_{labels[n]}" for n in cols])]
    for t, row in enumerate(np.asarray(p, dtype=float)):
        lines.append(",".join([str(t)] + [repr(float(row[n] * base)) for n in cols]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def ingest_load_csv(path, grid: Grid, columns: dict | None = None, base: float = 1.0,
                    detrend: bool = True) -> LoadData:
    """Read per-node load series and map them onto the grid's excited nodes.

    ``columns`` maps node id to column name; by default node ``k`` reads
    column ``p_<k>`` or ``<k>``. Values are divided by ``base`` to get
    per-unit injections and, with ``detrend``, stripped of their linear
    trend. Zero-injection nodes are forced to zero. A constant column
    triggers :class:`ZeroVarianceWarning`.
    """
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    pos = {h: n for n, h in enumerate(header)}
    mapping = {}
    missing = []
    for k in grid.excited:
        if columns is not None:
            name = columns.get(k)
        else:
            name = f"p_{k}" if f"p_{k}" in pos else (str(k) if str(k) in pos else None)
        if name is None or name not in pos:
            missing.append(k)
        else:
            mapping[k] = pos[name]
    if missing:
        raise ValueError(f"{path}: no load column for excited node(s) {missing}")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            raise ValueError(f"{path}: row {lineno} has {len(cells)} cells, header has {len(header)}")
        row = []
        for k, n in mapping.items():
            try:
                row.append(float(cells[n]))
            except ValueError:
                raise ValueError(f"{path}: row {lineno}, column {header[n]!r}: "
                                 f"non-numeric value {cells[n]!r}") from None
        rows.append(row)
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 data rows")
    data = np.array(rows, dtype=float) / base
    if detrend and len(rows) >= 3:
        data = _detrend_matrix(data)
    const = [k for k, var in zip(mapping, np.var(data, axis=0)) if var == 0.0]
    if const:
        warnings.warn(f"{path}: constant load column(s) for node(s) {const}; the excited-node "
                      "injection covariance will be singular", ZeroVarianceWarning, stacklevel=2)
    labels = tuple(grid.node_ids)
    p = np.zeros((len(rows), len(labels)))
    col = {k: n for n, k in enumerate(mapping)}
    for j, k in enumerate(labels):
        if k in col:
            p[:, j] = data[:, col[k]]
    return LoadData(p, labels, str(path))


# -- sample generation -----------------------------------------------------------

def _injection_variances(spec: ExperimentSpec, grid: Grid, loads: LoadData | None):
    if loads is not None:
        return dict(zip(loads.labels, loads.variances()))
    var = spec.sigma ** 2 * (1.0 + spec.rho ** 2)
    return var


def _load_data(spec: ExperimentSpec, grid: Grid) -> LoadData | None:
    if spec.injections != "csv":
        return None
    return ingest_load_csv(spec.csv, grid, spec.columns, spec.base)


def clean_samples(spec: ExperimentSpec, grid: Grid, T: int, seed: int,
                  loads: LoadData | None = None) -> SampleSet:
    """Noise-free samples for one trial."""
    if spec.injections == "csv":
        if loads is None:
            loads = _load_data(spec, grid)
        if T > loads.T:
            raise SpecError(f"need {T} load rows, csv has {loads.T}")
        start = int(np.random.default_rng(seed).integers(0, loads.T - T + 1))
        return simulate(grid, spec.model, T, seed=seed, injections=loads.p[start:start + T])
    rho = spec.rho if spec.injections == "common-factor" else 0.0
    key = (grid, spec.model, float(spec.sigma), float(rho), int(T), int(seed))
    if key not in _CLEAN_CACHE:
        if len(_CLEAN_CACHE) >= _CLEAN_CACHE_SIZE:
            _CLEAN_CACHE.pop(next(iter(_CLEAN_CACHE)))
        _CLEAN_CACHE[key] = simulate(grid, spec.model, T, spec.sigma, rho, seed=seed)
    return _CLEAN_CACHE[key]


# nonlinear draws are expensive and tuning revisits them for every noise level
_CLEAN_CACHE: dict = {}
_CLEAN_CACHE_SIZE = 8


def _noisy(samples: SampleSet, r: float, seed: int, T: int) -> SampleSet:
    head = samples.head(T)
    if r == 0:
        return replace(head, meta=dict(head.meta, r=0.0))
    return add_noise(head, NoiseModel(r), [int(seed), 1, int(T), int(round(r * 1e9))])


def _score(grid: Grid, cache: StageCache, config: LearnerConfig) -> tuple[float, bool]:
    try:
        est = cache.outcome(config).estimate
        return topology_error(grid, est), True
    except LearnError:
        return topology_error(grid, TopologyEstimate(frozenset(), frozenset())), False


# -- thresholds ----------------------------------------------------------------------

def _tuning_error(grid: Grid, caches, cfg) -> float:
    # a configuration the learner cannot finish ranks below every finished one
    scores = [_score(grid, c, cfg) for c in caches]
    if not all(ok for _, ok in scores):
        return math.inf
    return float(np.mean([e for e, _ in scores]))


def reference_thresholds(spec: ExperimentSpec, grid: Grid | None = None, noise: float = 0.0,
                         loads: LoadData | None = None):
    """Oracle thresholds for the spec's grid and injection statistics."""
    grid = grid or resolve_grid(spec.grid)
    if spec.injections == "csv" and loads is None:
        loads = _load_data(spec, grid)
    return theoretical_thresholds(grid, _injection_variances(spec, grid, loads), mode=spec.mode)


def _best_run(errors: list[float], current: int) -> tuple[int, int]:
    """Longest run of indices attaining the minimum error, preferring the
    run that holds ``current``."""
    best = min(errors)
    runs, start = [], None
    for n, e in enumerate(list(errors) + [math.inf]):
        if e == best and start is None:
            start = n
        elif e != best and start is not None:
            runs.append((start, n - 1))
            start = None
    return max(runs, key=lambda ab: (ab[1] - ab[0], ab[0] <= current <= ab[1]))


@dataclass(frozen=True)
class TuningResult:
    config: LearnerConfig
    error: float
    factors: dict
    reference: object
    evaluations: int


def tune_thresholds(spec: ExperimentSpec, T_tune: int | None = None, noise: float = 0.0,
                    grid: Grid | None = None, max_sweeps: int = 4, detail: bool = False):
    """Coordinate search for the thresholds minimising mean error at ``T_tune``.

    Each axis is a log grid of :data:`TUNE_POINTS` factors relative to the
    oracle thresholds; errors are averaged over ``spec.tune_seeds`` sample
    sets drawn with seeds disjoint from the trial seeds. The search sweeps
    ``tau1``, ``tau2``, ``tau3`` in turn until a sweep changes nothing.
    """
    grid = grid or resolve_grid(spec.grid)
    T_tune = int(T_tune or spec.T_tune)
    loads = _load_data(spec, grid)
    ref = reference_thresholds(spec, grid, noise, loads)
    base = {"tau1": ref.tau1, "tau2": ref.tau2, "tau3": ref.tau3}
    axes = {k: np.logspace(*TUNE_SPAN[k], TUNE_POINTS) for k in base}
    mode = spec.mode
    caches = []
    for s in range(spec.tune_seeds):
        seed = spec.seed + TUNE_SEED_OFFSET + s
        clean = clean_samples(spec, grid, T_tune, seed, loads)
        samples = _noisy(clean, noise, seed, T_tune)
        caches.append(StageCache.from_samples(samples, LearnerConfig(1.0, 1.0, 1.0, mode=mode)))
    idx = {k: int(np.argmin(np.abs(np.log10(axes[k])))) for k in base}
    memo: dict = {}

    def evaluate(ix):
        key = (ix["tau1"], ix["tau2"], ix["tau3"])
        if key not in memo:
            cfg = LearnerConfig(*(base[k] * axes[k][ix[k]] for k in ("tau1", "tau2", "tau3")), mode=mode)
            memo[key] = _tuning_error(grid, caches, cfg)
        return memo[key]

    runs = {}
    for _ in range(max_sweeps):
        changed = False
        for k in ("tau1", "tau2", "tau3"):
            errs = [evaluate(dict(idx, **{k: n})) for n in range(TUNE_POINTS)]
            runs[k] = _best_run(errs, idx[k])
            n = sum(runs[k]) // 2
            if n != idx[k]:
                idx[k] = n
                changed = True
        if not changed:
            break
    # final value: log-midpoint of each axis' best run, which need not be a grid point
    factors = {k: float(np.sqrt(axes[k][runs[k][0]] * axes[k][runs[k][1]])) for k in base}
    cfg = LearnerConfig(*(base[k] * factors[k] for k in ("tau1", "tau2", "tau3")), mode=mode)
    err = _tuning_error(grid, caches, cfg)
    result = TuningResult(cfg, err, factors, ref, len(memo) + 1)
    return result if detail else cfg


def experiment_thresholds(spec: ExperimentSpec, noise: float, grid: Grid | None = None) -> LearnerConfig:
    grid = grid or resolve_grid(spec.grid)
    if spec.thresholds == "explicit":
        return LearnerConfig(*spec.taus, mode=spec.mode)
    if spec.thresholds == "oracle":
        return reference_thresholds(spec, grid, noise).config(mode=spec.mode)
    return tune_thresholds(spec, spec.T_tune, noise, grid)


# -- experiments -------------------------------------------------------------------

@dataclass(frozen=True)
class CurveRow:
    T: int
    noise_fraction: float
    mean_error: float
    stderr: float
    trials: int


@dataclass
class ErrorCurve:
    rows: list[CurveRow] = field(default_factory=list)
    thresholds: dict = field(default_factory=dict)  # noise fraction -> LearnerConfig
    diagnostics: dict = field(default_factory=dict)  # (T, r) -> counters
    errors: dict = field(default_factory=dict)  # (T, r) -> per-trial errors

    def add(self, row: CurveRow) -> None:
        if row.mean_error < 0:
            raise ValueError("mean error must be >= 0")
        if any(r.T == row.T and r.noise_fraction == row.noise_fraction for r in self.rows):
            raise ValueError(f"duplicate row for T={row.T}, r={row.noise_fraction}")
        self.rows.append(row)

    def row(self, T: int, noise: float = 0.0) -> CurveRow:
        for r in self.rows:
            if r.T == T and r.noise_fraction == noise:
                return r
        raise KeyError((T, noise))

    def sorted_rows(self) -> list[CurveRow]:
        return sorted(self.rows, key=lambda r: (r.noise_fraction, r.T))


def run_experiment(spec: ExperimentSpec, configs: dict | None = None, progress=None) -> ErrorCurve:
    """Mean topology error and its standard error for every ``(T, r)`` cell.

    ``configs`` maps noise fraction to a :class:`LearnerConfig` and skips
    threshold selection for those levels. A power-flow failure aborts that
    trial for every cell and is counted under ``pf_failures``; a learner
    failure scores the trial as an empty estimate and is counted under
    ``learn_failures``.
    """
    grid = resolve_grid(spec.grid)
    loads = _load_data(spec, grid)
    curve = ErrorCurve()
    for r in spec.noise_fractions:
        cfg = (configs or {}).get(r) or experiment_thresholds(spec, r, grid)
        curve.thresholds[r] = cfg
    cells = [(T, r) for r in spec.noise_fractions for T in spec.sample_sizes]
    errs = {c: [] for c in cells}
    diag = {c: {"pf_failures": 0, "learn_failures": 0} for c in cells}
    Tmax = spec.sample_sizes[-1]
    for k in range(spec.trials):
        seed = spec.seed + k
        try:
            clean = clean_samples(spec, grid, Tmax, seed, loads)
        except PowerFlowError:
            for c in cells:
                diag[c]["pf_failures"] += 1
            continue
        for T, r in cells:
            cfg = curve.thresholds[r]
            cache = StageCache.from_samples(_noisy(clean, r, seed, T), cfg)
            e, ok = _score(grid, cache, cfg)
            errs[(T, r)].append(e)
            if not ok:
                diag[(T, r)]["learn_failures"] += 1
        if progress is not None:
            progress(k + 1, spec.trials)
    for T, r in cells:
        e = np.array(errs[(T, r)], dtype=float)
        n = len(e)
        mean = float(e.mean()) if n else float("nan")
        se = float(e.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        curve.add(CurveRow(T, r, mean, se, n))
    curve.diagnostics = diag
    curve.errors = errs
    return curve


# -- result files ------------------------------------------------------------------

CSV_HEADER = "T,noise_fraction,mean_error,stderr,trials"


def _g(x: float) -> str:
    return "%.6g" % x


def format_errors_csv(curve: ErrorCurve) -> str:
    lines = [CSV_HEADER]
    for r in curve.sorted_rows():
        lines.append(f"{r.T},{_g(r.noise_fraction)},{_g(r.mean_error)},{_g(r.stderr)},{r.trials}")
    return "\n".join(lines) + "\n"


def format_gnuplot(curve: ErrorCurve, csv_name: str = "errors.csv") -> str:
    levels = sorted({r.noise_fraction for r in curve.rows})
    lines = [
        "# relative topology error against sample size, one line per noise fraction",
        "set datafile separator ','",
        "set terminal pngcairo size 800,600",
        "set output 'errors.png'",
        "set xlabel 'number of samples T'",
        "set ylabel 'mean relative topology error'",
        "set yrange [0:*]",
        "set key top right",
        "set grid",
    ]
    plots = [f"'{csv_name}' every ::1 using 1:($2=={_g(r)} ? $3 : 1/0):4 "
             f"with yerrorlines title 'r = {_g(r)}'" for r in levels]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def emit_results(curve: ErrorCurve, outdir) -> tuple[Path, Path]:
    """Write ``errors.csv`` and ``errors.gplot`` to ``outdir``; idempotent."""
    if not curve.rows:
        raise ValueError("empty error curve")
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path, plot_path = out / "errors.csv", out / "errors.gplot"
        csv_path.write_text(format_errors_csv(curve), encoding="utf-8")
        plot_path.write_text(format_gnuplot(curve), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return csv_path, plot_path


def read_errors_csv(path) -> ErrorCurve:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: header must be {CSV_HEADER!r}")
    curve = ErrorCurve()
    for ln in lines[1:]:
        if ln.strip():
            T, r, m, se, n = ln.split(",")
            curve.add(CurveRow(int(T), float(r), float(m), float(se), int(n)))
    return curve
