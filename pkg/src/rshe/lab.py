"""Monte Carlo convergence experiments, rate fits and report writers.

Every replica r gets its own lattice from (master_seed, r); the reference
and all levels of that replica are solved on that one lattice, so the
measured differences are discretisation error only.  Replicas are solved
in batches, optionally on a thread pool; results are merged in replica
order so the output does not depend on the worker count.
"""
from __future__ import annotations

import io
import logging
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import __version__
from .feynman_kac import FkQuery, fk_estimate
from .noise import BrownianLattice, Full, Mollified, Truncated, WongZakai, sample_brownian_lattice
from .solver import BlowUpError, SimConfig, Trajectory, solve_batch
from .spectral import mode_range, resize_coeffs

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "ErrorRow",
    "WzReport",
    "FkCheck",
    "RunAborted",
    "default_stride",
    "replica_seed",
    "estimate_errors",
    "run_convergence",
    "convergence_samples",
    "paired_separation",
    "fit_rate",
    "run_wong_zakai",
    "write_csv",
    "format_summary",
    "write_dump",
    "read_dump",
    "worker_count",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("kind", "h", "E_sup", "E_sup_stderr", "E_int", "E_int_stderr",
               "replicas", "aborted", "seed", "version")
DUMP_MAGIC = b"RSHE1"
MAX_ABORT_FRACTION = 0.01
KINDS = ("spectral", "mollify", "wong-zakai", "simulate", "exponents", "selftest")


class RunAborted(RuntimeError):
    """Too many replicas blew up for the run to be meaningful."""


def default_stride(dt: float) -> int:
    """Largest stride with dt*stride <= 1/256 that divides the step count."""
    K = int(round(1.0 / dt))
    s = max(1, K // 256)
    while K % s:
        s -= 1
    return s


def replica_seed(master_seed: int, r: int) -> int:
    return int(np.random.SeedSequence([master_seed, r]).generate_state(1, np.uint64)[0])


def worker_count(requested: int | None = None) -> int:
    n = requested or 1
    cap = os.environ.get("RSHE_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            logger.warning("ignoring non-integer RSHE_THREADS=%r", cap)
    return max(1, n)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    base: SimConfig
    levels: tuple = ()
    reference: float | None = None
    replicas: int = 64
    mu: float = 0.25
    master_seed: int = 0
    output: str | None = None
    kappa_target: float | None = None
    wz_exponent: float = 3.0
    fk_points: tuple = ()
    fk_paths: int = 10_000
    workers: int | None = None
    batch: int = 16

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        g = self.base.gamma
        if self.kind in ("spectral", "mollify") and not g < self.mu < 0.5 - g:
            raise ValueError(f"mu must lie in (gamma, 1/2 - gamma) = ({g}, {0.5 - g})")
        if self.kappa_target is not None and not 0.0 < self.kappa_target < 0.5 - g - self.mu:
            raise ValueError(f"kappa_target must lie in (0, {0.5 - g - self.mu})")
        lv = self.levels
        if self.kind == "spectral":
            if not lv or any(int(n) != n or n < 1 for n in lv):
                raise ValueError("spectral levels must be positive integers")
            if any(b <= a for a, b in zip(lv, lv[1:])):
                raise ValueError("spectral levels must be strictly increasing")
            if self.reference is None or lv[-1] > self.reference:
                raise ValueError("reference N must be at least the finest level")
        elif self.kind in ("mollify", "wong-zakai"):
            if not lv or any(not 0.0 < e <= 1.0 for e in lv):
                raise ValueError("eps levels must lie in (0, 1]")
            if any(b >= a for a, b in zip(lv, lv[1:])):
                raise ValueError("eps levels must be strictly decreasing")
            if self.kind == "wong-zakai" and self.wz_exponent <= 0:
                raise ValueError("wz_exponent must be positive")


@dataclass(frozen=True)
class ErrorRow:
    kind: str
    h: float
    E_sup: float
    E_sup_stderr: float
    E_int: float
    E_int_stderr: float
    replicas: int
    aborted: int


# --------------------------------------------------------------------------
# error functionals


def _check_pair(a: Trajectory, b: Trajectory):
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise ValueError("trajectories have different saved time grids")
    if a.fingerprint[0] != b.fingerprint[0]:
        raise ValueError("trajectories were not driven by the same lattice")


def _difference(a: Trajectory, b: Trajectory) -> np.ndarray:
    N = max(a.max_mode, b.max_mode)
    return resize_coeffs(a.states, N) - resize_coeffs(b.states, N)


def _norm_sq_series(D: np.ndarray, alpha: float) -> np.ndarray:
    N = (D.shape[-1] - 1) // 2
    w = (1.0 + mode_range(N).astype(float) ** 2) ** alpha
    return (D * D) @ w


def error_series(a: Trajectory, b: Trajectory, mu: float):
    """Per saved time: ||a-b||^2 in H^{mu-1} and in H^mu."""
    _check_pair(a, b)
    D = _difference(a, b)
    return _norm_sq_series(D, mu - 1.0), _norm_sq_series(D, mu)


def estimate_errors(a: Trajectory, b: Trajectory, mu: float) -> tuple:
    """(sup_t ||a-b||^2_{H^{mu-1}}, trapezoid int_0^1 ||a-b||^2_{H^mu} dt)."""
    lo, hi = error_series(a, b, mu)
    return float(lo.max()), float(np.trapezoid(hi, a.times))


def _aggregate(kind, h, lo, hi, times, aborted) -> ErrorRow:
    """lo, hi: (R, S) per-replica series of squared norms."""
    R = lo.shape[0]
    m = lo.mean(axis=0)
    j = int(np.argmax(m))
    per_int = np.trapezoid(hi, times, axis=1)
    se = (lambda x: float(np.std(x, ddof=1) / math.sqrt(R))) if R > 1 else (lambda x: 0.0)
    return ErrorRow(kind, float(h), float(m[j]), se(lo[:, j]), float(per_int.mean()),
                    se(per_int), R, aborted)


# --------------------------------------------------------------------------
# drivers


def _map_batches(fn, R: int, batch: int, workers: int | None):
    chunks = [range(s, min(s + batch, R)) for s in range(0, R, batch)]
    n = worker_count(workers)
    if n == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, chunks))


def _level_configs(cfg: ExperimentConfig):
    """(reference SimConfig, [level SimConfig], lattice modes)."""
    b = cfg.base
    if cfg.kind == "spectral":
        Nr = int(cfg.reference)
        ref = replace(b, N=Nr, variant=Truncated(Nr), N_w=None)
        levels = [replace(b, N=int(n), variant=Truncated(int(n)), N_w=None) for n in cfg.levels]
        return ref, levels, Nr
    if cfg.kind == "mollify":
        ref = replace(b, variant=Full(), N_w=None)
        levels = [replace(b, variant=Mollified(e), N_w=None) for e in cfg.levels]
        return ref, levels, b.N
    raise ValueError(f"kind {cfg.kind!r} is not a convergence experiment")


def _abort_check(aborted: int, R: int):
    if aborted > MAX_ABORT_FRACTION * R:
        raise RunAborted(f"{aborted} of {R} replicas blew up (limit {MAX_ABORT_FRACTION:.0%})")
    if aborted:
        logger.warning("%d of %d replicas aborted and were dropped", aborted, R)


def convergence_samples(cfg: ExperimentConfig):
    """Rows plus per-replica samples.

    Returns (rows, sup_samples, int_samples); sup_samples[r, i] is replica r's
    ||.||^2_{H^{mu-1}} for level i at the time maximising the mean, and
    int_samples[r, i] its time integral of ||.||^2_{H^mu}.  Because levels
    share lattices, paired differences of these samples have far smaller
    spread than the rows' own standard errors suggest.
    """
    ref_cfg, level_cfgs, n_lat = _level_configs(cfg)
    mu = cfg.mu

    def work(idx):
        lats = [sample_brownian_lattice(replica_seed(cfg.master_seed, r), n_lat, ref_cfg.dt) for r in idx]
        refs = solve_batch(ref_cfg, lats)
        per_level = [solve_batch(c, lats) for c in level_cfgs]
        out = []
        for i in range(len(lats)):
            trajs = [refs[i]] + [p[i] for p in per_level]
            if any(t is None for t in trajs):
                out.append(None)
                continue
            out.append([error_series(t, refs[i], mu) for t in trajs[1:]])
        return out

    results = [x for chunk in _map_batches(work, cfg.replicas, cfg.batch, cfg.workers) for x in chunk]
    ok = [x for x in results if x is not None]
    aborted = len(results) - len(ok)
    _abort_check(aborted, cfg.replicas)
    if not ok:
        raise RunAborted("every replica aborted")
    times = np.arange(ref_cfg.steps // ref_cfg.save_stride + 1) * (ref_cfg.save_stride * ref_cfg.dt)
    times[-1] = 1.0
    rows, sup_s, int_s = [], [], []
    for li, h in enumerate(cfg.levels):
        lo = np.array([x[li][0] for x in ok])
        hi = np.array([x[li][1] for x in ok])
        rows.append(_aggregate(cfg.kind, h, lo, hi, times, aborted))
        sup_s.append(lo[:, int(np.argmax(lo.mean(axis=0)))])
        int_s.append(np.trapezoid(hi, times, axis=1))
    return rows, np.array(sup_s).T, np.array(int_s).T


def run_convergence(cfg: ExperimentConfig) -> list:
    return convergence_samples(cfg)[0]


def paired_separation(sup_samples: np.ndarray) -> np.ndarray:
    """(E_i - E_{i+1}) / stderr of the paired difference, per consecutive level pair."""
    d = sup_samples[:, :-1] - sup_samples[:, 1:]
    R = d.shape[0]
    se = d.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros(d.shape[1])
    with np.errstate(divide="ignore"):
        return d.mean(axis=0) / se


def fit_rate(rows, mode: str = "N") -> dict:
    """Least squares of log E_sup on log h."""
    if mode not in ("N", "eps"):
        raise ValueError("mode must be 'N' or 'eps'")
    rows = list(rows)
    if len(rows) < 3:
        raise ValueError("need at least 3 rows to fit a rate")
    h = np.array([r.h for r in rows], dtype=float)
    E = np.array([r.E_sup for r in rows], dtype=float)
    if np.any(E <= 0) or np.any(h <= 0):
        raise ValueError("rate fit needs positive errors and levels")
    res = stats.linregress(np.log(h), np.log(E))
    return {"slope": float(res.slope), "intercept": float(res.intercept), "r2": float(res.rvalue**2)}


# --------------------------------------------------------------------------
# Wong-Zakai


@dataclass(frozen=True)
class FkCheck:
    eps: float
    t: float
    x: float
    galerkin: float
    fk_mean: float
    fk_stderr: float
    allowance: float

    @property
    def passed(self) -> bool:
        return abs(self.galerkin - self.fk_mean) <= 3.0 * (self.fk_stderr + self.allowance)


@dataclass(frozen=True)
class WzReport:
    rows: list
    distances: np.ndarray  # (R, L): per-replica L^2([0,1] x T) distance
    fk_checks: list = field(default_factory=list)
    wz_exponent: float = 3.0

    @property
    def fraction_decreasing(self) -> float:
        d = self.distances
        if d.shape[1] < 2:
            return 1.0
        return float(np.mean(np.all(np.diff(d, axis=1) < 0, axis=1)))


def _wz_margin(eps_max: float, A: float, dt: float) -> int:
    return int(math.ceil(eps_max**A / dt - 1e-9)) + 1


def run_wong_zakai(cfg: ExperimentConfig, zero_noise: bool = False) -> WzReport:
    """Ito mollified solution vs random-PDE (Wong-Zakai) solution per eps, coupled noise."""
    b = cfg.base
    A = cfg.wz_exponent
    N_w = b.N if b.N_w is None else b.N_w
    margin = _wz_margin(max(cfg.levels), A, b.dt)
    ito = [replace(b, variant=Mollified(e)) for e in cfg.levels]
    wz = [replace(b, variant=WongZakai(e, e**A)) for e in cfg.levels]

    def lattice(r):
        if zero_noise:
            return BrownianLattice.zeros(N_w, b.dt, margin)
        return sample_brownian_lattice(replica_seed(cfg.master_seed, r), N_w, b.dt, margin)

    def work(idx):
        lats = [lattice(r) for r in idx]
        pairs = [(solve_batch(c1, lats), solve_batch(c2, lats)) for c1, c2 in zip(ito, wz)]
        out = []
        for i in range(len(lats)):
            if any(p[0][i] is None or p[1][i] is None for p in pairs):
                out.append(None)
                continue
            out.append([_norm_sq_series(_difference(p[0][i], p[1][i]), 0.0) for p in pairs])
        return out

    results = [x for chunk in _map_batches(work, cfg.replicas, cfg.batch, cfg.workers) for x in chunk]
    ok = [x for x in results if x is not None]
    aborted = len(results) - len(ok)
    _abort_check(aborted, cfg.replicas)
    if not ok:
        raise RunAborted("every replica aborted")
    times = np.arange(b.steps // b.save_stride + 1) * (b.save_stride * b.dt)
    times[-1] = 1.0
    rows, dist = [], []
    for li, e in enumerate(cfg.levels):
        series = np.array([x[li] for x in ok])
        rows.append(_aggregate("wong-zakai", e, series, series, times, aborted))
        dist.append(np.sqrt(np.trapezoid(series, times, axis=1)))
    checks = _fk_checks(cfg, wz, lattice(0)) if cfg.fk_points and not zero_noise else []
    return WzReport(rows, np.array(dist).T, checks, A)


def _fk_checks(cfg: ExperimentConfig, wz_cfgs, W) -> list:
    checks = []
    for c in wz_cfgs:
        traj = solve_batch(c, [W])[0]
        if traj is None:
            raise BlowUpError("Wong-Zakai solve blew up on the oracle lattice")
        v = c.variant
        for t, x in cfg.fk_points:
            j = int(np.argmin(np.abs(traj.times - t)))
            if abs(traj.times[j] - t) > 1e-12:
                raise ValueError(f"oracle time {t} is not on the saved grid")
            q = FkQuery(x=x, t=t, eps=v.eps, delta=v.delta, gamma=c.gamma, psi=c.ic,
                        n_paths=cfg.fk_paths, mode_cut=c.noise_modes, seed=cfg.master_seed)
            r = fk_estimate(q, W)
            checks.append(FkCheck(v.eps, t, x, float(traj.state(j)(x)), r.mean, r.stderr, 2.0 * c.dt))
    return checks


# --------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(rows, path_or_file, seed: int) -> None:
    """CSV with a version header line, then fixed columns."""
    buf = io.StringIO()
    buf.write(f"# rshe {__version__}\n")
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in rows:
        vals = [r.kind, _fmt(r.h), _fmt(r.E_sup), _fmt(r.E_sup_stderr), _fmt(r.E_int),
                _fmt(r.E_int_stderr), _fmt(r.replicas), _fmt(r.aborted), _fmt(seed), __version__]
        buf.write(",".join(vals) + "\n")
    text = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def format_summary(rows, fit: dict | None = None, extra: list | None = None) -> str:
    lines = [f"{'h':>10} {'E_sup':>12} {'+-':>10} {'E_int':>12} {'+-':>10} {'R':>5} {'abort':>5}"]
    for r in rows:
        lines.append(f"{r.h:>10.4g} {r.E_sup:>12.5e} {r.E_sup_stderr:>10.2e} "
                     f"{r.E_int:>12.5e} {r.E_int_stderr:>10.2e} {r.replicas:>5d} {r.aborted:>5d}")
    if fit:
        lines.append(f"fit: slope={fit['slope']:.4f} intercept={fit['intercept']:.4f} r2={fit['r2']:.4f}")
    lines.extend(extra or [])
    return "\n".join(lines)


def write_dump(traj: Trajectory, path) -> None:
    """Binary trajectory: b'RSHE1', N, K, stride (int64 LE), then states as float64 LE."""
    cfg = traj.config
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<qqq", traj.max_mode, cfg.steps, cfg.save_stride))
        fh.write(np.ascontiguousarray(traj.states, dtype="<f8").tobytes())


def read_dump(path):
    """Return (N, K, stride, states) from a file written by :func:`write_dump`."""
    with open(path, "rb") as fh:
        if fh.read(len(DUMP_MAGIC)) != DUMP_MAGIC:
            raise ValueError("not an RSHE1 trajectory dump")
        N, K, stride = struct.unpack("<qqq", fh.read(24))
        data = np.frombuffer(fh.read(), dtype="<f8")
    S = K // stride + 1
    if data.size != S * (2 * N + 1):
        raise ValueError("truncated trajectory dump")
    return N, K, stride, data.reshape(S, 2 * N + 1)
