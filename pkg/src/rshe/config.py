"""Flat ``key = value`` run configuration.

File keys and command-line flags share one schema; flags win.  Lines
starting with ``#`` or ``;`` are comments.  Example::

    # spectral truncation study
    gamma = 0.1
    sigma = linear:0,1
    levels = 8, 16, 32
    reference = 128
    dt = 2^-12
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass

from .lab import ExperimentConfig, default_stride
from .noise import Full, Mollified, Truncated, WongZakai
from .solver import Constant, Dirac, Linear, SimConfig, Smooth, SmoothBounded, Zero

__all__ = ["ConfigError", "SCHEMA", "read_config_file", "parse_values", "build_experiment", "RunOptions"]


class ConfigError(ValueError):
    """Bad configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _float(s: str) -> float:
    s = s.strip()
    if "^" in s:
        base, exp = s.split("^", 1)
        return float(base) ** float(exp)
    return float(s)


def _int(s: str) -> int:
    return int(s.strip())


def _floats(s: str) -> tuple:
    return tuple(_float(p) for p in s.split(",") if p.strip())


def _sigma(s: str):
    name, _, args = s.strip().partition(":")
    vals = _floats(args) if args else ()
    if name == "zero" and not vals:
        return Zero()
    if name == "constant" and len(vals) == 1:
        return Constant(vals[0])
    if name == "linear" and len(vals) == 2:
        return Linear(*vals)
    if not vals:
        return SmoothBounded(name)
    raise ValueError(f"cannot parse sigma {s!r} (zero | constant:c1 | linear:c1,c2 | sin | sqrt1p)")


def _ic(s: str):
    name, _, arg = s.strip().partition(":")
    if name == "dirac":
        return Dirac(_float(arg) if arg else 0.0)
    return Smooth(name)


def _variant(s: str):
    name, _, args = s.strip().partition(":")
    vals = _floats(args) if args else ()
    if name == "full" and not vals:
        return Full()
    if name == "truncated" and len(vals) == 1:
        return Truncated(int(vals[0]))
    if name == "mollified" and len(vals) == 1:
        return Mollified(vals[0])
    if name == "wong-zakai" and len(vals) == 2:
        return WongZakai(*vals)
    raise ValueError(f"cannot parse variant {s!r} (full | truncated:N | mollified:eps | wong-zakai:eps,delta)")


def _points(s: str) -> tuple:
    out = []
    for item in s.split(";"):
        if item.strip():
            t, x = item.split(":")
            out.append((_float(t), _float(x)))
    return tuple(out)


def _str(s: str) -> str:
    return s.strip()


# key -> (parser, help)
SCHEMA = {
    "N": (_int, "Galerkin max mode"),
    "N_w": (_int, "noise max mode (mollified / Wong-Zakai runs)"),
    "dt": (_float, "time step; must divide 1 (2^-k accepted)"),
    "gamma": (_float, "noise roughness in [0, 1/4)"),
    "sigma": (_sigma, "zero | constant:c1 | linear:c1,c2 | sin | sqrt1p"),
    "ic": (_ic, "one | cos | expcos | bump2 | dirac:x0"),
    "variant": (_variant, "simulate only: full | truncated:N | mollified:eps | wong-zakai:eps,delta"),
    "save_stride": (_int, "steps between saved states"),
    "levels": (_floats, "comma list of N values or eps values"),
    "reference": (_float, "reference N for spectral runs"),
    "replicas": (_int, "Monte Carlo replicas"),
    "mu": (_float, "error norm index, in (gamma, 1/2 - gamma)"),
    "kappa_target": (_float, "target rate kappa in (0, 1/2 - gamma - mu)"),
    "seed": (_int, "master seed"),
    "output": (_str, "CSV output path (default stdout)"),
    "dump": (_str, "simulate only: binary trajectory dump path"),
    "wz_exponent": (_float, "Wong-Zakai scale exponent A, delta = eps^A"),
    "fk_points": (_points, "Feynman-Kac check points t:x;t:x"),
    "fk_paths": (_int, "Feynman-Kac paths per point"),
    "workers": (_int, "worker threads (capped by RSHE_THREADS)"),
    "batch": (_int, "replicas per solver batch"),
    "resolution": (_int, "exponents only: grid resolution"),
}

_DEFAULTS = {
    "N": "32", "dt": "2^-12", "gamma": "0.1", "sigma": "linear:0,1", "ic": "one",
    "variant": "full", "replicas": "64", "mu": "0.25", "seed": "0", "wz_exponent": "3",
    "fk_paths": "10000", "batch": "16", "resolution": "400",
    "fk_points": "0.25:1.0;0.5:3.0;1.0:0.3",
}

_KIND_DEFAULTS = {
    "spectral": {"levels": "8,16,32", "reference": "128"},
    "mollify": {"N": "128", "levels": "0.4,0.2,0.1"},
    "wong-zakai": {"levels": "0.4,0.3,0.2", "replicas": "32"},
}


def read_config_file(path) -> dict:
    """Raw string values from a key = value file."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_string("[rshe]\n" + fh.read(), source=str(path))
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(exc.option, "given twice") from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][1].strip() if exc.errors else "?"
        raise ConfigError(line, "not a 'key = value' line") from exc
    return dict(cp["rshe"])


def parse_values(raw: dict) -> dict:
    out = {}
    for key, text in raw.items():
        if key not in SCHEMA:
            raise ConfigError(key, f"unknown key (known: {', '.join(SCHEMA)})")
        try:
            out[key] = SCHEMA[key][0](text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(key, str(exc) or f"bad value {text!r}") from exc
    return out


# validation messages -> the config key they concern (first match wins)
_KEY_HINTS = (
    ("WongZakai", "sigma"), ("save_stride", "save_stride"), ("dt", "dt"), ("N_w", "N_w"),
    ("gamma", "gamma"), ("N must", "N"), ("kappa_target", "kappa_target"), ("mu ", "mu"),
    ("reference", "reference"), ("levels", "levels"), ("replicas", "replicas"),
    ("batch", "batch"), ("wz_exponent", "wz_exponent"), ("eps", "variant"), ("delta", "variant"),
)


def _attempt(fn):
    try:
        return fn()
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        key = next((k for hint, k in _KEY_HINTS if hint in msg), "config")
        raise ConfigError(key, msg) from exc


@dataclass(frozen=True)
class RunOptions:
    experiment: ExperimentConfig
    values: dict


def build_experiment(kind: str, file_values: dict, flag_values: dict) -> RunOptions:
    """Merge defaults < file < flags and build the experiment, naming the bad key on failure."""
    raw = dict(_DEFAULTS)
    raw.update(_KIND_DEFAULTS.get(kind, {}))
    vals = parse_values(raw)
    vals.update(file_values)
    vals.update(flag_values)
    if kind == "wong-zakai" and "N_w" not in vals:
        vals["N_w"] = vals["N"]

    dt = vals["dt"]
    stride = vals.get("save_stride")
    try:
        if stride is None:
            stride = default_stride(dt)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError("dt", str(exc)) from exc
    variant = vals["variant"] if kind == "simulate" else Full()

    base = _attempt(lambda: SimConfig(
        N=vals["N"], dt=dt, sigma=vals["sigma"], variant=variant, gamma=vals["gamma"],
        ic=vals["ic"], save_stride=stride, seed=vals["seed"], N_w=vals.get("N_w")))
    exp = _attempt(lambda: ExperimentConfig(
        kind=kind, base=base, levels=vals.get("levels", ()), reference=vals.get("reference"),
        replicas=vals["replicas"], mu=vals["mu"], master_seed=vals["seed"],
        output=vals.get("output"), kappa_target=vals.get("kappa_target"),
        wz_exponent=vals["wz_exponent"], fk_points=vals["fk_points"], fk_paths=vals["fk_paths"],
        workers=vals.get("workers"), batch=vals["batch"]))
    return RunOptions(exp, vals)
