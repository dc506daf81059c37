"""Run-configuration files: TOML reading, writing, and schema checks.

A run config describes one training/marching setup in the same vocabulary as
the benchmark tables: domain box, sub-domain boundaries, enlargement r,
collocation count Q, weight scope Rm, delta_m, h_max, step dt, width M, and
activation.  Values written with `dump_toml` round-trip bit-exactly (floats
are emitted with repr, whose shortest decimal re-reads to the same double).
"""

from __future__ import annotations

import json
import re
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

_BARE_KEY = re.compile(r"[A-Za-z0-9_-]+\Z")

_ACTIVATIONS = ("gaussian", "tanh")
_MARCH_MODES = ("fixed", "quasi_adaptive")

# Optional [train] keys forwarded to TrainConfig, with their expected types.
_TRAIN_FIELDS = {
    "Q": int,
    "max_iterations": int,
    "gradient_tol": float,
    "step_tol": float,
    "residual_tol": float,
    "damping_init": float,
    "perturb_trigger": int,
    "perturb_magnitude": float,
    "max_restarts": int,
}


def _key(k) -> str:
    k = str(k)
    return k if _BARE_KEY.match(k) else json.dumps(k)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return repr(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        inner = ", ".join(f"{_key(k)} = {_fmt(v)}" for k, v in value.items())
        return "{ " + inner + " }"
    raise ConfigError(f"cannot serialize {type(value).__name__} value {value!r}")


def dump_toml(data: dict, path) -> None:
    """Write a two-level dict as TOML: scalars first, one [table] per sub-dict.

    Deeper nesting is emitted as inline tables.  Key order follows dict order.
    """
    if not isinstance(data, dict):
        raise ConfigError("config root must be a dict")
    lines = []
    tables = []
    for k, v in data.items():
        if isinstance(v, dict):
            tables.append((k, v))
        else:
            lines.append(f"{_key(k)} = {_fmt(v)}")
    for name, tbl in tables:
        if lines:
            lines.append("")
        lines.append(f"[{_key(name)}]")
        for k, v in tbl.items():
            lines.append(f"{_key(k)} = {_fmt(v)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None


# ---------------------------------------------------------------------------
# run-config schema


def _want(table: dict, key: str, types, where: str, required: bool = False):
    if key not in table:
        if required:
            raise ConfigError(f"missing required key {key!r} in {where}")
        return None
    val = table[key]
    if isinstance(val, bool) and bool not in (
        types if isinstance(types, tuple) else (types,)
    ):
        raise ConfigError(f"{where}.{key} must not be a boolean")
    if not isinstance(val, types):
        raise ConfigError(
            f"{where}.{key} has type {type(val).__name__}, expected {types}"
        )
    return val


def _float_list(val, where: str) -> list:
    if not isinstance(val, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in val
    ):
        raise ConfigError(f"{where} must be a list of numbers")
    return [float(v) for v in val]


def _interval(val, where: str) -> list:
    pair = _float_list(val, where)
    if len(pair) != 2 or not pair[0] < pair[1]:
        raise ConfigError(f"{where} must be [lo, hi] with lo < hi")
    return pair


def validate_run_config(cfg: dict) -> dict:
    """Check shape and types of a run config; return a normalized copy.

    Normalization: numbers become float where floats are expected, and
    y_boundaries keys become integer axis indices.  Unknown top-level keys
    and unknown keys inside known sections are rejected (typo safety).
    """
    if not isinstance(cfg, dict):
        raise ConfigError("run config must be a table")
    known = {"problem", "kind", "seed", "activation", "domain", "subdomains",
             "network", "train", "march"}
    extra = set(cfg) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")

    out: dict = {}
    out["problem"] = _want(cfg, "problem", str, "config", required=True)
    kind = _want(cfg, "kind", str, "config")
    if kind is not None:
        out["kind"] = kind
    seed = _want(cfg, "seed", int, "config")
    out["seed"] = 0 if seed is None else seed
    act = _want(cfg, "activation", str, "config")
    if act is not None:
        if act not in _ACTIVATIONS:
            raise ConfigError(f"activation must be one of {_ACTIVATIONS}")
        out["activation"] = act

    dom = cfg.get("domain", {})
    if dom:
        dout = {}
        for key in set(dom) - {"y0_box", "t0_interval", "h_max", "delta_m"}:
            raise ConfigError(f"unknown key domain.{key}")
        if "y0_box" in dom:
            box = dom["y0_box"]
            if not isinstance(box, list):
                raise ConfigError("domain.y0_box must be a list of [lo, hi] pairs")
            dout["y0_box"] = [_interval(row, "domain.y0_box row") for row in box]
        if "t0_interval" in dom:
            dout["t0_interval"] = _interval(dom["t0_interval"], "domain.t0_interval")
        if "h_max" in dom:
            h = dom["h_max"]
            if isinstance(h, list):
                vals = _float_list(h, "domain.h_max")
                if any(v <= 0 for v in vals):
                    raise ConfigError("domain.h_max entries must be positive")
                dout["h_max"] = vals
            elif isinstance(h, (int, float)) and not isinstance(h, bool) and h > 0:
                dout["h_max"] = float(h)
            else:
                raise ConfigError("domain.h_max must be a positive number or list")
        if "delta_m" in dom:
            dm = _want(dom, "delta_m", (int, float), "domain")
            if dm <= 0:
                raise ConfigError("domain.delta_m must be positive")
            dout["delta_m"] = float(dm)
        out["domain"] = dout

    sub = cfg.get("subdomains", {})
    if sub:
        sout = {}
        for key in set(sub) - {"y_boundaries", "t_boundaries", "r", "band_axis"}:
            raise ConfigError(f"unknown key subdomains.{key}")
        if "y_boundaries" in sub:
            yb = sub["y_boundaries"]
            if not isinstance(yb, dict):
                raise ConfigError("subdomains.y_boundaries must map axis -> list")
            conv = {}
            for k, v in yb.items():
                if not str(k).lstrip("-").isdigit():
                    raise ConfigError(f"y_boundaries axis {k!r} is not an integer")
                conv[int(k)] = _float_list(v, f"y_boundaries[{k}]")
            sout["y_boundaries"] = conv
        if "t_boundaries" in sub:
            sout["t_boundaries"] = _float_list(sub["t_boundaries"], "t_boundaries")
        if "r" in sub:
            r = sub["r"]
            if isinstance(r, list):
                sout["r"] = _float_list(r, "subdomains.r")
            elif isinstance(r, (int, float)) and not isinstance(r, bool) and r >= 0:
                sout["r"] = float(r)
            else:
                raise ConfigError("subdomains.r must be a nonnegative number or list")
        if "band_axis" in sub:
            sout["band_axis"] = _want(sub, "band_axis", int, "subdomains")
        out["subdomains"] = sout

    net = cfg.get("network", {})
    if net:
        nout = {}
        for key in set(net) - {"M", "Rm"}:
            raise ConfigError(f"unknown key network.{key}")
        if "M" in net:
            M = _want(net, "M", int, "network")
            if M < 1:
                raise ConfigError("network.M must be a positive integer")
            nout["M"] = M
        if "Rm" in net:
            Rm = _want(net, "Rm", (int, float), "network")
            if Rm <= 0:
                raise ConfigError("network.Rm must be positive")
            nout["Rm"] = float(Rm)
        out["network"] = nout

    trn = cfg.get("train", {})
    if trn:
        tout = {}
        for key in set(trn) - set(_TRAIN_FIELDS):
            raise ConfigError(f"unknown key train.{key}")
        for key, typ in _TRAIN_FIELDS.items():
            if key not in trn:
                continue
            val = _want(trn, key, (int, float) if typ is float else int, "train")
            tout[key] = typ(val)
        out["train"] = tout

    mar = cfg.get("march", {})
    if mar:
        mout = {}
        allowed = {"t_span", "dt", "mode", "safety", "y0",
                   "periodicity_exploit", "allow_extrapolation"}
        for key in set(mar) - allowed:
            raise ConfigError(f"unknown key march.{key}")
        if "t_span" in mar:
            mout["t_span"] = _interval(mar["t_span"], "march.t_span")
        if "dt" in mar:
            dt = _want(mar, "dt", (int, float), "march")
            if dt <= 0:
                raise ConfigError("march.dt must be positive")
            mout["dt"] = float(dt)
        if "mode" in mar:
            mode = _want(mar, "mode", str, "march")
            if mode not in _MARCH_MODES:
                raise ConfigError(f"march.mode must be one of {_MARCH_MODES}")
            mout["mode"] = mode
        if "safety" in mar:
            s = _want(mar, "safety", (int, float), "march")
            if not 0 < s < 1:
                raise ConfigError("march.safety must be in (0, 1)")
            mout["safety"] = float(s)
        if "y0" in mar:
            mout["y0"] = _float_list(mar["y0"], "march.y0")
        for key in ("periodicity_exploit", "allow_extrapolation"):
            if key in mar:
                mout[key] = _want(mar, key, bool, "march")
        out["march"] = mout

    return out


def load_run_config(path) -> dict:
    return validate_run_config(load_toml(path))


def run_config_from_entry(entry, kind: Optional[str] = None) -> dict:
    """Express a catalog entry's defaults as a run config dict.

    The result validates cleanly and survives dump_toml -> load_run_config
    unchanged, so generated files are directly hand-editable.
    """
    kcfg = entry.kind_config(kind)
    h_max = kcfg["h_max"]
    banded = isinstance(h_max, (tuple, list))
    cfg: dict = {
        "problem": entry.problem_id,
        "kind": kcfg["kind"],
        "seed": 0,
        "activation": "gaussian",
        "domain": {
            "y0_box": [[float(a), float(b)] for a, b in entry.y0_box],
            "h_max": [float(v) for v in h_max] if banded else float(h_max),
            "delta_m": float(kcfg["delta_m"]),
        },
        "network": {"M": int(kcfg["M"]), "Rm": float(kcfg["Rm"])},
        "train": {"Q": int(kcfg["Q"])},
    }
    if entry.t0_interval is not None:
        cfg["domain"]["t0_interval"] = [float(v) for v in entry.t0_interval]

    y_bnd = kcfg["y_boundaries"]
    t_bnd = kcfg["t_boundaries"]
    if y_bnd is not None or t_bnd is not None:
        sub: dict = {}
        if y_bnd is not None:
            sub["y_boundaries"] = {
                int(ax): [float(v) for v in vals] for ax, vals in sorted(y_bnd.items())
            }
        if t_bnd is not None:
            sub["t_boundaries"] = [float(v) for v in t_bnd]
        r = kcfg["r"]
        sub["r"] = [float(v) for v in r] if isinstance(r, (tuple, list)) else float(r)
        if banded:
            sub["band_axis"] = int(entry.band_axis)
        cfg["subdomains"] = sub

    march: dict = {
        "t_span": [float(entry.t0), float(entry.t_final)],
        "mode": entry.march_mode,
        "y0": [float(v) for v in entry.y0],
    }
    if entry.dt is not None:
        march["dt"] = float(entry.dt)
    cfg["march"] = march
    return cfg
