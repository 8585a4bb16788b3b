"""Strict sectioned ``key = value`` configuration for the experiment runner.

Every key has a default, so a file holding only ``[geometry]`` and
``[general] s`` is complete. Unknown sections or keys are errors. Region
values are ``lo,hi`` per axis, axes separated by ``;``.

Sections and defaults::

    [general]      s = 0.5, seed = 0
    [geometry]     kind = interval, length = 1.0, nodes = 127
    [regions]      O = 0.625,0.875   A = 0.1875,0.4375   A_plus = 0.125,0.5
                   O_plus = 0.59375,0.90625
    [model]        J = 12
    [family]       n_tau = 10, theta = 0.5
    [reduce]       orders = 0.25,0.5,0.75   samples = 10   tol = 1e-6
                   circle_nodes = 64
    [eigs]         K = 20, metrics = 5
    [alessandrini] grids = 63,127,255   tau = 1e-3   base_amplitude = 0.4
    [balls]        x0 = 0.75, t0 = 0.2, r = 0.03, delta0 = 0.05, samples = 100
                   calibration = 50
    [runge]        nodes = 31   O = 0.625,0.875;0.25,0.75
                   A = 0.1875,0.4375;0.3125,0.6875   A_plus = 0.125,0.5;0.25,0.75
                   J = 25   alphas = 10   targets = 10
    [instability]  nodes = 511, O = 0.375,0.625, O_plus = 0.359375,0.640625
                   R = 1.0, J = 64, k_max = 60, weyl_nodes = 255, weyl_R = pi
                   weyl_count = 400, tail_R = 5,10,20
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

DEFAULTS: dict[str, dict[str, str]] = {
    "general": {"s": "0.5", "seed": "0"},
    "geometry": {"kind": "interval", "length": "1.0", "nodes": "127"},
    "regions": {
        "O": "0.625,0.875",
        "A": "0.1875,0.4375",
        "A_plus": "0.125,0.5",
        "O_plus": "0.59375,0.90625",
    },
    "model": {"J": "12"},
    "family": {"n_tau": "10", "theta": "0.5"},
    "reduce": {"orders": "0.25,0.5,0.75", "samples": "10", "tol": "1e-6", "circle_nodes": "64"},
    "eigs": {"K": "20", "metrics": "5"},
    "alessandrini": {"grids": "63,127,255", "tau": "1e-3", "base_amplitude": "0.4"},
    "balls": {"x0": "0.75", "t0": "0.2", "r": "0.03", "delta0": "0.05", "samples": "100", "calibration": "50"},
    "runge": {
        "nodes": "31",
        "O": "0.625,0.875;0.25,0.75",
        "A": "0.1875,0.4375;0.3125,0.6875",
        "A_plus": "0.125,0.5;0.25,0.75",
        "J": "25",
        "alphas": "10",
        "targets": "10",
    },
    "instability": {
        "nodes": "511",
        "O": "0.375,0.625",
        "O_plus": "0.359375,0.640625",
        "R": "1.0",
        "J": "64",
        "k_max": "60",
        "weyl_nodes": "255",
        "weyl_R": "pi",
        "weyl_count": "400",
        "tail_R": "5,10,20",
    },
}


def _float(v: str) -> float:
    v = v.strip()
    return math.pi if v == "pi" else float(v)


def _floats(v: str) -> tuple[float, ...]:
    return tuple(_float(x) for x in v.split(",") if x.strip())


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.split(",") if x.strip())


def _box(v: str) -> tuple[tuple[float, float], ...]:
    out = []
    for axis in v.split(";"):
        pair = _floats(axis)
        if len(pair) != 2 or not pair[0] < pair[1]:
            raise ValueError(f"bad region bounds {v!r}")
        out.append(pair)
    return tuple(out)


@dataclass
class ExperimentConfig:
    raw: dict
    s: float
    seed: int
    geometry: dict
    regions: dict
    J: int
    n_tau: int
    theta: float
    reduce: dict
    eigs: dict
    alessandrini: dict
    balls: dict
    runge: dict
    instability: dict
    source: str = "<defaults>"
    extra: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Fully resolved key/value pairs, as strings, for the manifest."""
        return {sec: dict(vals) for sec, vals in self.raw.items()}


def _inside(box, length) -> bool:
    return all(0 < lo < hi < L for (lo, hi), L in zip(box, length))


def _overlap(a, b) -> bool:
    return all(x0 < y1 and y0 < x1 for (x0, x1), (y0, y1) in zip(a, b))


def _contains(outer, inner) -> bool:
    return all(o0 <= i0 and i1 <= o1 for (o0, o1), (i0, i1) in zip(outer, inner))


def validate(cfg: ExperimentConfig) -> None:
    """Module preconditions, each failure naming its constraint."""
    if not 0 < cfg.s < 1:
        raise ValueError(f"constraint 's in (0,1)' violated: s = {cfg.s}")
    for s in cfg.reduce["orders"]:
        if not 0 < s < 1:
            raise ValueError(f"constraint 'reduce orders in (0,1)' violated: {s}")
    if not 0 < cfg.theta <= 1:
        raise ValueError("constraint 'theta in (0,1]' violated")
    if 1.5 > 1 / cfg.theta:
        raise ValueError("constraint 'Id + tau bump within the theta sandwich' violated for tau = 1/2")
    if cfg.geometry["kind"] != "interval":
        raise ValueError("constraint 'main geometry is an interval' violated")
    L = (cfg.geometry["length"],)
    r = cfg.regions
    for name, box in r.items():
        if not _inside(box, L):
            raise ValueError(f"constraint 'region {name} inside the domain' violated")
    if _overlap(r["A"], r["O"]):
        raise ValueError("constraint 'A disjoint from O' violated")
    if not _contains(r["A_plus"], r["A"]):
        raise ValueError("constraint 'A inside A_plus' violated")
    if _overlap(r["A_plus"], r["O"]):
        raise ValueError("constraint 'A_plus disjoint from O' violated")
    if not _contains(r["O_plus"], r["O"]) or _overlap(r["O_plus"], r["A_plus"]):
        raise ValueError("constraint 'O inside O_plus, O_plus disjoint from A_plus' violated")
    ru = cfg.runge
    for name in ("O", "A", "A_plus"):
        if not _inside(ru[name], (1.0, 1.0)):
            raise ValueError(f"constraint 'runge region {name} inside the unit square' violated")
    if _overlap(ru["A_plus"], ru["O"]) or not _contains(ru["A_plus"], ru["A"]):
        raise ValueError("constraint 'runge A inside A_plus, A_plus disjoint from O' violated")
    ins = cfg.instability
    if not _contains(ins["O_plus"], ins["O"]) or ins["O_plus"] == ins["O"]:
        raise ValueError("constraint 'instability O_plus strictly contains O' violated")
    if ins["R"] <= 0 or min(ins["tail_R"]) <= 0:
        raise ValueError("constraint 'heights positive' violated")


def parse_config(path: str | Path | None) -> ExperimentConfig:
    """Read ``path`` (or only defaults when None) into a validated config."""
    raw = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    source = "<defaults>"
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cp = configparser.ConfigParser(interpolation=None, strict=True)
        cp.optionxform = str
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ValueError(f"malformed config {path}: {exc}") from exc
        for sec in cp.sections():
            if sec not in DEFAULTS:
                raise ValueError(f"unknown section [{sec}]")
            for key, val in cp.items(sec):
                if key not in DEFAULTS[sec]:
                    raise ValueError(f"unknown key {key!r} in [{sec}]")
                raw[sec][key] = val.strip()
        source = str(path)
    g, rg, ru, ins = raw["geometry"], raw["regions"], raw["runge"], raw["instability"]
    cfg = ExperimentConfig(
        raw=raw,
        s=_float(raw["general"]["s"]),
        seed=int(raw["general"]["seed"]),
        geometry={"kind": g["kind"], "length": _float(g["length"]), "nodes": int(g["nodes"])},
        regions={k: _box(v) for k, v in rg.items()},
        J=int(raw["model"]["J"]),
        n_tau=int(raw["family"]["n_tau"]),
        theta=_float(raw["family"]["theta"]),
        reduce={
            "orders": _floats(raw["reduce"]["orders"]),
            "samples": int(raw["reduce"]["samples"]),
            "tol": _float(raw["reduce"]["tol"]),
            "circle_nodes": int(raw["reduce"]["circle_nodes"]),
        },
        eigs={k: int(v) for k, v in raw["eigs"].items()},
        alessandrini={
            "grids": _ints(raw["alessandrini"]["grids"]),
            "tau": _float(raw["alessandrini"]["tau"]),
            "base_amplitude": _float(raw["alessandrini"]["base_amplitude"]),
        },
        balls={
            k: (int(v) if k in ("samples", "calibration") else _float(v)) for k, v in raw["balls"].items()
        },
        runge={
            "nodes": int(ru["nodes"]),
            "O": _box(ru["O"]),
            "A": _box(ru["A"]),
            "A_plus": _box(ru["A_plus"]),
            "J": int(ru["J"]),
            "alphas": int(ru["alphas"]),
            "targets": int(ru["targets"]),
        },
        instability={
            "nodes": int(ins["nodes"]),
            "O": _box(ins["O"]),
            "O_plus": _box(ins["O_plus"]),
            "R": _float(ins["R"]),
            "J": int(ins["J"]),
            "k_max": int(ins["k_max"]),
            "weyl_nodes": int(ins["weyl_nodes"]),
            "weyl_R": _float(ins["weyl_R"]),
            "weyl_count": int(ins["weyl_count"]),
            "tail_R": _floats(ins["tail_R"]),
        },
        source=source,
    )
    validate(cfg)
    return cfg
