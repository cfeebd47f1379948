"""Experiment configuration: JSON files, defaults and validation."""
from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigInvalid
from .flux import PRESETS

KINDS = ("cell_coeffs", "profile", "homogenized_evolution", "full_convergence", "linear_moments")
SCHEMES = ("central4", "rusanov")
PERTURBATIONS = ("gaussian", "box", "odd", "algebraic", "random")

DEFAULTS = {
    "kind": "cell_coeffs",
    "N": 1,
    "seed": 0,
    "output": "homogasym-out",
    "flux": {"preset": "linear_ratchet", "params": {}},
    "q": 0.0,
    "cell": {"resolution": None},  # 256 for N=1, 64 otherwise
    "profile": {"mass": 1.0, "eta": None, "a": None, "points": None, "half_width": None},
    "evolution": {
        "tau_end": 6.0,
        "dtau": 0.1,
        "initial": {"kind": "box", "width": 1.0},
    },
    "simulation": {
        "L": 64,
        "cells": 8192,
        "t_end": 100.0,
        "output_times": [1, 2, 4, 8, 16, 32, 64, 100],
        "scheme": "central4",
        "cfl": 0.8,
        "perturbation": {"kind": "gaussian", "mass": 1.0, "width": 1.0, "center": 0.0},
        "weight_m": None,
        "snapshots": False,
    },
    "checks": None,
    "sweep": [],
}

# default selection of summary checks per kind
DEFAULT_CHECKS = {
    "cell_coeffs": ["hypotheses", "eta_cross", "coercive"],
    "profile": ["profile_mass", "profile_residual"],
    "homogenized_evolution": ["mass_conservation", "l1_monotone", "l1_final"],
    "full_convergence": ["hypotheses", "l1_decay", "quasi_lyapunov", "mass_conservation",
                         "linf_monitor"],
    "linear_moments": ["moment4_bounded", "mass_conservation"],
}
ALL_CHECKS = sorted({c for v in DEFAULT_CHECKS.values() for c in v})


def defaults(kind: str | None = None) -> dict:
    d = copy.deepcopy(DEFAULTS)
    if kind is not None:
        if kind not in KINDS:
            raise ConfigInvalid(f"unknown experiment kind {kind!r}", field="kind")
        d["kind"] = kind
        d["checks"] = list(DEFAULT_CHECKS[kind])
        if kind == "linear_moments":
            d["simulation"]["perturbation"] = {"kind": "algebraic", "mass": 1.0, "width": 1.0,
                                               "center": 0.0, "m": 12}
    return d


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _line_of(text: str | None, field: str) -> int | None:
    if not text:
        return None
    key = field.split(".")[-1]
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict
    text: str = ""
    path: str | None = None

    def __getitem__(self, key):
        return self.data[key]

    @property
    def kind(self) -> str:
        return self.data["kind"]

    @property
    def checks(self) -> list:
        return list(self.data["checks"])

    @property
    def sha256(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_overrides(self, override: dict) -> "ExperimentConfig":
        return validate(merge(self.data, override), self.text, self.path)


def _fail(msg, field, text):
    raise ConfigInvalid(msg, field=field, line=_line_of(text, field))


def _number(d, key, field, text, lo=None, hi=None, integer=False, allow_none=False):
    val = d.get(key)
    if val is None and allow_none:
        return
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        _fail(f"expected a number, got {val!r}", field, text)
    if integer and int(val) != val:
        _fail(f"expected an integer, got {val!r}", field, text)
    if lo is not None and val < lo:
        _fail(f"value {val!r} below the minimum {lo}", field, text)
    if hi is not None and val > hi:
        _fail(f"value {val!r} above the maximum {hi}", field, text)


def validate(data: dict, text: str = "", path: str | None = None) -> ExperimentConfig:
    """Fill defaults for missing keys and check ranges; raises ConfigInvalid."""
    if not isinstance(data, dict):
        raise ConfigInvalid("top level must be a JSON object", line=1)
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        key = sorted(unknown)[0]
        _fail(f"unknown key {key!r}", key, text)
    kind = data.get("kind", DEFAULTS["kind"])
    if kind not in KINDS:
        _fail(f"unknown experiment kind {kind!r}; choose from {', '.join(KINDS)}", "kind", text)
    d = merge(defaults(kind), data)
    if d["checks"] is None:
        d["checks"] = list(DEFAULT_CHECKS[kind])

    _number(d, "N", "N", text, 1, 3, integer=True)
    _number(d, "seed", "seed", text, 0, integer=True)
    _number(d, "q", "q", text)
    dim = int(d["N"])
    flux = d["flux"]
    if not isinstance(flux, dict) or "preset" not in flux:
        _fail("flux needs a 'preset'", "flux", text)
    if flux["preset"] not in PRESETS and flux["preset"] != "polynomial":
        _fail(f"unknown flux preset {flux['preset']!r}", "flux.preset", text)
    if not isinstance(flux.get("params", {}), dict):
        _fail("flux params must be an object", "flux.params", text)
    if d["cell"]["resolution"] is None:
        d["cell"]["resolution"] = 256 if dim == 1 else 64
    _number(d["cell"], "resolution", "cell.resolution", text, 16, 1024 if dim == 1 else 128,
            integer=True)
    res = int(d["cell"]["resolution"])
    if res & (res - 1):
        _fail(f"resolution {res} is not a power of two", "cell.resolution", text)
    prof = d["profile"]
    _number(prof, "mass", "profile.mass", text)
    _number(prof, "a", "profile.a", text, allow_none=True)
    _number(prof, "points", "profile.points", text, 16, 8192, integer=True, allow_none=True)
    _number(prof, "half_width", "profile.half_width", text, 0, allow_none=True)
    if prof["eta"] is not None:
        eta = prof["eta"]
        if isinstance(eta, (int, float)):
            eta = [[eta]]
        if (not isinstance(eta, list) or len(eta) != dim
                or any(not isinstance(r, list) or len(r) != dim for r in eta)):
            _fail(f"eta must be a {dim}x{dim} matrix", "profile.eta", text)
        prof["eta"] = eta
    ev = d["evolution"]
    _number(ev, "tau_end", "evolution.tau_end", text, 0)
    _number(ev, "dtau", "evolution.dtau", text, 1e-6, 0.1)
    if ev["initial"].get("kind") not in ("box", "gaussian"):
        _fail("evolution initial kind must be box or gaussian", "evolution.initial", text)
    sim = d["simulation"]
    _number(sim, "L", "simulation.L", text, 1, integer=True)
    _number(sim, "cells", "simulation.cells", text, 8, integer=True)
    _number(sim, "t_end", "simulation.t_end", text, 0)
    _number(sim, "cfl", "simulation.cfl", text, 1e-3, 1.0)
    _number(sim, "weight_m", "simulation.weight_m", text, allow_none=True)
    if kind in ("full_convergence", "linear_moments") and dim > 2:
        _fail("the direct simulator supports N=1 and N=2", "N", text)
    if sim["scheme"] not in SCHEMES:
        _fail(f"unknown scheme {sim['scheme']!r}", "simulation.scheme", text)
    if sim["perturbation"].get("kind", "gaussian") not in PERTURBATIONS:
        _fail(f"unknown perturbation {sim['perturbation'].get('kind')!r}",
              "simulation.perturbation", text)
    times = sim["output_times"]
    if not isinstance(times, list) or any(not isinstance(t, (int, float)) or t < 0 for t in times):
        _fail("output_times must be a list of non-negative numbers", "simulation.output_times", text)
    bad = [c for c in d["checks"] if c not in ALL_CHECKS]
    if bad:
        _fail(f"unknown check {bad[0]!r}; available: {', '.join(ALL_CHECKS)}", "checks", text)
    if not isinstance(d["sweep"], list) or any(not isinstance(s, dict) for s in d["sweep"]):
        _fail("sweep must be a list of override objects", "sweep", text)
    return ExperimentConfig(d, text, path)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"malformed JSON: {exc.msg}", line=exc.lineno) from exc
    return validate(data, text, str(path))
