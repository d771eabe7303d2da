"""YAML run configuration.

Only the trait grid, the spatial grid, ``lam``, ``c_B`` and ``eps`` are
required; everything else has a default:

==================  ==========================================
key                 default
==================  ==========================================
mode                ``eps``
r, d                ``{family: constant, value: 1}``
eps_list            ``[0.2, 0.1, 0.05, 0.025]``
init.x0             ``{kind: constant, value: 0}``
init.sigma          ``1.0``
init.rho0           ``null`` (meta-stable mass at ``x0``)
init.rho_shift      ``0.0``
init.rho_modulation ``0.0``
T                   ``1.0``
snapshot_every      ``0.1``
tol_scale           ``1.0``
smallness           ``null`` (``0.1 rho_lo**2 |Omega|``)
out                 ``out``
==================  ==========================================

Example::

    trait: {x_min: -1, x_max: 1, n_x: 201}
    space: {extents: [[0, 1]], n: [101]}
    r: {family: quadratic-concave, value: 30, curvature: 1}
    d: {family: quadratic-convex, value: 0.1, curvature: 0.01}
    lam: 3
    c_B: 4
    eps: 0.05
    init: {x0: {kind: sinusoidal, amplitude: 0.3}}
    T: 2
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .dynamics import InitSpec, Profile
from .model import CoefficientSpec, ModelParams, SpatialGrid, TraitGrid, ValidatedParams, sample_coefficients, validate_params

__all__ = ["ConfigError", "RunConfig", "MODES", "parse_config", "load_config"]

MODES = ("eps", "limit", "metastable", "study", "check")
DEFAULT_EPS_LIST = (0.2, 0.1, 0.05, 0.025)

_TOP_KEYS = {
    "mode", "trait", "space", "r", "d", "lam", "c_B", "eps", "eps_list", "init",
    "T", "snapshot_every", "tol_scale", "smallness", "out",
}
_REQUIRED = ("trait", "space", "lam", "c_B", "eps")
_TRAIT_KEYS = {"x_min", "x_max", "n_x"}
_SPACE_KEYS = {"extents", "n"}
_COEF_KEYS = {"family", "value", "curvature", "vertex", "clamp", "table"}
_INIT_KEYS = {"x0", "sigma", "rho0", "rho_shift", "rho_modulation"}
_PROFILE_KEYS = {"kind", "value", "slope", "amplitude", "wavenumber"}


class ConfigError(ValueError):
    """Schema error; ``field`` is a dotted key path, ``line`` 1-based when known."""

    def __init__(self, message, field=None, line=None):
        where = ""
        if field is not None:
            where += f" [{field}]"
        if line is not None:
            where += f" (line {line})"
        super().__init__(message + where)
        self.field = field
        self.line = line


@dataclass
class RunConfig:
    params: ValidatedParams
    grid: SpatialGrid
    init: InitSpec
    mode: str = "eps"
    eps_list: tuple = DEFAULT_EPS_LIST
    T: float = 1.0
    snapshot_every: float = 0.1
    tol_scale: float = 1.0
    smallness: Optional[float] = None
    out: str = "out"
    raw: dict = field(default_factory=dict, repr=False)


def _line_index(node, prefix=(), table=None):
    """Map dotted key paths to 1-based line numbers from a composed YAML tree."""
    table = {} if table is None else table
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = prefix + (str(key.value),)
            table[".".join(path)] = key.start_mark.line + 1
            _line_index(value, path, table)
    return table


class _Reader:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, msg, path):
        line = None
        parts = path.split(".")
        while parts and line is None:
            line = self.lines.get(".".join(parts))
            parts.pop()
        raise ConfigError(msg, field=path, line=line)

    def mapping(self, obj, path, allowed):
        if not isinstance(obj, dict):
            self.fail("expected a mapping", path)
        for key in obj:
            if key not in allowed:
                sub = f"{path}.{key}" if path else str(key)
                self.fail(f"unknown key {key!r}", sub)
        return obj

    def number(self, obj, path, positive=False, integer=False):
        if isinstance(obj, bool) or not isinstance(obj, (int, float)):
            self.fail(f"expected a number, got {obj!r}", path)
        if integer and int(obj) != obj:
            self.fail(f"expected an integer, got {obj!r}", path)
        if positive and not obj > 0:
            self.fail(f"must be positive, got {obj!r}", path)
        return int(obj) if integer else float(obj)


def _coefficient(rd, raw, path):
    if raw is None:
        return CoefficientSpec("constant", 1.0)
    rd.mapping(raw, path, _COEF_KEYS)
    kw = dict(raw)
    for k in ("value", "curvature", "vertex"):
        if k in kw:
            kw[k] = rd.number(kw[k], f"{path}.{k}")
    if kw.get("clamp") is not None:
        clamp = kw["clamp"]
        if not isinstance(clamp, (list, tuple)) or len(clamp) != 2:
            rd.fail("clamp must be a pair [lo, hi]", f"{path}.clamp")
        kw["clamp"] = tuple(rd.number(v, f"{path}.clamp") for v in clamp)
    if kw.get("table") is not None:
        kw["table"] = [rd.number(v, f"{path}.table") for v in kw["table"]]
    if "family" not in kw:
        rd.fail("missing coefficient family", f"{path}.family")
    try:
        return CoefficientSpec(**kw)
    except ValueError as exc:
        rd.fail(str(exc), path)


def _profile(rd, raw, path, default_value=0.0):
    if raw is None:
        return Profile("constant", default_value)
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return Profile("constant", float(raw))
    rd.mapping(raw, path, _PROFILE_KEYS)
    kw = {k: (v if k == "kind" else rd.number(v, f"{path}.{k}")) for k, v in raw.items()}
    try:
        return Profile(**kw)
    except ValueError as exc:
        rd.fail(str(exc), path)


def parse_config(text: str, base: Optional[Path] = None) -> RunConfig:
    """Parse and validate a YAML configuration string.

    Raises
    ------
    ConfigError
        for malformed YAML, unknown or missing keys and wrongly typed values.
    ModelError
        (including ``InsufficientCB``) when the model parameters are invalid.
    """
    try:
        raw = yaml.safe_load(text)
        lines = _line_index(yaml.compose(text)) if raw is not None else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {exc}", line=None if mark is None else mark.line + 1) from None
    rd = _Reader(lines)
    if raw is None:
        raw = {}
    rd.mapping(raw, "", _TOP_KEYS)
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}", field=key)

    mode = raw.get("mode", "eps")
    if mode not in MODES:
        rd.fail(f"mode must be one of {MODES}, got {mode!r}", "mode")

    tr = rd.mapping(raw["trait"], "trait", _TRAIT_KEYS)
    for k in _TRAIT_KEYS:
        if k not in tr:
            rd.fail(f"missing {k!r}", f"trait.{k}")
    sp = rd.mapping(raw["space"], "space", _SPACE_KEYS)
    if "extents" not in sp or "n" not in sp:
        rd.fail("space needs 'extents' and 'n'", "space")
    try:
        tgrid = TraitGrid(rd.number(tr["x_min"], "trait.x_min"), rd.number(tr["x_max"], "trait.x_max"),
                          rd.number(tr["n_x"], "trait.n_x", integer=True))
        extents = [tuple(rd.number(v, "space.extents") for v in pair) for pair in sp["extents"]]
        counts = [rd.number(v, "space.n", integer=True) for v in sp["n"]]
        grid = SpatialGrid(tuple(extents), tuple(counts))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        rd.fail(str(exc), "space" if "spatial" in str(exc) or "interior" in str(exc) else "trait")

    r = sample_coefficients(_coefficient(rd, raw.get("r"), "r"), tgrid)
    d = sample_coefficients(_coefficient(rd, raw.get("d"), "d"), tgrid)

    eps_raw = raw["eps"]
    if isinstance(eps_raw, list):
        eps_list = tuple(rd.number(e, "eps", positive=True) for e in eps_raw)
        if not eps_list:
            rd.fail("empty eps list", "eps")
    else:
        eps_list = None
    eps = eps_list[0] if eps_list else rd.number(eps_raw, "eps", positive=True)
    if "eps_list" in raw:
        eps_list = tuple(rd.number(e, "eps_list", positive=True) for e in raw["eps_list"])
    params = validate_params(
        ModelParams(tgrid, r, d, rd.number(raw["lam"], "lam"), rd.number(raw["c_B"], "c_B"), eps)
    )

    init_raw = raw.get("init") or {}
    rd.mapping(init_raw, "init", _INIT_KEYS)
    init = InitSpec(
        x0=_profile(rd, init_raw.get("x0"), "init.x0"),
        sigma=rd.number(init_raw.get("sigma", 1.0), "init.sigma", positive=True),
        rho0=None if init_raw.get("rho0") is None else _profile(rd, init_raw["rho0"], "init.rho0"),
        rho_shift=rd.number(init_raw.get("rho_shift", 0.0), "init.rho_shift"),
        rho_modulation=rd.number(init_raw.get("rho_modulation", 0.0), "init.rho_modulation"),
    )

    T = rd.number(raw.get("T", 1.0), "T")
    if T < 0:
        rd.fail("T must be nonnegative", "T")
    smallness = raw.get("smallness")
    out = raw.get("out", "out")
    if base is not None and not Path(out).is_absolute():
        out = str(Path(base) / out)
    return RunConfig(
        params=params,
        grid=grid,
        init=init,
        mode=mode,
        eps_list=eps_list or DEFAULT_EPS_LIST,
        T=T,
        snapshot_every=rd.number(raw.get("snapshot_every", 0.1), "snapshot_every", positive=True),
        tol_scale=rd.number(raw.get("tol_scale", 1.0), "tol_scale", positive=True),
        smallness=None if smallness is None else rd.number(smallness, "smallness", positive=True),
        out=str(out),
        raw=raw,
    )


def load_config(path) -> RunConfig:
    """Read and parse a configuration file; relative ``out`` resolves next to it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", field=str(path)) from None
    return parse_config(text, base=path.parent)
