"""Experiment configuration: a flat ``key = value`` format with ``[section]`` headers.

Example::

    experiment = tail_decay

    [experiment]
    seed = 7
    paths = 100000

    [grid]
    n_space = 64
    mesh_ratio = 0.25

Keys before the first header belong to ``[experiment]`` (``experiment`` is
an alias of ``name`` there).  ``#`` and ``;`` start comments.  Unknown
sections and keys are rejected.
"""

from dataclasses import dataclass, field, replace
import hashlib
import json
import math
import numbers
import re

from .exceptions import ConfigError
from .grid import build_grid

SECTIONS = {
    "experiment": {"name", "seed", "paths", "workers", "block_size", "out"},
    "grid": {"n_space", "horizon", "dt", "mesh_ratio"},
    "coefficients": {"kind", "b", "sigma", "db", "dsigma", "B", "H", "B_bound", "H_bound"},
    "probe": {"t", "x"},
    "knobs": None,  # allowed keys depend on the experiment
}
COEFFICIENT_KINDS = ("deterministic", "additive", "linear", "semilinear")

_HEADER = re.compile(r"^\[\s*([A-Za-z_]\w*)\s*\]$")
_PAIR = re.compile(r"^([A-Za-z_]\w*)\s*=\s*(.*)$")


def parse_text(text):
    """Parse the config format into ``{section: {key: (raw_value, lineno)}}``."""
    out = {}
    section = "experiment"
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = re.split(r"\s[#;]|^[#;]", line, maxsplit=1)[0].strip()
        if not stripped:
            continue
        m = _HEADER.match(stripped)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            out.setdefault(section, {})
            continue
        m = _PAIR.match(stripped)
        if not m:
            raise ConfigError(f"expected 'key = value' or '[section]', got {line.strip()!r}", lineno)
        key, value = m.group(1), m.group(2).strip()
        if section == "experiment" and key == "experiment":
            key = "name"
        allowed = SECTIONS[section]
        if allowed is not None and key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        entries = out.setdefault(section, {})
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", lineno)
        entries[key] = (value, lineno)
    return out


def _number(value):
    """Numbers stay numbers; ints are kept when exact."""
    try:
        v = float(value)
    except ValueError:
        return value
    if re.fullmatch(r"[+-]?\d+", value.strip()):
        return int(value)
    return v


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration of one experiment run."""

    name: str
    seed: int = 20240607
    paths: int = 1
    workers: int = 1
    block_size: int = 4096
    out: str = "results"
    n_space: int = 128
    horizon: float = 0.1
    dt: float | None = None
    mesh_ratio: float | None = None
    coefficients: dict = field(default_factory=dict)
    probe_t: float | None = None
    probe_x: float | None = None
    knobs: dict = field(default_factory=dict)

    def grid(self, n_space=None):
        n = self.n_space if n_space is None else n_space
        dt = self.dt
        if dt is None and self.mesh_ratio is not None:
            dt = self.mesh_ratio / n ** 2
        return build_grid(n, self.horizon, dt)

    def as_dict(self):
        return {
            "name": self.name, "seed": self.seed, "paths": self.paths,
            "block_size": self.block_size, "n_space": self.n_space,
            "horizon": self.horizon, "dt": self.dt, "mesh_ratio": self.mesh_ratio,
            "coefficients": dict(sorted(self.coefficients.items())),
            "probe_t": self.probe_t, "probe_x": self.probe_x,
            "knobs": dict(sorted(self.knobs.items())),
        }

    def checksum(self):
        """SHA-256 of the canonical config (worker count and output dir excluded)."""
        text = json.dumps(self.as_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()


def _int(value, key, lineno=None, minimum=None):
    try:
        v = int(value)
        if v != float(value):
            raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer, got {value!r}", lineno) from None
    if minimum is not None and v < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {v}", lineno)
    return v


def _float(value, key, lineno=None):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {value!r}", lineno) from None
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite", lineno)
    return v


def build_config(name, parsed=None, overrides=None):
    """Merge registry defaults, parsed file entries and CLI overrides, then validate."""
    from .experiments import REGISTRY  # registry imports this module

    parsed = parsed or {}
    overrides = overrides or {}
    if name not in REGISTRY:
        raise ConfigError(
            f"unknown experiment {name!r}; registered: {', '.join(sorted(REGISTRY))}")
    spec = REGISTRY[name]
    defaults = spec.defaults
    values = {}
    lines = {}
    for section in ("experiment", "grid", "probe"):
        for key, default in defaults.get(section, {}).items():
            values[(section, key)] = default
        for key, (raw, lineno) in parsed.get(section, {}).items():
            values[(section, key)] = _number(raw)
            lines[(section, key)] = lineno
    coeffs = dict(defaults.get("coefficients", {}))
    if "coefficients" in parsed:
        file_coeffs = {k: _number(v) for k, (v, _) in parsed["coefficients"].items()}
        if "kind" in file_coeffs and file_coeffs["kind"] != coeffs.get("kind"):
            coeffs = {}
        coeffs.update(file_coeffs)
    knobs = dict(defaults.get("knobs", {}))
    for key, (raw, lineno) in parsed.get("knobs", {}).items():
        if key not in knobs:
            allowed = ", ".join(sorted(knobs)) or "none"
            raise ConfigError(f"unknown knob {key!r} for {name} (allowed: {allowed})", lineno)
        knobs[key] = _number(raw)
    for key, value in overrides.items():
        if value is None:
            continue
        section = "grid" if key == "n_space" else "experiment"
        values[(section, key)] = value
        lines.pop((section, key), None)

    def get(section, key, default=None):
        return values.get((section, key), default)

    def line(section, key):
        return lines.get((section, key))

    kind = coeffs.get("kind")
    if kind is not None and kind not in COEFFICIENT_KINDS:
        raise ConfigError(f"coefficient kind must be one of {COEFFICIENT_KINDS}, got {kind!r}")

    cfg = ExperimentConfig(
        name=name,
        seed=_int(get("experiment", "seed", 20240607), "seed", line("experiment", "seed"), 0),
        paths=_int(get("experiment", "paths", 1), "paths", line("experiment", "paths"), 1),
        workers=_int(get("experiment", "workers", 1), "workers", line("experiment", "workers"), 1),
        block_size=_int(get("experiment", "block_size", 4096), "block_size",
                        line("experiment", "block_size"), 1),
        out=str(get("experiment", "out", "results")),
        n_space=_int(get("grid", "n_space", 128), "n_space", line("grid", "n_space"), 2),
        horizon=_float(get("grid", "horizon", 0.1), "horizon", line("grid", "horizon")),
        dt=None if get("grid", "dt") is None else _float(get("grid", "dt"), "dt", line("grid", "dt")),
        mesh_ratio=(None if get("grid", "mesh_ratio") is None
                    else _float(get("grid", "mesh_ratio"), "mesh_ratio", line("grid", "mesh_ratio"))),
        coefficients=coeffs,
        probe_t=None if get("probe", "t") is None else _float(get("probe", "t"), "t", line("probe", "t")),
        probe_x=None if get("probe", "x") is None else _float(get("probe", "x"), "x", line("probe", "x")),
        knobs=knobs,
    )
    try:
        grid = cfg.grid()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.probe_x is not None:
        i = grid.node_index(cfg.probe_x)
        if i is None or not 0 < i < grid.n_space:
            raise ConfigError(
                f"invalid probe x={cfg.probe_x}: must be an interior grid node "
                f"(the solution vanishes on the boundary)", line("probe", "x"))
    if cfg.probe_t is not None:
        j = grid.step_index(cfg.probe_t)
        if j is None or j == 0:
            raise ConfigError(f"invalid probe t={cfg.probe_t}: must be a positive time level of the grid",
                              line("probe", "t"))
    return cfg


def load_config(path, experiment=None, **overrides):
    """Read, merge with registry defaults, and validate a config file.

    ``experiment`` and ``overrides`` (``seed``, ``paths``, ``n_space``,
    ``out``, ``workers``) take precedence over the file.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return config_from_text(text, experiment, **overrides)


def config_from_text(text, experiment=None, **overrides):
    parsed = parse_text(text)
    name = experiment
    if name is None:
        entry = parsed.get("experiment", {}).get("name")
        if entry is None:
            raise ConfigError("no experiment named (set 'experiment = NAME' or --experiment)")
        name = entry[0]
    parsed.get("experiment", {}).pop("name", None)
    return build_config(name, parsed, overrides)


def with_overrides(cfg, **changes):
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})


def is_number(value):
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _expression(value, name):
    """A number, or a numpy function of ``(t, x, u)`` compiled from a sympy expression."""
    if is_number(value):
        return float(value), None
    import sympy

    t, x, u = sympy.symbols("t x u")
    try:
        expr = sympy.sympify(str(value), locals={"t": t, "x": x, "u": u})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse coefficient {name} = {value!r}: {exc}") from None
    extra = expr.free_symbols - {t, x, u}
    if extra:
        raise ConfigError(f"coefficient {name} uses unknown symbols {sorted(map(str, extra))}")
    if not expr.free_symbols:
        return float(expr), expr
    fn = sympy.lambdify((t, x, u), expr, modules="numpy")
    return (lambda tt, xx, uu: fn(tt, xx, uu) + 0.0 * uu), expr


def _derivative(expr, name):
    import sympy

    u = sympy.Symbol("u")
    d = sympy.diff(expr, u) if expr is not None else sympy.Integer(0)
    return _expression(str(d), name)[0]


def build_coefficients(spec):
    """Coefficients from a ``[coefficients]`` spec.

    Expressions are in ``t``, ``x`` and ``u``; derivatives in ``u`` default
    to symbolic differentiation of ``b`` and ``sigma``.
    """
    from .solver import Coefficients

    kind = spec.get("kind", "deterministic")
    if kind == "deterministic":
        b, bexpr = _expression(spec.get("b", 0.0), "b")
        db = _expression(spec["db"], "db")[0] if "db" in spec else _derivative(bexpr, "db")
        return Coefficients.deterministic(b, db)
    if kind == "additive":
        b, bexpr = _expression(spec.get("b", 0.0), "b")
        sigma, _ = _expression(spec.get("sigma", 1.0), "sigma")
        db = _expression(spec["db"], "db")[0] if "db" in spec else _derivative(bexpr, "db")
        return Coefficients.additive(sigma, b, db)
    if kind == "linear":
        B, Bexpr = _expression(spec.get("B", 0.0), "B")
        H, Hexpr = _expression(spec.get("H", 1.0), "H")
        B_bound = spec.get("B_bound", abs(B) if is_number(B) else None)
        H_bound = spec.get("H_bound", abs(H) if is_number(H) else None)
        if B_bound is None or H_bound is None:
            raise ConfigError("linear coefficients given as expressions need B_bound and H_bound")
        return Coefficients.linear(B, H, float(B_bound), float(H_bound))
    if kind == "semilinear":
        b, bexpr = _expression(spec.get("b", 0.0), "b")
        sigma, sexpr = _expression(spec.get("sigma", 1.0), "sigma")
        db = _expression(spec["db"], "db")[0] if "db" in spec else _derivative(bexpr, "db")
        ds = _expression(spec["dsigma"], "dsigma")[0] if "dsigma" in spec else _derivative(sexpr, "dsigma")
        return Coefficients.semilinear(b, sigma, db, ds)
    raise ConfigError(f"unknown coefficient kind {kind!r}")
