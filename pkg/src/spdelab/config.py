"""Sectioned ``key = value`` run configuration.

Parsing materialises every default, so the emitted text is a complete,
self-describing record of a run. The SHA-256 of that canonical text is the
config hash used for provenance.

Example::

    [grid]
    length = 1.0
    n_interior = 128

    [diffusion]
    b = porous_floor(1.0, 1.0, 3.0)

    [noise]
    mode = additive

    [solver]
    dt = 1e-4
    T = 1.0

    [experiment]
    kind = contract
"""

from __future__ import annotations

import ast
import configparser
import hashlib
import re
from dataclasses import dataclass
from pathlib import Path

from . import diffusion as dif
from .grid import Grid
from .noise import NoiseSpec
from .stepper import SolverConfig


class ConfigError(ValueError):
    pass


_FLOAT, _INT, _STR, _BOOL = float, int, str, bool


def _opt(t):
    return ("optional", t)


SCHEMA = {
    "grid": {"length": (_FLOAT, 1.0), "n_interior": (_INT, 128)},
    "diffusion": {"b": (_STR, None), "regime": (_opt(_STR), None), "gamma": (_opt(_FLOAT), None),
                  "bounded_above": (_opt(_FLOAT), None)},
    "noise": {"mode": (_STR, "multiplicative"), "N": (_opt(_INT), None),
              "lambda_bar": (_FLOAT, 1.0), "decay_q": (_FLOAT, 1.0),
              "state_profile": (_opt(_STR), None), "seed": (_INT, 0)},
    "solver": {"dt": (_FLOAT, 1e-4), "T": (_FLOAT, 1.0), "scheme": (_STR, "implicit"),
               "regularization": (_STR, "none"), "epsilon": (_opt(_FLOAT), None),
               "tau": (_opt(_FLOAT), None), "clip_threshold": (_opt(_FLOAT), 1e6),
               "record_every": (_INT, 100), "face_mean": (_STR, "arithmetic")},
}

_COMMON = {"kind": (_STR, None), "paths": (_INT, 200), "slack_C": (_FLOAT, 10.0)}

EXPERIMENT_KEYS = {
    "contract": {"u1": (_STR, "bump(amp=1.0, center=0.4, width=0.3)"),
                 "u2": (_STR, "bump(amp=1.0, center=0.6, width=0.3)"),
                 "pathwise": (_STR, "auto"), "se_factor": (_FLOAT, 2.0),
                 "max_diverged_fraction": (_FLOAT, 0.01), "pathwise_fraction": (_FLOAT, 0.99)},
    "compare": {"u1": (_STR, "zero()"), "u2": (_STR, "bump(amp=1.0, center=0.5, width=0.3)"),
                "max_diverged_fraction": (_FLOAT, 0.01)},
    "energy": {"profile": (_STR, "bump(amp=1.0, center=0.5, width=0.3)"),
               "p_values": (_STR, "2,4"), "norms": (_STR, "1,2,4,8"), "q": (_FLOAT, 1.0),
               "slope_max": (_FLOAT, 1.1)},
    "ergodic": {"u1": (_STR, "two_bump(amp1=2.0, c1=0.3, amp2=-1.0, c2=0.7, width=0.2)"),
                "u2": (_STR, "constant(value=1.0)"), "gap_ratio": (_FLOAT, 0.01),
                "pass_fraction": (_FLOAT, 0.95), "monotone_fraction": (_FLOAT, 1.0)},
    "invariant": {"u1": (_STR, "two_bump(amp1=2.0, c1=0.3, amp2=-1.0, c2=0.7, width=0.2)"),
                  "u2": (_STR, "constant(value=1.0)"), "burn_in": (_FLOAT, 0.25),
                  "R_levels": (_STR, "2,4,8,16"), "slope_max": (_FLOAT, -1.5),
                  "modes": (_INT, 2), "growth_lambda": (_opt(_FLOAT), None),
                  "growth_alpha": (_FLOAT, 0.5), "growth_c": (_opt(_FLOAT), None)},
    "irreducible": {"profile": (_STR, "sine(amp=1.0, mode=1)"), "z_norms": (_STR, "0,1,2,4"),
                    "eps_target": (_FLOAT, 0.2)},
    "ball-entry": {"u1": (_STR, "bump(amp=1.0, center=0.5, width=0.3)"),
                   "u2": (_STR, "zero()"), "window": (_FLOAT, 0.1), "L": (_INT, 3),
                   "initial_scale": (_FLOAT, 100.0), "pilot_paths": (_INT, 50),
                   "K0": (_opt(_FLOAT), None), "sizes": (_STR, "1,10,100,1000")},
    "kinetic": {"u0": (_STR, "bump(amp=1.0, center=0.5, width=0.3)"),
                "norms": (_STR, "1,2,4,8"), "bins": (_INT, 512), "k": (_FLOAT, 1.0),
                "p": (_FLOAT, 1.0)},
    "linear": {"u0": (_STR, "bump(amp=1.0, center=0.5, width=0.3)"), "modes": (_INT, 4),
               "burn_in": (_FLOAT, 0.5), "oracle_paths": (_INT, 1000)},
    "validate": {"sample_range": (_FLOAT, 10.0), "sample_count": (_INT, 4001),
                 "growth_lambda": (_opt(_FLOAT), None), "growth_alpha": (_FLOAT, 0.5),
                 "growth_c": (_opt(_FLOAT), None), "symbol_J": (_FLOAT, 4.0),
                 "symbol_support": (_STR, "-1,1")},
    "boundary-layer": {"deltas": (_STR, "0.2,0.1,0.05"), "flux_deltas": (_STR, "0.04,0.02,0.01")},
}

SECTION_ORDER = ("grid", "diffusion", "noise", "solver", "experiment")

ADDITIVE_BOUNDED = ("ergodic", "ball-entry", "irreducible")


@dataclass(frozen=True)
class RunConfig:
    """Fully materialised configuration (every default filled in)."""

    sections: dict

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    @property
    def kind(self) -> str:
        return self.sections["experiment"]["kind"]

    def text(self) -> str:
        return emit_config(self)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()

    def with_overrides(self, **kv) -> "RunConfig":
        """Override ``section.key`` entries (dots replaced by ``__`` in names)."""
        new = {s: dict(v) for s, v in self.sections.items()}
        for dotted, value in kv.items():
            sec, key = dotted.split("__", 1)
            new[sec][key] = value
        return materialize(new)

    # -- domain objects ------------------------------------------------------

    def grid(self) -> Grid:
        g = self.sections["grid"]
        return Grid(g["length"], g["n_interior"])

    def diffusion(self) -> dif.DiffusionSpec:
        return build_diffusion(self.sections["diffusion"])

    def noise(self) -> NoiseSpec:
        n = self.sections["noise"]
        return NoiseSpec(self.grid(), n["mode"], n["N"], n["lambda_bar"], n["decay_q"],
                         n["state_profile"], n["seed"])

    def solver(self) -> SolverConfig:
        s = self.sections["solver"]
        return SolverConfig(s["dt"], s["T"], s["scheme"], s["regularization"], s["epsilon"],
                            s["tau"], s["clip_threshold"], s["record_every"], s["face_mean"])

    @property
    def experiment(self) -> dict:
        return self.sections["experiment"]


# -- call-syntax descriptors --------------------------------------------------


def parse_call(text: str) -> tuple[str, list, dict]:
    """``name(1, 2, key=3)`` -> ``("name", [1, 2], {"key": 3})``."""
    try:
        node = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse descriptor {text!r}: {exc.msg}") from None
    if isinstance(node, ast.Name):
        return node.id, [], {}
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        raise ConfigError(f"descriptor {text!r} must look like name(args)")
    try:
        args = [ast.literal_eval(a) for a in node.args]
        kwargs = {k.arg: ast.literal_eval(k.value) for k in node.keywords}
    except ValueError:
        raise ConfigError(f"descriptor {text!r} has non-literal arguments") from None
    return node.func.id, args, kwargs


def parse_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def build_regime(text: str) -> dif.Regime:
    name, args, kwargs = parse_call(text)
    try:
        if name == "nondegenerate":
            return dif.NonDegenerate(*map(float, args), **kwargs)
        if name == "degenerate":
            return dif.Degenerate(*map(float, args), **kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad regime {text!r}: {exc}") from None
    raise ConfigError(f"unknown regime {name!r} (use nondegenerate(...) or degenerate(...))")


def build_diffusion(section: dict) -> dif.DiffusionSpec:
    text = section["b"]
    name, args, kwargs = parse_call(text)
    try:
        if name == "expr":
            if not args or not isinstance(args[0], str):
                raise ConfigError("expr(...) takes the expression as a string")
            if section.get("regime") is None:
                raise ConfigError("expr diffusion needs an explicit diffusion.regime")
            spec = dif.from_expression(args[0], build_regime(section["regime"]),
                                       holder_gamma=section.get("gamma") or 1.0,
                                       bounded_above=section.get("bounded_above"))
            return spec
        if name not in dif.FAMILIES or name == "anti_diffusion":
            raise ConfigError(f"unknown diffusion family {name!r}")
        spec = dif.FAMILIES[name](*args, **kwargs)
    except dif.DiffusionError as exc:
        raise ConfigError(f"diffusion {text!r}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"diffusion {text!r}: {exc}") from None
    if section.get("gamma") is not None:
        from dataclasses import replace
        spec = replace(spec, holder_gamma=section["gamma"])
    return spec


# -- parse / emit -------------------------------------------------------------


def _line_of(text: str, section: str | None, key: str | None = None) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def _convert(raw: str, typ, where: str):
    optional = isinstance(typ, tuple)
    base = typ[1] if optional else typ
    s = raw.strip()
    if optional and s.lower() in ("none", ""):
        return None
    try:
        if base is _BOOL:
            if s.lower() in ("true", "yes", "1"):
                return True
            if s.lower() in ("false", "no", "0"):
                return False
            raise ValueError(s)
        if base is _INT:
            return int(s)
        if base is _FLOAT:
            return float(s)
        return s
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {base.__name__}") from None


def parse_text(text: str, source: str = "<config>", kind: str | None = None) -> RunConfig:
    """Parse config text; ``kind`` supplies or cross-checks ``experiment.kind``."""
    cp = configparser.ConfigParser(strict=True, interpolation=None,
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}, line {exc.lineno}: duplicate key "
                          f"{exc.section}.{exc.option}") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}, line {exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    raw = {s: dict(cp[s]) for s in cp.sections()}
    for s in raw:
        if s not in SECTION_ORDER:
            raise ConfigError(f"{source}, line {_line_of(text, s)}: unknown section [{s}]")
    given = raw.get("experiment", {}).get("kind")
    if kind is not None and given is not None and given != kind:
        raise ConfigError(f"{source}, line {_line_of(text, 'experiment', 'kind')}: config is for "
                          f"experiment {given!r} but {kind!r} was requested")
    if given is None and kind is not None:
        raw.setdefault("experiment", {})["kind"] = kind
    kind = raw.get("experiment", {}).get("kind")
    if kind is None:
        raise ConfigError(f"{source}: missing experiment.kind")
    if kind not in EXPERIMENT_KEYS:
        raise ConfigError(f"{source}, line {_line_of(text, 'experiment', 'kind')}: "
                          f"unknown experiment kind {kind!r}")
    typed = {}
    for sec in SECTION_ORDER:
        schema = _schema_for(sec, kind)
        values = raw.get(sec, {})
        out = {}
        for key, val in values.items():
            if key not in schema:
                raise ConfigError(f"{source}, line {_line_of(text, sec, key)}: "
                                  f"unknown key {sec}.{key}")
            out[key] = _convert(val, schema[key][0], f"{source}, line {_line_of(text, sec, key)}")
        typed[sec] = out
    return materialize(typed)


def _schema_for(section: str, kind: str) -> dict:
    if section == "experiment":
        return {**_COMMON, **EXPERIMENT_KEYS[kind]}
    return SCHEMA[section]


def materialize(sections: dict) -> RunConfig:
    """Fill defaults, resolve derived defaults and run semantic validation."""
    kind = sections.get("experiment", {}).get("kind")
    if kind not in EXPERIMENT_KEYS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    full = {}
    for sec in SECTION_ORDER:
        schema = _schema_for(sec, kind)
        given = sections.get(sec, {})
        for key in given:
            if key not in schema:
                raise ConfigError(f"unknown key {sec}.{key}")
        full[sec] = {k: given.get(k, default) for k, (_, default) in schema.items()}
    if kind != "boundary-layer" and full["diffusion"]["b"] is None:
        raise ConfigError("missing diffusion.b")
    if full["diffusion"]["b"] is None:
        full["diffusion"]["b"] = "constant(1.0)"
    n = full["grid"]["n_interior"]
    if full["noise"]["N"] is None:
        full["noise"]["N"] = min(64, n)
    mode = full["noise"]["mode"].lower()
    full["noise"]["mode"] = mode
    if full["noise"]["state_profile"] is None or mode == "additive":
        full["noise"]["state_profile"] = "one" if mode == "additive" else "cos"
    cfg = RunConfig(full)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    kind = cfg.kind
    try:
        cfg.grid()
        spec = cfg.diffusion()
        noise = cfg.noise()
        cfg.solver()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.experiment["paths"] < 1:
        raise ConfigError("experiment.paths must be >= 1")
    if kind in ADDITIVE_BOUNDED:
        if not noise.additive:
            raise ConfigError(
                f"experiment {kind!r} requires additive noise: the uniqueness/ergodicity result "
                "assumes that the noise is additive and the diffusion b is bounded "
                "(noise.mode=multiplicative given)")
        if spec.bounded_above is None or spec.is_degenerate:
            raise ConfigError(
                f"experiment {kind!r} requires a bounded non-degenerate diffusion "
                "(b0 <= b <= b1); the uniqueness/ergodicity result assumes b is bounded")
    if kind == "invariant" and spec.is_degenerate:
        raise ConfigError("experiment 'invariant' requires the non-degenerate growth hypothesis "
                          "(b0 <= b(r) <= c(1+|r|^(theta-1))); a degenerate diffusion was given")
    if kind == "linear" and (spec.name != "constant" or not noise.additive):
        raise ConfigError("experiment 'linear' needs constant(b0) diffusion and additive noise")
    if cfg["solver"]["regularization"] == "yosida" and spec.is_degenerate:
        raise ConfigError("Yosida regularisation needs a non-degenerate diffusion")


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(cfg: RunConfig) -> str:
    lines = []
    for sec in SECTION_ORDER:
        lines.append(f"[{sec}]")
        for key, value in cfg.sections[sec].items():
            lines.append(f"{key} = {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    return parse_text(p.read_text(), source=str(p))
