"""Run configuration: a flat ``key = value`` document.

One key per line, ``#`` starts a comment, blank lines are ignored and keys
are matched case- and whitespace-insensitively.  Lists are comma separated.
Unknown keys, unparsable values and violated constraints raise
:class:`ConfigError` naming the offending line.

Required keys: dim, m, a, alpha, n, T_final, dt.  Everything else has a
default, given by the field defaults of :class:`RunConfig`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .constitutive import ConstitutiveParams
from .solver import METHODS, count_steps
from .spectral import SpectralConfig

IC_KINDS = ("zero", "random", "single_mode", "manufactured")
FORCE_KINDS = ("zero", "single_mode", "tabulated", "manufactured")
SEED_MAX = 2**64 - 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitialSpec:
    """How ``(u0, v0)`` is built.

    random        seeded Gaussian coefficients with ``|k|^-decay`` damping,
                  scaled so that ``max |eps(v0 + alpha u0)| = target``
    single_mode   ``u0 = amplitude * basis(mode, component, sine)``, ``v0 = 0``
    manufactured  ``u*`` and ``u*_t`` at ``t = 0``
    """

    kind: str = "zero"
    target: float = 0.5
    decay: float = 3.0
    data_m: int = 0            # degree of the random data; 0 means the run's m
    mode: tuple[int, ...] = ()
    component: int = 0
    amplitude: float = 0.0


@dataclass(frozen=True)
class ForceConfig:
    kind: str = "zero"
    mode: tuple[int, ...] = ()
    amplitude: tuple[float, ...] = ()
    omega: float = 0.0
    path: str = ""


@dataclass(frozen=True)
class RunConfig:
    dim: int
    m: int
    a: float
    alpha: float
    n: float
    T_final: float
    dt: float
    grid_shape: tuple[int, ...] = ()
    method: str = "rk4"
    ic: InitialSpec = InitialSpec()
    force: ForceConfig = ForceConfig()
    out_dir: str = "out"
    seed: int = 0
    cadence: float = 0.0       # 0 means 10 dt
    checkpoint_every: int = 0
    mms_A: float = 0.03
    mms_omega: float = 2.0 * math.pi
    mms_ref_side: int = 256
    mms_dt_list: tuple[float, ...] = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
    mms_m_list: tuple[int, ...] = (4, 8)
    mms_spatial_dt: float = 1e-4
    mms_spatial_T: float = 0.25
    n_list: tuple[int, ...] = ()
    m_list: tuple[int, ...] = ()
    props_samples: int = 100_000
    props_a: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0)

    @property
    def spectral(self) -> SpectralConfig:
        return SpectralConfig(self.dim, self.m, self.grid_shape)

    @property
    def params(self) -> ConstitutiveParams:
        return ConstitutiveParams(a=self.a, alpha=self.alpha, n=self.n)

    @property
    def n_steps(self) -> int:
        return count_steps(self.T_final, self.dt)

    @property
    def cadence_steps(self) -> int:
        if self.cadence == 0.0:
            return 10
        return max(1, int(round(self.cadence / self.dt)))

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# key table: document key -> (attribute path, parser, formatter)


def _int(text: str) -> int:
    return int(text, 0) if text.lower().startswith(("0x", "0o", "0b")) else int(text)


def _float(text: str) -> float:
    return float(text)


def _n(text: str) -> float:
    v = float(text)
    return v if v == math.inf else _int(text) if text.strip().lstrip("+").isdigit() else v


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _str(text: str) -> str:
    return text


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_n(x: float) -> str:
    return "inf" if x == math.inf else str(int(x))


def _fmt_list(xs) -> str:
    return ",".join(repr(x) if isinstance(x, float) else str(x) for x in xs)


KEYS = {
    "dim": ("dim", _int, str),
    "m": ("m", _int, str),
    "grid_shape": ("grid_shape", _ints, _fmt_list),
    "a": ("a", _float, _fmt_float),
    "alpha": ("alpha", _float, _fmt_float),
    "n": ("n", _n, _fmt_n),
    "t_final": ("T_final", _float, _fmt_float),
    "dt": ("dt", _float, _fmt_float),
    "method": ("method", _str, str),
    "ic": ("ic.kind", _str, str),
    "ic_target": ("ic.target", _float, _fmt_float),
    "ic_decay": ("ic.decay", _float, _fmt_float),
    "ic_data_m": ("ic.data_m", _int, str),
    "ic_mode": ("ic.mode", _ints, _fmt_list),
    "ic_component": ("ic.component", _int, str),
    "ic_amplitude": ("ic.amplitude", _float, _fmt_float),
    "force": ("force.kind", _str, str),
    "force_mode": ("force.mode", _ints, _fmt_list),
    "force_amplitude": ("force.amplitude", _floats, _fmt_list),
    "force_omega": ("force.omega", _float, _fmt_float),
    "force_file": ("force.path", _str, str),
    "out_dir": ("out_dir", _str, str),
    "seed": ("seed", _int, str),
    "cadence": ("cadence", _float, _fmt_float),
    "checkpoint_every": ("checkpoint_every", _int, str),
    "mms_a": ("mms_A", _float, _fmt_float),
    "mms_omega": ("mms_omega", _float, _fmt_float),
    "mms_ref_side": ("mms_ref_side", _int, str),
    "mms_dt_list": ("mms_dt_list", _floats, _fmt_list),
    "mms_m_list": ("mms_m_list", _ints, _fmt_list),
    "mms_spatial_dt": ("mms_spatial_dt", _float, _fmt_float),
    "mms_spatial_t": ("mms_spatial_T", _float, _fmt_float),
    "n_list": ("n_list", _ints, _fmt_list),
    "m_list": ("m_list", _ints, _fmt_list),
    "props_samples": ("props_samples", _int, str),
    "props_a": ("props_a", _floats, _fmt_list),
}
REQUIRED = ("dim", "m", "a", "alpha", "n", "t_final", "dt")


def _norm_key(key: str) -> str:
    return "".join(key.split()).lower()


def _assign(values: dict, path: str, value) -> None:
    head, _, tail = path.partition(".")
    if tail:
        values.setdefault(head, {})[tail] = value
    else:
        values[head] = value


def parse_config(text: str) -> RunConfig:
    """Parse a configuration document; see the module docstring."""
    values: dict = {}
    where: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        k = _norm_key(key)
        if k not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key.strip()!r}")
        if k in where:
            raise ConfigError(f"line {lineno}: key {key.strip()!r} already set on line {where[k]}")
        path, parser, _ = KEYS[k]
        val = val.strip()
        try:
            parsed = parser(val)
        except ValueError:
            raise ConfigError(f"line {lineno}: cannot parse {val!r} for {key.strip()!r}") from None
        _assign(values, path, parsed)
        where[k] = lineno
    missing = [k for k in REQUIRED if k not in where]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    ic = InitialSpec(**values.pop("ic", {}))
    force = ForceConfig(**values.pop("force", {}))
    cfg = RunConfig(ic=ic, force=force, **values)
    validate(cfg, where)
    return cfg


def _line(where: dict[str, int], key: str) -> str:
    return f"line {where[key]}" if key in where else f"default for {key}"


def validate(cfg: RunConfig, where: dict[str, int] | None = None) -> None:
    """Re-check every numeric constraint; errors name the line of the culprit key."""
    where = where or {}

    def fail(key: str, msg: str):
        raise ConfigError(f"{_line(where, key)}: {msg}")

    def guard(key: str, fn):
        try:
            return fn()
        except ValueError as exc:
            fail(key, str(exc))

    if cfg.dim not in (1, 2, 3):
        fail("dim", f"dim must be 1, 2 or 3, got {cfg.dim}")
    if cfg.m < 1:
        fail("m", f"m must be >= 1, got {cfg.m}")
    guard("grid_shape", lambda: cfg.spectral)
    if not (cfg.a > 0 and math.isfinite(cfg.a)):
        fail("a", f"a must be positive and finite, got {cfg.a}")
    if not (cfg.alpha > 0 and math.isfinite(cfg.alpha)):
        fail("alpha", f"alpha must be positive and finite, got {cfg.alpha}")
    guard("n", lambda: cfg.params)
    if not (cfg.dt > 0 and math.isfinite(cfg.dt)):
        fail("dt", f"dt must be positive, got {cfg.dt}")
    if not (cfg.T_final >= 0 and math.isfinite(cfg.T_final)):
        fail("t_final", f"T_final must be >= 0, got {cfg.T_final}")
    guard("dt", lambda: cfg.n_steps)
    if cfg.method not in METHODS:
        fail("method", f"method must be one of {', '.join(METHODS)}, got {cfg.method!r}")
    if cfg.cadence < 0:
        fail("cadence", "cadence must be >= 0")
    if cfg.cadence and abs(cfg.cadence_steps * cfg.dt - cfg.cadence) > 1e-9 * max(1.0, cfg.cadence):
        fail("cadence", f"cadence {cfg.cadence} is not a multiple of dt={cfg.dt}")
    if cfg.checkpoint_every < 0:
        fail("checkpoint_every", "checkpoint_every must be >= 0")
    if not 0 <= cfg.seed <= SEED_MAX:
        fail("seed", "seed must be a 64-bit unsigned integer")
    ic = cfg.ic
    if ic.kind not in IC_KINDS:
        fail("ic", f"ic must be one of {', '.join(IC_KINDS)}, got {ic.kind!r}")
    if not 0.0 <= ic.target < 1.0:
        fail("ic_target", f"ic_target must lie in [0, 1), got {ic.target}")
    if not ic.decay > 0:
        fail("ic_decay", "ic_decay must be positive")
    if not 0 <= ic.data_m <= cfg.m:
        fail("ic_data_m", f"ic_data_m must lie in [0, m={cfg.m}]")
    if ic.kind == "single_mode":
        if len(ic.mode) != cfg.dim:
            fail("ic_mode", f"ic_mode needs {cfg.dim} integers")
        if not 0 <= ic.component < cfg.dim:
            fail("ic_component", f"ic_component must lie in [0, {cfg.dim})")
        guard("ic_mode", lambda: cfg.spectral.mode_index(ic.mode))
    fc = cfg.force
    if fc.kind not in FORCE_KINDS:
        fail("force", f"force must be one of {', '.join(FORCE_KINDS)}, got {fc.kind!r}")
    if fc.kind == "single_mode":
        if len(fc.mode) != cfg.dim:
            fail("force_mode", f"force_mode needs {cfg.dim} integers")
        if len(fc.amplitude) != cfg.dim:
            fail("force_amplitude", f"force_amplitude needs {cfg.dim} numbers")
        guard("force_mode", lambda: cfg.spectral.mode_index(fc.mode))
    if fc.kind == "tabulated" and not fc.path:
        fail("force_file", "tabulated force needs force_file")
    if "manufactured" in (fc.kind, ic.kind) and cfg.dim < 2:
        fail("dim", "the manufactured solution needs dim >= 2")
    if cfg.mms_ref_side < 0:
        fail("mms_ref_side", "mms_ref_side must be >= 0")
    if any(not d > 0 for d in cfg.mms_dt_list) or not cfg.mms_dt_list:
        fail("mms_dt_list", "mms_dt_list needs positive entries")
    if any(k < 1 for k in cfg.mms_m_list) or not cfg.mms_m_list:
        fail("mms_m_list", "mms_m_list needs entries >= 1")
    if not cfg.mms_spatial_dt > 0 or not cfg.mms_spatial_T > 0:
        fail("mms_spatial_dt", "mms_spatial_dt and mms_spatial_T must be positive")
    if any(k < 1 for k in cfg.n_list):
        fail("n_list", "n_list entries must be >= 1")
    if list(cfg.n_list) != sorted(cfg.n_list):
        fail("n_list", "n_list must be ascending")
    if list(cfg.m_list) != sorted(cfg.m_list) or any(k < 1 for k in cfg.m_list):
        fail("m_list", "m_list must be ascending with entries >= 1")
    if cfg.props_samples < 1:
        fail("props_samples", "props_samples must be >= 1")
    if any(not x > 0 for x in cfg.props_a):
        fail("props_a", "props_a entries must be positive")


def _get(cfg: RunConfig, path: str):
    obj = cfg
    for part in path.split("."):
        obj = getattr(obj, part)
    return obj


def serialize(cfg: RunConfig) -> str:
    """Every key, one per line, formatted so that ``parse_config`` restores ``cfg``."""
    lines = []
    for key, (path, _, fmt) in KEYS.items():
        val = _get(cfg, path)
        text = fmt(val)
        if text == "" and key not in REQUIRED:
            continue
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


__all__ = [
    "ConfigError", "InitialSpec", "ForceConfig", "RunConfig", "parse_config", "serialize", "validate",
    "KEYS", "IC_KINDS", "FORCE_KINDS",
]
