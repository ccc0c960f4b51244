"""JSON system configuration: spin, principal values, Euler angles, C2 axis."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

from .spin_algebra import SpinSystem, make_spin_system
from .tensors import InteractionTensors, build_tensors, parse_convention

REQUIRED_KEYS = ("spin_two_I", "q_principal_MHz", "g_principal_kHz_per_G", "euler_deg")
OPTIONAL_KEYS = ("euler_convention", "c2_axis")
DEFAULT_CONFIG = "site1_pr_yso"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass(frozen=True)
class SystemConfig:
    spin_two_I: int
    q_principal_MHz: tuple      # (E, D)
    g_principal_kHz_per_G: tuple
    euler_deg: tuple
    euler_convention: str = "zyz"
    c2_axis: tuple = (0.0, 1.0, 0.0)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def with_convention(self, tag: str | None) -> "SystemConfig":
        if tag is None:
            return self
        try:
            parse_convention(tag)
        except ValueError as exc:
            raise ConfigError("euler_convention", str(exc)) from None
        return SystemConfig(**{**asdict(self), "euler_convention": tag})

    def spin_system(self) -> SpinSystem:
        return make_spin_system(self.spin_two_I)

    def tensors(self) -> InteractionTensors:
        e, d = self.q_principal_MHz
        return build_tensors(e, d, self.g_principal_kHz_per_G, self.euler_deg,
                             self.euler_convention, self.c2_axis)

    def metadata(self) -> list[str]:
        return [
            f"config_hash: {self.hash}",
            f"euler_convention: {self.euler_convention}",
            "units: field G, energy MHz, Zeeman tensor kHz/G (config) / MHz/G (internal)",
        ]


def _vector(raw: dict, key: str, n: int) -> tuple:
    val = raw[key]
    if not isinstance(val, (list, tuple)) or len(val) != n:
        raise ConfigError(key, f"expected a list of {n} numbers")
    out = []
    for x in val:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(key, f"non-numeric entry {x!r}")
        out.append(float(x))
    return tuple(out)


def parse_config(raw: dict) -> SystemConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    unknown = sorted(set(raw) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    for key in REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError(key, "missing required key")
    two_i = raw["spin_two_I"]
    if isinstance(two_i, bool) or not isinstance(two_i, int) or two_i < 1:
        raise ConfigError("spin_two_I", "must be a positive integer")
    conv = raw.get("euler_convention", "zyz")
    try:
        parse_convention(conv)
    except ValueError as exc:
        raise ConfigError("euler_convention", str(exc)) from None
    cfg = SystemConfig(
        spin_two_I=two_i,
        q_principal_MHz=_vector(raw, "q_principal_MHz", 2),
        g_principal_kHz_per_G=_vector(raw, "g_principal_kHz_per_G", 3),
        euler_deg=_vector(raw, "euler_deg", 3),
        euler_convention=conv,
        c2_axis=_vector(raw, "c2_axis", 3) if "c2_axis" in raw else (0.0, 1.0, 0.0),
    )
    # surface tensor-level violations under the key that caused them
    e, d = cfg.q_principal_MHz
    if e < 0 or d <= 0:
        raise ConfigError("q_principal_MHz", "need E >= 0 and D > 0")
    if any(g <= 0 for g in cfg.g_principal_kHz_per_G):
        raise ConfigError("g_principal_kHz_per_G", "values must be positive")
    if all(c == 0 for c in cfg.c2_axis):
        raise ConfigError("c2_axis", "axis must be nonzero")
    try:
        cfg.spin_system()
    except ValueError as exc:
        raise ConfigError("spin_two_I", str(exc)) from None
    return cfg


def load_config(path: str | Path | None = None) -> SystemConfig:
    """Load a config file; ``None`` or a bare bundled name loads a shipped config."""
    if path is None or (isinstance(path, str) and not path.endswith(".json") and "/" not in path):
        name = DEFAULT_CONFIG if path is None else path
        try:
            text = resources.files("zefoz.data").joinpath(f"{name}.json").read_text()
        except FileNotFoundError:
            raise ConfigError("<file>", f"no bundled config named {name!r}") from None
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(raw)
