"""Scenario configuration.

A configuration is a flat TOML document; every key is optional and defaults
to the factory-floor scenario below. Powers are in dBm, bandwidth in Hz, the
cycle period in seconds and the payload in bytes.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


SCHEMES = ("vr", "mvr", "fr", "cell", "twohop")
SNR_MODES = ("geometry", "nominal", "uniform")
AP_LAYOUTS = ("uniform", "grid")
DEPLOYMENT_POLICIES = ("redraw", "fixed")

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Invalid configuration document or value."""


@dataclass(frozen=True)
class SystemConfig:
    T: float = 1e-3
    W: float = 20e6
    D: int = 50
    A: int = 5
    payload_bytes: float = 50.0
    L: int = 4
    beta: float = 0.8
    p_tx_dbm: float = 23.0
    p_dev_dbm: float = 23.0
    n0_dbm_hz: float = -174.0
    carrier_hz: float = 3.5e9
    floor_width: float = 100.0
    floor_depth: float = 100.0
    alpha_near: float = 2.0
    alpha_los: float = 3.26
    alpha_nlos: float = 3.93
    p0: float = 0.25
    d0: float = 15.0
    scheme: str = "vr"
    training_overhead_per_device: bool = True
    ap_layout: str = "uniform"
    snr_mode: str = "geometry"
    base_snr_db: float = 20.0
    snr_spread_db: float = 5.0
    deployment_policy: str = "redraw"
    seed: int = 0
    trials: int = 10_000

    def __post_init__(self):
        self.validate()

    # derived quantities -------------------------------------------------
    @property
    def B(self):
        """Payload in bits."""
        return 8.0 * self.payload_bytes

    @property
    def T_s(self):
        return 1.0 / self.W

    @property
    def T_P(self):
        pilots = self.L * (self.D if self.training_overhead_per_device else 1)
        return pilots * self.T_s

    @property
    def T_D(self):
        return self.T - self.T_P

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def normalized_deadline(self):
        """Deadline ``y = T_D W / B`` in the scaled-airtime domain."""
        return self.T_D * self.W / self.B

    # ------------------------------------------------------------------------
    def validate(self):
        checks = [
            (self.T > 0, "T", "must be positive"),
            (self.W > 0, "W", "must be positive"),
            (int(self.D) == self.D and self.D >= 1, "D", "must be an integer >= 1"),
            (int(self.A) == self.A and self.A >= 1, "A", "must be an integer >= 1"),
            (self.payload_bytes > 0, "payload_bytes", "must be positive"),
            (int(self.L) == self.L and self.L >= 0, "L", "must be an integer >= 0"),
            (0.0 <= self.beta <= 1.0, "beta", "must lie in [0, 1]"),
            (self.carrier_hz > 0, "carrier_hz", "must be positive"),
            (self.floor_width > 0, "floor_width", "must be positive"),
            (self.floor_depth > 0, "floor_depth", "must be positive"),
            (2.0 <= self.alpha_near <= self.alpha_los <= self.alpha_nlos, "alpha_*",
             "must satisfy 2 <= alpha_near <= alpha_los <= alpha_nlos"),
            (0.0 <= self.p0 <= 1.0, "p0", "must lie in [0, 1]"),
            (self.d0 > 0, "d0", "must be positive"),
            (self.scheme in SCHEMES, "scheme", f"must be one of {SCHEMES}"),
            (self.snr_mode in SNR_MODES, "snr_mode", f"must be one of {SNR_MODES}"),
            (self.ap_layout in AP_LAYOUTS, "ap_layout", f"must be one of {AP_LAYOUTS}"),
            (self.deployment_policy in DEPLOYMENT_POLICIES, "deployment_policy",
             f"must be one of {DEPLOYMENT_POLICIES}"),
            (self.snr_spread_db >= 0, "snr_spread_db", "must be non-negative"),
            (int(self.trials) == self.trials and self.trials >= 1, "trials", "must be an integer >= 1"),
            (int(self.seed) == self.seed and self.seed >= 0, "seed", "must be a non-negative integer"),
        ]
        for ok, name, msg in checks:
            if not ok:
                raise ConfigError(f"{name}: {msg}")
        if not self.T_P < self.T:
            raise ConfigError(
                f"L: training phase T_P={self.T_P:.3e}s leaves no downlink time in T={self.T:.3e}s"
            )

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        """SHA-256 of the canonical JSON form; independent of key order."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}


def _coerce(name, value):
    default = _FIELDS[name].default
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def config_from_mapping(doc, base=None):
    """Build a :class:`SystemConfig` from a flat mapping, rejecting unknown keys."""
    base = base or SystemConfig()
    changes = {}
    for key, value in doc.items():
        if key not in _FIELDS:
            raise ConfigError(f"{key}: unknown configuration key")
        changes[key] = _coerce(key, value)
    try:
        return base.replace(**changes)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    """Read a TOML configuration file."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    nested = [k for k, v in doc.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{nested[0]}: tables are not supported, keys must be top-level")
    return config_from_mapping(doc)


def dump_config(cfg):
    """Serialise to a flat TOML document (round-trips through :func:`load_config`)."""
    lines = []
    for key, value in cfg.to_dict().items():
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, str):
            text = json.dumps(value)
        else:
            text = repr(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
