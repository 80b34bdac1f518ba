"""Factory-floor geometry, LOS blockage, dual-slope path loss and average SNR.

The reference gains of the LOS/NLOS power laws are anchored to free-space
loss at the breakpoint distance ``10 * wavelength`` and made continuous
there, so the whole model is determined by the wavelength and the three
exponents.
"""

import json
from dataclasses import dataclass

import numpy as np

from .specfun import DomainError


@dataclass(frozen=True)
class Floor:
    width: float = 100.0
    depth: float = 100.0

    def __post_init__(self):
        if not (self.width > 0 and self.depth > 0):
            raise DomainError("floor dimensions must be positive")


@dataclass(frozen=True)
class PathLossParams:
    """Dual-slope path loss; ``c_los``/``c_nlos`` are derived, not free."""

    wavelength: float
    alpha_near: float = 2.0
    alpha_los: float = 3.26
    alpha_nlos: float = 3.93

    def __post_init__(self):
        if not 2.0 <= self.alpha_near <= self.alpha_los <= self.alpha_nlos:
            raise DomainError("exponents must satisfy 2 <= near <= los <= nlos")
        if not self.wavelength > 0:
            raise DomainError("wavelength must be positive")

    @property
    def breakpoint(self):
        return 10.0 * self.wavelength

    @property
    def gain_at_breakpoint(self):
        # Friis free-space gain at the breakpoint
        return (self.wavelength / (4.0 * np.pi * self.breakpoint)) ** 2

    @property
    def c_near(self):
        return self.gain_at_breakpoint * self.breakpoint ** self.alpha_near

    @property
    def c_los(self):
        return self.gain_at_breakpoint * self.breakpoint ** self.alpha_los

    @property
    def c_nlos(self):
        return self.gain_at_breakpoint * self.breakpoint ** self.alpha_nlos

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.wavelength, cfg.alpha_near, cfg.alpha_los, cfg.alpha_nlos)


def place_uniform(rng, n, floor, size=None):
    """i.i.d. uniform points on the floor; shape ``(n, 2)`` or ``size + (n, 2)``."""
    if n < 1:
        raise DomainError("need at least one point")
    lead = () if size is None else tuple(np.atleast_1d(size))
    u = rng.random(lead + (int(n), 2))
    return u * np.array([floor.width, floor.depth])


def place_grid(n, floor):
    """Near-square grid of ``n`` points centred in equal floor cells."""
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    pts = []
    for k in range(n):
        r, c = divmod(k, cols)
        pts.append(((c + 0.5) * floor.width / cols, (r + 0.5) * floor.depth / rows))
    return np.array(pts)


def los_probability(r, p0, d0):
    """``p0 + 1{r <= d0} (1 - p0) (r - d0)^2 / d0^2``, clamped to [0, 1]."""
    if not d0 > 0:
        raise DomainError("cutoff distance must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("distance must be non-negative")
    p = p0 + np.where(r <= d0, (1.0 - p0) * (r - d0) ** 2 / d0 ** 2, 0.0)
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def path_loss(r, is_los, p):
    """Linear channel gain (<= 1) at distance ``r``.

    Exponent ``alpha_near`` up to the breakpoint, ``alpha_los`` or
    ``alpha_nlos`` beyond it, continuous at the breakpoint.
    """
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("distance must be strictly positive")
    is_los = np.asarray(is_los, dtype=bool)
    rb = p.breakpoint
    far_alpha = np.where(is_los, p.alpha_los, p.alpha_nlos)
    alpha = np.where(r <= rb, p.alpha_near, far_alpha)
    gain = p.gain_at_breakpoint * (r / rb) ** (-alpha)
    gain = np.minimum(gain, 1.0)
    return float(gain) if gain.ndim == 0 else gain


def noise_floor_dbm(n0_dbm_hz, W):
    return n0_dbm_hz + 10.0 * np.log10(W)


def average_snr(p_tx_dbm, loss, n0_dbm_hz, W):
    """Linear average SNR ``P_T * loss / (N0 W)``."""
    if not W > 0:
        raise DomainError("bandwidth must be positive")
    snr_db = p_tx_dbm + 10.0 * np.log10(loss) - noise_floor_dbm(n0_dbm_hz, W)
    out = 10.0 ** (np.asarray(snr_db) / 10.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Deployment:
    """One scenario draw.

    ``snr[d, a]`` is the linear average SNR between device ``d`` and AP ``a``;
    ``d2d_snr[i, j]`` the device-to-device SNR used by relaying (diagonal
    unused).
    """

    ap_xy: np.ndarray
    dev_xy: np.ndarray
    los: np.ndarray
    snr: np.ndarray
    d2d_snr: np.ndarray = None

    @property
    def D(self):
        return self.snr.shape[0]

    @property
    def A(self):
        return self.snr.shape[1]

    def to_dict(self):
        doc = {
            "ap_xy": self.ap_xy.tolist(),
            "dev_xy": self.dev_xy.tolist(),
            "los": self.los.astype(bool).tolist(),
            "snr_db": (10.0 * np.log10(self.snr)).tolist(),
        }
        if self.d2d_snr is not None:
            d2d = np.array(self.d2d_snr, dtype=float)
            np.fill_diagonal(d2d, 1.0)
            doc["d2d_snr_db"] = (10.0 * np.log10(d2d)).tolist()
        return doc

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc):
        snr = 10.0 ** (np.asarray(doc["snr_db"], dtype=float) / 10.0)
        d2d = None
        if doc.get("d2d_snr_db") is not None:
            d2d = 10.0 ** (np.asarray(doc["d2d_snr_db"], dtype=float) / 10.0)
            np.fill_diagonal(d2d, 0.0)
        return cls(
            ap_xy=np.asarray(doc["ap_xy"], dtype=float),
            dev_xy=np.asarray(doc["dev_xy"], dtype=float),
            los=np.asarray(doc["los"], dtype=bool),
            snr=snr,
            d2d_snr=d2d,
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_snr(cls, snr, d2d_snr=None):
        """Deployment with a prescribed SNR matrix and no geometry."""
        snr = np.atleast_2d(np.asarray(snr, dtype=float))
        if np.any(~(snr > 0)):
            raise DomainError("SNR entries must be positive")
        D, A = snr.shape
        return cls(
            ap_xy=np.full((A, 2), np.nan),
            dev_xy=np.full((D, 2), np.nan),
            los=np.ones((D, A), dtype=bool),
            snr=snr,
            d2d_snr=None if d2d_snr is None else np.asarray(d2d_snr, dtype=float),
        )


def _pairwise(a, b):
    diff = a[..., :, None, :] - b[..., None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def draw_geometry(rng, cfg, n, with_d2d=False):
    """Batch of ``n`` independent deployments as arrays.

    Returns ``(ap_xy, dev_xy, los, snr, d2d_snr)`` with leading batch axis;
    ``d2d_snr`` is ``None`` unless requested. Positions are always drawn; in
    the ``nominal`` and ``uniform`` SNR modes the SNRs ignore them and every
    link is marked LOS.
    """
    floor = Floor(cfg.floor_width, cfg.floor_depth)
    pl = PathLossParams.from_config(cfg)
    D, A = int(cfg.D), int(cfg.A)

    if cfg.ap_layout == "grid":
        ap_xy = np.broadcast_to(place_grid(A, floor), (n, A, 2)).copy()
    else:
        ap_xy = place_uniform(rng, A, floor, size=n)
    dev_xy = place_uniform(rng, D, floor, size=n)
    d2d = None

    if cfg.snr_mode == "nominal":
        rho = 10.0 ** (cfg.base_snr_db / 10.0)
        los = np.ones((n, D, A), dtype=bool)
        snr = np.full((n, D, A), rho)
        if with_d2d:
            d2d = np.where(np.eye(D, dtype=bool), 0.0, rho)
            d2d = np.broadcast_to(d2d, (n, D, D)).copy()
        return ap_xy, dev_xy, los, snr, d2d

    if cfg.snr_mode == "uniform":
        lo, hi = cfg.base_snr_db, cfg.base_snr_db + cfg.snr_spread_db
        los = np.ones((n, D, A), dtype=bool)
        snr = 10.0 ** (rng.uniform(lo, hi, (n, D, A)) / 10.0)
        if with_d2d:
            dd = 10.0 ** (rng.uniform(lo, hi, (n, D, D)) / 10.0)
            dd = np.triu(dd, 1)
            d2d = dd + np.swapaxes(dd, -1, -2)
        return ap_xy, dev_xy, los, snr, d2d

    r = _pairwise(dev_xy, ap_xy)
    los = rng.random((n, D, A)) < los_probability(r, cfg.p0, cfg.d0)
    r = np.maximum(r, 1e-9)
    snr = average_snr(cfg.p_tx_dbm, path_loss(r, los, pl), cfg.n0_dbm_hz, cfg.W)

    if with_d2d:
        rd = _pairwise(dev_xy, dev_xy)
        u = rng.random((n, D, D))
        u = np.triu(u, 1)
        u = u + np.swapaxes(u, -1, -2)
        los_dd = u < los_probability(rd, cfg.p0, cfg.d0)
        eye = np.eye(D, dtype=bool)
        rd = np.where(eye, 1.0, np.maximum(rd, 1e-9))
        d2d = average_snr(cfg.p_dev_dbm, path_loss(rd, los_dd, pl), cfg.n0_dbm_hz, cfg.W)
        d2d = np.where(eye, 0.0, d2d)
    return ap_xy, dev_xy, los, snr, d2d


def build_deployment(rng, cfg, with_d2d=True):
    """Place APs and devices, draw link states and fill the SNR matrices."""
    ap_xy, dev_xy, los, snr, d2d = draw_geometry(rng, cfg, 1, with_d2d=with_d2d)
    return Deployment(
        ap_xy=ap_xy[0],
        dev_xy=dev_xy[0],
        los=los[0],
        snr=snr[0],
        d2d_snr=None if d2d is None else d2d[0],
    )
