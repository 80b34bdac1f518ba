"""One-cycle decision rules for the five downlink schemes.

Each scheme is split into a random draw (:func:`draw_cycles`) and a
deterministic evaluation (``*_from_draw``), so that several schemes can be
compared on identical channel realisations. All evaluations are batched:
arrays carry a leading cycle axis ``n``, then devices ``D``, then APs ``A``.

Schemes
-------
vr
    Variable rate: backed-off rate on the estimated channel, deadline may be
    missed.
mvr
    Variable rate with full backoff ``beta = 1`` followed by a common
    rescaling that makes the airtimes fill the downlink phase exactly.
fr
    Fixed rate ``D B / T`` on all APs jointly, no training.
cell
    Each device served by its strongest AP at ``D B / (A T)`` under universal
    frequency reuse.
twohop
    One AP broadcasts at ``2 D B / T``; successful devices then relay, jointly
    with the AP, to the remaining ones at ``2 (D - k) B / T``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelDraw, draw_channel, estimation_error_variance, mutual_information, select_rate
from .deployment import draw_geometry

TRAINED_SCHEMES = ("vr", "mvr")


@dataclass(frozen=True)
class CycleDraw:
    """Randomness of ``n`` cycles.

    ``snr`` is ``(n, D, A)``; ``fades`` holds channels of the same shape.
    ``d2d_snr`` and ``relay_power`` are ``(n, D, D)`` and only present for
    relaying; ``relay_power[i, s, d]`` is the unit-mean fading power
    ``|g|^2`` from device ``s`` to device ``d``.
    """

    snr: np.ndarray
    fades: ChannelDraw
    d2d_snr: Optional[np.ndarray] = None
    relay_power: Optional[np.ndarray] = None

    @property
    def n(self):
        return self.snr.shape[0]


@dataclass(frozen=True)
class CycleOutcome:
    """Result of one cycle; ``failed_devices`` lists devices with ``R_d > C_d``."""

    rates: np.ndarray
    capacities: np.ndarray
    airtimes: np.ndarray
    total_airtime: float
    te: bool
    to: bool
    so: bool
    failed_devices: tuple


@dataclass(frozen=True)
class BatchOutcome:
    """Per-cycle flags and per-device quantities for ``n`` cycles."""

    rates: np.ndarray
    capacities: np.ndarray
    airtimes: np.ndarray
    failed: np.ndarray
    te: np.ndarray
    to: np.ndarray

    @property
    def so(self):
        return self.te | self.to

    @property
    def total_airtime(self):
        return self.airtimes.sum(axis=-1)

    def cycle(self, i=0):
        return CycleOutcome(
            rates=self.rates[i],
            capacities=self.capacities[i],
            airtimes=self.airtimes[i],
            total_airtime=float(self.total_airtime[i]),
            te=bool(self.te[i]),
            to=bool(self.to[i]),
            so=bool(self.so[i]),
            failed_devices=tuple(int(d) for d in np.flatnonzero(self.failed[i])),
        )


# ---------------------------------------------------------------------------
# Drawing
# ---------------------------------------------------------------------------

def link_error_variance(cfg, snr):
    """Per-link MMSE error variance from each link's own average SNR."""
    return estimation_error_variance(cfg.L, snr)


def draw_fades(rng, cfg, snr, relay_snr=None):
    """Channel draw for SNR matrices ``snr`` of shape ``(n, D, A)``.

    Relay fading powers ``(n, D, D)``, exponential with unit mean, are drawn
    after the AP fades when ``relay_snr`` is given.
    """
    snr = np.asarray(snr, dtype=float)
    sigma2 = link_error_variance(cfg, snr)
    fades = draw_channel(rng, np.broadcast_to(sigma2, snr.shape), snr.shape[-1])
    relay = None
    if relay_snr is not None:
        relay = rng.standard_exponential(relay_snr.shape)
    return CycleDraw(snr=snr, fades=fades, d2d_snr=relay_snr, relay_power=relay)


def draw_cycles(rng, cfg, n, deployment=None):
    """Draw ``n`` cycles: geometry (unless ``deployment`` is fixed), then fades.

    With a fixed :class:`~deadline_outage.deployment.Deployment` the same SNR
    matrices are reused for every cycle.
    """
    relaying = cfg.scheme == "twohop"
    if deployment is None:
        _, _, _, snr, d2d = draw_geometry(rng, cfg, n, with_d2d=relaying)
    else:
        if deployment.snr.shape != (cfg.D, cfg.A):
            raise ValueError(
                f"deployment has shape {deployment.snr.shape}, configuration expects {(cfg.D, cfg.A)}"
            )
        snr = np.broadcast_to(deployment.snr, (n,) + deployment.snr.shape)
        d2d = None
        if relaying:
            if deployment.d2d_snr is None:
                raise ValueError("two-hop relaying needs device-to-device SNRs")
            d2d = np.broadcast_to(deployment.d2d_snr, (n,) + deployment.d2d_snr.shape)
    return draw_fades(rng, cfg, snr, relay_snr=d2d)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _airtimes(B, rates):
    with np.errstate(divide="ignore"):
        return np.where(rates > 0, B / np.where(rates > 0, rates, 1.0), np.inf)


def vr_from_draw(cfg, draw, beta=None):
    """Variable rate with backoff ``beta`` (default ``cfg.beta``)."""
    beta = cfg.beta if beta is None else beta
    rates = select_rate(draw.fades.h_hat, draw.snr, cfg.W, beta)
    caps = mutual_information(draw.fades.h, draw.snr, cfg.W)
    airtimes = _airtimes(cfg.B, rates)
    failed = rates > caps
    return BatchOutcome(
        rates=rates,
        capacities=caps,
        airtimes=airtimes,
        failed=failed,
        te=failed.any(axis=-1),
        to=airtimes.sum(axis=-1) > cfg.T_D,
    )


def mvr_scaled_rates(cfg, draw, beta=1.0):
    """Rates ``alpha R_d`` with ``alpha = sum_d T_d / T_D``.

    ``alpha`` is inversely proportional to ``beta``, so the result does not
    depend on it. Cycles with a zero selected rate get infinite rates.
    """
    r = select_rate(draw.fades.h_hat, draw.snr, cfg.W, beta)
    total = _airtimes(cfg.B, r).sum(axis=-1, keepdims=True)
    alpha = total / cfg.T_D
    with np.errstate(invalid="ignore"):
        scaled = alpha * r
    return np.where(np.isfinite(alpha), scaled, np.inf)


def mvr_from_draw(cfg, draw):
    """Modified variable rate; always ``beta = 1`` and never overflows."""
    rates = mvr_scaled_rates(cfg, draw, 1.0)
    caps = mutual_information(draw.fades.h, draw.snr, cfg.W)
    airtimes = cfg.B / rates
    failed = rates > caps
    n = rates.shape[0]
    return BatchOutcome(
        rates=rates,
        capacities=caps,
        airtimes=airtimes,
        failed=failed,
        te=failed.any(axis=-1),
        to=np.zeros(n, dtype=bool),
    )


def _rate_outcome(rate, caps):
    # fixed-rate family: equal slots fill T, failure iff capacity < rate
    rates = np.full(caps.shape, float(rate))
    failed = caps < rates
    return rates, failed


def fixed_rate_from_draw(cfg, draw):
    """Joint transmission from all APs at ``D B / T`` without training."""
    caps = mutual_information(draw.fades.h, draw.snr, cfg.W)
    rates, failed = _rate_outcome(cfg.D * cfg.B / cfg.T, caps)
    return BatchOutcome(
        rates=rates,
        capacities=caps,
        airtimes=cfg.B / rates,
        failed=failed,
        te=failed.any(axis=-1),
        to=np.zeros(caps.shape[0], dtype=bool),
    )


def serving_ap(snr):
    """Index of the strongest AP per device (ties to the lowest index)."""
    return np.argmax(snr, axis=-1)


def cellular_from_draw(cfg, draw):
    """Strongest-AP association, all cells active on the same band."""
    h = draw.fades.h
    gains = draw.snr * (h.real ** 2 + h.imag ** 2)
    serve = serving_ap(draw.snr)
    signal = np.take_along_axis(gains, serve[..., None], axis=-1)[..., 0]
    interference = gains.sum(axis=-1) - signal
    sinr = signal / (1.0 + interference)
    caps = cfg.W * np.log2(1.0 + sinr)
    rates, failed = _rate_outcome(cfg.D * cfg.B / (cfg.A * cfg.T), caps)
    return BatchOutcome(
        rates=rates,
        capacities=caps,
        airtimes=cfg.B / rates,
        failed=failed,
        te=failed.any(axis=-1),
        to=np.zeros(caps.shape[0], dtype=bool),
    )


def designated_ap(snr):
    """AP with the largest mean SNR over devices; shape ``(n,)``."""
    return np.argmax(snr.mean(axis=-2), axis=-1)


def twohop_from_draw(cfg, draw):
    """Broadcast from one AP, then cooperative relaying by successful devices.

    The AP-to-device fade is reused in the second round; each relay-to-device
    link has its own fade. Reported rates and capacities are those of the
    round that decided each device.
    """
    if draw.relay_power is None or draw.d2d_snr is None:
        raise ValueError("two-hop relaying needs relay fades and device-to-device SNRs")
    D = draw.snr.shape[-2]
    h = draw.fades.h
    ap = designated_ap(draw.snr)
    idx = ap[:, None, None]
    snr_ap = np.take_along_axis(draw.snr, idx, axis=-1)[..., 0]
    h_ap = np.take_along_axis(h, idx, axis=-1)[..., 0]
    direct = snr_ap * (h_ap.real ** 2 + h_ap.imag ** 2)

    rate1 = 2.0 * D * cfg.B / cfg.T
    cap1 = cfg.W * np.log2(1.0 + direct)
    ok1 = cap1 >= rate1
    k = ok1.sum(axis=-1)

    relay_gain = draw.d2d_snr * draw.relay_power
    relay_sum = np.matmul(ok1[:, None, :].astype(float), relay_gain)[:, 0, :]
    cap2 = cfg.W * np.log2(1.0 + direct + relay_sum)
    rate2 = 2.0 * (D - k) * cfg.B / cfg.T

    failed = ~ok1 & (cap2 < rate2[:, None])
    rates = np.where(ok1, rate1, rate2[:, None])
    caps = np.where(ok1, cap1, cap2)
    return BatchOutcome(
        rates=rates,
        capacities=caps,
        airtimes=cfg.B / rates,
        failed=failed,
        te=failed.any(axis=-1),
        to=np.zeros(h.shape[0], dtype=bool),
    )


_EVALUATORS = {
    "vr": vr_from_draw,
    "mvr": mvr_from_draw,
    "fr": fixed_rate_from_draw,
    "cell": cellular_from_draw,
    "twohop": twohop_from_draw,
}


def evaluate(cfg, draw, scheme=None):
    """Apply the decision rule of ``scheme`` (default ``cfg.scheme``)."""
    scheme = cfg.scheme if scheme is None else scheme
    try:
        fn = _EVALUATORS[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}") from None
    return fn(cfg, draw)


def _single(cfg, depl, rng, scheme):
    cfg = cfg.replace(scheme=scheme, D=depl.D, A=depl.A)
    draw = draw_cycles(rng, cfg, 1, deployment=depl)
    return evaluate(cfg, draw).cycle(0)


def run_cycle_vr(cfg, depl, rng):
    return _single(cfg, depl, rng, "vr")


def run_cycle_mvr(cfg, depl, rng):
    return _single(cfg, depl, rng, "mvr")


def run_cycle_fixed_rate(cfg, depl, rng):
    return _single(cfg, depl, rng, "fr")


def run_cycle_cellular(cfg, depl, rng):
    return _single(cfg, depl, rng, "cell")


def run_cycle_twohop(cfg, depl, rng):
    return _single(cfg, depl, rng, "twohop")
