"""Seeded, thread-parallel Monte Carlo estimation of the outage events.

Trials are grouped into fixed blocks of :data:`BLOCK` cycles. Each block has
its own Philox stream keyed by ``(master seed, point index, block index)``,
so results depend only on the seed and never on how blocks are scheduled
across threads.
"""

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .config import ConfigError, SystemConfig
from .deployment import build_deployment
from .channel import draw_channel, estimation_error_variance, select_rate
from .protocols import draw_cycles, evaluate

BLOCK = 2048
# spawn key reserved for the shared deployment of the "fixed" policy
_FIXED_DEPLOYMENT_KEY = 2 ** 31

AXIS_ALIASES = {"B": "payload_bytes"}
SWEEP_AXES = ("B", "payload_bytes", "L", "beta", "base_snr_db", "D", "A", "scheme")


@dataclass(frozen=True)
class ProbEstimate:
    p_hat: float
    n_trials: int
    std_err: float
    ci95: tuple
    successes: int = 0

    @classmethod
    def from_counts(cls, k, n):
        """Binomial estimate; Clopper-Pearson interval when fewer than 10
        successes or failures were observed, normal approximation otherwise."""
        k, n = int(k), int(n)
        if n < 1 or not 0 <= k <= n:
            raise ValueError(f"invalid counts k={k}, n={n}")
        p = k / n
        se = math.sqrt(p * (1.0 - p) / n)
        if min(k, n - k) < 10:
            lo = 0.0 if k == 0 else float(stats.beta.ppf(0.025, k, n - k + 1))
            hi = 1.0 if k == n else float(stats.beta.ppf(0.975, k + 1, n - k))
        else:
            lo, hi = max(0.0, p - 1.96 * se), min(1.0, p + 1.96 * se)
        return cls(p_hat=p, n_trials=n, std_err=se, ci95=(lo, hi), successes=k)


@dataclass(frozen=True)
class EventEstimates:
    te: ProbEstimate
    to: ProbEstimate
    so: ProbEstimate


def block_rng(seed, point, block):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(point), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def fixed_deployment(cfg, seed):
    """Deployment shared by all points of a run under the ``fixed`` policy."""
    rng = block_rng(seed, _FIXED_DEPLOYMENT_KEY, 0)
    return build_deployment(rng, cfg, with_d2d=cfg.scheme == "twohop")


def _blocks(n_trials):
    full, rest = divmod(int(n_trials), BLOCK)
    sizes = [BLOCK] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def _map_blocks(fn, n_trials, threads):
    blocks = _blocks(n_trials)
    if threads <= 1 or len(blocks) == 1:
        return [fn(b, m) for b, m in blocks]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(lambda bm: fn(*bm), blocks))


def _resolve_deployment(cfg, seed, deployment):
    if deployment is None and cfg.deployment_policy == "fixed":
        return fixed_deployment(cfg, seed)
    return deployment


def estimate(cfg, n_trials=None, seed=None, threads=1, deployment=None, point=0):
    """Estimate P(TE), P(TO), P(SO) for ``cfg.scheme``.

    Parameters
    ----------
    cfg : SystemConfig
    n_trials, seed : int, optional
        Default to ``cfg.trials`` and ``cfg.seed``.
    threads : int
        Worker threads; the result does not depend on it.
    deployment : Deployment, optional
        Fixed SNR matrices for every cycle. When omitted, the configuration's
        ``deployment_policy`` decides between redrawing per cycle and one
        shared draw.
    point : int
        Grid-point index used to key the random streams of a sweep.
    """
    n_trials = cfg.trials if n_trials is None else int(n_trials)
    seed = cfg.seed if seed is None else int(seed)
    if n_trials < 1:
        raise ValueError("need at least one trial")
    deployment = _resolve_deployment(cfg, seed, deployment)

    def run(block, m):
        rng = block_rng(seed, point, block)
        out = evaluate(cfg, draw_cycles(rng, cfg, m, deployment=deployment))
        return int(out.te.sum()), int(out.to.sum()), int(out.so.sum())

    counts = np.array(_map_blocks(run, n_trials, threads)).sum(axis=0)
    return EventEstimates(*(ProbEstimate.from_counts(k, n_trials) for k in counts))


def paired_estimate(cfg, schemes, n_trials=None, seed=None, threads=1, deployment=None, point=0):
    """Evaluate several schemes on the same draws.

    Returns ``(estimates, exceed)`` where ``estimates[s]`` is an
    :class:`EventEstimates` and ``exceed[(a, b)]`` counts cycles with a system
    outage under ``a`` but not under ``b``.
    """
    n_trials = cfg.trials if n_trials is None else int(n_trials)
    seed = cfg.seed if seed is None else int(seed)
    schemes = tuple(schemes)
    relaying = "twohop" in schemes
    draw_cfg = cfg.replace(scheme="twohop" if relaying else schemes[0])
    deployment = _resolve_deployment(draw_cfg, seed, deployment)

    def run(block, m):
        rng = block_rng(seed, point, block)
        draw = draw_cycles(rng, draw_cfg, m, deployment=deployment)
        outs = {s: evaluate(cfg, draw, s) for s in schemes}
        counts = {s: (int(o.te.sum()), int(o.to.sum()), int(o.so.sum())) for s, o in outs.items()}
        joint = {
            (a, b): int((outs[a].so & ~outs[b].so).sum())
            for a in schemes for b in schemes if a != b
        }
        return counts, joint

    results = _map_blocks(run, n_trials, threads)
    estimates = {}
    for s in schemes:
        tot = np.sum([r[0][s] for r in results], axis=0)
        estimates[s] = EventEstimates(*(ProbEstimate.from_counts(k, n_trials) for k in tot))
    exceed = {key: sum(r[1][key] for r in results) for key in results[0][1]}
    return estimates, exceed


def airtime_sum_samples(snr, L, n_trials, seed, threads=1, point=0):
    """Samples of ``sum_d W / R_d`` for single-AP devices at full rate.

    ``snr`` holds one average SNR per device; estimation uses ``L`` pilots.
    """
    snr = np.asarray(snr, dtype=float)
    sigma2 = estimation_error_variance(L, snr)

    def run(block, m):
        rng = block_rng(seed, point, block)
        draw = draw_channel(rng, sigma2[:, None], 1, size=(m, snr.size))
        rates = select_rate(draw.h_hat, snr[:, None], 1.0, 1.0)
        with np.errstate(divide="ignore"):
            return (1.0 / rates).sum(axis=-1)

    return np.concatenate(_map_blocks(run, n_trials, threads))


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian grid over configuration fields.

    ``axes`` maps a field name (``B`` is the payload in bytes) to its values;
    the grid is traversed in row-major order of the given axes.
    """

    base: SystemConfig
    axes: dict
    trials: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not self.axes or any(len(v) == 0 for v in self.axes.values()):
            raise ValueError("sweep grid must be non-empty")
        unknown = [k for k in self.axes if k not in SWEEP_AXES]
        if unknown:
            raise ValueError(f"unsupported sweep axis {unknown[0]!r}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")

    def points(self):
        names = list(self.axes)
        for values in itertools.product(*(self.axes[k] for k in names)):
            changes = {AXIS_ALIASES.get(k, k): v for k, v in zip(names, values)}
            yield dict(zip(names, values)), self.base.replace(**changes)


@dataclass(frozen=True)
class SweepRow:
    index: int
    values: dict
    cfg: SystemConfig
    estimates: EventEstimates


def sweep(spec, threads=1, deployment=None):
    """One :class:`SweepRow` per grid point, each seeded by its point index."""
    rows = []
    for i, (values, cfg) in enumerate(spec.points()):
        est = estimate(cfg, spec.trials, spec.seed, threads=threads, deployment=deployment, point=i)
        rows.append(SweepRow(i, values, cfg, est))
    return rows


def diversity_order(snr_db, p_out):
    """Negative local slope of ``log10 p`` against ``log10`` of the linear SNR.

    Second-order central differences inside the grid, one-sided at the ends.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    p_out = np.asarray(p_out, dtype=float)
    if snr_db.ndim != 1 or snr_db.shape != p_out.shape or snr_db.size < 3:
        raise ValueError("need at least three (SNR, probability) points")
    if np.any(~(p_out > 0)):
        raise ValueError("outage probabilities must be positive")
    if np.any(np.diff(snr_db) <= 0):
        raise ValueError("SNR grid must be strictly increasing")
    return -np.gradient(np.log10(p_out), snr_db / 10.0)


@dataclass(frozen=True)
class BackoffChoice:
    beta: float
    L: int
    so: ProbEstimate
    table: list = field(default_factory=list)


def optimize_backoff(cfg, beta_grid, l_grid, trials=None, seed=None, threads=1):
    """Grid minimum of P(SO) over backoff and pilot length.

    Pilot lengths that leave no downlink time are skipped. Ties go to the
    smaller ``L``, then the larger ``beta``. ``table`` holds
    ``(beta, L, ProbEstimate)`` for every evaluated cell.
    """
    beta_grid, l_grid = list(beta_grid), list(l_grid)
    if not beta_grid or not l_grid:
        raise ValueError("grids must be non-empty")
    trials = cfg.trials if trials is None else trials
    seed = cfg.seed if seed is None else seed
    table = []
    best = None
    for i, (L, beta) in enumerate(itertools.product(l_grid, beta_grid)):
        try:
            c = cfg.replace(L=int(L), beta=float(beta))
        except ConfigError:
            continue
        so = estimate(c, trials, seed, threads=threads, point=i).so
        table.append((float(beta), int(L), so))
        key = (so.p_hat, int(L), -float(beta))
        if best is None or key < best[0]:
            best = (key, float(beta), int(L), so)
    if best is None:
        raise ValueError("no feasible (beta, L) cell")
    return BackoffChoice(beta=best[1], L=best[2], so=best[3], table=table)
