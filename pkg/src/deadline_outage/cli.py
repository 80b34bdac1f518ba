"""Command-line entry point: ``analyze``, ``simulate`` and ``figure``.

Exit codes: 0 on success, 2 for configuration or usage errors, 3 when a
numerical routine fails.
"""

import argparse
import csv
import datetime
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    NsrProfile,
    p_device_failure,
    rate_cdf,
    time_overflow_sandwich,
    time_underflow_bounds,
    time_underflow_tight,
)
from .channel import estimation_error_variance
from .config import SCHEMES, ConfigError, SystemConfig, load_config
from .mcengine import (
    SweepSpec,
    airtime_sum_samples,
    block_rng,
    diversity_order,
    fixed_deployment,
    sweep,
)
from .specfun import DomainError, MaximizationError, QuadratureError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

SIMULATE_COLUMNS = (
    "scheme", "B", "L", "beta", "D", "A",
    "p_te", "p_to", "p_so", "se_te", "se_to", "se_so", "n_trials", "seed",
)
FIGURES = ("bounds", "training", "payload", "backoff", "benchmark", "diversity")

# stream keys for auxiliary draws, disjoint from sweep point indices
_PROFILE_KEY = 2 ** 31 + 1
_BOUNDS_MC_KEY = 2 ** 31 + 2


@dataclass
class RunManifest:
    config_digest: str
    seed: int
    version: str
    timestamp: str
    outputs: list = field(default_factory=list)
    command: str = ""

    def write(self, path):
        Path(path).write_text(json.dumps(self.__dict__, indent=2) + "\n", encoding="utf-8")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    """UTF-8 CSV with ``\\n`` line endings and shortest round-trip floats."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def snr_profile(cfg, D=None):
    """Per-device SNRs uniform in dB over ``[base, base + spread]``, seeded."""
    D = cfg.D if D is None else D
    rng = block_rng(cfg.seed, _PROFILE_KEY, 0)
    lo = cfg.base_snr_db
    return 10.0 ** (rng.uniform(lo, lo + cfg.snr_spread_db, D) / 10.0)


def analyze(cfg):
    """Closed forms and bounds for ``cfg``; returns ``(tables, all_ok)``.

    ``tables`` maps a table name to ``(header, rows)``.
    """
    ok = True
    rows_df = []
    for s2 in (0.01, 0.1, 0.3, 0.5, 0.8, 1.0):
        for A in range(1, cfg.A + 1):
            p = p_device_failure(s2, A)
            good = 0.0 <= p < 0.5 and (s2 < 1.0 or p == 0.0)
            ok &= good
            rows_df.append((s2, A, p, good))

    rho = snr_profile(cfg)
    nsr = NsrProfile.from_snr(rho, cfg.L)
    y0 = cfg.normalized_deadline
    rows_uf = []
    for D, prof in ((1, NsrProfile(nsr.g[:1])), (cfg.D, nsr)):
        for scale in (0.25, 0.5, 1.0, 2.0):
            y = y0 * scale
            b = time_underflow_tight(y, prof) if D > 1 else time_underflow_bounds(y, prof)
            tight = b.tight_upper if b.tight_upper is not None else b.upper
            good = b.lower <= tight <= b.upper and (D > 1 or b.lower == b.upper)
            ok &= good
            rows_uf.append((D, y, prof.g_bar, b.lower, tight, b.upper, good))

    depl = fixed_deployment(cfg, cfg.seed)
    thr = cfg.D * cfg.B / cfg.T_D
    pairs = []
    rows_sw = []
    for d in range(cfg.D):
        s2 = estimation_error_variance(cfg.L, depl.snr[d])
        below = rate_cdf(thr, depl.snr[d], s2, cfg.beta, cfg.W)
        pairs.append((below, 1.0 - below))
        rows_sw.append((d, float(np.max(depl.snr[d])), below))
    sw = time_overflow_sandwich(pairs)
    ok &= sw.lower <= sw.upper
    tables = {
        "device_failure": (("sigma2", "A", "p_df", "ok"), rows_df),
        "underflow": (("D", "y", "g_bar", "lower", "tight_upper", "upper", "ok"), rows_uf),
        "overflow_rates": (("device", "max_snr", "p_rate_below_threshold"), rows_sw),
        "overflow_sandwich": (("threshold_bps", "lower", "upper"), [(thr, sw.lower, sw.upper)]),
    }
    return tables, bool(ok)


def cmd_analyze(cfg, args):
    tables, ok = analyze(cfg)
    outputs = []
    out = Path(args.out) if args.out else None
    for name, (header, rows) in tables.items():
        path = None if out is None else out / f"analyze_{name}.csv"
        if path is None:
            print(f"# {name}")
        write_csv(path, header, rows)
        if path is not None:
            outputs.append(str(path))
    _, lower, upper = tables["overflow_sandwich"][1][0]
    summary = (
        f"normalized deadline y = {cfg.normalized_deadline:.6g}; "
        f"time overflow in [{lower:.4g}, {upper:.4g}]; "
        f"all bracket invariants pass = {str(ok).lower()}"
    )
    print(summary, file=sys.stderr if out is None else sys.stdout)
    if out is not None:
        _manifest(cfg, "analyze", outputs, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def parse_sweep(items):
    """``["L=1,2,4", "scheme=vr,mvr"]`` -> ordered axis dict."""
    axes = {}
    for item in items or ():
        name, sep, values = item.partition("=")
        if not sep or not values:
            raise ConfigError(f"--sweep {item!r}: expected AXIS=v1,v2,...")
        vals = []
        for v in values.split(","):
            if name == "scheme":
                vals.append(v)
            elif name in ("L", "D", "A"):
                try:
                    vals.append(int(v))
                except ValueError:
                    raise ConfigError(f"{name}: expected integers, got {v!r}") from None
            else:
                try:
                    vals.append(float(v))
                except ValueError:
                    raise ConfigError(f"{name}: expected numbers, got {v!r}") from None
        axes[name] = vals
    return axes


def simulate_rows(cfg, axes, trials, seed, threads=1):
    axes = axes or {"scheme": [cfg.scheme]}
    try:
        spec = SweepSpec(cfg, axes, trials, seed)
        list(spec.points())
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    rows = []
    for r in sweep(spec, threads=threads):
        c, e = r.cfg, r.estimates
        rows.append((
            c.scheme, c.payload_bytes, c.L, c.beta, c.D, c.A,
            e.te.p_hat, e.to.p_hat, e.so.p_hat,
            e.te.std_err, e.to.std_err, e.so.std_err,
            trials, seed,
        ))
    return rows


def cmd_simulate(cfg, args):
    rows = simulate_rows(cfg, parse_sweep(args.sweep), cfg.trials, cfg.seed, args.threads)
    if args.out:
        out = Path(args.out)
        path = out / "simulate.csv"
        write_csv(path, SIMULATE_COLUMNS, rows)
        _manifest(cfg, "simulate", [str(path)], out)
    else:
        write_csv(None, SIMULATE_COLUMNS, rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# figure
# ---------------------------------------------------------------------------

def max_pilot_length(cfg):
    """Largest L that leaves downlink time."""
    per = cfg.D if cfg.training_overhead_per_device else 1
    return int(math.ceil(cfg.T * cfg.W / per)) - 1


def training_grid(cfg, points=16):
    top = max_pilot_length(cfg)
    grid = np.geomspace(1, top, points)
    extra = [0.9 * top, 0.95 * top, 0.97 * top]
    return sorted({int(v) for v in np.concatenate([grid, extra]) if 1 <= int(v) <= top})


def payload_grid(cfg):
    factors = (0.2, 0.5, 1, 2, 4, 8, 12, 16, 20, 24, 32, 40)
    return [cfg.payload_bytes * f for f in factors]


def figure_bounds(cfg, threads=1):
    """Underflow probability of 10 single-AP devices: MC and three bounds."""
    D = 10
    rho = snr_profile(cfg, D)
    nsr = NsrProfile.from_snr(rho, cfg.L)
    sums = airtime_sum_samples(rho, cfg.L, cfg.trials, cfg.seed, threads=threads, point=_BOUNDS_MC_KEY)
    lo, hi = np.quantile(sums, [0.001, 0.999])
    ys = np.linspace(lo, hi, 30)
    srt = np.sort(sums)
    n = sums.size
    curves = {"mc": [], "loose_lower": [], "loose_upper": [], "tight_upper": []}
    for y in ys:
        p = np.searchsorted(srt, y, side="right") / n
        b = time_underflow_tight(float(y), nsr)
        curves["mc"].append((y, p, math.sqrt(p * (1 - p) / n)))
        curves["loose_lower"].append((y, b.lower))
        curves["loose_upper"].append((y, b.upper))
        curves["tight_upper"].append((y, b.tight_upper))
    headers = {"mc": ("y", "p", "se")}
    return {k: (headers.get(k, ("y", "p")), v) for k, v in curves.items()}


def _columns(e):
    # the exact upper limit stands in for a bare zero when no outage was seen
    return e.p_hat, e.std_err, e.ci95[1]


def figure_training(cfg, threads=1):
    spec = SweepSpec(cfg, {"L": training_grid(cfg)}, cfg.trials, cfg.seed)
    rows = sweep(spec, threads=threads)
    out = {}
    for ev in ("te", "to", "so"):
        out[ev] = (("L", "p", "se", "ci_upper"), [
            (r.values["L"], *_columns(getattr(r.estimates, ev))) for r in rows
        ])
    return out


def figure_payload(cfg, threads=1):
    spec = SweepSpec(cfg, {"B": payload_grid(cfg)}, cfg.trials, cfg.seed)
    rows = sweep(spec, threads=threads)
    out = {}
    for ev in ("te", "to", "so"):
        out[ev] = (("payload_bytes", "p", "se", "ci_upper"), [
            (r.values["B"], *_columns(getattr(r.estimates, ev))) for r in rows
        ])
    return out


def figure_backoff(cfg, threads=1):
    betas = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    spec = SweepSpec(cfg, {"beta": list(betas), "L": training_grid(cfg, 10)}, cfg.trials, cfg.seed)
    rows = sweep(spec, threads=threads)
    out = {}
    for b in betas:
        out[f"beta{b:g}"] = (("L", "p_so", "se", "ci_upper"), [
            (r.values["L"], *_columns(r.estimates.so))
            for r in rows if r.values["beta"] == b
        ])
    return out


def figure_benchmark(cfg, threads=1):
    spec = SweepSpec(cfg, {"scheme": list(SCHEMES), "B": payload_grid(cfg)}, cfg.trials, cfg.seed)
    rows = sweep(spec, threads=threads)
    out = {}
    for s in SCHEMES:
        out[s] = (("payload_bytes", "throughput_bps", "p_so", "se", "ci_upper"), [
            (r.values["B"], r.cfg.D * r.cfg.B / r.cfg.T, *_columns(r.estimates.so))
            for r in rows if r.values["scheme"] == s
        ])
    return out


def figure_diversity(cfg, threads=1):
    snr_db = [float(v) for v in np.arange(cfg.base_snr_db - 10.0, cfg.base_snr_db + 10.0 + 1e-9, 2.5)]
    base = cfg.replace(snr_mode="nominal")
    spec = SweepSpec(base, {"scheme": list(SCHEMES), "base_snr_db": snr_db}, cfg.trials, cfg.seed)
    rows = sweep(spec, threads=threads)
    out = {}
    for s in SCHEMES:
        pts = [(r.values["base_snr_db"], r.estimates.so) for r in rows if r.values["scheme"] == s]
        x = np.array([p[0] for p in pts])
        p = np.array([p[1].p_hat for p in pts])
        order = np.full(x.shape, np.nan)
        pos = p > 0
        if pos.sum() >= 3:
            order[pos] = diversity_order(x[pos], p[pos])
        out[s] = (("snr_db", "p_so", "se", "ci_upper", "order"), [
            (xi, *_columns(e), oi) for (xi, e), oi in zip(pts, order)
        ])
    return out


FIGURE_BUILDERS = {
    "bounds": figure_bounds,
    "training": figure_training,
    "payload": figure_payload,
    "backoff": figure_backoff,
    "benchmark": figure_benchmark,
    "diversity": figure_diversity,
}


def cmd_figure(cfg, args):
    curves = FIGURE_BUILDERS[args.name](cfg, threads=args.threads)
    out = Path(args.out or ".")
    outputs = []
    for curve, (header, rows) in curves.items():
        path = out / f"{args.name}_{curve}.csv"
        write_csv(path, header, rows)
        outputs.append(str(path))
    _manifest(cfg, f"figure {args.name}", outputs, out)
    return EXIT_OK


# ---------------------------------------------------------------------------

def _manifest(cfg, command, outputs, out):
    m = RunManifest(
        config_digest=cfg.digest(),
        seed=cfg.seed,
        version=__version__,
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        outputs=outputs,
        command=command,
    )
    m.write(Path(out) / "manifest.json")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat TOML configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the configuration)")
    common.add_argument("--trials", type=int, help="Monte Carlo cycles per point")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--scheme", choices=SCHEMES, help="transmission scheme")

    p = argparse.ArgumentParser(prog="deadline-outage", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="closed forms and bounds")
    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimates as CSV")
    sim.add_argument("--sweep", action="append", metavar="AXIS=v1,v2",
                     help="grid axis (B, L, beta, base_snr_db, D, A, scheme); repeatable")
    fig = sub.add_parser("figure", parents=[common], help="figure data, one CSV per curve")
    fig.add_argument("name", choices=FIGURES)
    return p


def resolve_config(args):
    cfg = load_config(args.config) if args.config else SystemConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.scheme is not None:
        changes["scheme"] = args.scheme
    return cfg.replace(**changes) if changes else cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("threads: must be at least 1")
        cfg = resolve_config(args)
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
        handler = {"analyze": cmd_analyze, "simulate": cmd_simulate, "figure": cmd_figure}[args.command]
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, QuadratureError, MaximizationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
