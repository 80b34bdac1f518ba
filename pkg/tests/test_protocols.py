import math

import numpy as np
import pytest
from scipy import special

from deadline_outage.channel import ChannelDraw, draw_channel
from deadline_outage.config import SystemConfig
from deadline_outage.deployment import Deployment
from deadline_outage.protocols import (
    CycleDraw,
    CycleOutcome,
    cellular_from_draw,
    draw_cycles,
    evaluate,
    fixed_rate_from_draw,
    mvr_from_draw,
    mvr_scaled_rates,
    run_cycle_cellular,
    run_cycle_fixed_rate,
    run_cycle_mvr,
    run_cycle_twohop,
    run_cycle_vr,
    twohop_from_draw,
    vr_from_draw,
)

SCHEMES = ("vr", "mvr", "fr", "cell", "twohop")


def _draw_from(h_hat, h_err, snr, d2d=None, relay_power=None):
    h_hat = np.asarray(h_hat, complex)
    h_err = np.asarray(h_err, complex)
    snr = np.broadcast_to(np.asarray(snr, float), h_hat.shape)
    return CycleDraw(snr=snr, fades=ChannelDraw(h_hat + h_err, h_hat, h_err), d2d_snr=d2d, relay_power=relay_power)


# -- variable rate ------------------------------------------------------------

def test_vr_perfect_csi_never_fails():
    cfg = SystemConfig(D=4, A=2, beta=1.0)
    d = draw_channel(np.random.default_rng(0), 0.0, 2, size=(500, 4))
    draw = CycleDraw(snr=np.full((500, 4, 2), 30.0), fades=d)
    out = vr_from_draw(cfg, draw)
    assert not out.te.any()
    np.testing.assert_array_equal(out.so, out.to)


def test_vr_small_error_needs_backoff():
    # with a tiny error variance, full rate fails about half the time per device,
    # while a small backoff removes errors almost surely
    d = draw_channel(np.random.default_rng(3), 1e-8, 2, size=(4000, 4))
    draw = CycleDraw(snr=np.full((4000, 4, 2), 1e3), fades=d)
    full = vr_from_draw(SystemConfig(D=4, A=2, beta=1.0), draw)
    assert abs(full.failed.mean() - 0.5) < 0.03
    assert not vr_from_draw(SystemConfig(D=4, A=2, beta=0.9), draw).te.any()


def test_vr_zero_backoff_overflows():
    cfg = SystemConfig(D=3, A=2, beta=0.0)
    out = evaluate(cfg, draw_cycles(np.random.default_rng(1), cfg, 50))
    assert np.all(np.isinf(out.airtimes))
    assert out.to.all() and out.so.all() and not out.te.any()


def test_vr_hand_trace():
    cfg = SystemConfig(D=2, A=1, L=3, beta=0.9, payload_bytes=1000.0)
    depl = Deployment.from_snr([[4.0], [0.5]])
    out = run_cycle_vr(cfg, depl, np.random.default_rng(42))

    # replay the generator: real then imaginary parts of the estimate, then of the error
    rng = np.random.default_rng(42)
    rho = np.array([4.0, 0.5])
    s2 = 1 / (1 + 3 * rho)
    hh = (rng.standard_normal(2) + 1j * rng.standard_normal(2)) * np.sqrt((1 - s2) / 2)
    he = (rng.standard_normal(2) + 1j * rng.standard_normal(2)) * np.sqrt(s2 / 2)
    flags = []
    airtime = 0.0
    for d in range(2):
        r = 0.9 * 20e6 * math.log2(1 + rho[d] * abs(hh[d]) ** 2)
        c = 20e6 * math.log2(1 + rho[d] * abs(hh[d] + he[d]) ** 2)
        flags.append(r > c)
        airtime += 8000.0 / r
        assert out.rates[d] == pytest.approx(r, rel=1e-13)
        assert out.capacities[d] == pytest.approx(c, rel=1e-13)
    assert out.te == any(flags)
    assert out.failed_devices == tuple(i for i, f in enumerate(flags) if f)
    assert out.total_airtime == pytest.approx(airtime, rel=1e-13)
    assert out.to == (airtime > cfg.T_D)
    assert out.so == (out.te or out.to)


# -- modified variable rate -------------------------------------------------------

def _mvr_batch(n=20_000, seed=3, **kw):
    cfg = SystemConfig(D=6, A=2, snr_mode="uniform", base_snr_db=0.0, snr_spread_db=15.0, L=2, **kw)
    return cfg, draw_cycles(np.random.default_rng(seed), cfg, n)


def test_mvr_fills_downlink_exactly():
    cfg, draw = _mvr_batch()
    out = mvr_from_draw(cfg, draw)
    assert not out.to.any()
    np.testing.assert_allclose(out.total_airtime, cfg.T_D, rtol=1e-9)


def test_mvr_rates_do_not_depend_on_backoff():
    cfg, draw = _mvr_batch()
    a = mvr_scaled_rates(cfg, draw, 0.5)
    b = mvr_scaled_rates(cfg, draw, 1.0)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_mvr_underspent_budget_only_lowers_rates():
    cfg, draw = _mvr_batch(beta=1.0)
    vr = vr_from_draw(cfg, draw, beta=1.0)
    mvr = mvr_from_draw(cfg, draw)
    under = ~vr.to
    assert under.any()
    assert np.all(mvr.rates[under] <= vr.rates[under] * (1 + 1e-12))
    assert not np.any(mvr.te[under] & ~vr.te[under])


@pytest.mark.parametrize("beta", [0.3, 0.8, 1.0])
def test_mvr_outage_implies_vr_outage(beta):
    cfg, draw = _mvr_batch(beta=beta)
    vr = evaluate(cfg, draw, "vr")
    mvr = evaluate(cfg, draw, "mvr")
    assert not np.any(mvr.so & ~vr.so)


# -- fixed rate --------------------------------------------------------------

def test_fixed_rate_flags():
    cfg = SystemConfig(D=2, A=1)
    rate = 2 * cfg.B / cfg.T
    g_ok = (2 ** (1.5 * rate / cfg.W) - 1)
    g_bad = (2 ** (0.5 * rate / cfg.W) - 1)
    good = _draw_from([[[1.0], [1.0]]], [[[0.0], [0.0]]], [[[g_ok], [g_ok]]])
    out = fixed_rate_from_draw(cfg, good)
    assert not out.so.any()
    bad = _draw_from([[[1.0], [1.0]]], [[[0.0], [0.0]]], [[[g_ok], [g_bad]]])
    out = fixed_rate_from_draw(cfg, bad)
    assert out.so.all() and out.cycle(0).failed_devices == (1,)
    assert out.total_airtime[0] == pytest.approx(cfg.T, rel=1e-15)


def test_fixed_rate_matches_capacity_distribution():
    cfg = SystemConfig(D=10, A=5, snr_mode="nominal", base_snr_db=-5.0, scheme="fr")
    n = 200_000
    out = evaluate(cfg, draw_cycles(np.random.default_rng(5), cfg, n))
    g = 2 ** (cfg.D * cfg.B / (cfg.T * cfg.W)) - 1
    p_dev = special.gammainc(5, g / 10 ** -0.5)
    p = -math.expm1(10 * math.log1p(-p_dev))
    assert abs(out.so.mean() - p) <= 3 * math.sqrt(p * (1 - p) / n)


# -- cellular -----------------------------------------------------------------

def test_cellular_single_ap_is_fixed_rate():
    cfg = SystemConfig(D=5, A=1, snr_mode="uniform", base_snr_db=-8.0)
    draw = draw_cycles(np.random.default_rng(2), cfg, 2000)
    a = cellular_from_draw(cfg, draw)
    b = fixed_rate_from_draw(cfg, draw)
    np.testing.assert_array_equal(a.failed, b.failed)
    np.testing.assert_allclose(a.capacities, b.capacities, rtol=1e-14)


def test_cellular_strong_interference_fails():
    cfg = SystemConfig(D=1, A=2)
    draw = _draw_from([[[1.0, 1.0]]], [[[0.0, 0.0]]], [[[1e12, 1e3]]])
    assert not cellular_from_draw(cfg, draw).te[0]
    draw = CycleDraw(snr=np.array([[[1e3, 1e3 * (1 - 1e-9)]]]), fades=ChannelDraw(
        np.array([[[1e-3, 1e4]]], complex), np.array([[[1e-3, 1e4]]], complex), np.zeros((1, 1, 2), complex)))
    assert cellular_from_draw(cfg, draw).te[0]


def test_cellular_hand_trace():
    cfg = SystemConfig(D=4, A=2, snr_mode="uniform", base_snr_db=5.0, snr_spread_db=10.0)
    depl_rng = np.random.default_rng(10)
    snr = 10 ** (depl_rng.uniform(5, 15, (4, 2)) / 10)
    out = run_cycle_cellular(cfg, Deployment.from_snr(snr), np.random.default_rng(11))

    rng = np.random.default_rng(11)
    s2 = 1 / (1 + cfg.L * snr)
    hh = (rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))) * np.sqrt((1 - s2) / 2)
    he = (rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))) * np.sqrt(s2 / 2)
    h = hh + he
    rate = 4 * cfg.B / (2 * cfg.T)
    failed = []
    for d in range(4):
        s = int(np.argmax(snr[d]))
        i = 1 - s
        sinr = snr[d, s] * abs(h[d, s]) ** 2 / (1 + snr[d, i] * abs(h[d, i]) ** 2)
        assert out.capacities[d] == pytest.approx(cfg.W * math.log2(1 + sinr), rel=1e-13)
        if cfg.W * math.log2(1 + sinr) < rate:
            failed.append(d)
    assert out.failed_devices == tuple(failed)
    assert out.so == bool(failed) and not out.to


# -- two-hop -----------------------------------------------------------------

def test_twohop_all_succeed_first_round():
    cfg = SystemConfig(D=3, A=2, snr_mode="nominal", base_snr_db=60.0, scheme="twohop")
    out = evaluate(cfg, draw_cycles(np.random.default_rng(0), cfg, 200))
    assert out.so.mean() < 0.05
    ok = ~out.failed.any(axis=1)
    np.testing.assert_allclose(out.rates[ok & (out.rates == out.rates[:, :1]).all(axis=1)], 2 * 3 * cfg.B / cfg.T)


def test_twohop_no_first_round_success_fails():
    cfg = SystemConfig(D=3, A=1, scheme="twohop")
    snr = np.full((1, 3, 1), 1e-6)
    d2d = np.full((1, 3, 3), 1e9) * (1 - np.eye(3))
    draw = _draw_from(np.ones((1, 3, 1)), np.zeros((1, 3, 1)), snr, d2d=d2d, relay_power=np.ones((1, 3, 3)))
    out = twohop_from_draw(cfg, draw)
    assert out.so[0] and out.cycle(0).failed_devices == (0, 1, 2)


def test_twohop_hand_trace():
    cfg = SystemConfig(D=3, A=2)
    W, B, T = cfg.W, cfg.B, cfg.T
    # device 0 succeeds in round one, 1 and 2 do not; AP 1 has the best mean SNR
    snr = np.array([[1e-3, 2 ** (2 * 3 * B / (T * W)) * 2], [1e-3, 0.01], [1e-3, 0.02]])[None]
    d2d = np.array([[0.0, 50.0, 0.001], [50.0, 0.0, 1.0], [0.001, 1.0, 0.0]])[None]
    relay_power = np.ones((1, 3, 3))
    draw = _draw_from(np.ones((1, 3, 2)), np.zeros((1, 3, 2)), snr, d2d=d2d, relay_power=relay_power)
    out = twohop_from_draw(cfg, draw).cycle(0)
    rate2 = 2 * 2 * B / T
    assert out.rates[0] == pytest.approx(2 * 3 * B / T)
    assert out.rates[1] == pytest.approx(rate2) and out.rates[2] == pytest.approx(rate2)
    c1 = W * math.log2(1 + 0.01 + 50.0)
    c2 = W * math.log2(1 + 0.02 + 0.001)
    assert out.capacities[1] == pytest.approx(c1, rel=1e-13)
    assert out.capacities[2] == pytest.approx(c2, rel=1e-13)
    assert out.failed_devices == tuple(d for d, c in ((1, c1), (2, c2)) if c < rate2) == (2,)
    assert out.so and not out.to


def test_twohop_requires_relay_data():
    cfg = SystemConfig(D=2, A=1)
    with pytest.raises(ValueError):
        twohop_from_draw(cfg, _draw_from(np.ones((1, 2, 1)), np.zeros((1, 2, 1)), 1.0))
    with pytest.raises(ValueError):
        run_cycle_twohop(cfg, Deployment.from_snr([[1.0], [2.0]]), np.random.default_rng(0))


# -- all schemes -------------------------------------------------------------

@pytest.mark.parametrize("scheme", SCHEMES)
def test_event_algebra(scheme):
    cfg = SystemConfig(D=5, A=3, scheme=scheme, L=50, payload_bytes=2000.0)
    out = evaluate(cfg, draw_cycles(np.random.default_rng(7), cfg, 3000))
    np.testing.assert_array_equal(out.so, out.te | out.to)
    np.testing.assert_array_equal(out.te, out.failed.any(axis=1))
    if scheme == "vr":
        np.testing.assert_array_equal(out.to, out.total_airtime > cfg.T_D)
    else:
        assert not out.to.any()
    if scheme == "fr":
        np.testing.assert_allclose(out.total_airtime, cfg.T, rtol=1e-12)
    if scheme == "cell":
        # cells run in parallel; each fills T when loads are equal
        np.testing.assert_allclose(out.total_airtime, cfg.A * cfg.T, rtol=1e-12)


@pytest.mark.parametrize("runner", [run_cycle_vr, run_cycle_mvr, run_cycle_fixed_rate, run_cycle_cellular, run_cycle_twohop])
def test_single_cycle_runners(runner):
    rng = np.random.default_rng(0)
    snr = 10 ** rng.uniform(0, 2, (4, 2))
    d2d = 10 ** rng.uniform(0, 2, (4, 4))
    d2d = np.triu(d2d, 1) + np.triu(d2d, 1).T
    out = runner(SystemConfig(D=4, A=2), Deployment.from_snr(snr, d2d), np.random.default_rng(1))
    assert isinstance(out, CycleOutcome)
    assert out.rates.shape == (4,)
    assert out.so == (out.te or out.to)
    assert set(out.failed_devices) <= set(range(4))


def test_fixed_deployment_shape_checked():
    cfg = SystemConfig(D=3, A=2)
    with pytest.raises(ValueError, match="shape"):
        draw_cycles(np.random.default_rng(0), cfg, 5, deployment=Deployment.from_snr(np.ones((2, 2))))


def test_unknown_scheme():
    cfg = SystemConfig(D=2, A=1)
    with pytest.raises(ValueError):
        evaluate(cfg, draw_cycles(np.random.default_rng(0), cfg, 2), "lte")
