"""Path loss, user placement, and random channel generation."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fdgrouper.channels import (ChannelSet, draw_scenario, generate_channels,
                                generate_layout, path_loss_db, path_loss_gain)
from fdgrouper.config import SystemConfig


def test_path_loss_anchor_values():
    assert path_loss_db("LOS", 10.0) == pytest.approx(124.7)
    assert path_loss_db("LOS", 100.0) == pytest.approx(145.6)
    assert path_loss_db("NLOS", 100.0) == pytest.approx(220.4)


def test_path_loss_gain_is_linear_of_db():
    for kind, d in (("LOS", 25.0), ("NLOS", 60.0)):
        assert path_loss_gain(kind, d) == pytest.approx(
            10 ** (-path_loss_db(kind, d) / 10.0))
        assert 0.0 < path_loss_gain(kind, d) < 1.0


def test_path_loss_rejects_bad_input():
    with pytest.raises(ValueError):
        path_loss_db("LOS", 0.0)
    with pytest.raises(ValueError):
        path_loss_db("LOS", -5.0)
    with pytest.raises(ValueError):
        path_loss_db("urban", 10.0)


@given(st.floats(min_value=1.0, max_value=1e4),
       st.floats(min_value=1.001, max_value=10.0),
       st.sampled_from(["LOS", "NLOS"]))
def test_path_loss_monotone_in_distance(d, factor, kind):
    assert path_loss_db(kind, d * factor) > path_loss_db(kind, d)


def test_layout_determinism_and_radii():
    cfg = SystemConfig(K=4, L=4, seed=7)
    rng1 = np.random.default_rng(7)
    rng2 = np.random.default_rng(7)
    lay1 = generate_layout(cfg, rng1)
    lay2 = generate_layout(cfg, rng2)
    np.testing.assert_array_equal(lay1.dl_positions, lay2.dl_positions)
    np.testing.assert_array_equal(lay1.ul_positions, lay2.ul_positions)
    for r in np.concatenate([lay1.dl_distances(), lay1.ul_distances()]):
        assert cfg.min_bs_distance <= r <= cfg.cell_radius


def test_layout_user_counts():
    cfg = SystemConfig(K=1, L=0)
    lay = generate_layout(cfg, np.random.default_rng(0))
    assert lay.dl_positions.shape == (1, 2)
    assert lay.ul_positions.shape == (0, 2)


def test_cross_distances_shape_and_values():
    cfg = SystemConfig(K=2, L=3, seed=1)
    lay = generate_layout(cfg, np.random.default_rng(1))
    d = lay.cross_distances()
    assert d.shape == (3, 2)
    assert d[1, 0] == pytest.approx(
        np.linalg.norm(lay.ul_positions[1] - lay.dl_positions[0]))


def test_channel_determinism():
    cfg = SystemConfig(seed=11)
    lay1, ch1 = draw_scenario(cfg)
    lay2, ch2 = draw_scenario(cfg)
    np.testing.assert_array_equal(ch1.h, ch2.h)
    np.testing.assert_array_equal(ch1.g, ch2.g)
    np.testing.assert_array_equal(ch1.g_hat, ch2.g_hat)
    np.testing.assert_array_equal(ch1.G_I, ch2.G_I)


def test_different_seeds_differ():
    _, ch1 = draw_scenario(SystemConfig(seed=1))
    _, ch2 = draw_scenario(SystemConfig(seed=2))
    assert not np.allclose(ch1.h, ch2.h)


def test_unit_variance_complex_gaussian_entries():
    # the loop channel is unscaled unit-variance CSCG; estimate E|entry|^2
    cfg = SystemConfig(Ntx=100, Nrx=100, K=1, L=1)
    lay = generate_layout(cfg, np.random.default_rng(0))
    rng = np.random.default_rng(0)
    samples = []
    for _ in range(10):
        ch = generate_channels(lay, cfg, rng)
        samples.append(np.abs(ch.G_I) ** 2)
    mean = float(np.mean(samples))   # 1e5 entries
    assert mean == pytest.approx(1.0, abs=0.02)


def test_channel_power_matches_path_loss():
    # E||g_l||^2 = Nrx * PL(d_l) within 3 sigma of the sample mean
    cfg = SystemConfig(K=2, L=2, Ntx=4, Nrx=4)
    lay = generate_layout(cfg, np.random.default_rng(5))
    rng = np.random.default_rng(5)
    n = 4000
    pow_g = np.zeros((n, cfg.L))
    for i in range(n):
        ch = generate_channels(lay, cfg, rng)
        pow_g[i] = np.sum(np.abs(ch.g) ** 2, axis=1)
    for ell in range(cfg.L):
        expect = cfg.Nrx * ch.pl_ul[ell]
        mean = pow_g[:, ell].mean()
        sig = pow_g[:, ell].std(ddof=1) / np.sqrt(n)
        assert abs(mean - expect) < 3 * sig + 1e-3 * expect


def test_mean_channel_gain_at_100m():
    # per-antenna channel power at d = 100 m is the LOS gain ~ 10^-14.56
    cfg = SystemConfig(K=1, L=0, Ntx=64)
    lay_raw = generate_layout(cfg, np.random.default_rng(0))
    pos = lay_raw.dl_positions.copy()
    pos[0] = [100.0, 0.0]
    lay = type(lay_raw)(dl_positions=pos, ul_positions=lay_raw.ul_positions)
    rng = np.random.default_rng(0)
    vals = [np.sum(np.abs(generate_channels(lay, cfg, rng).h[0]) ** 2) / cfg.Ntx
            for _ in range(200)]
    assert np.mean(vals) == pytest.approx(10 ** -14.56, rel=0.1)


def test_generate_channels_checks_layout():
    cfg = SystemConfig(K=2, L=2)
    lay = generate_layout(SystemConfig(K=3, L=2), np.random.default_rng(0))
    with pytest.raises(ValueError):
        generate_channels(lay, cfg, np.random.default_rng(0))


def test_channelset_dimension_properties():
    cfg = SystemConfig(K=3, L=2, Ntx=5, Nrx=4, seed=0)
    _, ch = draw_scenario(cfg)
    assert isinstance(ch, ChannelSet)
    assert (ch.K, ch.L, ch.Ntx, ch.Nrx) == (3, 2, 5, 4)
    assert ch.g_hat.shape == (2, 3)
    assert ch.G_I.shape == (5, 4)
    assert np.all((ch.pl_cross > 0) & (ch.pl_cross < 1))
