"""Exact SINR / rate engine against independent brute-force oracles."""

import numpy as np
import pytest

from fdgrouper.channels import draw_scenario
from fdgrouper.config import SystemConfig
from fdgrouper.rates import (DesignPoint, check_feasibility, dl_sinr,
                             group_rates, ul_sinr_mmse_sic, user_rates,
                             weighted_sum_rate, zero_point)

from conftest import random_point


# ---------------------------------------------------------------------------
# independent scalar oracles (explicit inverses, no shared code paths)

def oracle_dl_sinr(k, g, pt, ch, sigma):
    hk = ch.h[k]
    sig = abs(np.conj(hk) @ pt.w[k, g]) ** 2
    den = sigma
    for i in range(pt.K):
        if i != k:
            den += abs(np.conj(hk) @ pt.w[i, g]) ** 2
    for ell in range(pt.L):
        den += pt.p[ell, g] ** 2 * abs(ch.g_hat[ell, k]) ** 2
    return sig / den


def oracle_ul_sinr(ell, g, pt, ch, cfg):
    Nrx = ch.Nrx
    cov = cfg.sigma_ul * np.eye(Nrx, dtype=complex)
    for j in range(ell + 1, pt.L):
        cov += pt.p[j, g] ** 2 * np.outer(ch.g[j], np.conj(ch.g[j]))
    for k in range(pt.K):
        v = np.conj(ch.G_I).T @ pt.w[k, g]
        cov += cfg.rho * np.outer(v, np.conj(v))
    gl = ch.g[ell]
    return float(np.real(pt.p[ell, g] ** 2
                         * np.conj(gl) @ np.linalg.inv(cov) @ gl))


# ---------------------------------------------------------------------------


def test_dl_sinr_unit_value():
    # single user, signal power equal to the noise power -> SINR exactly 1
    cfg = SystemConfig(K=1, L=0, Ntx=2, Nrx=2)
    _, ch = draw_scenario(cfg)
    pt = zero_point(1, 0, cfg.G, 2)
    h0 = ch.h[0]
    pt.w[0, :] = h0 / np.linalg.norm(h0) ** 2 * np.sqrt(cfg.sigma_dl)
    for g in range(cfg.G):
        assert dl_sinr(0, g, pt, ch, cfg) == pytest.approx(1.0)


def test_zero_point_has_zero_rates():
    cfg = SystemConfig(K=2, L=2, Ntx=2, Nrx=2, seed=4)
    _, ch = draw_scenario(cfg)
    pt = zero_point(2, 2, cfg.G, 2)
    assert weighted_sum_rate(pt, ch, cfg) == 0.0
    assert ul_sinr_mmse_sic(0, 0, pt, ch, cfg) == 0.0
    assert dl_sinr(0, 0, pt, ch, cfg) == 0.0


def test_dl_sinr_matches_oracle():
    cfg = SystemConfig(K=3, L=2, Ntx=3, Nrx=3, seed=12)
    _, ch = draw_scenario(cfg)
    rng = np.random.default_rng(0)
    for trial in range(20):
        pt = random_point(cfg, rng)
        for k in range(cfg.K):
            for g in range(cfg.G):
                assert dl_sinr(k, g, pt, ch, cfg) == pytest.approx(
                    oracle_dl_sinr(k, g, pt, ch, cfg.sigma_dl), rel=1e-10)


def test_ul_sinr_matches_explicit_inverse_oracle():
    # the covariance mixes the noise floor with residual self-interference
    # terms ~1e12 larger, so Cholesky and explicit-inverse evaluations can
    # only agree to conditioning accuracy; any structural mistake (wrong
    # interferer set, wrong attenuation) shows up at O(1)
    from fdgrouper.rates import ul_covariance
    cfg = SystemConfig(K=2, L=3, Ntx=3, Nrx=3, seed=8)
    _, ch = draw_scenario(cfg)
    rng = np.random.default_rng(1)
    eps_mach = np.finfo(float).eps
    for trial in range(20):
        pt = random_point(cfg, rng)
        for ell in range(cfg.L):
            for g in range(cfg.G):
                got = ul_sinr_mmse_sic(ell, g, pt, ch, cfg)
                want = oracle_ul_sinr(ell, g, pt, ch, cfg)
                cond = np.linalg.cond(ul_covariance(ell, g, pt, ch, cfg))
                tol = max(1e-9, 100 * cond * eps_mach)
                assert got == pytest.approx(want, rel=tol)


def test_ul_sinr_matches_oracle_tightly_when_well_conditioned():
    cfg = SystemConfig(K=2, L=3, Ntx=3, Nrx=3, seed=8, rho=0.0,
                       sigma_ul=1e-15)
    _, ch = draw_scenario(cfg)
    rng = np.random.default_rng(1)
    for trial in range(20):
        pt = random_point(cfg, rng)
        for ell in range(cfg.L):
            for g in range(cfg.G):
                assert ul_sinr_mmse_sic(ell, g, pt, ch, cfg) == pytest.approx(
                    oracle_ul_sinr(ell, g, pt, ch, cfg), rel=1e-9)


def test_ul_sinr_single_user_closed_form():
    # no interference: SINR = (p^2 / sigma) * ||g||^2
    cfg = SystemConfig(K=0, L=1, Ntx=2, Nrx=3, seed=2)
    _, ch = draw_scenario(cfg)
    pt = zero_point(0, 1, cfg.G, 2)
    pt.p[0, :] = 0.07
    expect = 0.07 ** 2 / cfg.sigma_ul * np.linalg.norm(ch.g[0]) ** 2
    assert ul_sinr_mmse_sic(0, 0, pt, ch, cfg) == pytest.approx(expect, rel=1e-9)


def test_sic_sum_rate_telescopes_to_log_det():
    # with no downlink transmission the successive-decoding rates sum to
    # the log-determinant of the full received covariance
    rng = np.random.default_rng(42)
    for trial in range(100):
        L = int(rng.integers(1, 5))
        cfg = SystemConfig(K=1, L=L, Ntx=2, Nrx=3, rho=0.0,
                           seed=int(rng.integers(1 << 30)))
        _, ch = draw_scenario(cfg)
        pt = zero_point(1, L, 1, 2)
        pt.t = np.ones(1)
        pt.p = rng.random((L, 1)) * np.sqrt(cfg.P_ul)
        total = sum(np.log1p(ul_sinr_mmse_sic(ell, 0, pt, ch, cfg))
                    for ell in range(L))
        M = np.eye(cfg.Nrx, dtype=complex)
        for ell in range(L):
            gl = ch.g[ell]
            M += pt.p[ell, 0] ** 2 / cfg.sigma_ul * np.outer(gl, np.conj(gl))
        expect = float(np.log(np.real(np.linalg.det(M))))
        assert total == pytest.approx(expect, rel=1e-9)


def test_sum_rate_invariant_to_common_phase():
    cfg = SystemConfig(K=2, L=2, Ntx=2, Nrx=2, seed=6)
    _, ch = draw_scenario(cfg)
    pt = random_point(cfg, np.random.default_rng(3))
    base = weighted_sum_rate(pt, ch, cfg)
    rot = pt.copy()
    rot.w = pt.w * np.exp(1j * 0.73)
    assert weighted_sum_rate(rot, ch, cfg) == pytest.approx(base, rel=1e-12)


def test_dl_sinr_invariant_to_common_scaling():
    # scaling all channels and noise powers together leaves SINRs unchanged
    from dataclasses import replace
    cfg = SystemConfig(K=2, L=2, Ntx=2, Nrx=2, seed=9)
    _, ch = draw_scenario(cfg)
    pt = random_point(cfg, np.random.default_rng(4))
    c = 37.0
    ch2 = replace(ch, h=ch.h * np.sqrt(c), g_hat=ch.g_hat * np.sqrt(c))
    cfg2 = cfg.with_overrides(sigma_dl=cfg.sigma_dl * c)
    for k in range(2):
        for g in range(2):
            assert dl_sinr(k, g, pt, ch2, cfg2) == pytest.approx(
                dl_sinr(k, g, pt, ch, cfg), rel=1e-12)


def test_weighted_sum_rate_reduces_to_plain_sum():
    cfg = SystemConfig(K=2, L=2, G=1, Ntx=2, Nrx=2, seed=5)
    _, ch = draw_scenario(cfg)
    pt = random_point(cfg, np.random.default_rng(5))
    pt.alpha[:] = 1.0
    pt.beta[:] = 1.0
    pt.t[:] = 1.0
    rd, ru = group_rates(pt, ch, cfg)
    assert weighted_sum_rate(pt, ch, cfg) == pytest.approx(
        rd.sum() + ru.sum(), rel=1e-12)


def test_user_rates_weighting():
    cfg = SystemConfig(K=2, L=1, G=2, Ntx=2, Nrx=2, seed=5)
    _, ch = draw_scenario(cfg)
    pt = random_point(cfg, np.random.default_rng(6))
    rd, ru = group_rates(pt, ch, cfg)
    wd, wu = user_rates(pt, ch, cfg)
    np.testing.assert_allclose(wd, (pt.t * pt.alpha * rd).sum(axis=1))
    np.testing.assert_allclose(wu, (pt.t * pt.beta * ru).sum(axis=1))


def test_check_feasibility_zero_point_violates_thresholds():
    cfg = SystemConfig(K=2, L=2, Ntx=2, Nrx=2, seed=1)
    _, ch = draw_scenario(cfg)
    rep = check_feasibility(zero_point(2, 2, cfg.G, 2), ch, cfg)
    assert not rep.feasible
    assert rep.rate_dl.max() > 0
    assert "feasible=False" in rep.summary()


def test_check_feasibility_power_boundary():
    # exactly exhausting the time-weighted budget -> zero power residual
    cfg = SystemConfig(K=1, L=1, G=2, Ntx=2, Nrx=2, seed=1,
                       Rbar_dl=0.0, Rbar_ul=0.0)
    _, ch = draw_scenario(cfg)
    pt = zero_point(1, 1, 2, 2)
    pt.w[0, :, 0] = np.sqrt(cfg.P_bs)      # t = 1/2 each: sum t*||w||^2 = P_bs
    pt.p[0, :] = np.sqrt(cfg.P_ul)
    rep = check_feasibility(pt, ch, cfg)
    assert rep.power_bs == pytest.approx(0.0, abs=1e-12)
    assert rep.power_ul[0] == pytest.approx(0.0, abs=1e-12)
    assert rep.feasible


def test_check_feasibility_relaxed_mode_sums_over_groups():
    from fdgrouper.config import PowerConstraintMode
    cfg = SystemConfig(K=1, L=1, G=2, Ntx=2, Nrx=2, seed=1,
                       Rbar_dl=0.0, Rbar_ul=0.0,
                       power_constraint_mode=PowerConstraintMode.RELAXED)
    _, ch = draw_scenario(cfg)
    pt = zero_point(1, 1, 2, 2)
    pt.w[0, :, 0] = np.sqrt(cfg.P_bs)      # plain sum = 2 * P_bs: violated
    rep = check_feasibility(pt, ch, cfg)
    assert rep.power_bs == pytest.approx(1.0)
    assert not rep.feasible


def test_point_copy_is_deep():
    pt = zero_point(1, 1, 2, 2)
    pt.aux["level"] = np.array(0.5)
    cp = pt.copy()
    cp.w[0, 0, 0] = 1.0
    cp.aux["level"] += 1.0
    assert pt.w[0, 0, 0] == 0.0
    assert float(pt.aux["level"]) == 0.5


def test_design_point_shape_properties():
    pt = zero_point(3, 2, 4, 5)
    assert (pt.K, pt.L, pt.G) == (3, 2, 4)
    assert pt.w.shape == (3, 4, 5)
