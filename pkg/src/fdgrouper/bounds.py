"""First-order tight convex bounds used by the path-following iterations.

Each nonconvex rate term is replaced per iteration by a concave minorant
expanded at the current iterate; the bilinear time-power products get a
convex majorant.  All bounds are tight (value and gradient) at the
expansion point, which is what drives the monotone ascent of the outer
loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet
from .config import SystemConfig
from .rates import DesignPoint, dl_interference, ul_covariance, ul_sinr_mmse_sic


class ExpansionPointError(ValueError):
    """The expansion point violates a precondition of a bound."""


# The minorant coefficients contain terms of order SINR that cancel down
# to order ln(SINR); expanding at an extreme SINR makes the resulting
# conic data numerically useless.  Expansion points are therefore damped
# to this SINR (the bounds stay valid, only tightness is given up, and
# the cap is far above any realistic operating point).
SINR_EXPANSION_CAP = 1e4


def rotate_to_real(point: DesignPoint, ch: ChannelSet) -> DesignPoint:
    """Rotate each beamformer so its own-channel inner product is real >= 0.

    The rotation is lossless (every SINR depends on moduli only) and makes
    the downlink minorant as tight as possible.
    """
    out = point.copy()
    for k in range(point.K):
        for g in range(point.G):
            z = np.vdot(ch.h[k], point.w[k, g])
            if abs(z) > 0:
                out.w[k, g] = point.w[k, g] * (z.conjugate() / abs(z))
    return out


def tight_phi(point: DesignPoint, ch: ChannelSet, cfg: SystemConfig,
              sinr_cap: float | None = SINR_EXPANSION_CAP) -> np.ndarray:
    """(K, G) interference-plus-noise amplitudes that make the DL
    interference cone active at the point.

    With a sinr_cap, phi is inflated where needed so the implied SINR
    stays below the cap (see SINR_EXPANSION_CAP).
    """
    phi = np.zeros((point.K, point.G))
    for k in range(point.K):
        for g in range(point.G):
            phi[k, g] = math.sqrt(dl_interference(k, g, point, ch, cfg.sigma_dl))
            if sinr_cap is not None:
                re = abs(np.vdot(ch.h[k], point.w[k, g]))
                phi[k, g] = max(phi[k, g], re / math.sqrt(sinr_cap))
    return phi


@dataclass(frozen=True)
class DlMinorantCoeffs:
    """Coefficients of the downlink rate minorant at one (k, g)."""

    varphi: float
    chi: float
    varpi: float
    h: np.ndarray  # channel of user k, kept for evaluating Re{h^H w}

    def re_hw(self, w_kg: np.ndarray) -> float:
        return float(np.real(np.vdot(self.h, w_kg)))


def dl_minorant_coeffs(expansion: DesignPoint, ch: ChannelSet,
                       k: int, g: int) -> DlMinorantCoeffs:
    """Expansion coefficients of the concave downlink rate bound."""
    if expansion.phi is None:
        raise ExpansionPointError("expansion point carries no phi values")
    phi_n = float(expansion.phi[k, g])
    if phi_n <= 0:
        raise ExpansionPointError(f"phi[{k},{g}] must be positive, got {phi_n}")
    re_n = float(np.real(np.vdot(ch.h[k], expansion.w[k, g])))
    if re_n < 0:
        raise ExpansionPointError(
            f"Re(h^H w) must be nonnegative at the expansion point (k={k}, g={g})")
    if re_n == 0.0:
        return DlMinorantCoeffs(0.0, 0.0, 0.0, ch.h[k])
    denom = phi_n**2 + re_n**2
    varphi = -math.log(1.0 - re_n**2 / denom) - re_n**2 / phi_n**2
    chi = 2.0 * re_n / phi_n**2
    varpi = re_n**2 / (phi_n**2 * denom)
    return DlMinorantCoeffs(varphi, chi, varpi, ch.h[k])


def dl_minorant_value(coeffs: DlMinorantCoeffs, w_kg: np.ndarray,
                      phi_kg: float) -> float:
    """Concave bound F(w, phi) on the downlink rate, in nats."""
    re = coeffs.re_hw(w_kg)
    return coeffs.varphi + coeffs.chi * re - coeffs.varpi * (phi_kg**2 + re**2)


def dl_minorant_eval(coeffs: DlMinorantCoeffs, w_kg: np.ndarray,
                     theta_kg: float) -> float:
    """Affine form varphi + chi Re{h^H w} - varpi theta used in the
    conic subproblems, where theta majorizes phi^2 + Re{h^H w}^2."""
    return coeffs.varphi + coeffs.chi * coeffs.re_hw(w_kg) - coeffs.varpi * theta_kg


@dataclass(frozen=True)
class UlMinorantCoeffs:
    """Coefficients of the uplink rate minorant at one (l, g)."""

    vartheta: float
    psi: float
    Theta: np.ndarray  # (Nrx, Nrx) Hermitian PSD


def ul_minorant_coeffs(expansion: DesignPoint, ch: ChannelSet,
                       ell: int, g: int, cfg: SystemConfig,
                       sinr_cap: float | None = SINR_EXPANSION_CAP
                       ) -> UlMinorantCoeffs:
    """Expansion coefficients of the concave uplink MMSE-SIC rate bound.

    If the SINR at the expansion point exceeds sinr_cap, the user's own
    power is damped for this expansion only (the bound stays valid but
    is no longer tight; see SINR_EXPANSION_CAP).
    """
    cov_excl = ul_covariance(ell, g, expansion, ch, cfg)
    gl = ch.g[ell]
    p_n = float(expansion.p[ell, g])
    u = np.linalg.solve(cov_excl, gl)
    quad = float(np.real(gl.conj() @ u))
    gamma_n = p_n**2 * quad
    if sinr_cap is not None and gamma_n > sinr_cap:
        p_n *= math.sqrt(sinr_cap / gamma_n)
        gamma_n = sinr_cap
    vartheta = math.log1p(gamma_n) - gamma_n
    psi = 2.0 * p_n * quad
    # rank-one form of inv(cov_excl) - inv(cov_excl + p^2 g g^H),
    # PSD by construction
    Theta = (p_n**2 / (1.0 + gamma_n)) * np.outer(u, u.conj())
    Theta = 0.5 * (Theta + Theta.conj().T)
    return UlMinorantCoeffs(vartheta=vartheta, psi=psi, Theta=Theta)


def lambda_eval(coeffs: UlMinorantCoeffs, point: DesignPoint, ch: ChannelSet,
                ell: int, g: int, cfg: SystemConfig) -> float:
    """Convex quadratic lambda(w, p): the curvature part of the UL bound."""
    Theta = coeffs.Theta
    acc = cfg.sigma_ul * float(np.real(np.trace(Theta)))
    for j in range(ell, point.L):
        gj = ch.g[j]
        acc += point.p[j, g] ** 2 * float(np.real(gj.conj() @ Theta @ gj))
    if cfg.rho > 0:
        for k in range(point.K):
            v = ch.G_I.conj().T @ point.w[k, g]
            acc += cfg.rho * float(np.real(v.conj() @ Theta @ v))
    return acc


def ul_minorant_value(coeffs: UlMinorantCoeffs, point: DesignPoint,
                      ch: ChannelSet, ell: int, g: int,
                      cfg: SystemConfig) -> float:
    """Concave bound P(w, p) on the uplink rate, in nats."""
    return (coeffs.vartheta + coeffs.psi * float(point.p[ell, g])
            - lambda_eval(coeffs, point, ch, ell, g, cfg))


def square_minorant(x: float, x_ref: float) -> float:
    """Tangent-line lower bound of x^2 at x_ref."""
    return x_ref**2 + 2.0 * x_ref * (x - x_ref)


def bilinear_majorant(x: float, y: float, x_ref: float, y_ref: float) -> float:
    """Convex upper bound of x*y, tight at (x_ref, y_ref).

    Uses the ratio r = x_ref/y_ref: x*y <= x^2/(2r) + r*y^2/2.
    """
    if x_ref <= 0 or y_ref <= 0:
        raise ExpansionPointError(
            f"bilinear majorant needs positive references, got ({x_ref}, {y_ref})")
    r = x_ref / y_ref
    return 0.5 * x**2 / r + 0.5 * r * y**2


def psd_factor(Theta: np.ndarray, clip: float = 1e-12) -> np.ndarray:
    """Factor a numerically-PSD Hermitian matrix as Theta = M^H M.

    Eigenvalues below the clip are zeroed; a significantly negative
    eigenvalue indicates a broken expansion point and raises.
    """
    Theta = 0.5 * (Theta + Theta.conj().T)
    vals, vecs = np.linalg.eigh(Theta)
    scale = max(abs(vals[-1]), 1.0) if len(vals) else 1.0
    if len(vals) and vals[0] < -1e-8 * scale:
        raise ExpansionPointError(f"matrix is not PSD: min eigenvalue {vals[0]}")
    vals = np.clip(vals, 0.0, None)
    return (np.sqrt(vals)[:, None] * vecs.conj().T)


def ul_exact_rate(point: DesignPoint, ch: ChannelSet, ell: int, g: int,
                  cfg: SystemConfig) -> float:
    return math.log1p(ul_sinr_mmse_sic(ell, g, point, ch, cfg))
