"""Conic subproblem construction for the path-following loops.

Four subproblem kinds are built from one expansion point:

* ALG1_MAIN: beamformers and uplink powers only, assignment and time
  fractions fixed; maximizes the summed rate minorants.
* ALG1_INIT: same feasible set, but maximizes the worst threshold
  ratio (run until >= 1 to find a point meeting all rate thresholds).
* ALG2_MAIN: joint problem over beamformers, powers, assignment
  fractions, and time shares, with the epigraph chain that decouples
  the time-assignment-rate products.
* ALG2_INIT: maximin threshold version of ALG2_MAIN.

All channels are rescaled internally so both noise powers equal one;
SINRs, rates, and the power variables are unchanged by this, but the
conic data become far better conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .bounds import (DlMinorantCoeffs, UlMinorantCoeffs, dl_minorant_coeffs,
                     dl_minorant_value, psd_factor, rotate_to_real, tight_phi,
                     ul_minorant_coeffs, ul_minorant_value)
from .channels import ChannelSet
from .config import PowerConstraintMode, SystemConfig
from .program import ConicProgram, Expr
from .rates import DesignPoint, group_rates
from .solver import SolverResult, SolverSettings, solve

# reference floors keeping the bilinear majorants well defined when a
# group's time share or power collapses to zero
T_REF_FLOOR = 1e-6
POWER_REF_FLOOR = 1e-9


class SubproblemKind(Enum):
    ALG1_MAIN = "alg1_main"
    ALG1_INIT = "alg1_init"
    ALG2_MAIN = "alg2_main"
    ALG2_INIT = "alg2_init"

    @property
    def is_init(self) -> bool:
        return self in (SubproblemKind.ALG1_INIT, SubproblemKind.ALG2_INIT)

    @property
    def is_joint(self) -> bool:
        return self in (SubproblemKind.ALG2_MAIN, SubproblemKind.ALG2_INIT)


def noise_normalized(ch: ChannelSet, cfg: SystemConfig
                     ) -> tuple[ChannelSet, SystemConfig]:
    """Rescale channels so both noise powers become one.

    Every SINR is invariant under (h, g_hat) /= sqrt(sigma_dl),
    (g, G_I) /= sqrt(sigma_ul), sigma := 1, so rates and the optimal
    powers are untouched while the numeric range shrinks drastically.
    """
    sd = math.sqrt(cfg.sigma_dl)
    su = math.sqrt(cfg.sigma_ul)
    nch = replace(ch, h=ch.h / sd, g_hat=ch.g_hat / sd,
                  g=ch.g / su, G_I=ch.G_I / su)
    ncfg = cfg.with_overrides(sigma_dl=1.0, sigma_ul=1.0)
    return nch, ncfg


@dataclass
class Subproblem:
    """One assembled convex subproblem plus its extraction metadata."""

    kind: SubproblemKind
    program: ConicProgram
    cfg: SystemConfig            # original (unnormalized) config
    expansion: DesignPoint       # rotated expansion point, normalized phi
    idx: dict                    # variable-name -> shaped index arrays
    dl_coeffs: list              # [k][g] DlMinorantCoeffs (normalized)
    ul_coeffs: list              # [l][g] UlMinorantCoeffs (normalized)
    nch: ChannelSet              # noise-normalized channels
    ncfg: SystemConfig           # noise-normalized config

    def solve(self, settings: SolverSettings | None = None,
              warm_start: np.ndarray | None = None) -> SolverResult:
        return solve(self.program, settings, warm_start=warm_start)

    def surrogate_objective(self, x: np.ndarray) -> float:
        """Value of the concave surrogate objective at a solver point."""
        return self.program.objective.value(x)

    def minorant_objective(self, point: DesignPoint) -> float:
        """Weighted sum of the rate minorants at a design point, in nats.

        By validity of the bounds this never exceeds the exact weighted
        sum rate at the same point, regardless of solver accuracy.
        """
        pt = rotate_to_real(point, self.nch)
        pt.phi = tight_phi(pt, self.nch, self.ncfg, sinr_cap=None)
        total = 0.0
        for k in range(pt.K):
            for g in range(pt.G):
                val = dl_minorant_value(self.dl_coeffs[k][g], pt.w[k, g],
                                        float(pt.phi[k, g]))
                total += pt.t[g] * pt.alpha[k, g] * val
        for ell in range(pt.L):
            for g in range(pt.G):
                val = ul_minorant_value(self.ul_coeffs[ell][g], pt, self.nch,
                                        ell, g, self.ncfg)
                total += pt.t[g] * pt.beta[ell, g] * val
        return total

    def census(self) -> dict:
        return self.program.census()

    def extract_point(self, x: np.ndarray) -> DesignPoint:
        """Map a solver solution back to a design point.

        Tiny cone violations from finite solver tolerances are clipped so
        the result is always a valid design point.
        """
        cfg = self.cfg
        K, L, G, Ntx = cfg.K, cfg.L, cfg.G, cfg.Ntx
        w = np.zeros((K, G, Ntx), dtype=complex)
        if K:
            w = (x[self.idx["w_re"]] + 1j * x[self.idx["w_im"]])
        p = np.clip(x[self.idx["p"]], 0.0, None) if L else np.zeros((L, G))

        if self.kind.is_joint:
            alpha = np.clip(x[self.idx["alpha"]], 0.0, 1.0) if K else np.ones((K, G))
            beta = np.clip(x[self.idx["beta"]], 0.0, 1.0) if L else np.ones((L, G))
            t = np.clip(x[self.idx["t"]], 0.0, None)
            if t.sum() > 1.0:
                t = t / t.sum()
        else:
            alpha = self.expansion.alpha.copy()
            beta = self.expansion.beta.copy()
            t = self.expansion.t.copy()

        aux = {}
        if self.kind.is_init:
            aux["level"] = float(x[self.idx["tau0"][0]])
        return DesignPoint(w=w, p=p, alpha=alpha, beta=beta, t=t, aux=aux)


def build_subproblem(kind: SubproblemKind, expansion: DesignPoint,
                     ch: ChannelSet, cfg: SystemConfig) -> Subproblem:
    """Assemble the convex program expanded at the given design point."""
    nch, ncfg = noise_normalized(ch, cfg)
    exp = rotate_to_real(expansion, nch)
    exp.phi = tight_phi(exp, nch, ncfg)

    K, L, G, Ntx = cfg.K, cfg.L, cfg.G, cfg.Ntx
    joint = kind.is_joint
    time_weighted = cfg.power_constraint_mode is PowerConstraintMode.TIME_WEIGHTED

    dl_coeffs = [[dl_minorant_coeffs(exp, nch, k, g) for g in range(G)]
                 for k in range(K)]
    # the theta variable is kept in rate units (theta' = varpi * theta),
    # which keeps the conic data well scaled
    theta_scale = np.array([[dl_coeffs[k][g].varpi if dl_coeffs[k][g].varpi > 0
                             else 1.0 for g in range(G)] for k in range(K)])
    theta_scale = theta_scale.reshape(K, G)
    ul_coeffs = [[ul_minorant_coeffs(exp, nch, ell, g, ncfg) for g in range(G)]
                 for ell in range(L)]
    # factor Theta = M^H M once per (l, g); keep only nonzero rows
    ul_factors = [[_nonzero_rows(psd_factor(ul_coeffs[ell][g].Theta))
                   for g in range(G)] for ell in range(L)]

    prog = ConicProgram()
    idx: dict[str, np.ndarray] = {}

    nw = Ntx * K * G
    w_all = prog.add_vars("w", 2 * nw, census_scalars=nw)
    idx["w_re"] = w_all[:nw].reshape(K, G, Ntx)
    idx["w_im"] = w_all[nw:].reshape(K, G, Ntx)
    idx["phi"] = prog.add_vars("phi", K * G).reshape(K, G)
    theta_role = "decision" if joint else "aux"
    idx["theta"] = prog.add_vars("theta", K * G, role=theta_role).reshape(K, G)
    idx["p"] = prog.add_vars("p", L * G).reshape(L, G)
    idx["theta_ul"] = prog.add_vars("theta_ul", L * G).reshape(L, G)

    if joint:
        for name in ("alpha", "tau", "tauhat", "tautilde"):
            idx[name] = prog.add_vars(name, K * G).reshape(K, G)
        for name in ("beta", "tau_ul", "tauhat_ul", "tautilde_ul", "phat"):
            idx[name] = prog.add_vars(name, L * G).reshape(L, G)
        idx["t"] = prog.add_vars("t", G)
        idx["omega"] = prog.add_vars("omega", G)
    if kind.is_init:
        idx["tau0"] = prog.add_vars("tau0", 1, role="aux")

    def re_hw(hvec: np.ndarray, k: int, g: int) -> Expr:
        """Re{h^H w_k^g} as an affine expression."""
        coeffs = {}
        for i in range(Ntx):
            coeffs[int(idx["w_re"][k, g, i])] = hvec[i].real
            coeffs[int(idx["w_im"][k, g, i])] = hvec[i].imag
        return Expr(coeffs)

    def im_hw(hvec: np.ndarray, k: int, g: int) -> Expr:
        """Im{h^H w_k^g}."""
        coeffs = {}
        for i in range(Ntx):
            coeffs[int(idx["w_im"][k, g, i])] = hvec[i].real
            coeffs[int(idx["w_re"][k, g, i])] = -hvec[i].imag
        return Expr(coeffs)

    def lin_bw(brow: np.ndarray, k: int, g: int) -> tuple[Expr, Expr]:
        """(Re, Im) of the unconjugated product b . w_k^g."""
        re_c, im_c = {}, {}
        for i in range(Ntx):
            re_c[int(idx["w_re"][k, g, i])] = brow[i].real
            re_c[int(idx["w_im"][k, g, i])] = -brow[i].imag
            im_c[int(idx["w_im"][k, g, i])] = brow[i].real
            im_c[int(idx["w_re"][k, g, i])] = brow[i].imag
        return Expr(re_c), Expr(im_c)

    def ddF(k: int, g: int) -> Expr:
        cfs = dl_coeffs[k][g]
        coef = cfs.varpi / theta_scale[k, g]   # 1, or 0 for a dead user
        return (Expr.const_(cfs.varphi) + re_hw(nch.h[k], k, g) * cfs.chi
                - Expr.var(idx["theta"][k, g], coef))

    def ddP(ell: int, g: int) -> Expr:
        cfs = ul_coeffs[ell][g]
        return (Expr.const_(cfs.vartheta)
                + Expr.var(idx["p"][ell, g], cfs.psi)
                - Expr.var(idx["theta_ul"][ell, g]))

    # ---- shared constraints: DL cones -------------------------------
    for k in range(K):
        for g in range(G):
            prog.add_ge(re_hw(nch.h[k], k, g))
            body = []
            for i in range(K):
                if i != k:
                    body.append(re_hw(nch.h[k], i, g))
                    body.append(im_hw(nch.h[k], i, g))
            for ell in range(L):
                body.append(Expr.var(idx["p"][ell, g], abs(nch.g_hat[ell, k])))
            body.append(Expr.const_(1.0))   # unit noise amplitude
            prog.add_soc(Expr.var(idx["phi"][k, g]), body)
            sq = math.sqrt(theta_scale[k, g])
            prog.add_quad_le([Expr.var(idx["phi"][k, g], sq),
                              re_hw(nch.h[k], k, g) * sq],
                             Expr.var(idx["theta"][k, g]))

    # ---- shared constraints: UL curvature cones ----------------------
    for ell in range(L):
        for g in range(G):
            prog.add_ge(Expr.var(idx["p"][ell, g]))
            M = ul_factors[ell][g]
            body = []
            for j in range(ell, L):
                cj = float(np.linalg.norm(M @ nch.g[j]))
                if cj > 0:
                    body.append(Expr.var(idx["p"][j, g], cj))
            if cfg.rho > 0 and M.shape[0]:
                B = M @ nch.G_I.conj().T     # (r, Ntx)
                sq_rho = math.sqrt(cfg.rho)
                for k in range(K):
                    for row in B:
                        re_e, im_e = lin_bw(sq_rho * row, k, g)
                        body.append(re_e)
                        body.append(im_e)
            trace = float(np.real(np.trace(ul_coeffs[ell][g].Theta)))
            bound = Expr.var(idx["theta_ul"][ell, g]) - trace  # sigma = 1
            if body:
                prog.add_quad_le(body, bound)
            else:
                prog.add_ge(bound)

    # ---- power budgets ----------------------------------------------
    if not joint:
        tfix = exp.t
        if K:
            scale = np.sqrt(tfix) if time_weighted else np.ones(G)
            body = []
            for k in range(K):
                for g in range(G):
                    for i in range(Ntx):
                        body.append(Expr.var(idx["w_re"][k, g, i], float(scale[g])))
                        body.append(Expr.var(idx["w_im"][k, g, i], float(scale[g])))
            prog.add_quad_le(body, Expr.const_(cfg.P_bs))
        for ell in range(L):
            scale = np.sqrt(tfix) if time_weighted else np.ones(G)
            prog.add_quad_le(
                [Expr.var(idx["p"][ell, g], float(scale[g])) for g in range(G)],
                Expr.const_(cfg.P_ul))
    else:
        t_ref = np.maximum(exp.t, T_REF_FLOOR)
        if time_weighted:
            w_pow_ref = np.maximum(
                np.sum(np.abs(exp.w) ** 2, axis=(0, 2)),
                POWER_REF_FLOOR * cfg.P_bs)                      # (G,)
            phat_ref = np.maximum(exp.p ** 2, POWER_REF_FLOOR * cfg.P_ul)
            if K:
                for g in range(G):
                    body = []
                    for k in range(K):
                        for i in range(Ntx):
                            body.append(Expr.var(idx["w_re"][k, g, i]))
                            body.append(Expr.var(idx["w_im"][k, g, i]))
                    prog.add_quad_le(body, Expr.var(idx["omega"][g]))
                body = []
                for g in range(G):
                    r = t_ref[g] / w_pow_ref[g]
                    body.append(Expr.var(idx["t"][g], 1.0 / math.sqrt(2.0 * r)))
                    body.append(Expr.var(idx["omega"][g], math.sqrt(r / 2.0)))
                prog.add_quad_le(body, Expr.const_(cfg.P_bs))
            for ell in range(L):
                body = []
                for g in range(G):
                    prog.add_quad_le([Expr.var(idx["p"][ell, g])],
                                     Expr.var(idx["phat"][ell, g]))
                    r = t_ref[g] / phat_ref[ell, g]
                    body.append(Expr.var(idx["t"][g], 1.0 / math.sqrt(2.0 * r)))
                    body.append(Expr.var(idx["phat"][ell, g], math.sqrt(r / 2.0)))
                prog.add_quad_le(body, Expr.const_(cfg.P_ul))
        else:
            if K:
                body = []
                for k in range(K):
                    for g in range(G):
                        for i in range(Ntx):
                            body.append(Expr.var(idx["w_re"][k, g, i]))
                            body.append(Expr.var(idx["w_im"][k, g, i]))
                prog.add_quad_le(body, Expr.const_(cfg.P_bs))
            for ell in range(L):
                prog.add_quad_le([Expr.var(idx["p"][ell, g]) for g in range(G)],
                                 Expr.const_(cfg.P_ul))

    # ---- joint-only machinery ----------------------------------------
    if joint:
        rd, ru = group_rates(exp, nch, ncfg)     # exact per-group rates
        tau_ref = np.sqrt(exp.alpha * rd) if K else np.zeros((K, G))
        tau_ul_ref = np.sqrt(exp.beta * ru) if L else np.zeros((L, G))
        tautilde_ref = np.sqrt(exp.t)[None, :] * tau_ref if K else tau_ref
        tautilde_ul_ref = np.sqrt(exp.t)[None, :] * tau_ul_ref if L else tau_ul_ref

        e_t = Expr()
        for g in range(G):
            prog.add_ge(Expr.var(idx["t"][g]))
            e_t = e_t + Expr.var(idx["t"][g])
        prog.add_le(e_t, 1.0)

        for k in range(K):
            for g in range(G):
                a = Expr.var(idx["alpha"][k, g])
                prog.add_ge(a)
                prog.add_le(a, 1.0)
                f = ddF(k, g)
                prog.add_ge(f)
                prog.add_rsoc(a, f * 0.5, [Expr.var(idx["tau"][k, g])])
                th = Expr.var(idx["tauhat"][k, g])
                prog.add_ge(th)
                prog.add_le(th, _sq_tangent(Expr.var(idx["tau"][k, g]),
                                            tau_ref[k, g]))
                prog.add_rsoc(Expr.var(idx["t"][g]), th * 0.5,
                              [Expr.var(idx["tautilde"][k, g])])
                if cfg.omega > 0:
                    prog.add_le(a, f * cfg.omega)
        for ell in range(L):
            for g in range(G):
                b = Expr.var(idx["beta"][ell, g])
                prog.add_ge(b)
                prog.add_le(b, 1.0)
                pp = ddP(ell, g)
                prog.add_ge(pp)
                prog.add_rsoc(b, pp * 0.5, [Expr.var(idx["tau_ul"][ell, g])])
                th = Expr.var(idx["tauhat_ul"][ell, g])
                prog.add_ge(th)
                prog.add_le(th, _sq_tangent(Expr.var(idx["tau_ul"][ell, g]),
                                            tau_ul_ref[ell, g]))
                prog.add_rsoc(Expr.var(idx["t"][g]), th * 0.5,
                              [Expr.var(idx["tautilde_ul"][ell, g])])
                if cfg.omega > 0:
                    prog.add_le(b, pp * cfg.omega)

        def dl_rate_expr(k: int) -> Expr:
            e = Expr()
            for g in range(G):
                e = e + _sq_tangent(Expr.var(idx["tautilde"][k, g]),
                                    tautilde_ref[k, g])
            return e

        def ul_rate_expr(ell: int) -> Expr:
            e = Expr()
            for g in range(G):
                e = e + _sq_tangent(Expr.var(idx["tautilde_ul"][ell, g]),
                                    tautilde_ul_ref[ell, g])
            return e
    else:
        def dl_rate_expr(k: int) -> Expr:
            e = Expr()
            for g in range(G):
                e = e + ddF(k, g) * float(exp.t[g] * exp.alpha[k, g])
            return e

        def ul_rate_expr(ell: int) -> Expr:
            e = Expr()
            for g in range(G):
                e = e + ddP(ell, g) * float(exp.t[g] * exp.beta[ell, g])
            return e

    # ---- thresholds and objective ------------------------------------
    if kind.is_init:
        tau0 = Expr.var(idx["tau0"][0])
        any_threshold = False
        for k in range(K):
            if cfg.Rbar_dl > 0:
                prog.add_ge(dl_rate_expr(k), tau0 * cfg.Rbar_dl)
                any_threshold = True
        for ell in range(L):
            if cfg.Rbar_ul > 0:
                prog.add_ge(ul_rate_expr(ell), tau0 * cfg.Rbar_ul)
                any_threshold = True
        if not any_threshold:
            raise ValueError("init subproblem needs a positive rate threshold")
        prog.set_objective(tau0)
    else:
        for k in range(K):
            if cfg.Rbar_dl > 0:
                prog.add_ge(dl_rate_expr(k), cfg.Rbar_dl)
        for ell in range(L):
            if cfg.Rbar_ul > 0:
                prog.add_ge(ul_rate_expr(ell), cfg.Rbar_ul)
        obj = Expr()
        for k in range(K):
            obj = obj + dl_rate_expr(k)
        for ell in range(L):
            obj = obj + ul_rate_expr(ell)
        prog.set_objective(obj)

    prog.validate()
    return Subproblem(kind=kind, program=prog, cfg=cfg, expansion=exp,
                      idx=idx, dl_coeffs=dl_coeffs, ul_coeffs=ul_coeffs,
                      nch=nch, ncfg=ncfg)


def _sq_tangent(e: Expr, ref: float) -> Expr:
    """Tangent-line lower bound of e^2 at the reference value."""
    return e * (2.0 * ref) - ref * ref


def _nonzero_rows(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1)
    keep = norms > 1e-14 * max(1.0, norms.max(initial=0.0))
    return M[keep]
