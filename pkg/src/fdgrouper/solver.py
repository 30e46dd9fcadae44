"""Primal-dual interior-point solver for linear + second-order-cone programs.

Implements a homogeneous self-dual embedding with Nesterov-Todd scaling
and a Mehrotra predictor-corrector, solving

    minimize c'x  s.t.  Ax = b,  Gx + s = h,  s in K,

with K a product of a nonnegative orthant and second-order cones.  The
embedding gives clean infeasibility/unboundedness certificates, which the
outer SCA loops rely on to tell a bad expansion point from a bug.

The KKT system is solved by a sparse LU factorization of the statically
regularized quasidefinite matrix, with one step of iterative refinement.
Problem data are Ruiz-equilibrated first (uniformly per cone block, so
cone membership is preserved).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .program import ConicData, ConicProgram


class SolverStatus(str, Enum):
    OPTIMAL = "optimal"
    ALMOST_OPTIMAL = "almost_optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITER_LIMIT = "iter_limit"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolverSettings:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_ipm_iters: int = 200
    static_regularization: float = 1e-9
    # Ruiz equilibration is off by default: the subproblem models are
    # scaled at the source, and rescaling rows of wide-dynamic-range cones
    # makes the scaled residuals a poor proxy for true feasibility
    equilibrate_iters: int = 0
    verbose: bool = False

    def __post_init__(self):
        if min(self.abs_tol, self.rel_tol, self.feas_tol) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolverResult:
    status: SolverStatus
    x: np.ndarray | None
    obj: float
    kkt: tuple[float, float, float]  # (primal res, dual res, gap)
    iters: int

    @property
    def ok(self) -> bool:
        return self.status in (SolverStatus.OPTIMAL, SolverStatus.ALMOST_OPTIMAL)


class SolverError(RuntimeError):
    pass


# ----------------------------------------------------------------------
# cone helpers: K = R+^l x Q_{q1} x ... ; vectors are stacked blocks


class Cone:
    def __init__(self, dims_l: int, dims_q: list[int]):
        self.l = dims_l
        self.q = list(dims_q)
        self.dim = dims_l + sum(dims_q)
        self.degree = dims_l + len(dims_q)
        self.slices = []
        off = dims_l
        for d in dims_q:
            self.slices.append(slice(off, off + d))
            off += d

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[:self.l] = 1.0
        for sl in self.slices:
            e[sl.start] = 1.0
        return e

    def margin(self, u: np.ndarray) -> float:
        """Positive if u is strictly inside the cone."""
        m = u[:self.l].min() if self.l else np.inf
        for sl in self.slices:
            blk = u[sl]
            m = min(m, blk[0] - np.linalg.norm(blk[1:]))
        return float(m)

    def max_step(self, u: np.ndarray, du: np.ndarray) -> float:
        """Largest alpha with u + alpha*du still in the cone (u interior)."""
        alpha = np.inf
        if self.l:
            neg = du[:self.l] < 0
            if neg.any():
                alpha = float(np.min(-u[:self.l][neg] / du[:self.l][neg]))
        for sl in self.slices:
            ub, db = u[sl], du[sl]
            a = db[0] ** 2 - db[1:] @ db[1:]
            b2 = ub[0] * db[0] - ub[1:] @ db[1:]
            c0 = ub[0] ** 2 - ub[1:] @ ub[1:]
            c0 = max(c0, 0.0)
            root = _smallest_positive_root(a, b2, c0)
            if root is not None:
                alpha = min(alpha, root)
        return alpha

    def jprod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jordan product u o v."""
        out = np.empty(self.dim)
        out[:self.l] = u[:self.l] * v[:self.l]
        for sl in self.slices:
            ub, vb = u[sl], v[sl]
            out[sl.start] = ub @ vb
            out[sl.start + 1:sl.stop] = ub[0] * vb[1:] + vb[0] * ub[1:]
        return out

    def jsolve(self, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Solve lam o x = d for x."""
        out = np.empty(self.dim)
        out[:self.l] = d[:self.l] / lam[:self.l]
        for sl in self.slices:
            lb, db = lam[sl], d[sl]
            det = lb[0] ** 2 - lb[1:] @ lb[1:]
            x0 = (lb[0] * db[0] - lb[1:] @ db[1:]) / det
            out[sl.start] = x0
            out[sl.start + 1:sl.stop] = (db[1:] - x0 * lb[1:]) / lb[0]
        return out


def _smallest_positive_root(a: float, b2: float, c0: float) -> float | None:
    """Smallest positive root of a*t^2 + 2*b2*t + c0 = 0 (c0 >= 0)."""
    if a == 0.0:
        if b2 < 0:
            return c0 / (-2.0 * b2)
        return None
    disc = b2 * b2 - a * c0
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    # stable quadratic roots
    if b2 >= 0:
        q = -(b2 + sq)
    else:
        q = -(b2 - sq)
    roots = []
    if q != 0.0:
        roots.append(c0 / q)
    if a != 0.0 and q != 0.0:
        roots.append(q / a)
    pos = [r for r in roots if r > 0]
    return min(pos) if pos else None


class NTScaling:
    """Nesterov-Todd scaling point for a composite cone.

    W is symmetric; lam = W z = W^{-1} s is the scaled point.
    """

    def __init__(self, cone: Cone, s: np.ndarray, z: np.ndarray):
        self.cone = cone
        self.w_lin = np.sqrt(s[:cone.l] / z[:cone.l]) if cone.l else np.empty(0)
        self.soc = []  # per block: (eta, wbar)
        for sl in cone.slices:
            sb, zb = s[sl], z[sl]
            snorm = math.sqrt(max(sb[0] ** 2 - sb[1:] @ sb[1:], 1e-300))
            znorm = math.sqrt(max(zb[0] ** 2 - zb[1:] @ zb[1:], 1e-300))
            sbar, zbar = sb / snorm, zb / znorm
            gamma = math.sqrt((1.0 + sbar @ zbar) / 2.0)
            wbar = np.empty(len(sb))
            wbar[0] = (sbar[0] + zbar[0]) / (2 * gamma)
            wbar[1:] = (sbar[1:] - zbar[1:]) / (2 * gamma)
            eta = math.sqrt(snorm / znorm)
            self.soc.append((eta, wbar))
        self.lam = self.mult_W(z)

    def _soc_mult(self, eta, wbar, u, inv: bool):
        sgn = -1.0 if inv else 1.0
        scale = 1.0 / eta if inv else eta
        out = np.empty_like(u)
        w1u1 = wbar[1:] @ u[1:]
        out[0] = wbar[0] * u[0] + sgn * w1u1
        out[1:] = u[1:] + (sgn * u[0] + w1u1 / (1.0 + wbar[0])) * wbar[1:]
        return scale * out

    def mult_W(self, u: np.ndarray) -> np.ndarray:
        out = np.empty(self.cone.dim)
        out[:self.cone.l] = self.w_lin * u[:self.cone.l]
        for (eta, wbar), sl in zip(self.soc, self.cone.slices):
            out[sl] = self._soc_mult(eta, wbar, u[sl], inv=False)
        return out

    def mult_Winv(self, u: np.ndarray) -> np.ndarray:
        out = np.empty(self.cone.dim)
        out[:self.cone.l] = u[:self.cone.l] / self.w_lin
        for (eta, wbar), sl in zip(self.soc, self.cone.slices):
            out[sl] = self._soc_mult(eta, wbar, u[sl], inv=True)
        return out

    def W2_blocks(self):
        """W^2 as (diag_vector, [dense blocks]) for KKT assembly."""
        blocks = []
        for eta, wbar in self.soc:
            d = len(wbar)
            B = 2.0 * np.outer(wbar, wbar)
            B[0, 0] -= 1.0
            B[np.arange(1, d), np.arange(1, d)] += 1.0
            blocks.append(eta * eta * B)
        return self.w_lin ** 2, blocks


# ----------------------------------------------------------------------


def _equilibrate(data: ConicData, iters: int):
    """Ruiz equilibration of [A; G] with per-cone uniform row scaling."""
    A, G = data.A.tocsr(), data.G.tocsr()
    p, m, n = A.shape[0], G.shape[0], A.shape[1]
    d = np.ones(n)
    e = np.ones(p + m)
    # row groups: each eq/lin row alone, each SOC block together
    groups = [np.arange(p + data.dims_l)]
    off = p + data.dims_l
    for q in data.dims_q:
        groups.append(np.arange(off, off + q))
        off += q

    M = sp.vstack([A, G]).tocsr()
    for _ in range(iters):
        Ms = sp.diags(e) @ M @ sp.diags(d)
        Ms = Ms.tocsr()
        row_max = np.zeros(p + m)
        abs_M = abs(Ms)
        row_max = abs_M.max(axis=1).toarray().ravel()
        # per-group: single rows for the first group, shared max for cones
        new_e = e.copy()
        first = groups[0]
        rm = row_max[first]
        nz = rm > 0
        new_e[first[nz]] = e[first[nz]] / np.sqrt(rm[nz])
        for grp in groups[1:]:
            gm = row_max[grp].max()
            if gm > 0:
                new_e[grp] = e[grp] / math.sqrt(gm)
        e = new_e
        Ms = sp.diags(e) @ M @ sp.diags(d)
        col_max = abs(Ms.tocsc()).max(axis=0).toarray().ravel()
        nz = col_max > 0
        d[nz] /= np.sqrt(col_max[nz])

    eA, eG = e[:p], e[p:]
    scaled = ConicData(
        c=data.c * d,
        A=(sp.diags(eA) @ A @ sp.diags(d)).tocsr(),
        b=data.b * eA,
        G=(sp.diags(eG) @ G @ sp.diags(d)).tocsr(),
        h=data.h * eG,
        dims_l=data.dims_l, dims_q=data.dims_q, obj_offset=data.obj_offset,
    )
    return scaled, d, eA, eG


class _KKT:
    """Factorization of the regularized 3x3 KKT system."""

    def __init__(self, data: ConicData, cone: Cone, reg: float):
        self.data = data
        self.cone = cone
        self.reg = reg
        self.n = len(data.c)
        self.p = data.A.shape[0]
        self.m = cone.dim

    def factor(self, scaling: NTScaling):
        n, p, m = self.n, self.p, self.m
        diag_lin, blocks = scaling.W2_blocks()
        w2 = sp.block_diag(
            [sp.diags(diag_lin)] + [sp.csc_matrix(B) for B in blocks],
            format="csc") if (self.cone.l or blocks) else sp.csc_matrix((0, 0))
        reg = self.reg
        A, G = self.data.A, self.data.G
        K = sp.bmat([
            [sp.diags(np.full(n, reg)), A.T, G.T],
            [A, sp.diags(np.full(p, -reg)) if p else None, None],
            [G, None, -(w2 + sp.diags(np.full(m, reg)))],
        ], format="csc")
        self._K_unreg = sp.bmat([
            [None, A.T, G.T],
            [A, sp.csc_matrix((p, p)) if p else None, None],
            [G, None, -w2],
        ], format="csc")
        self.lu = spla.splu(K)

    def solve(self, rx: np.ndarray, ry: np.ndarray, rz: np.ndarray,
              refine: int = 2):
        rhs = np.concatenate([rx, ry, rz])
        sol = self.lu.solve(rhs)
        for _ in range(refine):
            resid = rhs - self._K_unreg @ sol
            sol = sol + self.lu.solve(resid)
        n, p = self.n, self.p
        return sol[:n], sol[n:n + p], sol[n + p:]


def solve(program: ConicProgram, settings: SolverSettings | None = None,
          warm_start: np.ndarray | None = None) -> SolverResult:
    """Solve the program (maximization) and return the primal solution.

    On a numerical failure or iteration limit the solve is retried once
    with heavier static regularization; the iterative refinement against
    the unregularized system keeps the extra regularization harmless on
    well-conditioned problems, and it rescues degenerate ones.
    """
    settings = settings or SolverSettings()
    data = program.conic_data()
    result = solve_conic_data(data, settings, warm_start=warm_start)
    if result.status in (SolverStatus.NUMERICAL_FAILURE,
                         SolverStatus.ITER_LIMIT):
        heavier = replace(settings,
                          static_regularization=max(
                              100.0 * settings.static_regularization, 1e-7))
        retry = solve_conic_data(data, heavier, warm_start=warm_start)
        if retry.ok or (retry.kkt is not None and result.kkt is not None
                        and max(retry.kkt) < max(result.kkt)):
            return retry
    return result


def solve_conic_data(data: ConicData, settings: SolverSettings,
                     warm_start: np.ndarray | None = None) -> SolverResult:
    # presolve: drop structurally empty equality rows
    if data.A.shape[0]:
        row_nnz = np.diff(data.A.indptr)
        empty = row_nnz == 0
        if empty.any():
            if np.any(np.abs(data.b[empty]) > 0):
                return SolverResult(SolverStatus.INFEASIBLE, None, np.nan,
                                    (np.inf, np.inf, np.inf), 0)
            keep = ~empty
            data = ConicData(c=data.c, A=data.A[keep], b=data.b[keep],
                             G=data.G, h=data.h, dims_l=data.dims_l,
                             dims_q=data.dims_q, obj_offset=data.obj_offset)

    sdata, dcol, eA, eG = _equilibrate(data, settings.equilibrate_iters)
    cone = Cone(sdata.dims_l, sdata.dims_q)
    n, p, m = len(sdata.c), sdata.A.shape[0], cone.dim
    if m == 0:
        raise SolverError("program has no conic constraints")

    c, b, h = sdata.c, sdata.b, sdata.h
    A, G = sdata.A, sdata.G

    e = cone.identity()
    x = np.zeros(n)
    y = np.zeros(p)
    z = e.copy()
    s = e.copy()
    tau, kappa = 1.0, 1.0

    if warm_start is not None and len(warm_start) == n:
        x0 = warm_start / dcol
        s0 = h - G @ x0
        if cone.margin(s0) > 1e-8 * (1 + np.linalg.norm(s0)):
            x, s = x0, s0

    norm_b = 1.0 + np.linalg.norm(b)
    norm_h = 1.0 + np.linalg.norm(h)
    norm_c = 1.0 + np.linalg.norm(c)

    kkt = _KKT(sdata, cone, settings.static_regularization)
    nu = cone.degree + 1

    best = None
    status = SolverStatus.ITER_LIMIT
    iters = 0

    def current_metrics():
        xs, ys, zs, ss = x / tau, y / tau, z / tau, s / tau
        pres = max(
            np.linalg.norm(A @ xs - b) / norm_b if p else 0.0,
            np.linalg.norm(G @ xs + ss - h) / norm_h,
        )
        dres = np.linalg.norm((A.T @ ys if p else 0.0) + G.T @ zs + c) / norm_c
        pobj = float(c @ xs)
        dobj = float(-(b @ ys if p else 0.0) - h @ zs)
        gap = float(s @ z) / tau**2
        # the modeled objective may carry a large constant offset; measure
        # the relative gap against the true objective value
        relgap = gap / max(1.0, abs(-pobj + sdata.obj_offset))
        return pres, dres, gap, relgap, pobj, dobj, xs

    for iters in range(1, settings.max_ipm_iters + 1):
        pres, dres, gap, relgap, pobj, dobj, xs = current_metrics()
        if settings.verbose:
            print(f"it {iters:3d} pres {pres:9.2e} dres {dres:9.2e} "
                  f"gap {gap:9.2e} pobj {pobj:12.5e} dobj {dobj:12.5e} "
                  f"tau {tau:9.2e} kappa {kappa:9.2e}")
        # progress is tracked against the solver-internal objective scale;
        # the offset-corrected relgap can look worse as pobj approaches
        # the modeling offset even while the iterates improve
        err = max(pres, dres, gap / max(1.0, abs(pobj)))
        if best is None or err < best[0]:
            best = (err, xs.copy(), pobj, (pres, dres, gap), iters)

        if (pres <= settings.feas_tol and dres <= settings.feas_tol
                and (gap <= settings.abs_tol or relgap <= settings.rel_tol)):
            status = SolverStatus.OPTIMAL
            break
        if iters - best[4] > 15:
            # numerical floor: nothing improved for a stretch of iterations
            break

        # infeasibility / unboundedness certificates
        by_hz = float((b @ y if p else 0.0) + h @ z)
        cx = float(c @ x)
        if tau <= 1e-10 * max(1.0, kappa):
            # a certificate is only trusted if its Farkas value is both
            # accurate (small residual) and significant relative to the
            # certificate's own norm; weak certificates routinely appear
            # when a feasible problem hits its numerical floor
            cert_norm_d = math.hypot(np.linalg.norm(y) if p else 0.0,
                                     np.linalg.norm(z))
            cert_norm_p = math.hypot(np.linalg.norm(x), np.linalg.norm(s))
            if settings.verbose:
                cert_res = np.linalg.norm((A.T @ y if p else 0.0) + G.T @ z)
                print(f"  cert: by_hz {by_hz:9.2e} res {cert_res:9.2e} "
                      f"|yz| {cert_norm_d:9.2e} cx {cx:9.2e}")
            if (by_hz < 0 and -by_hz >= 1e-6 * cert_norm_d
                    and np.linalg.norm((A.T @ y if p else 0.0) + G.T @ z)
                    <= 1e-8 * (-by_hz)):
                status = SolverStatus.INFEASIBLE
                break
            if (cx < 0 and -cx >= 1e-6 * cert_norm_p
                    and max(np.linalg.norm(A @ x) if p else 0.0,
                            np.linalg.norm(G @ x + s)) <= 1e-8 * (-cx)):
                status = SolverStatus.UNBOUNDED
                break
            # tau collapsed without a trustworthy certificate
            status = SolverStatus.NUMERICAL_FAILURE
            break

        mu = (float(s @ z) + tau * kappa) / nu

        try:
            scaling = NTScaling(cone, s, z)
            kkt.factor(scaling)
        except (RuntimeError, ValueError, FloatingPointError):
            status = SolverStatus.NUMERICAL_FAILURE
            break

        lam = scaling.lam
        # residuals of the self-dual system
        rx = (A.T @ y if p else np.zeros(n)) + G.T @ z + c * tau
        ry = (A @ x - b * tau) if p else np.zeros(0)
        rz = G @ x + s - h * tau
        rtau = cx + by_hz + kappa

        # constant-column solve, shared by both directions
        x2, y2, z2 = kkt.solve(-c, b, h)

        def direction(eta: float, ds_rhs: np.ndarray, dkappa_rhs: float):
            bx, by, bz = -eta * rx, -eta * ry, -eta * rz
            bz_mod = bz - scaling.mult_W(cone.jsolve(lam, ds_rhs))
            x1, y1, z1 = kkt.solve(bx, by, bz_mod)
            num = (-eta * rtau - dkappa_rhs / tau
                   - (c @ x1 + (b @ y1 if p else 0.0) + h @ z1))
            den = (c @ x2 + (b @ y2 if p else 0.0) + h @ z2) - kappa / tau
            if den == 0.0 or not np.isfinite(den):
                raise FloatingPointError("singular tau equation")
            dtau = num / den
            dx = x1 + dtau * x2
            dy = y1 + dtau * y2
            dz = z1 + dtau * z2
            ds = scaling.mult_W(cone.jsolve(lam, ds_rhs)) \
                - scaling.mult_W(scaling.mult_W(dz))
            dkappa = (dkappa_rhs - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def step_len(dz, ds, dtau, dkappa):
            alpha = min(cone.max_step(s, ds), cone.max_step(z, dz))
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkappa < 0:
                alpha = min(alpha, -kappa / dkappa)
            return min(alpha, 1.0)

        try:
            lam2 = cone.jprod(lam, lam)
            dxa, dya, dza, dsa, dtaua, dkapa = direction(
                1.0, -lam2, -tau * kappa)
            alpha_aff = step_len(dza, dsa, dtaua, dkapa)
            mu_aff = (float((s + alpha_aff * dsa) @ (z + alpha_aff * dza))
                      + (tau + alpha_aff * dtaua) * (kappa + alpha_aff * dkapa)) / nu
            sigma = min(1.0, max(0.0, (mu_aff / mu))) ** 3

            corr = cone.jprod(scaling.mult_Winv(dsa), scaling.mult_W(dza))
            ds_rhs = -lam2 - corr + sigma * mu * e
            dkap_rhs = -tau * kappa - dtaua * dkapa + sigma * mu
            dx, dy, dz, ds, dtau, dkappa = direction(1.0 - sigma, ds_rhs, dkap_rhs)
        except FloatingPointError:
            status = SolverStatus.NUMERICAL_FAILURE
            break

        alpha = 0.99 * step_len(dz, ds, dtau, dkappa)
        if alpha <= 1e-14:
            status = SolverStatus.NUMERICAL_FAILURE
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa
        if not (np.isfinite(x).all() and np.isfinite(z).all()
                and np.isfinite(s).all() and math.isfinite(tau)
                and math.isfinite(kappa)):
            status = SolverStatus.NUMERICAL_FAILURE
            break

    pres, dres, gap, relgap, pobj, dobj, xs = current_metrics()
    if status is SolverStatus.OPTIMAL:
        x_out = xs * dcol
        return SolverResult(SolverStatus.OPTIMAL, x_out,
                            -pobj + data.obj_offset, (pres, dres, gap), iters)
    if status in (SolverStatus.INFEASIBLE, SolverStatus.UNBOUNDED):
        return SolverResult(status, None, np.nan, (pres, dres, gap), iters)

    # fall back to the best iterate seen; classify as almost-optimal if close
    err, xbest, pobj_best, kkt_best, _ = best
    loose_feas, loose_gap = 1e4, 1e5
    if (kkt_best[0] <= loose_feas * settings.feas_tol
            and kkt_best[1] <= loose_feas * settings.feas_tol
            and kkt_best[2] / max(1.0, abs(-pobj_best + data.obj_offset))
            <= loose_gap * settings.rel_tol):
        return SolverResult(SolverStatus.ALMOST_OPTIMAL, xbest * dcol,
                            -pobj_best + data.obj_offset, kkt_best, iters)
    return SolverResult(status, xbest * dcol, -pobj_best + data.obj_offset,
                        kkt_best, iters)
