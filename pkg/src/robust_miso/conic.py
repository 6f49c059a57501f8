"""Dense conic solver for small standard-form programs.

Solves
    minimize    <c, x>
    subject to  A x = b,   x in K,
where K is a product of nonnegative-orthant and real PSD blocks, the latter
handled in scaled symmetric vectorization (svec) so that the Euclidean inner
product on x matches the trace inner product on the matrices.

Algorithm: Mehrotra-style predictor-corrector path following with
Nesterov-Todd scaling on the homogeneous self-dual embedding

    s = -A^T y + c tau,   0 = A x - b tau,   kappa = -<c,x> + <b,y>,

so primal/dual infeasibility certificates fall out of the tau/kappa split
instead of needing a separate phase. Per iteration the Newton system reduces
to an m x m Schur complement A H^-1 A^T (H is the NT scaling Hessian, whose
inverse is available in closed form), factored by Cholesky with iterative
refinement against the full augmented system.

Free variables are not supported; callers encode them with equalities plus
cone blocks. Complex Hermitian blocks enter through their 2n x 2n real
embedding (see robust_miso.hermitian.real_embedding).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

DEFAULT_TOL_FEAS = 1e-8
DEFAULT_TOL_GAP = 1e-8
DEFAULT_TOL_INF = 1e-8
DEFAULT_MAX_ITER = 200

# Fraction-to-boundary factor for combined steps.
_STEP_ETA = 0.99
# Iterative refinement passes on each KKT solve.
_KKT_REFINE = 2
# Consecutive tiny steps / stalled iterations tolerated before re-centering.
_STALL_STEPS = 3
_STALL_ITERS = 10


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class NonNeg:
    """Nonnegative orthant block of the given length."""

    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("NonNeg length must be positive")

    @property
    def dim(self) -> int:
        return self.length

    @property
    def barrier(self) -> int:
        return self.length


@dataclass(frozen=True)
class Psd:
    """Real symmetric PSD block of the given matrix order, svec-packed."""

    order: int

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("Psd order must be positive")

    @property
    def dim(self) -> int:
        return self.order * (self.order + 1) // 2

    @property
    def barrier(self) -> int:
        return self.order


Cone = NonNeg | Psd


@lru_cache(maxsize=None)
def _svec_index(p: int):
    iu, ju = np.triu_indices(p)
    enc = np.where(iu == ju, 1.0, np.sqrt(2.0))
    return iu, ju, enc


def svec(m: np.ndarray) -> np.ndarray:
    """Scaled upper-triangular vectorization; supports stacked (..., p, p)."""
    p = m.shape[-1]
    iu, ju, enc = _svec_index(p)
    return m[..., iu, ju] * enc


def smat(v: np.ndarray, p: int) -> np.ndarray:
    """Inverse of svec; supports stacked (..., d) input."""
    iu, ju, enc = _svec_index(p)
    out = np.zeros(v.shape[:-1] + (p, p), dtype=v.dtype)
    out[..., iu, ju] = v / enc
    out[..., ju, iu] = out[..., iu, ju]
    return out


def cone_dim(cones: tuple[Cone, ...] | list[Cone]) -> int:
    return sum(k.dim for k in cones)


def cone_identity(cones: list[Cone]) -> np.ndarray:
    parts = []
    for k in cones:
        if isinstance(k, NonNeg):
            parts.append(np.ones(k.length))
        else:
            parts.append(svec(np.eye(k.order)))
    return np.concatenate(parts) if parts else np.zeros(0)


def cone_min_eig(v: np.ndarray, cones: list[Cone]) -> float:
    """Smallest 'eigenvalue' of v across blocks (entries for NonNeg)."""
    worst = np.inf
    off = 0
    for k in cones:
        seg = v[off : off + k.dim]
        if isinstance(k, NonNeg):
            worst = min(worst, float(np.min(seg)))
        else:
            worst = min(worst, float(np.linalg.eigvalsh(smat(seg, k.order))[0]))
        off += k.dim
    return worst


def cone_project(v: np.ndarray, cones: list[Cone]) -> np.ndarray:
    """Euclidean projection onto K, used for certificate distance checks."""
    out = np.empty_like(v)
    off = 0
    for k in cones:
        seg = v[off : off + k.dim]
        if isinstance(k, NonNeg):
            out[off : off + k.dim] = np.maximum(seg, 0.0)
        else:
            lam, q = np.linalg.eigh(smat(seg, k.order))
            out[off : off + k.dim] = svec((q * np.maximum(lam, 0.0)) @ q.T)
        off += k.dim
    return out


def cone_distance(v: np.ndarray, cones: list[Cone]) -> float:
    return float(np.linalg.norm(v - cone_project(v, cones)))


@dataclass
class ConicProgram:
    """Problem data: min <c,x> s.t. A x = b, x in the product cone."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: list[Cone]

    def __post_init__(self):
        self.c = np.ascontiguousarray(self.c, dtype=float).reshape(-1)
        self.A = np.ascontiguousarray(self.A, dtype=float)
        self.b = np.ascontiguousarray(self.b, dtype=float).reshape(-1)
        if self.A.ndim != 2:
            raise ValueError("A must be a 2-d array")
        n = cone_dim(self.cones)
        if not self.cones:
            raise ValueError("at least one cone block is required")
        if self.A.shape != (self.b.size, self.c.size) or self.c.size != n:
            raise ValueError(
                f"inconsistent dimensions: A {self.A.shape}, b {self.b.size}, "
                f"c {self.c.size}, cones {n}"
            )
        if self.b.size < 1:
            raise ValueError("at least one equality row is required")
        for arr in (self.c, self.A, self.b):
            if not np.all(np.isfinite(arr)):
                raise ValueError("problem data must be finite")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size


@dataclass(frozen=True)
class SolverSettings:
    tol_feas: float = DEFAULT_TOL_FEAS
    tol_gap: float = DEFAULT_TOL_GAP
    tol_inf: float = DEFAULT_TOL_INF
    max_iter: int = DEFAULT_MAX_ITER


@dataclass
class SolveOutcome:
    """Result of a solve.

    At OPTIMAL, (x, y, s) is the scaled primal-dual pair and objective the
    primal value <c, x>. At PRIMAL_INFEASIBLE, y is a Farkas certificate
    normalized to <b, y> = 1 with -A^T y within tol of the cone (s holds that
    near-member). At DUAL_INFEASIBLE, x is an improving ray normalized to
    <c, x> = -1 with A x ~ 0. Residual fields always refer to the returned
    point.
    """

    status: Status
    x: np.ndarray | None
    y: np.ndarray | None
    s: np.ndarray | None
    objective: float
    dual_objective: float
    iterations: int
    primal_res: float
    dual_res: float
    gap_res: float
    cert_res: float = np.nan
    message: str = ""


class _PsdGroup:
    """All PSD blocks of one order, batched along the leading axis."""

    def __init__(self, order: int, offsets: list[int]):
        self.p = order
        self.q = len(offsets)
        self.d = order * (order + 1) // 2
        cols = [np.arange(off, off + self.d) for off in offsets]
        self.cols = np.concatenate(cols)

    def gather(self, v: np.ndarray) -> np.ndarray:
        """(n,) vector -> (q, p, p) stacked symmetric matrices."""
        return smat(v[self.cols].reshape(self.q, self.d), self.p)

    def gather_rows(self, a: np.ndarray) -> np.ndarray:
        """(m, n) matrix -> (m, q, p, p) stacked row blocks."""
        m = a.shape[0]
        return smat(a[:, self.cols].reshape(m, self.q, self.d), self.p)

    def scatter(self, out: np.ndarray, mats: np.ndarray) -> None:
        out[self.cols] = svec(mats).reshape(-1)


class _Workspace:
    def __init__(self, prog: ConicProgram):
        self.prog = prog
        off = 0
        nn_cols = []
        psd_offsets: dict[int, list[int]] = {}
        for k in prog.cones:
            if isinstance(k, NonNeg):
                nn_cols.append(np.arange(off, off + k.length))
            else:
                psd_offsets.setdefault(k.order, []).append(off)
            off += k.dim
        self.nn = np.concatenate(nn_cols) if nn_cols else np.zeros(0, dtype=int)
        self.groups = [_PsdGroup(p, offs) for p, offs in sorted(psd_offsets.items())]
        self.nu = sum(k.barrier for k in prog.cones)
        self.e = cone_identity(prog.cones)
        # Row blocks of A in matrix form, fixed across iterations.
        self.a_mats = [g.gather_rows(prog.A) for g in self.groups]


class _Scaling:
    """Nesterov-Todd scaling state for one iterate (x, s).

    The scaling map F satisfies F^-1 x = F^T s = lambda (the scaled point).
    All KKT arithmetic happens in scaled coordinates: an element of the
    scaled space is stored as a plain n-vector in the same svec layout as x,
    so the Gram matrix G = A F acts on it by ordinary matrix product.
    """

    def __init__(self, ws: _Workspace, x: np.ndarray, s: np.ndarray):
        self.ws = ws
        xn, sn = x[ws.nn], s[ws.nn]
        if np.any(xn <= 0) or np.any(sn <= 0):
            raise np.linalg.LinAlgError("nonnegative block left the interior")
        self.w = np.sqrt(xn / sn)
        self.lam_nn = np.sqrt(xn * sn)
        self.R, self.Rinv, self.lam_psd = [], [], []
        for g in ws.groups:
            xm, sm = g.gather(x), g.gather(s)
            lx = np.linalg.cholesky(xm)
            ls = np.linalg.cholesky(sm)
            u, sig, vt = np.linalg.svd(np.matmul(ls.transpose(0, 2, 1), lx))
            if np.any(sig <= 0):
                raise np.linalg.LinAlgError("PSD block left the interior")
            isq = 1.0 / np.sqrt(sig)
            r = np.matmul(lx, vt.transpose(0, 2, 1)) * isq[:, None, :]
            rinv = np.matmul(isq[:, :, None] * u.transpose(0, 2, 1), ls.transpose(0, 2, 1))
            self.R.append(r)
            self.Rinv.append(rinv)
            self.lam_psd.append(sig)

    def fwd_x(self, v: np.ndarray) -> np.ndarray:
        """F v: maps a scaled direction back to x-space."""
        out = np.zeros_like(v)
        out[self.ws.nn] = v[self.ws.nn] * self.w
        for g, r in zip(self.ws.groups, self.R):
            g.scatter(out, np.matmul(r, np.matmul(g.gather(v), r.transpose(0, 2, 1))))
        return out

    def scale_s(self, v: np.ndarray) -> np.ndarray:
        """F^T v: maps an s-space vector into scaled coordinates."""
        out = np.zeros_like(v)
        out[self.ws.nn] = v[self.ws.nn] * self.w
        for g, r in zip(self.ws.groups, self.R):
            g.scatter(out, np.matmul(r.transpose(0, 2, 1), np.matmul(g.gather(v), r)))
        return out

    def unscale_s(self, v: np.ndarray) -> np.ndarray:
        """F^-T v: maps a scaled direction back to s-space."""
        out = np.zeros_like(v)
        out[self.ws.nn] = v[self.ws.nn] / self.w
        for g, rinv in zip(self.ws.groups, self.Rinv):
            g.scatter(
                out,
                np.matmul(rinv.transpose(0, 2, 1), np.matmul(g.gather(v), rinv)),
            )
        return out

    def lam_div(self, v: np.ndarray) -> np.ndarray:
        """Inverse of the Jordan product with lambda, blockwise."""
        out = np.zeros_like(v)
        out[self.ws.nn] = v[self.ws.nn] / self.lam_nn
        for g, lam in zip(self.ws.groups, self.lam_psd):
            denom = 0.5 * (lam[:, :, None] + lam[:, None, :])
            g.scatter(out, g.gather(v) / denom)
        return out

    def scaled_gram(self) -> np.ndarray:
        """G = A F row by row, so G G^T = A H^-1 A^T."""
        a = self.ws.prog.A
        g_out = np.empty_like(a)
        g_out[:, self.ws.nn] = a[:, self.ws.nn] * self.w[None, :]
        for g, r, am in zip(self.ws.groups, self.R, self.ws.a_mats):
            tr = np.matmul(r.transpose(0, 2, 1)[None], np.matmul(am, r[None]))
            g_out[:, g.cols] = svec(tr).reshape(a.shape[0], -1)
        return g_out

    def step_limit(self, v: np.ndarray) -> float:
        """Largest alpha keeping lambda + alpha * v (scaled) in the cone."""
        worst = 0.0
        if self.ws.nn.size:
            worst = max(worst, float(np.max(-v[self.ws.nn] / self.lam_nn)))
        for g, lam in zip(self.ws.groups, self.lam_psd):
            isq = 1.0 / np.sqrt(lam)
            t = g.gather(v) * isq[:, :, None] * isq[:, None, :]
            t = 0.5 * (t + t.transpose(0, 2, 1))
            worst = max(worst, float(np.max(-np.linalg.eigvalsh(t)[:, 0])))
        return np.inf if worst <= 0 else 1.0 / worst


def _batch_diag(vals: np.ndarray) -> np.ndarray:
    q, p = vals.shape
    out = np.zeros((q, p, p))
    idx = np.arange(p)
    out[:, idx, idx] = vals
    return out


def _mehrotra_recenter(ws: _Workspace, x: np.ndarray, s: np.ndarray):
    """Push an iterate back toward the central ray (one-shot restart)."""
    prog = ws.prog
    ex = cone_min_eig(x, prog.cones)
    es = cone_min_eig(s, prog.cones)
    dx = max(0.0, -1.5 * ex) + 1e-8
    ds = max(0.0, -1.5 * es) + 1e-8
    xh = x + dx * ws.e
    sh = s + ds * ws.e
    dot = float(xh @ sh)
    x_new = xh + (0.5 * dot / float(ws.e @ sh)) * ws.e
    s_new = sh + (0.5 * dot / float(ws.e @ xh)) * ws.e
    return x_new, s_new


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> SolveOutcome:
    """Run the interior-point iteration, returning a certified outcome."""
    cfg = settings or SolverSettings()
    ws = _Workspace(prog)
    a, b, c = prog.A, prog.b, prog.c
    m, n = prog.m, prog.n
    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + np.linalg.norm(c)

    x = ws.e.copy()
    s = ws.e.copy()
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0

    best = None  # (score, outcome fields) fallback diagnostics
    restarted = False
    tiny_steps = 0
    mu_hist: list[float] = []
    it = 0

    def _classify(it: int) -> SolveOutcome | None:
        nonlocal best
        # Optimality on the tau-scaled point.
        xh, yh, sh = x / tau, y / tau, s / tau
        pobj, dobj = float(c @ xh), float(b @ yh)
        pres = float(np.linalg.norm(a @ xh - b)) / norm_b
        dres = float(np.linalg.norm(a.T @ yh + sh - c)) / norm_c
        gap = abs(pobj - dobj) / (1.0 + abs(pobj))
        score = max(pres, dres, gap)
        if best is None or score < best[0]:
            best = (score, xh.copy(), yh.copy(), sh.copy(), pobj, dobj, pres, dres, gap, it)
        if pres <= cfg.tol_feas and dres <= cfg.tol_feas and gap <= cfg.tol_gap:
            return SolveOutcome(
                Status.OPTIMAL, xh, yh, sh, pobj, dobj, it, pres, dres, gap
            )
        # Infeasibility certificates from the homogeneous part.
        by = float(b @ y)
        if by > 0:
            res = float(np.linalg.norm(a.T @ y + s)) * max(1.0, np.linalg.norm(b))
            if res <= cfg.tol_inf * by:
                yn, sn = y / by, s / by
                cert = cone_distance(-(a.T @ yn), prog.cones)
                return SolveOutcome(
                    Status.PRIMAL_INFEASIBLE, None, yn, sn, np.nan, np.nan, it,
                    np.nan, np.nan, np.nan, cert_res=cert,
                    message="Farkas dual ray: <b,y>=1, -A^T y in cone",
                )
        cx = float(c @ x)
        if cx < 0:
            res = float(np.linalg.norm(a @ x)) * max(1.0, np.linalg.norm(c))
            if res <= cfg.tol_inf * (-cx):
                xn = x / (-cx)
                cert = float(np.linalg.norm(a @ xn))
                return SolveOutcome(
                    Status.DUAL_INFEASIBLE, xn, None, None, np.nan, np.nan, it,
                    np.nan, np.nan, np.nan, cert_res=cert,
                    message="improving ray: <c,x>=-1, A x ~ 0, x in cone",
                )
        return None

    def _fail(msg: str, it: int) -> SolveOutcome:
        _, xh, yh, sh, pobj, dobj, pres, dres, gap, _ = best
        return SolveOutcome(
            Status.NUMERICAL_FAILURE, xh, yh, sh, pobj, dobj, it, pres, dres, gap,
            message=msg,
        )

    while it < cfg.max_iter:
        out = _classify(it)
        if out is not None:
            return out

        mu = (float(x @ s) + tau * kappa) / (ws.nu + 1)
        mu_hist.append(mu)
        stalled = len(mu_hist) > _STALL_ITERS and mu > 0.5 * mu_hist[-_STALL_ITERS]

        try:
            if stalled and not restarted:
                raise np.linalg.LinAlgError("progress stalled")
            scal = _Scaling(ws, x, s)
            g_mat = scal.scaled_gram()
            schur = g_mat @ g_mat.T
            jitter = 0.0
            for attempt in range(4):
                try:
                    fac = sla.cho_factor(
                        schur + (jitter * np.eye(m) if jitter else 0.0),
                        lower=True, check_finite=False,
                    )
                    break
                except np.linalg.LinAlgError:
                    jitter = max(jitter * 100.0, 1e-13 * (1.0 + np.trace(schur) / m))
            else:
                raise np.linalg.LinAlgError("Schur factorization failed")
        except np.linalg.LinAlgError as exc:
            if restarted:
                return _fail(f"{exc}", it)
            x, s = _mehrotra_recenter(ws, x, s)
            tau, kappa = max(tau, 0.1), max(kappa, 0.1)
            restarted = True
            mu_hist.clear()
            continue

        qr_r: list[np.ndarray | None] = [None]

        def schur_chol(r: np.ndarray) -> np.ndarray:
            return sla.cho_solve(fac, r, check_finite=False)

        def schur_qr(r: np.ndarray) -> np.ndarray:
            z = sla.solve_triangular(qr_r[0], r, trans=1, check_finite=False)
            return sla.solve_triangular(qr_r[0], z, check_finite=False)

        def kkt(q1: np.ndarray, q2: np.ndarray, h: np.ndarray):
            # Solve ds + A^T dy = q1, A dx = q2 with the scaled-space
            # complementarity closure dxbar + dsbar = h. Everything is
            # eliminated through the same floating-point G, so iterative
            # refinement against the unscaled equations contracts reliably:
            #   dxbar = h - F^T q1 + G^T dy,   G G^T dy = q2 - G (h - F^T q1).
            scale = 1.0 + np.linalg.norm(q1) + np.linalg.norm(q2)
            u0 = h - scal.scale_s(q1)

            def run(solver):
                dy = solver(q2 - g_mat @ u0)
                xbar = u0 + g_mat.T @ dy
                state = (dy, xbar, np.inf)
                for _ in range(_KKT_REFINE + 1):
                    dx = scal.fwd_x(xbar)
                    ds = scal.unscale_s(h - xbar)
                    e1 = q1 - ds - a.T @ dy
                    e2 = q2 - a @ dx
                    res = (np.linalg.norm(e1) + np.linalg.norm(e2)) / scale
                    if res < state[2]:
                        state = (dy, xbar, res)
                    if res <= 1e-13 or res > 10.0 * state[2]:
                        break
                    # Correction solves the same system with zero h-part.
                    p = scal.scale_s(e1)
                    cy = solver(e2 + g_mat @ p)
                    dy = dy + cy
                    xbar = xbar + (g_mat.T @ cy - p)
                return state

            state = run(schur_chol)
            if state[2] > 1e-11 and m <= n:
                if qr_r[0] is None:
                    r_full = sla.qr(g_mat.T, mode="r", check_finite=False)[0]
                    qr_r[0] = np.ascontiguousarray(r_full[:m, :])
                try:
                    cand = run(schur_qr)
                    if np.isfinite(cand[2]) and cand[2] < state[2]:
                        state = cand
                except (np.linalg.LinAlgError, ValueError):
                    pass
            dy, xbar, _ = state
            dx = scal.fwd_x(xbar)
            ds = scal.unscale_s(h - xbar)
            sbar = h - xbar
            return dx, dy, ds, xbar, sbar

        rx = s + a.T @ y - c * tau
        ry = a @ x - b * tau
        rt = kappa + float(c @ x) - float(b @ y)

        zero_h = np.zeros(n)
        dx1, dy1, ds1, xb1, sb1 = kkt(c, b, zero_h)
        # <c, dx1> - <b, dy1> equals -|xbar1|^2 when the solve is exact;
        # using that form keeps the tau denominator strictly negative.
        den = -float(xb1 @ xb1) - kappa / tau
        if not np.isfinite(den) or den >= -1e-300:
            return _fail("degenerate tau equation", it)

        lam2_nn = scal.lam_nn**2
        lam2_psd = [sig * sig for sig in scal.lam_psd]

        def direction(d_vec, d_tau_rhs):
            h = scal.lam_div(d_vec)
            dx2, dy2, ds2, xb2, sb2 = kkt(-rx, -ry, h)
            gt = -rt - d_tau_rhs / tau
            dtau = (gt - float(c @ dx2) + float(b @ dy2)) / den
            dkap = (d_tau_rhs - kappa * dtau) / tau
            return (
                dx2 + dtau * dx1,
                dy2 + dtau * dy1,
                ds2 + dtau * ds1,
                xb2 + dtau * xb1,
                sb2 + dtau * sb1,
                dtau,
                dkap,
            )

        def step_limit(xbar, sbar, dtau, dkap):
            alpha = min(scal.step_limit(xbar), scal.step_limit(sbar))
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkap < 0:
                alpha = min(alpha, -kappa / dkap)
            return alpha

        # Predictor: pure Newton toward complementarity zero.
        aff_d = np.zeros(n)
        aff_d[ws.nn] = -lam2_nn
        for g, lam2 in zip(ws.groups, lam2_psd):
            g.scatter(aff_d, -_batch_diag(lam2))
        dxa, dya, dsa, xba, sba, dta, dka = direction(aff_d, -tau * kappa)
        alpha_aff = min(1.0, step_limit(xba, sba, dta, dka))
        mu_aff = (
            float((x + alpha_aff * dxa) @ (s + alpha_aff * dsa))
            + (tau + alpha_aff * dta) * (kappa + alpha_aff * dka)
        ) / (ws.nu + 1)
        sigma = min(0.999, max(1e-8, (max(mu_aff, 0.0) / mu) ** 3))

        # Corrector with Mehrotra second-order term.
        comb = np.zeros(n)
        comb[ws.nn] = sigma * mu - lam2_nn - xba[ws.nn] * sba[ws.nn]
        for g, lam2 in zip(ws.groups, lam2_psd):
            xm, sm = g.gather(xba), g.gather(sba)
            base = -0.5 * (np.matmul(xm, sm) + np.matmul(sm, xm))
            idx = np.arange(lam2.shape[1])
            base[:, idx, idx] += sigma * mu - lam2
            g.scatter(comb, base)
        d_tau_rhs = sigma * mu - tau * kappa - dta * dka
        dx, dy, ds, xb, sb, dtau, dkap = direction(comb, d_tau_rhs)

        alpha = min(1.0, _STEP_ETA * step_limit(xb, sb, dtau, dkap))
        if alpha <= 1e-8:
            tiny_steps += 1
        else:
            tiny_steps = 0
        if tiny_steps >= _STALL_STEPS:
            if restarted:
                return _fail("step length collapsed", it)
            x, s = _mehrotra_recenter(ws, x, s)
            tau, kappa = max(tau, 0.1), max(kappa, 0.1)
            restarted = True
            tiny_steps = 0
            mu_hist.clear()
            it += 1
            continue

        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap
        it += 1

    out = _classify(it)
    if out is not None:
        return out
    return _fail("iteration limit reached", it)
