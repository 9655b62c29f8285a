"""Interior-point solver for log-transformed geometric programs.

Damped Newton on the log-barrier of ``min F0(z) s.t. Fi(z) <= 0, Ez = e``
where every ``Fi`` is a log-sum-exp of affine forms (the image of a
posynomial under ``z = log y``).  Infeasible starts are recovered with a
standard phase-1 problem (minimize the uniform slack ``s``).

Everything is dense numpy; problem sizes here stay in the low thousands
of variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .program import ConvexGP

__all__ = ["SolveResult", "solve_convex", "NonConvergence", "Infeasible"]


class NonConvergence(RuntimeError):
    """Raised only when callers ask for strict mode; results carry flags."""


class Infeasible(RuntimeError):
    pass


@dataclass
class SolveResult:
    z: np.ndarray
    x: np.ndarray
    converged: bool
    kkt_residual: float
    objective: float
    newton_steps: int
    message: str = ""


# ---------------------------------------------------------------------------
# segment-wise LSE oracles
# ---------------------------------------------------------------------------

class _Oracles:
    def __init__(self, A: np.ndarray, b: np.ndarray, seg_ptr: np.ndarray):
        self.A = np.ascontiguousarray(A)
        self.b = b
        self.starts = seg_ptr[:-1]
        self.lengths = np.diff(seg_ptr)
        self.nf = len(self.starts)

    def values(self, z: np.ndarray) -> np.ndarray:
        t = self.A @ z + self.b
        mx = np.maximum.reduceat(t, self.starts)
        ex = np.exp(t - np.repeat(mx, self.lengths))
        s = np.add.reduceat(ex, self.starts)
        return mx + np.log(s)

    def values_weights(self, z: np.ndarray):
        t = self.A @ z + self.b
        mx = np.maximum.reduceat(t, self.starts)
        ex = np.exp(t - np.repeat(mx, self.lengths))
        s = np.add.reduceat(ex, self.starts)
        w = ex / np.repeat(s, self.lengths)
        return mx + np.log(s), w

    def grad_hess(self, z: np.ndarray, cg: np.ndarray, ch: np.ndarray,
                  d: np.ndarray):
        """Weighted gradient and Hessian of sum_i cg_i * F_i.

        ``ch`` weights the per-function LSE Hessians and ``d`` the rank-one
        corrections ``q_i q_i^T`` (with ``q_i = A_i^T w_i``), so that
        ``H = sum_i ch_i A_i^T W_i A_i + sum_i d_i q_i q_i^T``.
        """
        vals, w = self.values_weights(z)
        Aw = self.A * w[:, None]
        Q = np.add.reduceat(Aw, self.starts, axis=0)
        grad = Q.T @ cg
        H = self.A.T @ (Aw * np.repeat(ch, self.lengths)[:, None])
        H += Q.T @ (d[:, None] * Q)
        return vals, grad, H


def _solve_kkt(H: np.ndarray, E: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Newton step with equality constraints kept exactly (E dz = 0)."""
    n = H.shape[0]
    jitter = 1e-12 * (1.0 + np.trace(H) / n)
    for _ in range(8):
        try:
            if E.shape[0] == 0:
                return np.linalg.solve(H + jitter * np.eye(n), rhs)
            m = E.shape[0]
            K = np.zeros((n + m, n + m))
            K[:n, :n] = H + jitter * np.eye(n)
            K[:n, n:] = E.T
            K[n:, :n] = E
            sol = np.linalg.solve(K, np.concatenate([rhs, np.zeros(m)]))
            return sol[:n]
        except np.linalg.LinAlgError:
            jitter *= 100.0
    raise np.linalg.LinAlgError("KKT system singular beyond repair")


def _project_equalities(z: np.ndarray, E: np.ndarray, e: np.ndarray) -> np.ndarray:
    if E.shape[0] == 0:
        return z
    r = E @ z - e
    if np.max(np.abs(r)) < 1e-14:
        return z
    return z - E.T @ np.linalg.lstsq(E @ E.T, r, rcond=None)[0]


def _barrier_minimize(orc: _Oracles, E, e, z, t, eps_newton=1e-10,
                      max_newton=120):
    """Minimize t*F0(z) - sum log(-Fi(z)) over {Ez = e} from interior z.

    Damped Newton with an adaptive Levenberg shift: a failed line search
    inflates the shift (curing rank-deficient Hessians at box corners), a
    good step deflates it.
    """
    steps = 0
    damp = 0.0
    for _ in range(max_newton):
        vals = orc.values(z)
        g = vals[1:]
        if np.any(g >= 0.0):
            raise FloatingPointError("left the interior")
        cg = np.concatenate([[t], 1.0 / (-g)])
        ch = cg.copy()
        d = np.empty_like(cg)
        d[0] = -t
        d[1:] = (1.0 + g) / (g * g)
        _, grad, H = orc.grad_hess(z, cg, ch, d)
        scale = 1.0 + abs(np.trace(H)) / max(H.shape[0], 1)
        phi0 = t * vals[0] - np.log(-g).sum()
        accepted = False
        for _attempt in range(6):
            Hd = H + (damp * scale) * np.eye(H.shape[0]) if damp else H
            dz = _solve_kkt(Hd, E, -grad)
            lam2 = float(-grad @ dz)
            if lam2 <= 0.0:
                damp = max(damp * 100.0, 1e-10)
                continue
            if lam2 / 2.0 <= eps_newton and damp == 0.0:
                return z, steps
            # trust region in log space
            mx = np.max(np.abs(dz))
            if mx > 20.0:
                dz = dz * (20.0 / mx)
                lam2 = float(-grad @ dz)
            alpha = 1.0
            for _ in range(50):
                zn = z + alpha * dz
                vn = orc.values(zn)
                gn = vn[1:]
                if np.all(gn < 0.0):
                    phin = t * vn[0] - np.log(-gn).sum()
                    if phin <= phi0 - 0.01 * alpha * lam2:
                        z = zn
                        accepted = True
                        break
                alpha *= 0.5
            if accepted:
                if lam2 / 2.0 <= eps_newton:
                    return z, steps + 1
                damp = 0.0 if damp < 1e-9 else damp * 0.3
                break
            damp = max(damp * 100.0, 1e-10)
        steps += 1
        if not accepted:
            break
    return z, steps


def _kkt_residual(orc: _Oracles, E, z, t) -> float:
    """Stationarity/feasibility certificate at z.

    Uses the better of the central-path duals and nonnegative
    least-squares duals over the near-active constraints (any valid dual
    assignment certifies the residual).
    """
    vals, w = orc.values_weights(z)
    g = vals[1:]
    lam = 1.0 / (t * (-g))
    Aw = orc.A * w[:, None]
    Q = np.add.reduceat(Aw, orc.starts, axis=0)
    grad0 = Q[0]
    r = grad0 + Q[1:].T @ lam
    if E.shape[0]:
        nu = np.linalg.lstsq(E.T, -r, rcond=None)[0]
        r = r + E.T @ nu
    stat = float(np.max(np.abs(r)))
    feas = float(max(0.0, g.max())) if g.size else 0.0
    gap = len(g) / t

    active = np.flatnonzero(g > -1e-5) if g.size else np.array([], dtype=int)
    if active.size:
        from scipy.optimize import nnls
        cols = [Q[1 + i] for i in active]
        if E.shape[0]:
            cols.extend(E)
            cols.extend(-E)
        Amat = np.column_stack(cols)
        try:
            coef, _ = nnls(Amat, -grad0)
            r2 = grad0 + Amat @ coef
            stat2 = float(np.max(np.abs(r2)))
            # complementary slackness of the certificate duals
            comp = float(np.max(np.abs(coef[:active.size] * g[active]))) \
                if active.size else 0.0
            stat = min(stat, max(stat2, comp))
        except Exception:
            pass
    return max(stat, feas, gap)


def _phase1(cvx: ConvexGP, z0: np.ndarray):
    """Find a strictly feasible point by minimizing a uniform slack.

    Solves ``min s  s.t.  Fi(z) - s <= 0`` starting from a strictly
    feasible ``(z0, s0)``; subtracting ``s`` inside every inequality LSE is
    exact because ``LSE(Az + b) - s = LSE(Az + b - s*1)``.
    """
    n = cvx.n
    obj_len = int(cvx.seg_ptr[1] - cvx.seg_ptr[0])
    A_ineq = cvx.A[obj_len:]
    b_ineq = cvx.b[obj_len:]
    A1 = np.zeros((1 + A_ineq.shape[0], n + 1))
    A1[0, n] = 1.0                               # objective = s
    A1[1:, :n] = A_ineq
    A1[1:, n] = -1.0
    b1 = np.concatenate([[0.0], b_ineq])
    seg = np.concatenate([[0, 1], 1 + cvx.seg_ptr[2:] - obj_len]).astype(np.intp)
    orc = _Oracles(A1, b1, seg)
    E1 = (np.hstack([cvx.E, np.zeros((cvx.E.shape[0], 1))])
          if cvx.E.shape[0] else np.zeros((0, n + 1)))

    base = _Oracles(cvx.A, cvx.b, cvx.seg_ptr)
    s0 = float(base.values(z0)[1:].max()) + 1.0
    z = np.concatenate([z0, [s0]])
    t = 1.0
    m1 = len(seg) - 2
    for _ in range(40):
        z, _ = _barrier_minimize(orc, E1, cvx.e, z, t)
        if z[n] < -1e-7:
            return z[:n], True
        if m1 / t < 1e-9:
            break
        t *= 20.0
    return z[:n], bool(z[n] < 0.0)


def solve_convex(cvx: ConvexGP, z0: np.ndarray, tol: float = 1e-8,
                 t0: float | None = None, mu: float = 50.0,
                 max_stages: int = 60) -> SolveResult:
    """Barrier path-following from ``z0``; deterministic for fixed inputs.

    Returns the best iterate with its KKT residual; ``converged`` is False
    when the stage cap is hit before the residual target is met.
    """
    z = _project_equalities(np.asarray(z0, dtype=float), cvx.E, cvx.e)
    orc = _Oracles(cvx.A, cvx.b, cvx.seg_ptr)
    vals = orc.values(z)
    if vals[1:].size and vals[1:].max() >= 0.0:
        z, ok = _phase1(cvx, z)
        z = _project_equalities(z, cvx.E, cvx.e)
        vals = orc.values(z)
        if not ok or (vals[1:].size and vals[1:].max() >= 0.0):
            raise Infeasible("phase-1 could not find a strictly feasible point")

    m = len(cvx.seg_ptr) - 2                    # every barrier term counts
    t = t0 if t0 is not None else max(1.0, m / max(1.0, abs(vals[0])))
    total_steps = 0
    best_z, best_kkt = z, math.inf
    extra = 0
    for _ in range(max_stages):
        # centering accuracy proportional to the remaining gap
        eps_n = min(1e-6, max(1e-12, (m / t) * 1e-4)) if m / t > tol else 1e-12
        z, steps = _barrier_minimize(orc, cvx.E, cvx.e, z, t,
                                     eps_newton=eps_n)
        total_steps += steps
        if m / t <= tol:
            kkt = _kkt_residual(orc, cvx.E, z, t)
            if kkt < best_kkt:
                best_kkt, best_z = kkt, z
            # degenerate geometries keep sharpening past the gap target
            if best_kkt <= tol or extra >= 6 or kkt > 0.9 * best_kkt:
                break
            extra += 1
        t *= mu
    z = best_z
    kkt = best_kkt if math.isfinite(best_kkt) else _kkt_residual(orc, cvx.E, z, t)
    vals = orc.values(z)
    converged = kkt <= 10.0 * tol or m / t <= tol
    return SolveResult(z=z, x=np.exp(z), converged=converged,
                       kkt_residual=kkt, objective=float(math.exp(vals[0])),
                       newton_steps=total_steps,
                       message="" if converged else "stage cap reached")
