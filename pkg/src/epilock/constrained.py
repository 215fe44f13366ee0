"""Constrained fallback solver for lockdowns with entries capped at one.

When the travel matrix has a positive diagonal, flipping products twice
turns the capped problem into: minimise a separable cost of u subject to
diag(u) >= Q in the semidefinite order and u >= lb, with Q the symmetric
visit-weighted Gram matrix of the travel rates.  This is a covering-type
program; we solve it with a projected subgradient on an exact penalty
(the subgradient of lambda_max(Q - diag(u)) in -u is the squared top
eigenvector), then polish convex objectives with an SQP step driven by
the same eigenvector oracle.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from . import spectral
from .balancing import SolveReport
from .errors import NonConvergence, TauDiagonalZero
from .model import SIS, CostKind, lockdown_cost


@dataclass(frozen=True)
class CoveringInstance:
    """min sum costs_i * phi(u_i)  s.t.  diag(u) >= Q (psd), u >= lb.

    Recover activities as z_i = lb_i / u_i: the lower bound on u is the
    cap z <= 1, and q carries the decay-rate target.
    """

    Q: np.ndarray
    lb: np.ndarray
    costs: np.ndarray  # already rescaled by the visit weights
    q: float

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
            raise ValueError("Q must be symmetric")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        if np.any(self.lb <= 0) or np.any(self.costs <= 0):
            raise ValueError("lb and costs must be positive")

    @property
    def n(self):
        return self.Q.shape[0]


def to_covering(factors, params, s0=None):
    """Build the covering instance from the flow factorisation.

    Q = tau^T diag(N * a) tau with a = 1 for SIS and a = s0 otherwise;
    lb_i = q * visit_weight_i; costs c'_i = c_i / visit_weight_i.  q is
    (gamma - alpha) / beta for SIS and 1 / b1(alpha) for the two-class
    variants, so feasibility of u is exactly stability of the lockdown.
    """
    tau = factors.tau
    n = factors.n
    if np.any(np.diag(tau) <= 0):
        raise TauDiagonalZero(
            "constrained reduction needs a travel matrix with positive diagonal")
    if params.family == SIS:
        a = np.ones(n)
        q = (params.gamma - params.alpha) / params.beta_s
    else:
        a = np.asarray(s0, dtype=float)
        q = 1.0 / spectral.b1(params)
    Q = tau.T @ ((factors.populations * a)[:, None] * tau)
    m = factors.visit_weight
    return CoveringInstance(Q=Q, lb=q * m, costs=factors.cost_coeffs / m, q=q)


def _phi_factory(inst, objective):
    """Objective in u and its (sub)gradient, per cost kind."""
    c0, lb = inst.costs, inst.lb
    if objective.kind == "inverse":
        return (lambda u: float(c0 @ u), lambda u: c0.copy())
    if objective.kind == "power":
        k = objective.param
        w = c0 * lb / (lb ** k)  # original c_i / lb_i^k
        return (lambda u: float(w @ (u ** k)), lambda u: k * w * u ** (k - 1))
    cap = objective.param
    cw = c0 * lb  # q * c_i; constant positive factor, optimisation-equivalent

    def f(u):
        return float(cw @ np.minimum(u / lb, cap))

    def g(u):
        return np.where(u / lb < cap, cw / lb, 0.0)

    return f, g


def _lam_top(Q, u):
    """Top algebraic eigenpair of the symmetric matrix Q - diag(u).

    Lanczos rather than plain power iteration: reducible or
    near-diagonal instances (a legitimate shape for Q) cluster the top
    eigenvalues and stall a shifted power iteration.
    """
    M = Q - np.diag(u)
    n = M.shape[0]
    if n == 1:
        return float(M[0, 0]), np.ones(1)
    scale = max(float(np.max(np.abs(M))), 1e-300)
    try:
        w, V = eigsh(M / scale, k=1, which="LA", tol=1e-13,
                     v0=np.full(n, 1.0 / n))
        return float(w[0]) * scale, V[:, 0]
    except ArpackNoConvergence:
        w, V = np.linalg.eigh(M)
        return float(w[-1]), V[:, -1]


def solve_constrained(inst, objective=CostKind.inverse(), restarts=0, seed=0,
                      max_iter=None, feas_tol=1e-9):
    """Projected subgradient with exact penalty, then SQP polish.

    The penalty rho multiplies max(0, lambda_max(Q - diag(u))) and doubles
    until the returned point is feasible to feas_tol; a final minimal
    (1 + delta) scaling restores strict feasibility.  Convex objectives
    get their precision from the polish step, so the subgradient phase
    stays short; capped objectives are concave, skip the polish, and get
    a longer run plus restarts, with the report flagging the local
    optimum.
    """
    if max_iter is None:
        max_iter = 3000 if objective.kind == "capped" else 400
    max_iter = min(max_iter, 50000)
    Q, lb = inst.Q, inst.lb
    n = inst.n
    f_u, fgrad_u = _phi_factory(inst, objective)
    nonconvex = objective.kind == "capped"

    # optimise in w = u / lb: bounds become w >= 1 and every variable is
    # O(1), which the subgradient steps and the SQP polish both need when
    # the visit weights span orders of magnitude
    f_scale = max(float(np.max(np.abs(fgrad_u(lb * np.ones(n))))) , 1e-300) \
        * float(np.max(lb))

    def f(w):
        return f_u(lb * w) / f_scale

    def fgrad(w):
        return fgrad_u(lb * w) * lb / f_scale

    scale_q = max(float(np.max(np.abs(Q))), 1e-300)

    def g_con(w):
        """Normalised constraint value and gradient in w."""
        lam, v = _lam_top(Q, lb * w)
        return lam / scale_q, -(v * v) * lb / scale_q

    lamQ, _ = _lam_top(Q, np.zeros(n))
    w_feas = np.maximum(1.0, 1.05 * lamQ / lb)
    starts = [w_feas]
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        starts.append(w_feas * (1.0 + rng.uniform(0.0, 1.0, size=n)))
    best_w, best_f, tot_it = None, np.inf, 0
    for w0 in starts:
        w, used = _subgradient_run(g_con, f, fgrad, w0, max_iter, feas_tol)
        tot_it += used
        if not nonconvex:
            w = _polish(g_con, f, fgrad, w)
        w = _restore_feasibility(g_con, w)
        val = f(w)
        if val < best_f:
            best_f, best_w = val, w
    u = lb * best_w
    lam, _ = _lam_top(Q, u)
    z = inst.lb / u
    clamped = bool(np.any(z > 1.0 + 1e-12))
    z = np.minimum(z, 1.0)
    # report the cost in z-terms with the original coefficients
    c_orig = inst.costs * inst.lb / inst.q
    cost = lockdown_cost(z, c_orig, objective)
    return SolveReport(
        z_star=z, cost=cost, cost_kind=objective, lambda_achieved=np.nan,
        method="constrained_sdp", high_spread_holds=False,
        clamped=clamped, nonconvex_objective=nonconvex,
        residuals={"feasibility_lambda": lam,
                   "bound_violation": float(np.max(np.maximum(lb - u, 0.0)))},
        iterations={"subgradient": tot_it},
        scaling_spread=float(np.max(u) / np.min(u)))


def _subgradient_run(g_con, f, fgrad, w0, max_iter, feas_tol):
    w = w0.copy()
    rho = 10.0 * max(1.0, float(np.max(np.abs(fgrad(w0)))))
    best = np.inf
    best_w = w.copy()
    target_gap = None
    it = 0
    stall = 0
    while it < max_iter:
        it += 1
        lam, glam = g_con(w)
        viol = max(lam, 0.0)
        val = f(w) + rho * viol
        if viol <= feas_tol and f(w) < best:
            best = f(w)
            best_w = w.copy()
            stall = 0
        else:
            stall += 1
        g = fgrad(w) + (rho if viol > 0 else 0.0) * glam
        gn2 = float(g @ g)
        if gn2 == 0.0:
            break
        if target_gap is None:
            target_gap = max(1e-3 * abs(val), 1e-6)
        # Polyak step against the best seen value, shrinking the gap
        ref = (best if best < np.inf else val) - target_gap
        step = max(val - ref, 0.0) / gn2
        if step == 0.0:
            step = target_gap / gn2 / np.sqrt(it)
        w = np.maximum(w - step * g, 1.0)
        if stall >= 50:
            lam, _ = g_con(w)
            if lam > feas_tol:
                rho *= 2.0
            else:
                target_gap *= 0.5
                if target_gap < 1e-10 * max(abs(best), 1.0):
                    break
            stall = 0
    return (best_w if best < np.inf else w), it


def _polish(g_con, f, fgrad, w0):
    """SQP refinement of convex objectives using the eigenvector oracle;
    restarts from the last iterate while the iteration cap binds."""
    n = w0.shape[0]

    def g_ineq(w):
        lam, _ = g_con(w)
        return -lam

    def g_jac(w):
        _, glam = g_con(w)
        return -glam

    best = w0
    for _ in range(5):
        res = minimize(f, best, jac=lambda w: fgrad(w),
                       constraints=[{"type": "ineq", "fun": g_ineq,
                                     "jac": g_jac}],
                       bounds=[(1.0, None)] * n, method="SLSQP",
                       options={"maxiter": 500, "ftol": 1e-14})
        if res.fun <= f(best) + 1e-12 * max(1.0, abs(f(best))):
            best = np.maximum(res.x, 1.0)
        if res.status != 9:  # anything but "iteration limit reached"
            break
    return best


def _restore_feasibility(g_con, w, cap=200):
    lam, _ = g_con(w)
    if lam <= 1e-14:
        return w
    hi = 1.0
    for _ in range(cap):
        hi *= 1.5
        lam_hi, _ = g_con(hi * w)
        if lam_hi <= 0.0:
            break
    else:
        raise NonConvergence("could not restore feasibility by scaling",
                             residual=lam)
    lo = 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        lam_mid, _ = g_con(mid * w)
        if lam_mid <= 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-14:
            break
    return np.maximum(hi * w, 1.0)
