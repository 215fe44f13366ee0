"""Matrix balancing and the reduction chain from minimum-cost stabilising
lockdowns to balancing.

The chain: the stabilisation constraint flips (eigenvalues of XY and YX
agree) into diag(z) P - D stable with P nonnegative; substituting
u_i = D_i / z_i turns it into picking the cheapest diagonal subtraction
keeping P - diag(u) stable; a stable Metzler matrix admits d > 0 with
(P - diag(u)) d <= 0, and optimising over d reduces to balancing
diag(c') P.  The first-order condition of the balancing objective is
exactly row sums equal column sums of the scaled matrix.
"""

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import InfeasibleAlpha, NonConvergence, NotStronglyConnected
from .model import SIS, CostKind, assemble_linearization, lockdown_cost


@dataclass(frozen=True)
class BalancingResult:
    """Scaling d (d[0] = 1) with diag(d)^-1 X diag(d) balanced."""

    d: np.ndarray
    imbalance: float
    iterations: int


def balance(X, tol=1e-10, max_sweeps=100000):
    """Osborne cyclic balancing of a nonnegative strongly connected matrix.

    Finds d > 0 so the scaled matrix X' = diag(d)^-1 X diag(d) has equal
    row and column sums per index, to relative imbalance
    max_i |row_i - col_i| / (row_i + col_i) <= tol.  Diagonal entries
    appear in both sums and are skipped by the updates.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if np.any(X < 0):
        raise ValueError("balancing needs a nonnegative matrix")
    if not spectral.strongly_connected(X != 0):
        raise NotStronglyConnected("only strongly connected matrices can be balanced")
    if n == 1:
        return BalancingResult(d=np.ones(1), imbalance=0.0, iterations=0)
    off = X.copy()
    np.fill_diagonal(off, 0.0)
    d = np.ones(n)
    imbalance = np.inf
    for sweep in range(1, max_sweeps + 1):
        for i in range(n):
            r = float(off[i] @ d) / d[i]
            c = d[i] * float(off[:, i] @ (1.0 / d))
            # zero row/col sums impossible under strong connectivity
            d[i] *= np.sqrt(r / c)
        rows = (off * d[None, :]).sum(axis=1) / d
        cols = (off / d[:, None]).sum(axis=0) * d
        imbalance = float(np.max(np.abs(rows - cols) / (rows + cols)))
        if imbalance <= tol:
            return BalancingResult(d=d / d[0], imbalance=imbalance, iterations=sweep)
    raise NonConvergence(f"balancing stalled above tol={tol}",
                         residual=imbalance, iterations=max_sweeps)


def balancing_gradient(X, costs, d):
    """Gradient of f(g) = sum_ij c_i X_ij exp(g_j - g_i) at g = log d.

    Zero exactly when diag(d)^-1 diag(c) X diag(d) is balanced; used as
    the optimality certificate for the reduction.
    """
    M = (costs[:, None] * X) * d[None, :] / d[:, None]
    return M.sum(axis=0) - M.sum(axis=1)


@dataclass(frozen=True)
class StabilityScalingInstance:
    """Find positive q minimising sum c_i / q_i with diag(q) P - diag(D)
    continuous-time stable."""

    P: np.ndarray
    D_diag: np.ndarray
    costs: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        D = np.asarray(self.D_diag, dtype=float)
        c = np.asarray(self.costs, dtype=float)
        if np.any(P < 0):
            raise ValueError("P must be nonnegative")
        if np.any(D <= 0) or np.any(c <= 0):
            raise ValueError("D and costs must be positive")
        if not spectral.strongly_connected(P != 0):
            raise NotStronglyConnected("stability scaling needs strongly connected P")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "D_diag", D)
        object.__setattr__(self, "costs", c)


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a lockdown solve: the activity vector, its cost, the
    achieved spectral abscissa, and which solver path produced it."""

    z_star: np.ndarray
    cost: float
    cost_kind: CostKind
    lambda_achieved: float
    method: str
    high_spread_holds: bool
    unconstrained_exceeds_unit: bool = False
    clamped: bool = False
    nonconvex_objective: bool = False
    residuals: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    scaling_spread: float = float("nan")  # max(d)/min(d) of the balancing


def check_high_spread(factors, params, s0=None):
    """Per-location high-spread test: local transmission alone outpaces
    recovery, which pins the unconstrained optimum inside (0, 1]^n.

    SIS compares beta * diag(B^T C) against gamma; the two-class variants
    compare b1(0)^-1 against diag(B^T diag(s0) C).
    """
    BT = factors.B.T
    if params.family == SIS:
        local = params.beta_s * np.einsum("ij,ji->i", BT, factors.C)
        return local >= params.gamma
    s0 = np.asarray(s0, dtype=float)
    local = np.einsum("ij,j,ji->i", BT, s0, factors.C)
    return local * spectral.b1(params, alpha=0.0) >= 1.0


def to_stability_scaling(factors, params, s0=None):
    """Rewrite the stabilisation constraint as diag(z) P - diag(D) stable.

    SIS: P = beta B^T C, D = (gamma - alpha) I (the certificate holds from
    any state, so no s0 enters).  Two-class/SIR: P = B^T diag(s0) C and
    D = b1(alpha)^-1 I, after flipping the product order.
    """
    if params.alpha >= params.alpha_max():
        raise InfeasibleAlpha(
            f"alpha={params.alpha} is not below {params.alpha_max()}; the "
            "minimum-cost lockdown problem has no solution")
    BT = factors.B.T
    n = factors.n
    if params.family == SIS:
        P = params.beta_s * (BT @ factors.C)
        D = np.full(n, params.gamma - params.alpha)
    else:
        if s0 is None:
            raise ValueError("two-class reduction needs s0")
        s0 = np.asarray(s0, dtype=float)
        if np.any(s0 <= 0):
            raise ValueError("s0 must be strictly positive")
        P = BT @ (s0[:, None] * factors.C)
        D = np.full(n, 1.0 / spectral.b1(params))
    return StabilityScalingInstance(P=P, D_diag=D, costs=factors.cost_coeffs)


def solve_unconstrained(inst, tol=1e-12, verify=True):
    """Exact unconstrained optimum of the stability-scaling problem.

    Balances diag(c/D) P to get d, then u = (P d) / d is the cheapest
    stabilising diagonal subtraction and z = D / u the optimal activity.
    Verifies both the binding eigenvalue and the zero-gradient condition.
    """
    P, D, c = inst.P, inst.D_diag, inst.costs
    cprime = c / D
    bal = balance(cprime[:, None] * P, tol=tol)
    d = bal.d
    Pd = P @ d
    u = Pd / d
    z = D * d / Pd
    residuals = {"imbalance": bal.imbalance}
    if verify:
        grad = balancing_gradient(P, cprime, d)
        residuals["gradient_inf"] = float(np.max(np.abs(grad)))
        lam = spectral.perron(z[:, None] * P - np.diag(D)).value
        residuals["binding_lambda"] = lam
        if abs(lam) > 1e-6:
            raise NonConvergence("stability constraint does not bind at the "
                                 f"computed optimum (lambda={lam})", residual=lam)
    return z, u, bal, residuals


def solve(factors, params, s0=None, cost_kind=CostKind.inverse()):
    """Minimum-cost lockdown with entries constrained to (0, 1].

    Dispatch: under high spread the unconstrained optimum is feasible and
    exact (balancing); otherwise try it anyway and accept if z <= 1; else,
    and for non-inverse costs, fall back to the covering solver.  When
    the covering hypothesis fails (a perturbed travel matrix with a zero
    diagonal entry), the unconstrained optimum clamped to one is returned
    instead: clamping only tightens activity, so the policy still
    stabilises, and the report flags it as an upper bound on cost.
    """
    from . import constrained  # deferred: the fallback imports this module
    from .errors import TauDiagonalZero

    hs = check_high_spread(factors, params, s0)
    high_spread = bool(np.all(hs))
    if cost_kind.kind != "inverse":
        report = constrained.solve_constrained(
            constrained.to_covering(factors, params, s0), cost_kind)
        return _with_flags(report, factors, params, s0, high_spread, False)

    inst = to_stability_scaling(factors, params, s0)
    z, u, bal, residuals = solve_unconstrained(inst)
    exceeds = bool(np.any(z > 1.0 + 1e-12))
    if not exceeds:
        cost = lockdown_cost(z, factors.cost_coeffs, cost_kind)
        lam = spectral.perron(assemble_linearization(factors, z, params, s0)).value
        return SolveReport(
            z_star=z, cost=cost, cost_kind=cost_kind, lambda_achieved=lam,
            method="balancing", high_spread_holds=high_spread,
            unconstrained_exceeds_unit=False,
            residuals=residuals, iterations={"balancing_sweeps": bal.iterations},
            scaling_spread=float(np.max(bal.d) / np.min(bal.d)))
    try:
        report = constrained.solve_constrained(
            constrained.to_covering(factors, params, s0), cost_kind)
    except TauDiagonalZero:
        z_clamped = np.minimum(z, 1.0)
        cost = lockdown_cost(z_clamped, factors.cost_coeffs, cost_kind)
        lam = spectral.perron(assemble_linearization(factors, z_clamped, params, s0)).value
        return SolveReport(
            z_star=z_clamped, cost=cost, cost_kind=cost_kind, lambda_achieved=lam,
            method="balancing_clamped", high_spread_holds=high_spread,
            unconstrained_exceeds_unit=True, clamped=True,
            residuals=residuals, iterations={"balancing_sweeps": bal.iterations},
            scaling_spread=float(np.max(bal.d) / np.min(bal.d)))
    return _with_flags(report, factors, params, s0, high_spread, True)


def _with_flags(report, factors, params, s0, high_spread, exceeds):
    lam = spectral.perron(assemble_linearization(
        factors, report.z_star, params, s0)).value
    return SolveReport(
        z_star=report.z_star, cost=report.cost, cost_kind=report.cost_kind,
        lambda_achieved=lam, method=report.method,
        high_spread_holds=high_spread, unconstrained_exceeds_unit=exceeds,
        clamped=report.clamped, nonconvex_objective=report.nonconvex_objective,
        residuals=report.residuals, iterations=report.iterations,
        scaling_spread=report.scaling_spread)
