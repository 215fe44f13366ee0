"""Perron eigenpairs, stability predicates, and growth-rate calibration.

Everything here works on Metzler matrices (nonnegative off-diagonal):
after shifting by max |diag| + 1 the matrix is nonnegative, and strong
connectivity makes the dominant eigenvalue simple with a positive
eigenvector, so plain power iteration converges.  The dense eigensolver
is deliberately kept out of these paths; tests use it as an oracle.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (CalibrationRange, DegenerateRates, NonConvergence,
                     NotStronglyConnected)
from .model import COVID, SIR, SIS, apply_lockdown, assemble_linearization


def strongly_connected(pattern):
    """True iff the directed graph on the nonzero pattern has a single
    strongly connected component.

    The edge convention (an entry at row j, column i links i to j) does
    not affect the answer: a graph and its reverse share their SCCs.
    """
    adj = np.asarray(pattern) != 0
    n = adj.shape[0]
    if n == 0:
        return True
    return _tarjan_scc_count(adj) == 1


def _tarjan_scc_count(adj):
    """Number of SCCs, iterative Tarjan (no recursion-depth limit)."""
    n = adj.shape[0]
    neighbors = [np.flatnonzero(adj[:, i]) for i in range(n)]
    index = [-1] * n
    lowlink = [0] * n
    on_stack = [False] * n
    stack = []
    counter = 0
    sccs = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = lowlink[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            nbrs = neighbors[v]
            while pi < len(nbrs):
                w = int(nbrs[pi])
                pi += 1
                if index[w] == -1:
                    work[-1] = (v, pi)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if lowlink[v] == index[v]:
                sccs += 1
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    if w == v:
                        break
            if work:
                u, _ = work[-1]
                lowlink[u] = min(lowlink[u], lowlink[v])
    return sccs


@dataclass(frozen=True)
class PerronPair:
    """Dominant eigenvalue (real) and positive eigenvector, unit 1-norm."""

    value: float
    vector: np.ndarray
    residual: float
    iterations: int


def perron(P, tol=1e-12, max_iter=None, check_connectivity=True):
    """Dominant eigenpair of a strongly connected Metzler matrix.

    Power iteration on P + sigma*I with sigma just large enough to make
    the matrix nonnegative and aperiodic, so the iteration converges.
    Stops on the residual ||Pv - lam v||_inf relative to ||v||_inf.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.ndim != 2 or P.shape[1] != n:
        raise ValueError("perron needs a square matrix")
    offdiag = P.copy()
    np.fill_diagonal(offdiag, 0.0)
    if np.any(offdiag < 0):
        raise ValueError("matrix has negative off-diagonal entries")
    if check_connectivity and not strongly_connected(P != 0):
        raise NotStronglyConnected("matrix pattern is not strongly connected")
    if n == 1:
        return PerronPair(value=float(P[0, 0]), vector=np.array([1.0]),
                          residual=0.0, iterations=0)
    # smallest shift to nonnegativity plus a scale-proportional margin that
    # breaks periodicity; a fixed "+1" margin would crush the relative
    # spectral gap of matrices living at scales far below one
    scale = float(np.max(np.abs(P)))
    sigma = max(0.0, -float(np.min(np.diag(P)))) + 0.1 * scale
    S = P + sigma * np.eye(n)
    v = np.full(n, 1.0 / n)
    if max_iter is None:
        max_iter = max(5000, int(10 * n * math.log(1.0 / tol)))
    residual = np.inf
    for it in range(max_iter + 1):
        w = S @ v
        lam_shifted = float(v @ w) / float(v @ v)
        residual = float(np.max(np.abs(w - lam_shifted * v))) / float(np.max(np.abs(v)))
        if residual <= tol:
            return PerronPair(value=lam_shifted - sigma, vector=v,
                              residual=residual, iterations=it)
        v = w / np.sum(w)
    raise NonConvergence(
        f"power iteration did not reach tol={tol} in {max_iter} iterations",
        residual=residual, iterations=max_iter)


def perron_left(P, **kw):
    """Left dominant eigenvector, via the transpose."""
    return perron(np.asarray(P, dtype=float).T, **kw)


def is_stabilizing(M, alpha, tol=1e-9):
    """Whether the linearisation decays at rate alpha, plus the margin.

    Returns (lambda_max(M) <= -alpha + tol, -alpha - lambda_max(M)).
    """
    pair = perron(M)
    return bool(pair.value <= -alpha + tol), float(-alpha - pair.value)


def b1(params, alpha=None):
    """Scalar that converts the two-class stabilisation condition into a
    spectral-radius bound on diag(s0) A(z).

    Finite and positive exactly on alpha < min(r_s, epsilon + r_a); for
    SIR (symptomatic side off) it degenerates to beta_a / (r_a - alpha).
    """
    a = params.alpha if alpha is None else alpha
    if params.family == SIR:
        if params.r_a <= a:
            raise DegenerateRates("alpha must be below r_a")
        return params.beta_a / (params.r_a - a)
    if params.family != COVID:
        raise DegenerateRates("b1 is defined for the two-class and SIR families")
    if params.r_s == 0.0 or params.epsilon + params.r_a == 0.0:
        raise DegenerateRates("r_s and epsilon + r_a must be positive")
    if a >= min(params.r_s, params.epsilon + params.r_a):
        raise DegenerateRates("alpha outside the solvable domain")
    num = params.beta_s * params.epsilon + params.beta_a * (params.r_s - a)
    den = (params.epsilon + params.r_a - a) * (params.r_s - a)
    return num / den


def growth_rate(factors, params, s0=None, z=None):
    """lambda_max of the model linearisation at activity z (default: no
    lockdown).  The SIS rate is referenced to the disease-free state."""
    n = factors.n
    if z is None:
        z = np.ones(n)
    M = assemble_linearization(factors, z, params, s0)
    if params.family == COVID and params.beta_s == 0.0:
        # block triangular at beta = 0; the dominant value is analytic
        return -min(params.r_s, params.epsilon + params.r_a)
    if params.family in (SIR, SIS) and params.transmission() == 0.0:
        return -(params.r_a if params.family == SIR else params.gamma)
    return perron(M).value


def calibrate_beta(factors, params_template, s0, target_growth, tol=1e-8):
    """Set the free transmission rate so the initial growth rate matches.

    SIS and SIR scale linearly, so the answer is closed form.  For the
    two-class model the growth rate is strictly increasing in beta_s
    (verified at the bracket ends) and bisection does the rest.
    """
    p = params_template
    if p.family == SIS:
        lamA = perron(factors.flow_matrix()).value
        if target_growth <= -p.gamma:
            raise CalibrationRange("growth target below -gamma is unattainable")
        return p.with_beta((target_growth + p.gamma) / lamA)
    if s0 is None:
        raise CalibrationRange("calibration for this family needs s0")
    s0 = np.asarray(s0, dtype=float)
    if p.family == SIR:
        lamA = perron(s0[:, None] * factors.flow_matrix()).value
        if target_growth <= -p.r_a:
            raise CalibrationRange("growth target below -r_a is unattainable")
        return p.with_beta((target_growth + p.r_a) / lamA)
    floor = -min(p.r_s, p.epsilon + p.r_a)
    if target_growth <= floor:
        raise CalibrationRange(f"growth target must exceed {floor}")
    lo, f_lo = 0.0, floor - target_growth
    hi = 1.0
    for _ in range(41):
        f_hi = growth_rate(factors, p.with_beta(hi), s0) - target_growth
        if f_hi >= 0.0:
            break
        hi *= 2.0
    else:
        raise CalibrationRange("could not bracket the growth target (cap 2^40)")
    if not f_hi > f_lo:
        raise CalibrationRange("growth rate is not increasing across the bracket")
    while hi - lo > 1e-12 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if growth_rate(factors, p.with_beta(mid), s0) < target_growth:
            lo = mid
        else:
            hi = mid
    beta = 0.5 * (lo + hi)
    return p.with_beta(beta)


def reproduction_number(factors, z, params, s0):
    """Expected secondary cases per infected individual at the initial
    state, rho(diag(s0) A(z)) * b1(0)."""
    if params.family != COVID:
        raise DegenerateRates("reproduction number is defined for the two-class family")
    s0 = np.asarray(s0, dtype=float)
    A_z = apply_lockdown(factors, z)
    rho = perron(s0[:, None] * A_z).value
    return rho * b1(params, alpha=0.0)


def alpha_to_r(params, alpha=None):
    """Map a decay-rate bound to the equivalent reproduction-number bound."""
    a = params.alpha if alpha is None else alpha
    if a < 0 or a >= min(params.r_s, params.epsilon + params.r_a):
        raise DegenerateRates("alpha outside [0, min(r_s, epsilon + r_a))")
    return b1(params, alpha=0.0) / b1(params, alpha=a)


def r_to_alpha(params, r):
    """Inverse of alpha_to_r; r in (0, 1] maps into the alpha domain."""
    if not (0.0 < r <= 1.0):
        raise DegenerateRates("r must lie in (0, 1]")
    if r == 1.0:
        return 0.0
    amax = min(params.r_s, params.epsilon + params.r_a)
    f = lambda a: alpha_to_r(params, alpha=a) - r
    hi = amax * (1.0 - 1e-13)
    if f(hi) > 0:
        raise DegenerateRates("r below the attainable range")
    return float(brentq(f, 0.0, hi, xtol=1e-14, rtol=8.9e-16))
