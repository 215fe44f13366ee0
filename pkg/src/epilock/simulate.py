"""Fixed-step integration of the epidemic families, benchmark policies
matched to a common economic cost, and outcome metrics.

The dynamics are smooth and non-stiff at the parameter scales used here,
so classical RK4 with dt = 0.1 day is plenty; the order is checked by a
step-halving test in the suite.
"""

from dataclasses import dataclass

import numpy as np

from . import spectral
from .balancing import to_stability_scaling
from .errors import DimensionMismatch, StepRejectionCascade, WidthInfeasible
from .model import COVID, SIS, apply_lockdown, assemble_linearization, lockdown_cost

DEFAULT_DT = 0.1
CLAMP_LIMIT = 1e-8
REPORTING_RATE = 0.14


@dataclass(frozen=True)
class EpidemicState:
    """Per-location compartment fractions at time t.

    Two-class/SIR states carry (s, x_a, x_s, r); SIS carries x alone plus
    a running integral of new infections for cumulative-case reporting.
    """

    family: str
    t: float = 0.0
    s: np.ndarray | None = None
    x_a: np.ndarray | None = None
    x_s: np.ndarray | None = None
    r: np.ndarray | None = None
    x: np.ndarray | None = None
    cum_inflow: np.ndarray | None = None

    def __post_init__(self):
        if self.family == SIS:
            if self.x is None:
                raise ValueError("SIS state needs x")
            if np.any(self.x < 0) or np.any(self.x > 1):
                raise ValueError("x entries must lie in [0, 1]")
            if self.cum_inflow is None:
                object.__setattr__(self, "cum_inflow", np.zeros_like(self.x))
        else:
            for name in ("s", "x_a", "x_s", "r"):
                if getattr(self, name) is None:
                    raise ValueError(f"{self.family} state needs {name}")
            total = self.s + self.x_a + self.x_s + self.r
            if np.any(np.abs(total - 1.0) > 1e-9):
                raise ValueError("compartments must sum to one per location")

    @property
    def n(self):
        v = self.x if self.family == SIS else self.s
        return v.shape[0]

    def pack(self):
        if self.family == SIS:
            return np.concatenate([self.x, self.cum_inflow])
        return np.concatenate([self.s, self.x_a, self.x_s])

    def unpack(self, y, t):
        n = self.n
        if self.family == SIS:
            return EpidemicState(family=SIS, t=t, x=y[:n], cum_inflow=y[n:])
        s, x_a, x_s = y[:n], y[n:2 * n], y[2 * n:]
        return EpidemicState(family=self.family, t=t, s=s, x_a=x_a, x_s=x_s,
                             r=1.0 - s - x_a - x_s)

    def infected(self):
        if self.family == SIS:
            return self.x
        return self.x_a + self.x_s


def make_covid_state(s, x_a, x_s, r=None, t=0.0, family=COVID):
    s = np.asarray(s, float); x_a = np.asarray(x_a, float); x_s = np.asarray(x_s, float)
    if r is None:
        r = 1.0 - s - x_a - x_s
    return EpidemicState(family=family, t=t, s=s, x_a=x_a, x_s=x_s, r=np.asarray(r, float))


def _deriv(y, family, A_z, params, n):
    if family == SIS:
        x = y[:n]
        inflow = (1.0 - x) * (params.beta_s * (A_z @ x))
        return np.concatenate([inflow - params.gamma * x, inflow])
    s, x_a, x_s = y[:n], y[n:2 * n], y[2 * n:]
    force = A_z @ (params.beta_a * x_a + params.beta_s * x_s)
    new = s * force
    ds = -new
    dxa = new - (params.epsilon + params.r_a) * x_a
    dxs = params.epsilon * x_a - params.r_s * x_s
    return np.concatenate([ds, dxa, dxs])


def step_rk4(state, A_z, params, dt):
    """One classical RK4 step; clamps to [0, 1] and rejects the step
    (halving dt internally until it covers the requested span) whenever
    the clamp would move any component by more than CLAMP_LIMIT."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = state.n
    y = state.pack()
    t = state.t
    remaining = dt
    sub = dt
    while remaining > 1e-15:
        if sub < 1e-12:
            raise StepRejectionCascade("step size underflow while rejecting steps")
        step = min(sub, remaining)
        k1 = _deriv(y, state.family, A_z, params, n)
        k2 = _deriv(y + 0.5 * step * k1, state.family, A_z, params, n)
        k3 = _deriv(y + 0.5 * step * k2, state.family, A_z, params, n)
        k4 = _deriv(y + step * k3, state.family, A_z, params, n)
        y_new = y + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        limit = n if state.family == SIS else 3 * n  # fractions; SIS tail is the inflow integral
        clamped = np.clip(y_new[:limit], 0.0, 1.0)
        magnitude = float(np.max(np.abs(clamped - y_new[:limit])))
        if magnitude > CLAMP_LIMIT:
            sub = step / 2.0
            continue
        y = np.concatenate([clamped, y_new[limit:]])
        t += step
        remaining -= step
    return state.unpack(y, t)


@dataclass(frozen=True)
class PolicySpec:
    """A named benchmark policy; parameters resolve at cost-matching time
    against the optimal report's cost."""

    kind: str
    seed: int = 0
    width: float = 0.2
    order: str = "inside_harder"

    KINDS = ("ours", "none", "uniform", "random", "bounded_decline",
             "two_param")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @classmethod
    def parse(cls, text):
        head, _, arg = text.partition(":")
        if head == "random":
            return cls(kind="random", seed=int(arg) if arg else 0)
        if head == "two_param":
            return cls(kind="two_param", order=arg or "inside_harder")
        if head in ("bounded", "bounded_decline"):
            return cls(kind="bounded_decline")
        return cls(kind=head)

    def resolve(self, factors, params, report, s0=None, state0=None,
                partition=None, horizon=500.0):
        """Concrete activity vector, cost-matched to the report."""
        n = factors.n
        c = factors.cost_coeffs
        if self.kind == "ours":
            return report.z_star, {}
        if self.kind == "none":
            return np.ones(n), {}
        if self.kind == "uniform":
            return np.full(n, match_cost_uniform(report.cost, c)), {}
        if self.kind == "random":
            z, (a, b), realized = match_cost_random(report.cost, c,
                                                    width=self.width,
                                                    seed=self.seed)
            return z, {"interval": (a, b), "realized_cost": realized}
        if self.kind == "bounded_decline":
            z, decline = match_cost_bounded_decline(report.cost, factors,
                                                    params, s0)
            return z, {"decline": decline}
        if partition is None:
            raise ValueError("two_param policy needs a partition")
        (z1, z2), _ = grid_search_two_param(
            partition, self.order, report.cost, params, factors, s0=s0,
            state0=state0, mode="cost_capped", horizon=horizon,
            grid=0.02, refine=0.002, dt=0.5)
        z = np.where(np.asarray(partition, bool), z1, z2)
        return z, {"z_inside": z1, "z_outside": z2}


@dataclass(frozen=True)
class Trajectory:
    """Sampled states plus aggregate person counts.

    cumulative counts everyone ever infected (initial infections
    included); reported-case rescaling multiplies by the reporting rate.
    """

    family: str
    times: np.ndarray
    states: dict
    active_persons: np.ndarray
    cumulative_persons: np.ndarray
    populations: np.ndarray
    location_ids: tuple

    def reported(self, reporting_rate=REPORTING_RATE):
        return self.cumulative_persons * reporting_rate


def simulate(state0, z, factors, params, horizon, sample_every=1.0, dt=DEFAULT_DT):
    """Integrate under a fixed activity vector and sample aggregates."""
    z = np.asarray(z, dtype=float)
    A_z = apply_lockdown(factors, z)
    N = factors.populations
    if state0.n != factors.n:
        raise DimensionMismatch("state and network size differ")
    n_steps = int(round(horizon / dt))
    stride = max(1, int(round(sample_every / dt)))
    state = state0
    times = [state.t]
    samples = [state]
    for k in range(1, n_steps + 1):
        state = step_rk4(state, A_z, params, dt)
        if k % stride == 0 or k == n_steps:
            times.append(state.t)
            samples.append(state)
    times = np.asarray(times)
    if params.family == SIS:
        x = np.stack([s.x for s in samples])
        cum = np.stack([s.cum_inflow for s in samples])
        states = {"x": x, "cum_inflow": cum}
        active = x @ N
        cumulative = (x[0] + cum) @ N
    else:
        s = np.stack([st.s for st in samples])
        x_a = np.stack([st.x_a for st in samples])
        x_s = np.stack([st.x_s for st in samples])
        states = {"s": s, "x_a": x_a, "x_s": x_s, "r": 1.0 - s - x_a - x_s}
        active = (x_a + x_s) @ N
        cumulative = (1.0 - s) @ N
    return Trajectory(family=params.family, times=times, states=states,
                      active_persons=active, cumulative_persons=cumulative,
                      populations=N, location_ids=factors.location_ids)


def match_cost_uniform(target_cost, c, tol=1e-10):
    """Scalar z with sum c_i (1/z - 1) equal to the target cost."""
    if target_cost < 0:
        raise ValueError("target cost must be nonnegative")
    c = np.asarray(c, dtype=float)
    total = float(np.sum(c))
    # closed form for the inverse cost; kept simple since it is exact
    z = total / (target_cost + total)
    assert abs(lockdown_cost(np.full(c.shape, z), c) - target_cost) \
        <= tol * max(1.0, target_cost)
    return z


def expected_inverse_uniform(a, b):
    """E[1/Z] for Z ~ U[a, b], the closed form via the logarithm."""
    if b == a:
        return 1.0 / a
    return (np.log(b) - np.log(a)) / (b - a)


def match_cost_random(target_cost, c, width=0.2, seed=0):
    """Random policy U[a, b] with b = min(1, a + width), cost-matched.

    The interval start is bisected on the realised cost of the seeded
    draw (one fixed uniform sample, shifted and scaled), so the returned
    policy matches the target exactly rather than only in expectation.
    """
    if not (0.0 < width < 1.0):
        raise ValueError("width must lie in (0, 1)")
    c = np.asarray(c, dtype=float)
    rng = np.random.default_rng(seed)
    u = rng.random(c.shape[0])

    def sample(a):
        return a + (min(1.0, a + width) - a) * u

    lo = 1e-12
    hi = 1.0
    if lockdown_cost(sample(lo), c) < target_cost:
        raise WidthInfeasible("target cost unreachable with this width")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if lockdown_cost(sample(mid), c) > target_cost:
            lo = mid
        else:
            hi = mid
    a = 0.5 * (lo + hi)
    b = min(1.0, a + width)
    z = sample(a)
    return z, (a, b), lockdown_cost(z, c)


def bounded_decline_z(factors, params, s0, decline):
    """Per-location decline: each location's self-sustained dynamics
    (its own diagonal spread coefficient, imports ignored) decline at
    rate at least `decline`, activity capped at one.

    z_l solves z_l P_ll - D_l = -decline.  Negative declines are allowed;
    cost matching against the spectral optimum usually needs one, since a
    per-location guarantee overpays for the same aggregate rate.
    """
    inst = to_stability_scaling(factors, params, s0)
    own = np.diag(inst.P)
    if np.any(own <= 0):
        raise ValueError("per-location decline needs positive self-spread")
    z = (inst.D_diag - decline) / own
    if np.any(z <= 0):
        raise ValueError("decline too aggressive; activity would hit zero")
    return np.minimum(z, 1.0)


def match_cost_bounded_decline(target_cost, factors, params, s0=None, tol=1e-8):
    """Bisect the per-location decline bound until the cost matches."""
    c = factors.cost_coeffs
    inst = to_stability_scaling(factors, params, s0)
    d_max = float(np.min(inst.D_diag))

    def cost_of(decline):
        return lockdown_cost(bounded_decline_z(factors, params, s0, decline), c)

    hi = d_max * (1.0 - 1e-9)
    if cost_of(hi) < target_cost:
        raise ValueError("target cost unreachable before activity hits zero")
    lo = -max(d_max, 1.0)
    for _ in range(60):
        if cost_of(lo) <= target_cost:
            break
        lo *= 2.0
    else:
        raise ValueError("could not bracket the target cost")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cost_of(mid) < target_cost:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(d_max, 1.0) * 1e-8:
            break
    decline = 0.5 * (lo + hi)
    return bounded_decline_z(factors, params, s0, decline), decline


def uniform_decay_matched(factors, params, s0=None, tol=1e-12):
    """Cheapest uniform activity achieving the model's decay target: the
    largest scalar z with lambda_max of the linearisation at -alpha."""
    inst = to_stability_scaling(factors, params, s0)
    lam = spectral.perron(inst.P).value
    z = float(np.min(inst.D_diag)) / lam
    if np.any(np.abs(inst.D_diag - inst.D_diag[0]) > 1e-12 * inst.D_diag[0]):
        # non-uniform D: bisect instead of the closed form
        lo, hi = 0.0, 1.0
        while spectral.perron(hi * inst.P - np.diag(inst.D_diag)).value < 0:
            hi *= 2
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if spectral.perron(mid * inst.P - np.diag(inst.D_diag)).value < 0:
                lo = mid
            else:
                hi = mid
        z = lo
    return min(z, 1.0)


def efficiency(cost_ours, cost_uniform):
    """Economic cost ratio of the optimal policy to the decay-matched
    uniform policy; NaN flags an undefined (zero-denominator) ratio."""
    if cost_uniform == 0.0:
        return float("nan")
    return cost_ours / cost_uniform


def _batched_final_cumulative(z_grid, state0, factors, params, horizon, dt):
    """Final cumulative infections for a stack of policies at once."""
    z_grid = np.asarray(z_grid, dtype=float)
    m = z_grid.shape[0]
    n = factors.n
    N = factors.populations
    A = np.einsum("ij,mj,kj->mik", factors.C, z_grid, factors.B)
    steps = int(round(horizon / dt))
    if params.family == SIS:
        x = np.broadcast_to(state0.x, (m, n)).copy()
        cum = np.zeros((m, n))

        def deriv(xc):
            x_, c_ = xc
            inflow = (1.0 - x_) * (params.beta_s * np.einsum("mik,mk->mi", A, x_))
            return inflow - params.gamma * x_, inflow

        state = (x, cum)
        for _ in range(steps):
            k1 = deriv(state)
            k2 = deriv((state[0] + 0.5 * dt * k1[0], state[1] + 0.5 * dt * k1[1]))
            k3 = deriv((state[0] + 0.5 * dt * k2[0], state[1] + 0.5 * dt * k2[1]))
            k4 = deriv((state[0] + dt * k3[0], state[1] + dt * k3[1]))
            state = (np.clip(state[0] + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]), 0, 1),
                     state[1] + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]))
        return (np.broadcast_to(state0.x, (m, n)) + state[1]) @ N
    s = np.broadcast_to(state0.s, (m, n)).copy()
    xa = np.broadcast_to(state0.x_a, (m, n)).copy()
    xs = np.broadcast_to(state0.x_s, (m, n)).copy()
    y = np.concatenate([s, xa, xs], axis=1)

    def deriv(y_):
        s_, xa_, xs_ = y_[:, :n], y_[:, n:2 * n], y_[:, 2 * n:]
        force = np.einsum("mik,mk->mi", A, params.beta_a * xa_ + params.beta_s * xs_)
        new = s_ * force
        return np.concatenate([-new,
                               new - (params.epsilon + params.r_a) * xa_,
                               params.epsilon * xa_ - params.r_s * xs_], axis=1)

    for _ in range(steps):
        k1 = deriv(y)
        k2 = deriv(y + 0.5 * dt * k1)
        k3 = deriv(y + 0.5 * dt * k2)
        k4 = deriv(y + dt * k3)
        y = np.clip(y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), 0.0, 1.0)
    return (1.0 - y[:, :n]) @ N


def grid_search_two_param(partition, constraint_order, budget_or_rate, params,
                          factors, s0=None, state0=None, mode="cost_capped",
                          horizon=500.0, grid=0.01, refine=0.001, dt=0.5):
    """Exhaustive two-level lockdowns over a location partition.

    cost_capped: minimise final cumulative cases by simulation subject to
    cost <= budget and the ordering constraint.  rate_constrained:
    minimise cost subject to the linearised decay rate target.  Grid step
    `grid` with one local refinement at `refine`.
    """
    inside = np.asarray(partition, dtype=bool)
    if inside.shape != (factors.n,):
        raise DimensionMismatch("partition length mismatch")
    c = factors.cost_coeffs

    def expand(z1, z2):
        z = np.where(inside, z1, z2)
        return z

    def ordering_ok(z1, z2):
        if constraint_order == "inside_harder":
            return z1 <= z2
        if constraint_order == "outside_harder":
            return z2 <= z1
        return True

    def feasible_pairs(values):
        pairs = []
        for z1 in values:
            for z2 in values:
                if not ordering_ok(z1, z2):
                    continue
                pairs.append((z1, z2))
        return pairs

    def evaluate(pairs):
        if mode == "cost_capped":
            kept = [(z1, z2) for z1, z2 in pairs
                    if lockdown_cost(expand(z1, z2), c) <= budget_or_rate]
            if not kept:
                raise ValueError("no feasible grid point under the budget")
            zs = np.array([expand(z1, z2) for z1, z2 in kept])
            finals = _batched_final_cumulative(zs, state0, factors, params, horizon, dt)
            i = int(np.argmin(finals))
            return kept[i], float(finals[i])
        best, best_cost = None, np.inf
        for z1, z2 in pairs:
            z = expand(z1, z2)
            M = assemble_linearization(factors, z, params, s0)
            if spectral.perron(M).value <= -budget_or_rate:
                cost = lockdown_cost(z, c)
                if cost < best_cost:
                    best, best_cost = (z1, z2), cost
        if best is None:
            raise ValueError("no grid point achieves the decline target")
        return best, best_cost

    values = np.round(np.arange(grid, 1.0 + grid / 2, grid), 10)
    (z1, z2), metric = evaluate(feasible_pairs(values))
    lo1, hi1 = max(refine, z1 - grid), min(1.0, z1 + grid)
    lo2, hi2 = max(refine, z2 - grid), min(1.0, z2 + grid)
    fine1 = np.round(np.arange(lo1, hi1 + refine / 2, refine), 10)
    fine2 = np.round(np.arange(lo2, hi2 + refine / 2, refine), 10)
    pairs = [(a, b) for a in fine1 for b in fine2 if ordering_ok(a, b)]
    (z1, z2), metric = evaluate(pairs)
    return (float(z1), float(z2)), metric
