"""Domain types: travel networks, infection-flow factorisation, disease
parameters, lockdown policies and their costs.

The infection-flow matrix couples locations through shared visits: entry
(i, j) sums, over every destination l, the chance that residents of i and
infected residents of j meet at l, weighted by j's population share among
the visitors of l.  It factors exactly as C diag(z) B^T where z is the
per-location activity (lockdown) vector, which is what every solver in
this package exploits.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLocation, DimensionMismatch, InfeasibleAlpha

MINUTES_PER_DAY = 1440.0

SIS = "sis"
SIR = "sir"
COVID = "covid"
FAMILIES = (SIS, SIR, COVID)


def _freeze(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CostKind:
    """Shape of the lockdown cost functional.

    kind 'inverse' is sum c_i (1/z_i - 1); 'power' is sum c_i (z_i^-k - 1);
    'capped' saturates the inverse at a ceiling instead of blowing up.
    """

    kind: str = "inverse"
    param: float | None = None

    def __post_init__(self):
        if self.kind not in ("inverse", "power", "capped"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "inverse" and self.param is not None:
            raise ValueError("inverse cost takes no parameter")
        if self.kind == "power" and (self.param is None or self.param <= 1.0):
            raise ValueError("power cost needs an exponent > 1")
        if self.kind == "capped" and (self.param is None or self.param <= 1.0):
            raise ValueError("capped cost needs a ceiling > 1")

    @classmethod
    def inverse(cls):
        return cls("inverse")

    @classmethod
    def power(cls, k):
        return cls("power", float(k))

    @classmethod
    def capped(cls, ceiling):
        return cls("capped", float(ceiling))

    def label(self):
        if self.kind == "inverse":
            return "inverse"
        return f"{self.kind}:{self.param:g}"

    @classmethod
    def parse(cls, text):
        if text == "inverse":
            return cls.inverse()
        head, _, arg = text.partition(":")
        if head == "power":
            return cls.power(float(arg))
        if head == "capped":
            return cls.capped(float(arg))
        raise ValueError(f"cannot parse cost kind {text!r}")


@dataclass(frozen=True)
class TravelMatrix:
    """Daily travel rates between locations, as fractions of a day.

    Row i sums to the fraction of the day residents of i spend away from
    home, i.e. 1 - h_i/1440 for home-dwell h_i in minutes.
    """

    tau: np.ndarray
    n: int = 0

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if tau.ndim != 2 or tau.shape[0] != tau.shape[1]:
            raise DimensionMismatch(f"travel matrix must be square, got {tau.shape}")
        if np.any(tau < 0):
            raise ValueError("travel rates must be nonnegative")
        if np.any(tau.sum(axis=1) > 1.0 + 1e-9):
            raise ValueError("travel-rate row sums exceed one day")
        object.__setattr__(self, "tau", _freeze(tau))
        object.__setattr__(self, "n", tau.shape[0])

    def has_positive_diagonal(self):
        return bool(np.all(np.diag(self.tau) > 0))


@dataclass(frozen=True)
class NetworkData:
    """Everything the epidemic runs on: populations, travel, and the
    relative economic weight of shutting each location down."""

    populations: np.ndarray
    employment: np.ndarray
    cost_coeffs: np.ndarray
    travel: TravelMatrix
    home_dwell: np.ndarray
    location_ids: tuple = ()

    def __post_init__(self):
        N = np.asarray(self.populations, dtype=float)
        e = np.asarray(self.employment, dtype=float)
        c = np.asarray(self.cost_coeffs, dtype=float)
        h = np.asarray(self.home_dwell, dtype=float)
        n = self.travel.n
        for name, v in (("populations", N), ("employment", e),
                        ("cost_coeffs", c), ("home_dwell", h)):
            if v.shape != (n,):
                raise DimensionMismatch(f"{name} has shape {v.shape}, expected ({n},)")
        if np.any(N <= 0):
            raise ValueError("populations must be positive")
        if np.any(e < 0):
            raise ValueError("employment must be nonnegative")
        if np.any(c <= 0):
            raise ValueError(
                "cost coefficients must be strictly positive; zero-cost "
                "locations break the balancing reduction (use the ingest "
                "floor option for zero-employment rows)")
        ids = self.location_ids or tuple(str(i) for i in range(n))
        if len(ids) != n:
            raise DimensionMismatch("location_ids length mismatch")
        tau = self.travel.tau
        expected = 1.0 - h / MINUTES_PER_DAY
        got = tau.sum(axis=1)
        if np.max(np.abs(got - expected)) > 1e-9:
            warnings.warn("travel row sums disagree with home-dwell; renormalising rows",
                          stacklevel=2)
            scale = np.where(got > 0, expected / np.where(got > 0, got, 1.0), 0.0)
            tau = tau * scale[:, None]
            object.__setattr__(self, "travel", TravelMatrix(tau))
        object.__setattr__(self, "populations", _freeze(N))
        object.__setattr__(self, "employment", _freeze(e))
        object.__setattr__(self, "cost_coeffs", _freeze(c))
        object.__setattr__(self, "home_dwell", _freeze(h))
        object.__setattr__(self, "location_ids", tuple(ids))

    @property
    def n(self):
        return self.travel.n

    @classmethod
    def from_raw(cls, tau, populations, employment, home_dwell,
                 location_ids=(), employment_floor=None):
        """Build NetworkData, normalising costs by the largest employment.

        employment_floor, if given, lifts zero-employment locations to a
        small positive cost instead of rejecting them.
        """
        e = np.asarray(employment, dtype=float)
        c = e / e.max()
        if employment_floor is not None:
            c = np.maximum(c, employment_floor)
        return cls(populations=populations, employment=e, cost_coeffs=c,
                   travel=TravelMatrix(tau), home_dwell=home_dwell,
                   location_ids=tuple(location_ids))


@dataclass(frozen=True)
class FlowFactors:
    """The factorisation A = C diag(z) B^T of the infection-flow matrix,
    plus the raw ingredients the reductions need later."""

    C: np.ndarray
    B: np.ndarray
    tau: np.ndarray
    populations: np.ndarray
    cost_coeffs: np.ndarray
    visit_weight: np.ndarray  # visit_weight[l] = sum_k N_k tau_kl
    location_ids: tuple = ()

    def __post_init__(self):
        for name in ("C", "B", "tau", "populations", "cost_coeffs", "visit_weight"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def n(self):
        return self.C.shape[0]

    @property
    def BT(self):
        return self.B.T

    def flow_matrix(self):
        """A(1) = C B^T, the no-lockdown infection-flow matrix."""
        return self.C @ self.B.T


def build_flow_matrix(net):
    """Construct the C, B factors of the infection-flow matrix.

    C is the travel matrix itself; B^T reweights return travel by the
    infected population share among each destination's visitors.
    """
    tau = net.travel.tau
    N = net.populations
    m = tau.T @ N  # people visiting each location per day-fraction
    if np.any(m <= 0):
        bad = int(np.argmin(m))
        raise DegenerateLocation(
            f"location {net.location_ids[bad]} is visited by nobody; "
            "the visit normalisation is undefined")
    BT = (tau.T * N[None, :]) / m[:, None]
    C = tau.copy()
    B = BT.T
    if np.any((C != 0).sum(axis=1) == 0) or np.any((C != 0).sum(axis=0) == 0):
        raise DegenerateLocation("C has a zero row or column")
    if np.any((B != 0).sum(axis=1) == 0) or np.any((B != 0).sum(axis=0) == 0):
        raise DegenerateLocation("B has a zero row or column")
    return FlowFactors(C=C, B=B, tau=tau, populations=N,
                       cost_coeffs=net.cost_coeffs, visit_weight=m,
                       location_ids=net.location_ids)


def apply_lockdown(factors, z):
    """Post-lockdown infection-flow matrix A(z) = C diag(z) B^T."""
    z = np.asarray(z, dtype=float)
    if z.shape != (factors.n,):
        raise DimensionMismatch(f"z has shape {z.shape}, expected ({factors.n},)")
    if np.any(z <= 0):
        raise ValueError("lockdown entries must be strictly positive")
    return (factors.C * z[None, :]) @ factors.B.T


def lockdown_cost(z, c, kind=CostKind.inverse()):
    """Economic cost of the activity vector z under the chosen functional."""
    z = np.asarray(z, dtype=float)
    c = np.asarray(c, dtype=float)
    if z.shape != c.shape:
        raise DimensionMismatch("z and cost coefficients differ in length")
    if np.any(z <= 0):
        raise ValueError("z entries must be strictly positive (z=0 has infinite cost)")
    if kind.kind == "inverse":
        return float(np.sum(c * (1.0 / z - 1.0)))
    if kind.kind == "power":
        return float(np.sum(c * (z ** (-kind.param) - 1.0)))
    return float(np.sum(c * (np.minimum(1.0 / z, kind.param) - 1.0)))


@dataclass(frozen=True)
class DiseaseParams:
    """Rates for one model family plus the target decay rate alpha.

    SIS uses beta_s as its single transmission rate and gamma as its
    recovery rate.  SIR is the two-class model with the symptomatic side
    switched off (beta_s = epsilon = r_s = 0, transmission beta_a).  The
    two-class model keeps beta_a tied to beta_s through alpha_hat.
    """

    family: str
    alpha: float
    beta_s: float = 0.0
    beta_a: float = 0.0
    epsilon: float = 0.0
    r_a: float = 0.0
    r_s: float = 0.0
    gamma: float = 0.0
    alpha_hat: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        for name in ("beta_s", "beta_a", "epsilon", "r_a", "r_s", "gamma", "alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.family == COVID:
            if self.alpha_hat is not None and self.beta_s > 0:
                tied = self.alpha_hat * self.beta_s
                if self.beta_a == 0.0:
                    object.__setattr__(self, "beta_a", tied)
                elif abs(self.beta_a - tied) > 1e-12 * max(1.0, tied):
                    raise ValueError("beta_a must equal alpha_hat * beta_s")
            if self.alpha >= self.alpha_max():
                raise InfeasibleAlpha(
                    f"alpha={self.alpha} outside [0, {self.alpha_max()}); no "
                    "lockdown can enforce that decay rate")
        elif self.family == SIR:
            if self.beta_s or self.epsilon or self.r_s:
                raise ValueError("SIR requires beta_s = epsilon = r_s = 0")
            if self.alpha >= self.r_a:
                raise InfeasibleAlpha(f"alpha={self.alpha} must be below r_a={self.r_a}")
        else:
            if self.alpha >= self.gamma:
                raise InfeasibleAlpha(f"alpha={self.alpha} must be below gamma={self.gamma}")

    def alpha_max(self):
        """Upper end of the attainable decay-rate domain."""
        if self.family == COVID:
            return min(self.r_s, self.epsilon + self.r_a)
        if self.family == SIR:
            return self.r_a
        return self.gamma

    def with_beta(self, beta):
        """Copy with the family's free transmission rate replaced."""
        if self.family == COVID:
            beta_a = (self.alpha_hat * beta) if self.alpha_hat is not None else self.beta_a
            return DiseaseParams(family=self.family, alpha=self.alpha, beta_s=beta,
                                 beta_a=beta_a, epsilon=self.epsilon, r_a=self.r_a,
                                 r_s=self.r_s, gamma=self.gamma, alpha_hat=self.alpha_hat)
        if self.family == SIR:
            return DiseaseParams(family=self.family, alpha=self.alpha, beta_a=beta,
                                 r_a=self.r_a, gamma=self.gamma)
        return DiseaseParams(family=self.family, alpha=self.alpha, beta_s=beta,
                             gamma=self.gamma)

    def transmission(self):
        if self.family == SIR:
            return self.beta_a
        return self.beta_s


def assemble_linearization(factors, z, params, s0=None):
    """Linearised infection dynamics at the initial state.

    Two-class model: the 2n x 2n block matrix over (asymptomatic,
    symptomatic) fractions.  SIR: the n x n asymptomatic block (the
    symptomatic row is frozen at zero).  SIS: beta A(z) - gamma I, which
    certifies decay from any state.
    """
    A_z = apply_lockdown(factors, z)
    n = factors.n
    if params.family == SIS:
        return params.beta_s * A_z - params.gamma * np.eye(n)
    if s0 is None:
        raise ValueError(f"{params.family} linearisation needs the susceptible state s0")
    s0 = np.asarray(s0, dtype=float)
    if s0.shape != (n,):
        raise DimensionMismatch("s0 length mismatch")
    if np.any(s0 < 0) or np.any(s0 > 1):
        raise ValueError("s0 entries must lie in [0, 1]")
    SA = s0[:, None] * A_z
    if params.family == SIR:
        return params.beta_a * SA - params.r_a * np.eye(n)
    topleft = params.beta_a * SA - (params.epsilon + params.r_a) * np.eye(n)
    topright = params.beta_s * SA
    return np.block([[topleft, topright],
                     [params.epsilon * np.eye(n), -params.r_s * np.eye(n)]])


@dataclass(frozen=True)
class LockdownPolicy:
    """A concrete activity vector plus the cost functional it was priced
    under.  exceeds_unit records unconstrained optima with entries > 1."""

    z: np.ndarray
    cost_kind: CostKind
    cost_value: float
    exceeds_unit: bool = False
    label: str = ""

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if np.any(z <= 0):
            raise ValueError("policy entries must be strictly positive")
        object.__setattr__(self, "z", _freeze(z))
        object.__setattr__(self, "exceeds_unit", bool(np.any(z > 1.0 + 1e-12)))

    @classmethod
    def from_z(cls, z, c, kind=CostKind.inverse(), label=""):
        return cls(z=z, cost_kind=kind, cost_value=lockdown_cost(z, c, kind), label=label)

    def check_cost(self, c):
        ref = lockdown_cost(self.z, c, self.cost_kind)
        scale = max(abs(ref), 1e-300)
        return abs(ref - self.cost_value) / scale <= 1e-12
