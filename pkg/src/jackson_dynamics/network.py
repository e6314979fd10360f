"""Open Jackson networks: definition, traffic equations and validation.

Queues are indexed from 0 in the Python API.  The routing matrix holds
``routing[i, j]`` = probability that a customer finishing service at ``i``
joins ``j``; ``1 - routing[i].sum()`` is the probability of leaving.

With ``L[i, j] = (delta_ij - routing[i, j]) * mu[i]`` the flow balance reads
``sum_i L[i, j] * rho[i] = gamma[j]`` for every queue ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeExternalRate, SingularRouting, Unstable

TOL = 1e-10
FEASIBILITY_TOL = -1e-12


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def _as_routing(routing, n: int) -> np.ndarray:
    arr = np.array(routing, dtype=float)
    if arr.shape != (n, n):
        raise ValueError(f"routing must be {n}x{n}, got shape {arr.shape}")
    return arr


def flow_matrix(mu, routing) -> np.ndarray:
    """Return ``L[i, j] = (delta_ij - routing[i, j]) * mu[i]``."""
    mu = _as_vector(mu, "mu")
    routing = _as_routing(routing, mu.size)
    return (np.eye(mu.size) - routing) * mu[:, None]


def spectral_radius(routing) -> float:
    routing = np.asarray(routing, dtype=float)
    if routing.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(routing))))


def gamma_from_rho(mu, routing, rho) -> np.ndarray:
    """External arrival rates that make ``rho`` the stationary utilization.

    Raises NegativeExternalRate when some queue would need a negative
    external rate, i.e. the requested ``rho`` cannot be produced by this
    routing and these service rates.
    """
    mu = _as_vector(mu, "mu")
    rho = _as_vector(rho, "rho")
    routing = _as_routing(routing, mu.size)
    throughput = mu * rho
    gamma = throughput - routing.T @ throughput
    bad = np.flatnonzero(gamma < FEASIBILITY_TOL)
    if bad.size:
        j = int(bad[0])
        raise NegativeExternalRate(
            f"queue {j} would need external rate {gamma[j]:.6g} < 0"
        )
    # absorb round-off at the feasibility boundary
    return np.where(gamma < 0.0, 0.0, gamma)


def solve_traffic(mu, routing, gamma) -> np.ndarray:
    """Solve the traffic equations for the utilizations ``rho``.

    Raises SingularRouting if the network is not open and Unstable if the
    solution has some ``rho[i] >= 1``.
    """
    mu = _as_vector(mu, "mu")
    gamma = _as_vector(gamma, "gamma")
    routing = _as_routing(routing, mu.size)
    radius = spectral_radius(routing)
    if radius >= 1.0 - 1e-12:
        raise SingularRouting(f"spectral radius of routing is {radius:.6g} >= 1")
    rho = np.linalg.solve(flow_matrix(mu, routing).T, gamma)
    rho = np.where(np.abs(rho) < 1e-300, 0.0, rho)
    unstable = np.flatnonzero(rho >= 1.0)
    if unstable.size:
        i = int(unstable[0])
        raise Unstable(f"queue {i} has utilization {rho[i]:.6g} >= 1")
    return rho


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """An open Jackson network.

    Build it with :meth:`from_rho` or :meth:`from_gamma` so that the traffic
    equations hold; the raw constructor does not check anything (use
    :func:`validate` for a full report).
    """

    mu: np.ndarray
    routing: np.ndarray
    gamma: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        for name in ("mu", "gamma", "rho"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        routing = np.array(self.routing, dtype=float)
        routing.setflags(write=False)
        object.__setattr__(self, "routing", routing)

    @property
    def n(self) -> int:
        return int(self.mu.size)

    @classmethod
    def from_rho(cls, mu, routing, rho) -> "NetworkSpec":
        gamma = gamma_from_rho(mu, routing, rho)
        return cls(mu=mu, routing=routing, gamma=gamma, rho=rho)

    @classmethod
    def from_gamma(cls, mu, routing, gamma) -> "NetworkSpec":
        rho = solve_traffic(mu, routing, gamma)
        return cls(mu=mu, routing=routing, gamma=gamma, rho=rho)

    @property
    def exit_probability(self) -> np.ndarray:
        return 1.0 - self.routing.sum(axis=1)

    def flow_matrix(self) -> np.ndarray:
        return flow_matrix(self.mu, self.routing)


def two_queue_family(p: float) -> NetworkSpec:
    """The 2x2 benchmark family: routing [[0, p], [2p, 0]], rho=(0.3, 0.7),
    mu=(0.3, 0.2).  Feasible for p up to about 0.3214."""
    return NetworkSpec.from_rho(
        mu=[0.3, 0.2], routing=[[0.0, p], [2.0 * p, 0.0]], rho=[0.3, 0.7]
    )


@dataclass(frozen=True, eq=False)
class PerturbationCoupling:
    """Cross-queue coupling strengths ``delta_L[b, a] = routing[b, a] * mu[b]``.

    ``delta_L[b, a]`` is the rate at which queue ``b`` feeds queue ``a`` when
    busy; it is the amplitude used to normalize the type-1 data collapse.
    ``epsilon`` scales the whole coupling (1 for the physical network).
    """

    delta_L: np.ndarray
    epsilon: float = 1.0

    @classmethod
    def from_spec(cls, spec: NetworkSpec, epsilon: float = 1.0) -> "PerturbationCoupling":
        if np.any(np.diag(spec.routing) != 0.0):
            raise ValueError("perturbative coupling needs zero-diagonal routing")
        delta = spec.routing * spec.mu[:, None]
        delta.setflags(write=False)
        return cls(delta_L=delta, epsilon=float(epsilon))

    def strength(self, beta: int, alpha: int) -> float:
        """Coupling from queue ``beta`` into queue ``alpha``."""
        return float(self.delta_L[beta, alpha])


@dataclass(frozen=True)
class Violation:
    code: str
    index: int | None
    value: float
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __iter__(self):
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def add(self, code, index, value, message):
        self.violations.append(Violation(code, index, float(value), message))


def validate(spec: NetworkSpec, tol: float = TOL) -> ValidationReport:
    """Check every network invariant; an empty report means the spec is valid."""
    report = ValidationReport()
    mu, routing, gamma, rho = spec.mu, spec.routing, spec.gamma, spec.rho
    n = mu.size
    shapes = {"gamma": gamma.shape, "rho": rho.shape}
    for name, shape in shapes.items():
        if shape != (n,):
            report.add("Shape", None, float("nan"), f"{name} has shape {shape}, expected ({n},)")
    if routing.shape != (n, n):
        report.add("Shape", None, float("nan"), f"routing has shape {routing.shape}, expected ({n}, {n})")
    if not report.ok:
        return report

    for i in np.flatnonzero(~(mu > 0)):
        report.add("NonPositiveServiceRate", int(i), mu[i], f"mu[{i}] = {mu[i]:.6g} must be > 0")
    for i, j in zip(*np.nonzero(routing < 0)):
        report.add(
            "NegativeRouting", int(i), routing[i, j],
            f"routing[{i}, {j}] = {routing[i, j]:.6g} < 0",
        )
    rows = routing.sum(axis=1)
    for i in np.flatnonzero(rows > 1.0 + tol):
        report.add("RowSum", int(i), rows[i], f"routing row {i} sums to {rows[i]:.6g} > 1")
    radius = spectral_radius(routing)
    if radius >= 1.0 - 1e-12:
        report.add("SingularRouting", None, radius, f"spectral radius of routing is {radius:.6g} >= 1")
    for j in np.flatnonzero(gamma < 0):
        report.add("NegativeExternalRate", int(j), gamma[j], f"gamma[{j}] = {gamma[j]:.6g} < 0")
    for i in np.flatnonzero(rho < 0):
        report.add("NegativeUtilization", int(i), rho[i], f"rho[{i}] = {rho[i]:.6g} < 0")
    for i in np.flatnonzero(rho >= 1):
        report.add("Unstable", int(i), rho[i], f"queue {i} has rho = {rho[i]:.6g} >= 1")

    residual = flow_matrix(mu, routing).T @ rho - gamma
    for j in np.flatnonzero(np.abs(residual) > tol):
        report.add(
            "TrafficResidual", int(j), residual[j],
            f"flow balance at queue {j} off by {residual[j]:.3g}",
        )
    return report
