"""Finite-truncation realization of the ladder-operator formalism.

States of a k-queue network live on the product space of occupancy tuples
``(n_1, ..., n_k)`` with ``0 <= n_i <= cutoff_i``, flattened in C order
(queue 0 varies slowest).  Probability vectors are column vectors and
generators act from the left, ``d psi/dt = L psi``, so a conservative
generator has zero column sums.

Two truncations are provided.  ``blocking`` builds the CTMC generator in
which any transition that would push a queue past its cutoff is suppressed;
it conserves probability and is what stationary states, evolution and
correlation values are computed from.  ``leaky`` is the literal operator
``sum_ij (1 - a+_j) L_ij (Q_i - rho_i)`` with creation past the cutoff
dropped; it agrees with the blocking generator on interior states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components
from scipy.stats import poisson

from .errors import NotIrreducible, SolverFailure, StateSpaceTooLarge
from .network import NetworkSpec, flow_matrix

MAX_STATES = 2_000_000
BOUNDARY_MODES = ("blocking", "leaky")


def default_cutoffs(rho, tail: float = 1e-10, lo: int = 20, hi: int = 200) -> tuple[int, ...]:
    """Per-queue cutoff where the geometric tail drops below ``tail``."""
    cutoffs = []
    for r in np.atleast_1d(np.asarray(rho, dtype=float)):
        if r <= 0:
            c = lo
        else:
            c = math.ceil(math.log(tail) / math.log(r))
        cutoffs.append(int(min(max(c, lo), hi)))
    return tuple(cutoffs)


@dataclass(frozen=True)
class TruncationSpec:
    cutoffs: tuple[int, ...]
    boundary_mode: str = "blocking"
    max_states: int = MAX_STATES

    def __post_init__(self):
        object.__setattr__(self, "cutoffs", tuple(int(c) for c in self.cutoffs))
        if any(c < 2 for c in self.cutoffs):
            raise ValueError(f"every cutoff must be >= 2, got {self.cutoffs}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ValueError(f"boundary_mode must be one of {BOUNDARY_MODES}")
        if self.size > self.max_states:
            raise StateSpaceTooLarge(
                f"{self.size} states exceeds the limit of {self.max_states}"
            )

    @classmethod
    def for_spec(cls, spec: NetworkSpec, boundary_mode: str = "blocking", **kw) -> "TruncationSpec":
        return cls(default_cutoffs(spec.rho, **kw), boundary_mode)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.cutoffs)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def n_queues(self) -> int:
        return len(self.cutoffs)

    def occupancy(self, queue: int) -> np.ndarray:
        """Occupancy of ``queue`` at every flattened state."""
        shape = [1] * self.n_queues
        shape[queue] = self.shape[queue]
        levels = np.arange(self.shape[queue]).reshape(shape)
        return np.broadcast_to(levels, self.shape).ravel()

    def index(self, occupancy) -> int:
        return int(np.ravel_multi_index(tuple(occupancy), self.shape))

    def with_mode(self, boundary_mode: str) -> "TruncationSpec":
        return TruncationSpec(self.cutoffs, boundary_mode, self.max_states)


@dataclass(frozen=True, eq=False)
class StateVector:
    values: np.ndarray
    trunc: TruncationSpec

    def total(self) -> float:
        """``<I|psi>``: the all-ones functional applied to the vector."""
        return float(self.values.sum())

    def at(self, occupancy) -> float:
        return float(self.values[self.trunc.index(occupancy)])

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.trunc.shape)


@dataclass(frozen=True, eq=False)
class TruncatedOperator:
    matrix: sp.csr_matrix | np.ndarray
    trunc: TruncationSpec

    def __matmul__(self, other):
        if isinstance(other, TruncatedOperator):
            return TruncatedOperator(_as_sparse(self.matrix @ other.matrix), self.trunc)
        if isinstance(other, StateVector):
            return StateVector(np.asarray(self.matrix @ other.values).ravel(), self.trunc)
        return self.matrix @ other

    def toarray(self) -> np.ndarray:
        if sp.issparse(self.matrix):
            return self.matrix.toarray()
        return np.asarray(self.matrix)

    def element(self, row_occ, col_occ) -> float:
        i, j = self.trunc.index(row_occ), self.trunc.index(col_occ)
        return float(self.matrix[i, j])


def _as_sparse(m):
    return m.tocsr() if sp.issparse(m) else sp.csr_matrix(m)


def _single(kind: str, cutoff: int) -> sp.csr_matrix:
    dim = cutoff + 1
    if kind == "create":
        # |n> -> |n+1>; the image of |cutoff> is dropped
        return sp.diags(np.ones(dim - 1), -1, shape=(dim, dim), format="csr")
    if kind == "annihilate":
        return sp.diags(np.arange(1, dim, dtype=float), 1, shape=(dim, dim), format="csr")
    if kind == "serve":
        return sp.diags(np.ones(dim - 1), 1, shape=(dim, dim), format="csr")
    raise ValueError(f"unknown ladder kind {kind!r}")


def _lift(single: sp.spmatrix, queue: int, trunc: TruncationSpec) -> sp.csr_matrix:
    factors = [
        single if k == queue else sp.identity(d, format="csr")
        for k, d in enumerate(trunc.shape)
    ]
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), factors)


def ladder(kind: str, queue: int, trunc: TruncationSpec) -> TruncatedOperator:
    """Creation (a+), annihilation (a) or serve (Q) operator on one queue.

    ``create``: |n> -> |n+1> (zero at the cutoff), ``annihilate``:
    |n> -> n|n-1>, ``serve``: |n> -> |n-1> for n > 0 and |0> -> 0.
    """
    if not 0 <= queue < trunc.n_queues:
        raise IndexError(f"queue {queue} out of range for {trunc.n_queues} queues")
    return TruncatedOperator(_lift(_single(kind, trunc.cutoffs[queue]), queue, trunc), trunc)


def busy_projector(queue: int, trunc: TruncationSpec) -> TruncatedOperator:
    """``a+ Q`` on one queue: keeps the states where that queue is non-empty."""
    return TruncatedOperator(
        sp.diags((trunc.occupancy(queue) > 0).astype(float), format="csr"), trunc
    )


def _blocking_generator(spec: NetworkSpec, trunc: TruncationSpec) -> sp.csr_matrix:
    size = trunc.size
    occ = [trunc.occupancy(q) for q in range(spec.n)]
    strides = np.array([int(np.prod(trunc.shape[q + 1:], dtype=np.int64)) for q in range(spec.n)])
    src_all = np.arange(size)
    rows, cols, vals = [], [], []

    def add(src, dst, rate):
        if np.isscalar(rate):
            if rate == 0.0:
                return
            rate = np.full(src.size, rate)
        rows.append(dst)
        cols.append(src)
        vals.append(rate)

    exit_prob = spec.exit_probability
    for j in range(spec.n):
        src = src_all[occ[j] < trunc.cutoffs[j]]
        add(src, src + strides[j], float(spec.gamma[j]))
    for i in range(spec.n):
        busy = occ[i] > 0
        src = src_all[busy]
        add(src, src - strides[i], float(spec.mu[i] * exit_prob[i]))
        for j in range(spec.n):
            r = float(spec.routing[i, j])
            if r == 0.0 or j == i:
                continue
            ok = busy & (occ[j] < trunc.cutoffs[j])
            src = src_all[ok]
            add(src, src - strides[i] + strides[j], float(spec.mu[i] * r))

    if rows:
        rows_a = np.concatenate(rows)
        cols_a = np.concatenate(cols)
        vals_a = np.concatenate(vals)
    else:
        rows_a = cols_a = np.zeros(0, dtype=np.int64)
        vals_a = np.zeros(0)
    offdiag = sp.csr_matrix((vals_a, (rows_a, cols_a)), shape=(size, size))
    outflow = np.asarray(offdiag.sum(axis=0)).ravel()
    return (offdiag - sp.diags(outflow)).tocsr()


def _leaky_generator(spec: NetworkSpec, trunc: TruncationSpec) -> sp.csr_matrix:
    size = trunc.size
    eye = sp.identity(size, format="csr")
    L = flow_matrix(spec.mu, spec.routing)
    create = [ladder("create", q, trunc).matrix for q in range(spec.n)]
    serve = [ladder("serve", q, trunc).matrix for q in range(spec.n)]
    out = sp.csr_matrix((size, size))
    for i in range(spec.n):
        shifted = serve[i] - spec.rho[i] * eye
        for j in range(spec.n):
            if L[i, j] != 0.0:
                out = out + L[i, j] * ((eye - create[j]) @ shifted)
    return out.tocsr()


def build_generator(spec: NetworkSpec, trunc: TruncationSpec) -> TruncatedOperator:
    """The Jackson generator on the truncated space (see module docstring)."""
    if trunc.n_queues != spec.n:
        raise ValueError(f"truncation has {trunc.n_queues} queues, network has {spec.n}")
    if trunc.boundary_mode == "blocking":
        return TruncatedOperator(_blocking_generator(spec, trunc), trunc)
    return TruncatedOperator(_leaky_generator(spec, trunc), trunc)


def stationary_product_state(rho, trunc: TruncationSpec) -> StateVector:
    """Product of geometric laws (1-rho) rho^n, each renormalized to its cutoff."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    factors = []
    for r, c in zip(rho, trunc.cutoffs):
        geo = r ** np.arange(c + 1)
        factors.append(geo / geo.sum())
    values = reduce(np.multiply.outer, factors).ravel()
    return StateVector(values, trunc)


def _closed_classes(matrix: sp.spmatrix) -> int:
    # edges src -> dst for positive off-diagonal rates
    adjacency = (matrix.T.tocsr() != 0).astype(np.int8)
    adjacency.setdiag(0)
    adjacency.eliminate_zeros()
    ncomp, labels = connected_components(adjacency, directed=True, connection="strong")
    coo = adjacency.tocoo()
    leaves = labels[coo.row] != labels[coo.col]
    has_exit = np.zeros(ncomp, dtype=bool)
    has_exit[labels[coo.row[leaves]]] = True
    return int(ncomp - has_exit.sum())


def stationary_exact(generator: TruncatedOperator) -> StateVector:
    """Null vector of the generator, normalized to a probability vector."""
    A = generator.matrix
    if not sp.issparse(A):
        A = sp.csr_matrix(A)
    n_closed = _closed_classes(A)
    if n_closed != 1:
        raise NotIrreducible(f"truncated chain has {n_closed} closed classes")
    size = A.shape[0]
    # replace one balance equation with the normalization
    M = A.tolil()
    M[0, :] = np.ones(size)
    rhs = np.zeros(size)
    rhs[0] = 1.0
    M = M.tocsc()
    lu = spla.splu(M)
    psi = lu.solve(rhs)
    psi = psi + lu.solve(rhs - M @ psi)
    psi[np.abs(psi) < 1e-300] = 0.0
    if psi.min() < -1e-14:
        raise SolverFailure(f"stationary solve produced entry {psi.min():.3g}")
    psi = np.clip(psi, 0.0, None)
    return StateVector(psi / psi.sum(), generator.trunc)


class Resolvent:
    """Factorized ``(omega I - L)^{-1}`` for repeated application."""

    def __init__(self, generator: TruncatedOperator, omega: float):
        if not omega > 0:
            raise ValueError(f"omega must be > 0, got {omega}")
        self.omega = float(omega)
        self.generator = generator
        A = generator.matrix
        if not sp.issparse(A):
            A = sp.csr_matrix(A)
        self._system = (self.omega * sp.identity(A.shape[0], format="csc") - A).tocsc()
        try:
            self._lu = spla.splu(self._system)
        except RuntimeError as exc:
            raise SolverFailure(str(exc)) from exc

    def __call__(self, vector):
        trunc = self.generator.trunc
        v = vector.values if isinstance(vector, StateVector) else np.asarray(vector, dtype=float)
        u = self._lu.solve(v)
        r = v - self._system @ u
        u = u + self._lu.solve(r)
        residual = np.linalg.norm(v - self._system @ u)
        scale = max(np.linalg.norm(v), 1e-300)
        if residual > 1e-10 * scale:
            raise SolverFailure(f"resolvent residual {residual:.3g} exceeds 1e-10*|v|")
        return StateVector(u, trunc)


def resolvent_apply(generator: TruncatedOperator, omega: float, vector) -> StateVector:
    """Solve ``(omega I - L) u = v``."""
    return Resolvent(generator, omega)(vector)


def evolve(generator: TruncatedOperator, state: StateVector, t: float, tol: float = 1e-10) -> StateVector:
    """``exp(t L) psi`` by uniformization.

    With ``P = I + L / Lam`` (column-stochastic for Lam >= max exit rate),
    ``exp(tL) = sum_k Poisson(k; Lam t) P^k``; the Poisson sum is cut where
    the omitted weight is below ``tol``, which bounds the 1-norm error by
    ``tol * |psi|_1``.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    v = np.array(state.values, dtype=float)
    if t == 0:
        return StateVector(v, state.trunc)
    A = generator.matrix if sp.issparse(generator.matrix) else sp.csr_matrix(generator.matrix)
    lam = float(np.max(-A.diagonal())) * 1.02
    if lam == 0.0:
        return StateVector(v, state.trunc)
    P = (sp.identity(A.shape[0], format="csr") + A / lam).tocsr()
    mean = lam * t
    left = int(poisson.ppf(tol / 2, mean)) if mean > 50 else 0
    right = int(poisson.isf(tol / 2, mean)) + 1
    ks = np.arange(left, right + 1)
    weights = poisson.pmf(ks, mean)
    out = np.zeros_like(v)
    for _ in range(left):
        v = P @ v
    for w in weights:
        out += w * v
        v = P @ v
    return StateVector(out, state.trunc)


class CorrelationOracle:
    """Exact busy-busy correlations of a truncated network.

    ``value(alpha, beta, omega)`` is ``<I| P_alpha (omega - L)^{-1} P_beta psi>``
    with ``P`` the busy projector and ``psi`` the exact stationary state of
    the blocking generator: the Laplace transform of
    Prob(queue beta busy at 0 and queue alpha busy at t).
    """

    def __init__(self, spec: NetworkSpec, trunc: TruncationSpec | None = None):
        if trunc is None:
            trunc = TruncationSpec.for_spec(spec)
        if trunc.boundary_mode != "blocking":
            trunc = trunc.with_mode("blocking")
        self.spec = spec
        self.trunc = trunc
        self.generator = build_generator(spec, trunc)
        self.stationary = stationary_exact(self.generator)
        self._busy = [trunc.occupancy(q) > 0 for q in range(spec.n)]
        self._resolvents: dict[float, Resolvent] = {}

    def resolvent(self, omega: float) -> Resolvent:
        key = float(omega)
        if key not in self._resolvents:
            self._resolvents[key] = Resolvent(self.generator, key)
        return self._resolvents[key]

    def value(self, alpha: int, beta: int, omega: float) -> float:
        source = np.where(self._busy[beta], self.stationary.values, 0.0)
        u = self.resolvent(omega)(source).values
        return float(u[self._busy[alpha]].sum())

    def busy_fraction(self, queue: int) -> float:
        return float(self.stationary.values[self._busy[queue]].sum())


def correlation_oracle(spec: NetworkSpec, trunc: TruncationSpec | None, alpha: int, beta: int, omega: float) -> float:
    return CorrelationOracle(spec, trunc).value(alpha, beta, omega)


def mm1_green_matrix(mu: float, rho: float, omega: float, cutoff: int) -> TruncatedOperator:
    """Normal-ordered single-queue Green's function as an explicit matrix.

    ``g(omega) = x/(mu rho) (1 - x a+)^{-1} (1 + x/(rho - x) (1 - a+ Q)) (1 - x Q/rho)^{-1}``
    with ``x = x(omega)``.  The geometric series terminate on the truncated
    space, so every element ``<m|g|n>`` is exact for the infinite queue.
    """
    from .analytics import root_and_gap

    if not (0 < rho < 1 and omega > 0):
        raise ValueError("need 0 < rho < 1 and omega > 0")
    trunc = TruncationSpec((cutoff,), "leaky")
    x, gap = root_and_gap(mu, rho, omega)
    dim = cutoff + 1
    create = _single("create", cutoff).toarray()
    serve = _single("serve", cutoff).toarray()
    eye = np.eye(dim)

    def geometric(op):
        total, term = eye.copy(), eye.copy()
        for _ in range(cutoff):
            term = term @ op
            total += term
        return total

    left = geometric(x * create)
    right = geometric((x / rho) * serve)
    middle = eye + (x / gap) * (eye - create @ serve)
    green = (x / (mu * rho)) * (left @ middle @ right)
    return TruncatedOperator(green, trunc)


def single_queue_spec(mu: float, rho: float) -> NetworkSpec:
    return NetworkSpec.from_rho([mu], [[0.0]], [rho])
