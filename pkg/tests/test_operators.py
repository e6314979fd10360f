import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from jackson_dynamics.analytics import mm1_busy_corr, x_of_omega
from jackson_dynamics.errors import NotIrreducible, StateSpaceTooLarge
from jackson_dynamics.network import NetworkSpec, two_queue_family
from jackson_dynamics.operators import (
    CorrelationOracle,
    Resolvent,
    TruncatedOperator,
    TruncationSpec,
    build_generator,
    busy_projector,
    default_cutoffs,
    evolve,
    ladder,
    mm1_green_matrix,
    resolvent_apply,
    single_queue_spec,
    stationary_exact,
    stationary_product_state,
)


def single(cutoff, mode="blocking"):
    return TruncationSpec((cutoff,), mode)


# ladder operators

def test_serve_matrix():
    Q = ladder("serve", 0, single(3)).toarray()
    expected = np.diag(np.ones(3), k=1)
    assert np.array_equal(Q, expected)
    assert np.all(Q[:, 0] == 0)


def test_create_and_annihilate():
    t = single(3)
    assert np.array_equal(ladder("create", 0, t).toarray(), np.diag(np.ones(3), k=-1))
    assert np.array_equal(ladder("annihilate", 0, t).toarray(), np.diag([1.0, 2.0, 3.0], k=1))


def test_busy_projector_and_qa():
    t = single(3)
    a, Q = ladder("create", 0, t), ladder("serve", 0, t)
    assert np.array_equal((a @ Q).toarray(), np.diag([0.0, 1, 1, 1]))
    assert np.array_equal(busy_projector(0, t).toarray(), np.diag([0.0, 1, 1, 1]))
    # Q a+ = 1 except at the cutoff, where creation is truncated
    assert np.array_equal((Q @ a).toarray(), np.diag([1.0, 1, 1, 0]))


def test_ladder_acts_on_one_queue():
    t = TruncationSpec((2, 3))
    Q1 = ladder("serve", 1, t)
    e = np.zeros(t.size)
    e[t.index((2, 3))] = 1.0
    out = Q1 @ e
    assert out[t.index((2, 2))] == 1.0 and out.sum() == 1.0


def test_coherent_state():
    cutoff = 25
    t = single(cutoff)
    for x in (0.2, 0.7, -0.5):
        A = np.eye(cutoff + 1) - x * ladder("create", 0, t).toarray()
        vac = np.zeros(cutoff + 1)
        vac[0] = 1.0
        v = np.linalg.solve(A, vac)
        lhs = ladder("serve", 0, t).toarray() @ v
        np.testing.assert_allclose(lhs[:cutoff], x * v[:cutoff], rtol=1e-14, atol=0)


# truncation

def test_default_cutoffs():
    assert default_cutoffs([0.3, 0.7, 0.99, 0.0]) == (20, 65, 200, 20)


def test_state_space_limits():
    with pytest.raises(StateSpaceTooLarge):
        TruncationSpec((2000, 2000))
    with pytest.raises(ValueError):
        TruncationSpec((1,))
    with pytest.raises(ValueError):
        TruncationSpec((3,), "open")


# generators

def test_blocking_generator_mm1():
    G = build_generator(single_queue_spec(1.0, 0.5), single(2)).toarray()
    columns = np.array([[-0.5, 0.5, 0.0], [1.0, -1.5, 0.5], [0.0, 1.0, -1.0]])
    np.testing.assert_allclose(G, columns.T, atol=1e-15)


def test_generator_conservation_family():
    t = TruncationSpec((30, 60))
    G = build_generator(two_queue_family(0.1), t).matrix
    assert np.max(np.abs(np.asarray(G.sum(axis=0)))) <= 1e-12
    off = G - sp.diags(G.diagonal())
    assert off.min() >= 0
    assert G.diagonal().max() <= 0


def test_interior_agreement():
    spec = two_queue_family(0.2)
    t = TruncationSpec((6, 9))
    blocking = build_generator(spec, t).toarray()
    leaky = build_generator(spec, t.with_mode("leaky")).toarray()
    occ = np.stack([t.occupancy(q) for q in range(2)], axis=1)
    interior = np.all(occ < np.array(t.cutoffs), axis=1)
    np.testing.assert_allclose(leaky[:, interior], blocking[:, interior], atol=1e-15)
    assert not np.allclose(leaky[:, ~interior], blocking[:, ~interior])


@st.composite
def small_networks(draw):
    n = draw(st.integers(1, 3))
    mu = draw(st.lists(st.floats(0.1, 5), min_size=n, max_size=n))
    r = np.array(draw(st.lists(st.floats(0, 1), min_size=n * n, max_size=n * n))).reshape(n, n)
    r = r / max(1.0, r.sum(axis=1).max() / 0.9)
    np.fill_diagonal(r, 0.0)
    gamma = draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
    cutoffs = draw(st.lists(st.integers(2, 6), min_size=n, max_size=n))
    return NetworkSpec(mu=mu, routing=r, gamma=gamma, rho=np.zeros(n)), TruncationSpec(cutoffs)


@settings(max_examples=100, deadline=None)
@given(small_networks())
def test_blocking_generator_properties(case):
    spec, t = case
    G = build_generator(spec, t).toarray()
    assert np.max(np.abs(G.sum(axis=0))) <= 1e-12
    off = G - np.diag(np.diag(G))
    assert off.min() >= 0 and np.diag(G).max() <= 0


# stationary states

def test_product_state_examples():
    psi = stationary_product_state([0.5], single(2))
    np.testing.assert_allclose(psi.values, np.array([1, 0.5, 0.25]) * 4 / 7, rtol=1e-15)
    empty = stationary_product_state([0.0], single(4))
    assert np.array_equal(empty.values, [1.0, 0, 0, 0, 0])
    t = TruncationSpec((5, 7))
    arr = stationary_product_state([0.3, 0.7], t).as_array()
    n1, n2 = np.meshgrid(np.arange(6), np.arange(8), indexing="ij")
    ratio = arr / (0.3**n1 * 0.7**n2)
    np.testing.assert_allclose(ratio, ratio[0, 0], rtol=1e-13)


def test_stationary_exact_mm1():
    t = single(40)
    psi = stationary_exact(build_generator(single_queue_spec(1.0, 0.5), t))
    np.testing.assert_allclose(psi.values, stationary_product_state([0.5], t).values, rtol=0, atol=1e-12)


def test_stationary_exact_family():
    t = TruncationSpec((30, 60))
    for p in (0.05, 0.1, 0.3):
        psi = stationary_exact(build_generator(two_queue_family(p), t))
        prod = stationary_product_state([0.3, 0.7], t)
        assert np.max(np.abs(psi.values - prod.values)) <= 0.7**60
        assert psi.total() == pytest.approx(1.0, abs=1e-14)


def test_stationary_empty_network():
    spec = NetworkSpec.from_gamma([1.0, 2.0], [[0, 0.5], [0, 0]], [0.0, 0.0])
    psi = stationary_exact(build_generator(spec, TruncationSpec((3, 3))))
    assert psi.at((0, 0)) == 1.0 and psi.total() == 1.0


def test_not_irreducible():
    t = single(2)
    with pytest.raises(NotIrreducible):
        stationary_exact(TruncatedOperator(sp.csr_matrix((3, 3)), t))


def test_jackson_product_form_residual():
    # the product form is an exact null vector up to the boundary
    for p in (0.05, 0.1, 0.3):
        spec = two_queue_family(p)
        res = []
        for cut in ((30, 60), (60, 120)):
            t = TruncationSpec(cut)
            psi = stationary_product_state(spec.rho, t)
            res.append(np.max(np.abs(build_generator(spec, t) @ psi.values)))
        # K = 1e-6: fitted residual / 0.7**30 is at most 2.7e-7 over the three p
        assert res[0] <= 1e-6 * 0.7**30
        assert res[1] <= max(res[0] * 0.7**30 / 2, 1e-16)


# resolvent and evolution

@pytest.fixture(scope="module")
def family_oracle():
    return CorrelationOracle(two_queue_family(0.1), TruncationSpec((12, 30)))


def test_resolvent_of_stationary(family_oracle):
    G, psi = family_oracle.generator, family_oracle.stationary
    for omega in (0.1, 1.0, 10.0):
        u = resolvent_apply(G, omega, psi)
        np.testing.assert_allclose(u.values, psi.values / omega, rtol=1e-10, atol=1e-16)


def test_resolvent_identities(family_oracle, rng):
    G = family_oracle.generator
    v = rng.random(G.trunc.size)
    for omega in (0.05, 1.0, 20.0):
        u = Resolvent(G, omega)(v)
        residual = omega * u.values - G @ u.values - v
        assert np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(v)
        assert u.total() == pytest.approx(v.sum() / omega, rel=1e-12)
    with pytest.raises(ValueError):
        Resolvent(G, 0.0)


def test_evolve_basics(family_oracle, rng):
    G, psi = family_oracle.generator, family_oracle.stationary
    v = rng.random(G.trunc.size)
    v /= v.sum()
    start = stationary_product_state([0.0, 0.0], G.trunc)
    assert np.array_equal(evolve(G, start, 0.0).values, start.values)
    assert np.max(np.abs(evolve(G, psi, 7.5).values - psi.values)) <= 1e-10
    from jackson_dynamics.operators import StateVector
    moved = evolve(G, StateVector(v, G.trunc), 3.0)
    assert moved.total() == pytest.approx(1.0, abs=1e-10)
    assert moved.values.min() >= -1e-14


def test_evolve_matches_expm():
    from scipy.linalg import expm

    spec = two_queue_family(0.2)
    t = TruncationSpec((4, 6))
    G = build_generator(spec, t)
    psi0 = stationary_product_state([0.0, 0.0], t)
    for time in (0.5, 4.0, 40.0):
        ref = expm(time * G.toarray()) @ psi0.values
        got = evolve(G, psi0, time).values
        assert np.abs(got - ref).sum() <= 1e-9


def test_evolve_laplace_matches_oracle():
    spec = two_queue_family(0.1)
    oracle = CorrelationOracle(spec, TruncationSpec((8, 20)))
    G, psi = oracle.generator, oracle.stationary
    busy = [oracle.trunc.occupancy(q) > 0 for q in range(2)]
    nodes, weights = np.polynomial.laguerre.laggauss(60)
    from jackson_dynamics.operators import StateVector
    for alpha, beta in ((0, 1), (1, 0), (1, 1)):
        source = StateVector(np.where(busy[beta], psi.values, 0.0), oracle.trunc)
        for omega in (0.5, 1.0, 2.0, 5.0):
            # int e^{-w t} f(t) dt = (1/w) int e^{-s} f(s/w) ds
            f = [evolve(G, source, s / omega).values[busy[alpha]].sum() for s in nodes]
            approx = np.dot(weights, f) / omega
            assert approx == pytest.approx(oracle.value(alpha, beta, omega), abs=1e-4)


# single-queue Green's function

@pytest.mark.parametrize("rho", [0.3, 0.5, 0.9])
def test_green_matrix_vs_resolvent(rho):
    cutoff = 200
    G = build_generator(single_queue_spec(1.0, rho), single(cutoff))
    for omega in (0.1, 1.0, 10.0):
        green = mm1_green_matrix(1.0, rho, omega, cutoff).toarray()
        R = Resolvent(G, omega)
        for n in range(6):
            col = np.zeros(cutoff + 1)
            col[n] = 1.0
            np.testing.assert_allclose(R(col).values[:6], green[:6, n], rtol=0, atol=1e-8)


def test_green_vacuum_element():
    for omega in (0.01, 0.3, 3.0, 300.0):
        x = x_of_omega(1.3, 0.6, omega).x
        g = mm1_green_matrix(1.3, 0.6, omega, 10)
        assert g.element((0,), (0,)) == pytest.approx(x / (1.3 * 0.6) * (1 + x / (0.6 - x)), rel=1e-13)


def test_green_large_omega():
    omega = 1e6
    g = mm1_green_matrix(1.0, 0.5, omega, 10).toarray()
    np.testing.assert_allclose(omega * g[:5, :5], np.eye(5), atol=1e-5)


# correlation oracle

def test_oracle_decoupled():
    spec = NetworkSpec.from_rho([0.3, 0.2], np.zeros((2, 2)), [0.3, 0.7])
    oracle = CorrelationOracle(spec, TruncationSpec((30, 70)))
    for omega in (0.1, 1.0):
        assert oracle.value(0, 1, omega) == pytest.approx(0.21 / omega, abs=1e-9)
        assert oracle.value(1, 0, omega) == pytest.approx(0.21 / omega, abs=1e-9)


def test_oracle_single_queue():
    oracle = CorrelationOracle(single_queue_spec(1.0, 0.5), single(200))
    value = oracle.value(0, 0, 1.0)
    assert value == pytest.approx(0.3903882032022076, abs=1e-12)
    assert value == pytest.approx(mm1_busy_corr(1.0, 0.5, 1.0), abs=1e-6)
    assert oracle.busy_fraction(0) == pytest.approx(0.5, abs=1e-14)


def test_oracle_forces_blocking():
    oracle = CorrelationOracle(single_queue_spec(1.0, 0.5), single(30, "leaky"))
    assert oracle.trunc.boundary_mode == "blocking"
