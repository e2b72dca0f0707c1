import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from bulksurf.network import (ReactionNetwork, Reaction, SpeciesSet, ThermoParams, affinity, conservation_basis,
                              detailed_balance_check, detailed_balance_constants, mass_action_rate,
                              positive_conservation_vector, thermo_from_constants)

MP = ReactionNetwork.from_arrays([[1, 1, 0]], [[0, 0, 1]], 2.0, 1.0)


def test_species_set_rejects_duplicates():
    with pytest.raises(ValueError):
        SpeciesSet(("A", "A"))


def test_reaction_validation():
    with pytest.raises(ValueError):
        Reaction((1, 0), (1, 0), 1.0, 1.0)
    with pytest.raises(ValueError):
        Reaction((1, 0), (0, 1), 0.0, 1.0)
    with pytest.raises(ValueError):
        Reaction((-1, 0), (0, 1), 1.0, 1.0)


def test_mass_action_hand_value():
    np.testing.assert_allclose(mass_action_rate(MP, [1.0, 2.0, 3.0]), [-1.0, -1.0, 1.0])


def test_mass_action_equilibrium_and_empty():
    net = MP.with_constants([1.0], [1.0])
    np.testing.assert_array_equal(mass_action_rate(net, [1.0, 1.0, 1.0]), 0.0)
    np.testing.assert_array_equal(mass_action_rate(ReactionNetwork.empty(3), [0.3, 2.0, 5.0]), 0.0)


def test_mass_action_rejects_bad_input():
    with pytest.raises(ValueError):
        mass_action_rate(MP, [1.0, 1.0])
    with pytest.raises(ValueError):
        mass_action_rate(MP, [1.0, -1.0, 1.0])


def test_zero_power_convention():
    net = ReactionNetwork.from_arrays([[1, 0]], [[0, 1]], 1.0, 1.0)
    # c_2 = 0 only enters through c_2^0 in the forward term
    np.testing.assert_allclose(mass_action_rate(net, [2.0, 0.0]), [-2.0, 2.0])


def test_affinity_values():
    zero = ThermoParams.zeros(3)
    np.testing.assert_allclose(affinity(MP, zero, [1.0, 1.0, 1.0]), 0.0)
    np.testing.assert_allclose(affinity(MP, zero, [1.0, 2.0, 3.0]), [math.log(3) - math.log(2)])
    np.testing.assert_allclose(affinity(MP, ThermoParams((0, 0, math.log(2))), [1.0, 1.0, 2.0]),
                               [2 * math.log(2)])
    with pytest.raises(ValueError):
        affinity(MP, zero, [0.0, 1.0, 1.0])


def test_basis_mp_span():
    basis = conservation_basis(MP)
    assert basis.dim == 2
    e = np.array([[1.0, 0, 1], [0, 1.0, 1]])
    q, _ = np.linalg.qr(e.T)
    np.testing.assert_allclose(basis.projector, q @ q.T, atol=1e-12)


def test_basis_without_reactions():
    basis = conservation_basis(ReactionNetwork.empty(3))
    assert basis.dim == 3
    np.testing.assert_allclose(basis.projector, np.eye(3), atol=1e-14)


def test_basis_two_reactions():
    net = ReactionNetwork.from_arrays([[1, 1, 0], [0, 1, 0]], [[0, 0, 1], [1, 0, 0]], 1.0, 1.0)
    v = conservation_basis(net).vectors
    assert v.shape == (1, 3)
    np.testing.assert_allclose(np.abs(v[0]), np.array([1, 1, 2]) / math.sqrt(6), atol=1e-12)


def test_basis_deterministic():
    a = conservation_basis(MP).vectors
    b = conservation_basis(ReactionNetwork.from_arrays([[1, 1, 0]], [[0, 0, 1]], 5.0, 3.0)).vectors
    np.testing.assert_array_equal(a, b)


def test_detailed_balance_rank_cases():
    assert detailed_balance_check(MP)
    dup = ReactionNetwork.from_arrays([[1, 1, 0], [1, 1, 0]], [[0, 0, 1], [0, 0, 1]], 1.0, 1.0)
    assert not detailed_balance_check(dup)
    opposite = ReactionNetwork.from_arrays([[1, 1, 0], [0, 0, 1]], [[0, 0, 1], [1, 1, 0]], 1.0, 1.0)
    report = detailed_balance_check(opposite)
    assert not report and report.rank == 1 and report.n_reactions == 2


def test_positive_conservation_vector_cases():
    found = positive_conservation_vector(MP)
    np.testing.assert_array_equal(found.vector, [1.0, 1.0, 2.0])
    none = positive_conservation_vector(ReactionNetwork.from_arrays([[0, 0, 0]], [[1, 0, 0]], 1.0, 1.0))
    assert not none and none.certificate == 0
    np.testing.assert_array_equal(positive_conservation_vector(ReactionNetwork.empty(4)).vector, np.ones(4))


def test_thermo_fit_recovers_potentials():
    mu0 = np.array([0.3, -0.2, 0.7])
    net = detailed_balance_constants(MP, ThermoParams(mu0))
    rows = [(nu, math.log(kb / kf)) for nu, kf, kb in zip(net.nu, net.k_f, net.k_b)]
    fit, resid = thermo_from_constants(rows, 3)
    assert resid < 1e-14
    assert abs(fit @ net.nu[0] - mu0 @ net.nu[0]) < 1e-14


# -- properties ------------------------------------------------------------------

@st.composite
def networks(draw, max_species=4, max_reactions=3):
    n = draw(st.integers(1, max_species))
    m = draw(st.integers(0, max_reactions))
    vec = st.lists(st.integers(0, 2), min_size=n, max_size=n)
    alpha, beta = [], []
    for _ in range(m):
        a = draw(vec)
        b = draw(vec.filter(lambda x, a=a: x != a))
        alpha.append(a)
        beta.append(b)
    k = st.floats(0.1, 10.0)
    k_f = [draw(k) for _ in range(m)]
    k_b = [draw(k) for _ in range(m)]
    if m == 0:
        return ReactionNetwork.empty(n)
    return ReactionNetwork.from_arrays(alpha, beta, k_f, k_b)


@given(networks(), st.data())
def test_rate_lies_in_stoichiometric_span(net, data):
    c = data.draw(hnp.arrays(float, net.n_species, elements=st.floats(0.01, 5.0)))
    r = mass_action_rate(net, c)
    p = conservation_basis(net).projector
    assert np.linalg.norm(p @ r) <= 1e-12 * max(np.linalg.norm(r), 1.0)


@given(networks())
def test_projector_properties(net):
    basis = conservation_basis(net)
    p = basis.projector
    np.testing.assert_allclose(p @ p, p, atol=1e-12)
    np.testing.assert_allclose(p, p.T, atol=1e-12)
    if net.n_reactions:
        assert np.max(np.abs(p @ net.nu.T)) <= 1e-12
    np.testing.assert_allclose(basis.vectors @ basis.vectors.T, np.eye(basis.dim), atol=1e-12)
    report = detailed_balance_check(net)
    assert basis.dim == net.n_species - report.rank
    if report:
        assert basis.dim == net.n_species - net.n_reactions


@given(networks(), st.data())
def test_affinity_rate_dissipation(net, data):
    n = net.n_species
    mu0 = data.draw(hnp.arrays(float, n, elements=st.floats(-2.0, 2.0)))
    c = data.draw(hnp.arrays(float, n, elements=st.floats(0.05, 5.0)))
    net = detailed_balance_constants(net, ThermoParams(mu0))
    a = affinity(net, ThermoParams(mu0), c)
    r = net.reaction_rates(c)
    assert float(a @ r) <= 1e-12 * (1 + np.abs(a) @ np.abs(r))
    # sign(A) = -sign(R) reaction by reaction
    for ai, ri in zip(a, r):
        assert ai * ri <= 1e-12 * (1 + abs(ai * ri))


@given(networks())
def test_positive_vector_constraints(net):
    found = positive_conservation_vector(net)
    if found:
        assert np.all(found.vector > 0)
        if net.n_reactions:
            assert np.max(np.abs(net.nu @ found.vector)) <= 1e-9 * np.max(found.vector)
    else:
        assert found.certificate is not None
