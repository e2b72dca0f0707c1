import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from bulksurf.network import ReactionNetwork
from bulksurf.surface import (CapacityError, SorptionModel, SurfaceDiffusionMatrix, SurfaceParams, SurfaceReactionNetwork,
                              SurfaceState, extend_surface_stoichiometry, extended_sorption, langmuir_diffusion,
                              onsager_validate, sorption_equilibrium_solve, sorption_rate, surface_mass_action,
                              vacancy_closure, vacancy_sorption_rate)


def mp_surface(k_f=1.0, k_b=1.0):
    return SurfaceReactionNetwork(ReactionNetwork.from_arrays([[1, 1, 0]], [[0, 0, 1]], k_f, k_b))


def test_surface_params_validation():
    with pytest.raises(ValueError):
        SurfaceParams(0.0, 2)


def test_surface_state_invariants():
    with pytest.raises(ValueError):
        SurfaceState([0.5, 0.6])
    with pytest.raises(ValueError):
        SurfaceState([1.2, -0.2])


def test_vacancy_closure():
    assert vacancy_closure([0.0, 0.0, 0.0]).vacancy == 1.0
    assert vacancy_closure([0.25, 0.25, 0.25]).vacancy == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(CapacityError):
        vacancy_closure([0.6, 0.6, 0.0])
    # rounding just past the bound is clamped
    assert vacancy_closure([0.5, 0.5 + 5e-13]).vacancy == 0.0


def test_extend_stoichiometry_rules():
    a, b = extend_surface_stoichiometry([1, 1, 0], [0, 0, 1])
    assert (a[0], b[0]) == (0, 1)
    a, b = extend_surface_stoichiometry([1, 0], [0, 1])
    assert (a[0], b[0]) == (0, 0)
    a, b = extend_surface_stoichiometry([1, 0, 0], [0, 1, 1])
    assert (a[0], b[0]) == (1, 0)
    assert np.sum(b - a) == 0


def test_surface_mass_action_values():
    np.testing.assert_allclose(surface_mass_action(mp_surface(), [0.25] * 4), 0.0, atol=1e-16)
    r = surface_mass_action(mp_surface(2.0, 1.0), [0.1, 0.3, 0.4, 0.2])
    np.testing.assert_allclose(r, [0.22, -0.22, -0.22, 0.22], atol=1e-15)


def test_surface_mass_action_zero_reactant():
    r = surface_mass_action(mp_surface(3.0, 1.0), [0.0, 0.0, 0.5, 0.5])
    # forward term vanishes (theta_1 = 0), backward needs theta_0 = 0 too
    np.testing.assert_array_equal(r, 0.0)


def test_sorption_rate_values():
    model = SorptionModel([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
    np.testing.assert_allclose(sorption_rate([1, 1, 1], [0.25] * 4, model), 0.0)
    model = SorptionModel([2.0, 1.0, 1.0], [1.0, 1.0, 1.0])
    s = sorption_rate([1.0, 0.0, 0.0], [0.5, 0.1, 0.2, 0.2], model, c_s=2.0)
    np.testing.assert_allclose(s, [1.8, -0.4, -0.4])
    s = sorption_rate([3.0, 2.0, 1.0], [0.0, 0.2, 0.3, 0.5], model, c_s=1.5)
    np.testing.assert_allclose(s, -1.5 * np.array([0.2, 0.3, 0.5]))


def test_sorption_model_validation():
    with pytest.raises(ValueError):
        SorptionModel([-1.0], [1.0])
    with pytest.raises(ValueError):
        SorptionModel([1.0], [0.0])
    SorptionModel([0.0], [1.0])  # pure desorption is admitted


def test_isotherm_closed_form():
    model = SorptionModel([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
    np.testing.assert_allclose(sorption_equilibrium_solve([0, 0, 0], model).theta, [1, 0, 0, 0])
    np.testing.assert_allclose(sorption_equilibrium_solve([1, 1, 1], model).theta, [0.25] * 4)
    one = SorptionModel([2.0], [2.0])
    np.testing.assert_allclose(sorption_equilibrium_solve([3.0], one).theta, [0.25, 0.75])


def test_onsager_cases():
    d = langmuir_diffusion(1.0)
    assert onsager_validate(d, [SurfaceState([0.25] * 4), [0.1, 0.2, 0.3, 0.4]]).ok
    ident = SurfaceDiffusionMatrix(lambda th: np.eye(th.shape[-1]))
    rep = onsager_validate(ident, [[0.25] * 4])
    assert "row_sums" in [v["check"] for v in rep.violations]
    zero = SurfaceDiffusionMatrix(lambda th: np.zeros((th.shape[-1],) * 2))
    rep = onsager_validate(zero, [[0.5, 0.5]])
    assert "kernel" in [v["check"] for v in rep.violations]
    with pytest.raises(ValueError):
        onsager_validate(d, [])


def test_langmuir_derivative_matches_differences(rng):
    d = langmuir_diffusion(0.7)
    fd = SurfaceDiffusionMatrix(d.evaluator)
    theta = rng.dirichlet(np.ones(4), size=5)
    np.testing.assert_allclose(d.gradient(theta), fd.gradient(theta), atol=1e-8)


# -- properties ------------------------------------------------------------------

def occupancies(n):
    return hnp.arrays(float, n + 1, elements=st.floats(0.01, 1.0)).map(lambda v: v / v.sum())


@given(st.integers(1, 4).flatmap(lambda n: st.tuples(
    hnp.arrays(float, n, elements=st.floats(0.0, 5.0)),
    hnp.arrays(float, n, elements=st.floats(0.05, 5.0)),
    hnp.arrays(float, n, elements=st.floats(0.05, 5.0)),
    occupancies(n))))
def test_sorption_identities(args):
    c, k_ad, k_de, theta = args
    model = SorptionModel(k_ad, k_de)
    s = sorption_rate(c, theta, model)
    assert extended_sorption(s).sum() == pytest.approx(0.0, abs=1e-13)
    assert vacancy_sorption_rate(s) == pytest.approx(-s.sum())
    iso = sorption_equilibrium_solve(c, model)
    assert np.max(np.abs(sorption_rate(c, iso, model))) <= 1e-14


@given(st.data())
def test_surface_mass_action_sums_to_zero(data):
    n = data.draw(st.integers(1, 4))
    m = data.draw(st.integers(1, 3))
    vec = st.lists(st.integers(0, 2), min_size=n, max_size=n)
    alpha = [data.draw(vec) for _ in range(m)]
    beta = [data.draw(vec.filter(lambda b, a=a: b != a)) for a in alpha]
    net = SurfaceReactionNetwork(ReactionNetwork.from_arrays(alpha, beta,
                                                             data.draw(st.floats(0.1, 5)), data.draw(st.floats(0.1, 5))))
    assert np.all(net.extended_nu.sum(axis=1) == 0)
    np.testing.assert_array_equal(net.extended_alpha[:, 1:], np.array(alpha))
    theta = data.draw(occupancies(n))
    assert abs(surface_mass_action(net, theta).sum()) <= 1e-13


@given(st.integers(1, 4).flatmap(lambda n: st.tuples(
    hnp.arrays(float, n, elements=st.floats(0.05, 5.0)),
    hnp.arrays(float, n, elements=st.floats(0.05, 5.0)),
    hnp.arrays(float, n, elements=st.floats(0.05, 5.0)),
    hnp.arrays(float, n, elements=st.floats(-2.0, 2.0)),
    occupancies(n))))
def test_sorption_dissipation_and_equivalence(args):
    c, k_ad, k_de, mu0, theta = args
    model = SorptionModel(k_ad, k_de)
    # surface reference potentials consistent with the sorption constants
    mu_s0 = np.concatenate([[0.0], mu0 - np.log(k_ad / k_de)])
    mu = mu0 + np.log(c)
    mu_s = mu_s0 + np.log(theta)
    drive = mu_s[1:] - mu_s[0] - mu
    s = sorption_rate(c, theta, model)
    assert float(drive @ s) <= 1e-12
    iso = sorption_equilibrium_solve(c, model).theta
    mu_iso = mu_s0 + np.log(iso)
    np.testing.assert_allclose(mu_iso[1:] - mu_iso[0], mu, atol=1e-12)


@given(st.integers(1, 4).flatmap(occupancies))
def test_langmuir_matrix_passes_onsager(theta):
    assert onsager_validate(langmuir_diffusion(1.3), [theta]).ok
