import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bulksurf.network import ReactionNetwork
from bulksurf.scales import (CharacteristicScales, DimensionalProblem, Regime, TimeScales, classify_regime,
                             compute_time_scales, nondimensionalize, redimensionalize)
from bulksurf.surface import SorptionModel, SurfaceReactionNetwork

BULK = ReactionNetwork.from_arrays([[1, 0, 0]], [[0, 1, 0]], 5.0, 2.0)
SURF = SurfaceReactionNetwork(ReactionNetwork.from_arrays([[1, 1, 0]], [[0, 0, 1]], 1.0, 1.0))
SORP = SorptionModel([1.0, 2.0, 3.0], [1.0, 1.0, 1.0])


def scales(**kw):
    base = dict(tau_r=1.0, l_r=1.0, l_r_sigma=1.0, d_r=1.0, d_r_sigma=1.0, c_r=1.0, c_s=1.0,
                k_f_ref=(5.0,), k_b_ref=(2.0,), k_sigma_f_ref=(1.0,), k_sigma_b_ref=(1.0,),
                k_ad_ref=(1.0, 2.0, 3.0), k_de_ref=(1.0, 1.0, 1.0))
    base.update(kw)
    return CharacteristicScales(**base)


def test_time_scale_formulas():
    ts = compute_time_scales(scales(), BULK, SURF, SORP)
    assert ts.tau_diff == 1.0
    assert ts.tau_react_f == (pytest.approx(0.2),)
    ts = compute_time_scales(scales(c_r=10.0), BULK, SURF, SORP)
    assert ts.tau_trans == pytest.approx(0.1)
    # first order reaction: independent of c_R
    assert ts.tau_react_f == (pytest.approx(0.2),)


def test_lambdas_at_least_one():
    ts = compute_time_scales(scales(k_ad_ref=(1.0, 4.0, 0.5)), BULK, SURF, SORP)
    for lam in (ts.lambda_f, ts.lambda_b, ts.lambda_sigma_f, ts.lambda_ad, ts.lambda_de):
        assert np.all(lam >= 1.0)
    assert ts.tau_sorp >= ts.tau_sorp_fast


def test_invalid_scales_rejected():
    with pytest.raises(ValueError):
        scales(l_r=0.0)
    with pytest.raises(ValueError):
        scales(c_s=-1.0)


@given(st.floats(0.01, 100.0))
def test_rate_constant_scaling_law(s):
    base = compute_time_scales(scales(), BULK, SURF, SORP)
    sc = compute_time_scales(scales(k_f_ref=(5.0 * s,), k_b_ref=(2.0 * s,), k_sigma_f_ref=(s,),
                                    k_sigma_b_ref=(s,), k_ad_ref=(s, 2 * s, 3 * s), k_de_ref=(s, s, s)),
                             BULK, SURF, SORP)
    for a, b in [(base.tau_react_f, sc.tau_react_f), (base.tau_react_sigma_b, sc.tau_react_sigma_b),
                 (base.tau_ad, sc.tau_ad), (base.tau_de, sc.tau_de)]:
        np.testing.assert_allclose(np.array(b) * s, a, rtol=1e-14)


def test_unit_scales_are_identity():
    prob = DimensionalProblem(BULK, SURF, SORP, (1.0, 2.0, 3.0), 0.5, np.array([1.0, 2.0, 3.0]),
                              np.array([0.1, 0.2, 0.3, 0.4]))
    dl, _ = nondimensionalize(prob, CharacteristicScales.unit(1, 1, 3))
    np.testing.assert_array_equal(dl.c, prob.c)
    np.testing.assert_array_equal(dl.d, prob.d)
    dl, _ = nondimensionalize(DimensionalProblem(BULK, SURF, SORP, (2.0, 2.0, 2.0), 1.0, prob.c, prob.c_sigma),
                              scales(d_r=4.0))
    assert dl.d[0] == 0.5


@given(st.lists(st.floats(0.1, 10.0), min_size=8, max_size=8), st.lists(st.floats(0.01, 10.0), min_size=3,
                                                                         max_size=3))
def test_round_trip(vals, conc):
    sc = scales(l_r=vals[0], d_r=vals[1], c_r=vals[2], c_s=vals[3], d_r_sigma=vals[4], k_f_ref=(vals[5],),
                k_ad_ref=(vals[6], vals[7], 1.0))
    prob = DimensionalProblem(BULK, SURF, SORP, (vals[0], vals[1], vals[2]), vals[3], np.array(conc),
                              np.array([0.1, 0.2, 0.3, 0.4]) * vals[3])
    dl, _ = nondimensionalize(prob, sc)
    back = redimensionalize(dl, sc)
    np.testing.assert_allclose(back.c, prob.c, rtol=1e-14)
    np.testing.assert_allclose(back.c_sigma, prob.c_sigma, rtol=1e-14)
    np.testing.assert_allclose(back.d, prob.d, rtol=1e-14)
    np.testing.assert_allclose(back.bulk.k_f, prob.bulk.k_f, rtol=1e-14)
    np.testing.assert_allclose(back.sorption.k_ad, prob.sorption.k_ad, rtol=1e-14)
    assert back.d_sigma == pytest.approx(prob.d_sigma, rel=1e-14)


def direct(**kw):
    return TimeScales.direct(n_bulk=1, n_surface=1, n_species=3, **kw)


def test_classify_cases():
    assert classify_regime(direct(tau_sorp=1e-6)).recommendation is Regime.FAST_SORPTION
    assert classify_regime(direct(tau_diff=3.0, tau_trans=0.5)).recommendation is Regime.FULL
    three = classify_regime(direct(tau_sorp=1e-6, tau_react_sigma=1e-6, tau_trans=1e-3))
    assert three.recommendation is Regime.THREE_PARAM
    assert classify_regime(direct(tau_sorp=1e-5, tau_react_sigma=1e-5)).recommendation is Regime.TWO_PARAM
    assert classify_regime(direct(tau_react_sigma=1e-5)).recommendation is Regime.FAST_SURFACE_CHEMISTRY


def test_fast_transmission_alone_is_flagged():
    with pytest.warns(UserWarning):
        rep = classify_regime(direct(tau_trans=1e-6))
    assert rep.recommendation is Regime.INVALID_FAST_TRANSMISSION


def test_uncovered_set_falls_back_with_note():
    rep = classify_regime(direct(tau_r=1e-5, tau_sorp=1e-5))
    assert rep.recommendation in (Regime.FAST_SORPTION, Regime.FAST_ACCUMULATION)
    assert rep.notes


@given(st.floats(1e-3, 1e3), st.sampled_from([{}, {"tau_sorp": 1e-6}, {"tau_react_sigma": 1e-5},
                                               {"tau_sorp": 1e-6, "tau_react_sigma": 1e-6, "tau_trans": 1e-3}]))
def test_classification_scale_invariant(factor, kw):
    ts = direct(**kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = classify_regime(ts).recommendation
        b = classify_regime(ts.uniformly_scaled(factor)).recommendation
    assert a is b
