import numpy as np
import pytest

from bprk.order_conditions import achieved_order
from bprk.tableaux import METHODS, ButcherTableau, CatalogError, Structure, builtin, extrapolation_be

DESIGN_ORDER = {
    "ssp33": 3, "rk4": 4, "ssprk104": 4, "cashkarp": 5, "dormandprince": 5, "backwardeuler": 1,
    "sdirk54": 4, "trbdf2": 2, "lobattoiiic4": 6, "radauiia3": 5,
    "extrapolation-be2": 2, "extrapolation-be3": 3, "extrapolation-be4": 4,
}


@pytest.mark.parametrize("name", METHODS)
def test_catalog_weights_reach_design_order(name):
    tab = builtin(name)
    assert tab.p == DESIGN_ORDER[name]
    assert achieved_order(tab) >= min(tab.p, 5)
    np.testing.assert_allclose(tab.c, tab.A.sum(axis=1), atol=1e-14)


@pytest.mark.parametrize("name", METHODS)
def test_embedded_weights_have_their_stated_order(name):
    tab = builtin(name)
    for e in tab.embedded:
        assert achieved_order(tab, e.weights) >= e.order


def test_structures():
    assert builtin("rk4").structure is Structure.EXPLICIT
    assert builtin("sdirk54").structure is Structure.DIAGONALLY_IMPLICIT
    assert builtin("extrapolation-be3").structure is Structure.DIAGONALLY_IMPLICIT
    assert builtin("radauiia3").structure is Structure.FULLY_IMPLICIT
    assert not builtin("lobattoiiic4").is_runnable


def test_lookup_is_case_and_alias_insensitive():
    assert builtin("Dormand-Prince").name == builtin("dormandprince").name
    with pytest.raises(CatalogError):
        builtin("no-such-method")


@pytest.mark.parametrize("k", [2, 3, 4])
def test_extrapolation_layout(k):
    tab = extrapolation_be(k)
    assert tab.s == k * (k + 1) // 2
    assert tab.p == k
    chain = tab.embedded_by_label("be-chain")
    assert chain.order == 1
    # the chain vector puts weight 1/k on each of the last k stages
    np.testing.assert_allclose(chain.weights[-k:], np.full(k, 1.0 / k))
    assert np.all(chain.weights[:-k] == 0)
    assert achieved_order(tab) == k


def test_extrapolation_rejects_unsupported_depth():
    with pytest.raises(ValueError):
        extrapolation_be(5)


def test_tableau_arrays_are_read_only():
    tab = builtin("rk4")
    with pytest.raises(ValueError):
        tab.b[0] = 1.0


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        ButcherTableau("bad", np.zeros((2, 2)), [1.0], [0.0, 0.0], 1)
