"""Tests for rho functionals, covering bounds, and greedy packing."""

import math

import numpy as np
import pytest

from otlab.covering import (
    DEFAULT_POLY_CB,
    GreedyPackingError,
    RhoFunctional,
    bar_N,
    calibrate_poly_cb,
    ellipsoid_entropy_lower,
    ellipsoid_sampler,
    greedy_cover,
    greedy_packing,
)


def _pairwise_min(pts):
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    d[np.diag_indices(len(pts))] = np.inf
    return d.min()


@pytest.mark.parametrize("rho", [
    RhoFunctional("euclidean"),
    RhoFunctional("poly", b=1.0),
    RhoFunctional("poly", b=2.5),
    RhoFunctional("exp", gamma=2.0),
])
def test_rho_homogeneous_and_dominating(rho):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 6))
    for a in (-2.0, 0.5, 3.7):
        assert np.allclose(rho(a * x), abs(a) * rho(x), rtol=1e-12)
    assert np.all(rho(x) >= np.linalg.norm(x, axis=1) - 1e-12)
    assert np.all(rho.tau(20) <= 1.0)


def test_rho_parse():
    assert RhoFunctional.parse("euclidean").kind == "euclidean"
    assert RhoFunctional.parse("poly:b=1").b == 1.0
    assert RhoFunctional.parse("exp:gamma=2").gamma == 2.0
    with pytest.raises(ValueError):
        RhoFunctional.parse("fourier:k=2")
    with pytest.raises(ValueError):
        RhoFunctional("poly", b=0.5)
    with pytest.raises(ValueError):
        RhoFunctional("exp", gamma=1.0)


def test_bar_n_euclidean_ratio():
    rho = RhoFunctional("euclidean")
    for d in (1, 2, 4):
        vals = [bar_N(rho, ell, d=d) for ell in range(6)]
        ratios = np.diff(np.log(vals)) / np.log(3.0)
        assert np.allclose(ratios, d)


def test_bar_n_exp_log_is_quadratic():
    rho = RhoFunctional("exp", gamma=2.0)
    logs = np.array([math.log(bar_N(rho, ell)) for ell in range(6)])
    second = np.diff(logs, 2)
    c_gamma = math.log(3.0) ** 2 / (2.0 * math.log(2.0))
    assert np.allclose(second, 2.0 * c_gamma, rtol=1e-12)


def test_bar_n_poly_formula_identity():
    rho = RhoFunctional("poly", b=1.0)
    assert math.log2(bar_N(rho, 2)) == pytest.approx(9.0 * DEFAULT_POLY_CB, rel=1e-12)


def test_bar_n_nondecreasing_all_kinds():
    for rho, d in [(RhoFunctional("euclidean"), 3),
                   (RhoFunctional("poly", b=1.5), None),
                   (RhoFunctional("exp", gamma=3.0), None)]:
        vals = [bar_N(rho, ell, d=d) for ell in range(8)]
        assert all(x <= y for x, y in zip(vals, vals[1:]))


def test_bar_n_guards():
    with pytest.raises(ValueError):
        bar_N(RhoFunctional("euclidean"), -1, d=2)
    with pytest.raises(ValueError):
        bar_N(RhoFunctional("euclidean"), 0)


def test_poly_cb_default_covers_fresh_calibration():
    # cheap re-run of the level-0 calibration must stay below the frozen value
    assert calibrate_poly_cb(levels=(0,), n_cloud=4000, seed=3) <= DEFAULT_POLY_CB


def test_entropy_lower_values():
    assert ellipsoid_entropy_lower(2.0, 1.0) == 0.0
    assert ellipsoid_entropy_lower(math.e, math.e ** -2) == pytest.approx(2.0, rel=1e-12)
    assert ellipsoid_entropy_lower(2.0, 0.1) == pytest.approx(
        math.log(10.0) ** 2 / (2.0 * math.log(2.0)), rel=1e-12)
    with pytest.raises(ValueError):
        ellipsoid_entropy_lower(2.0, 1.5)
    with pytest.raises(ValueError):
        ellipsoid_entropy_lower(0.9, 0.5)


def test_packing_pair_on_interval():
    grid = np.linspace(0.0, 1.0, 101)[:, None]
    pts = greedy_packing(grid, eps=0.4, target=2)
    assert pts.shape == (2, 1)
    assert _pairwise_min(pts) >= 0.4


def test_packing_eps_larger_than_diameter():
    grid = np.linspace(0.0, 1.0, 50)[:, None]
    with pytest.raises(GreedyPackingError) as excinfo:
        greedy_packing(grid, eps=2.0, target=2)
    assert excinfo.value.points.shape[0] == 1


def test_packing_on_exp_ellipsoid():
    # entropy lower bound guarantees >= 64 points at this separation
    gamma, n = 2.0, 64
    eps = math.exp(-math.sqrt(2.0 * math.log(gamma) * math.log(n)))
    assert ellipsoid_entropy_lower(gamma, eps) >= math.log(n) - 1e-9
    rho = RhoFunctional("exp", gamma=gamma)
    dim = int(np.sum(rho.tau(64) >= eps / 2.0))
    draw = ellipsoid_sampler(rho, dim)
    pts = greedy_packing(draw, eps=eps, target=n, rng=np.random.default_rng(11))
    assert pts.shape[0] == n
    assert _pairwise_min(pts) >= eps


def test_cover_counts_near_interval_optimum():
    # packing-covering duality sanity: greedy cover of [0,1] at radius eps
    # needs at least ceil(1/(2 eps)) and at most ~3x that many centers
    grid = np.linspace(0.0, 1.0, 2001)[:, None]
    for eps in (0.3, 0.1, 0.05):
        k = len(greedy_cover(grid, eps))
        opt = math.ceil(1.0 / (2.0 * eps))
        assert opt <= k <= 3 * opt


def test_cover_radius_verified():
    rng = np.random.default_rng(4)
    pts = rng.uniform(size=(300, 2))
    eps = 0.2
    centers = greedy_cover(pts, eps)
    d = np.linalg.norm(pts[:, None, :] - pts[centers][None, :, :], axis=-1)
    assert d.min(axis=1).max() <= eps
