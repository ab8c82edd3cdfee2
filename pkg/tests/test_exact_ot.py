"""Tests for the exact Wasserstein solver against the permutation oracle."""

import numpy as np
import pytest

from otlab.exact_ot import CouplingPlan, brute_force_wp, solve_wp
from otlab.measures import DiscreteMeasure, empirical_measure


def _random_cloud(rng, n, d):
    return empirical_measure(rng.normal(size=(n, d)))


def test_single_edge_distance():
    mu = DiscreteMeasure([[0.0, 0.0, 0.0]], [1.0])
    z = np.array([3.0, 0.0, 0.0])
    nu = DiscreteMeasure([z], [1.0])
    dist, plan = solve_wp(mu, nu, p=2.0)
    assert dist == pytest.approx(3.0, abs=1e-12)
    assert plan.n_edges == 1


def test_identical_measures_zero_distance():
    rng = np.random.default_rng(0)
    mu = _random_cloud(rng, 6, 2)
    dist, plan = solve_wp(mu, mu, p=1.5)
    assert dist <= 1e-12
    plan.validate(mu, mu)
    assert plan.off_diagonal_mass(mu, mu) <= 1e-12


def test_five_point_clouds_match_oracle():
    rng = np.random.default_rng(1)
    mu = _random_cloud(rng, 5, 2)
    nu = _random_cloud(rng, 5, 2)
    dist, plan = solve_wp(mu, nu, p=1.0)
    assert dist == pytest.approx(brute_force_wp(mu, nu, 1.0), abs=1e-9)
    plan.validate(mu, nu)


def test_brute_force_basics():
    mu = DiscreteMeasure([[0.0]], [1.0])
    nu = DiscreteMeasure([[2.5]], [1.0])
    assert brute_force_wp(mu, nu, 1.0) == pytest.approx(2.5)
    mu2 = empirical_measure([[0.0], [1.0]])
    assert brute_force_wp(mu2, mu2, 2.0) == 0.0


def test_brute_force_guards():
    rng = np.random.default_rng(2)
    big = _random_cloud(rng, 9, 1)
    with pytest.raises(ValueError):
        brute_force_wp(big, big, 1.0)
    mu = DiscreteMeasure([[0.0], [1.0]], [0.3, 0.7])
    with pytest.raises(ValueError):
        brute_force_wp(mu, mu, 1.0)


def test_solver_equals_oracle_randomized():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n = int(rng.integers(2, 8))
        d = int(rng.integers(1, 4))
        p = float(rng.choice([1.0, 1.5, 2.0]))
        mu = _random_cloud(rng, n, d)
        nu = _random_cloud(rng, n, d)
        dist, plan = solve_wp(mu, nu, p)
        assert dist == pytest.approx(brute_force_wp(mu, nu, p), abs=1e-9)
        plan.validate(mu, nu)


def test_metric_properties_on_random_triples():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        mu, nu, xi = (_random_cloud(rng, n, 2) for _ in range(3))
        p = float(rng.choice([1.0, 2.0]))
        d_mn, _ = solve_wp(mu, nu, p)
        d_nm, _ = solve_wp(nu, mu, p)
        d_mx, _ = solve_wp(mu, xi, p)
        d_xn, _ = solve_wp(xi, nu, p)
        assert d_mn == pytest.approx(d_nm, abs=1e-9)
        assert d_mn <= d_mx + d_xn + 1e-9


def test_monotone_in_p():
    rng = np.random.default_rng(5)
    mu = _random_cloud(rng, 6, 3)
    nu = _random_cloud(rng, 6, 3)
    dists = [solve_wp(mu, nu, p)[0] for p in (1.0, 1.5, 2.0, 3.0)]
    assert all(x <= y + 1e-9 for x, y in zip(dists, dists[1:]))


def test_scale_equivariance():
    rng = np.random.default_rng(6)
    mu = _random_cloud(rng, 5, 2)
    nu = _random_cloud(rng, 5, 2)
    base, _ = solve_wp(mu, nu, 1.5)
    for a in (-2.0, 0.25):
        scaled, _ = solve_wp(mu.scaled(a), nu.scaled(a), 1.5)
        assert scaled == pytest.approx(abs(a) * base, rel=1e-9)


def test_unequal_weights_and_sizes_match_cdf_formula():
    # 1-d W_1 equals the area between the CDFs:
    # int_0^0.5 |0.25-0.5| + int_0.5^1 |0.25-0.75| = 0.125 + 0.25
    mu = DiscreteMeasure([[0.0], [1.0]], [0.25, 0.75])
    nu = DiscreteMeasure([[0.0], [0.5], [1.0]], [0.5, 0.25, 0.25])
    dist, plan = solve_wp(mu, nu, 1.0)
    plan.validate(mu, nu)
    assert dist == pytest.approx(0.375, abs=1e-12)


def test_error_conditions():
    mu = DiscreteMeasure([[0.0]], [1.0])
    nu2d = DiscreteMeasure([[0.0, 0.0]], [1.0])
    with pytest.raises(ValueError):
        solve_wp(mu, nu2d, 1.0)
    heavy = DiscreteMeasure([[0.0]], [1.5])
    with pytest.raises(ValueError):
        solve_wp(mu, heavy, 1.0)
    with pytest.raises(ValueError):
        solve_wp(mu, mu, 0.5)


def test_zero_weight_atoms_dropped():
    mu = DiscreteMeasure([[0.0], [5.0]], [1.0, 0.0])
    nu = DiscreteMeasure([[1.0]], [1.0])
    dist, plan = solve_wp(mu, nu, 1.0)
    assert dist == pytest.approx(1.0)
    assert 1 not in set(plan.source_idx.tolist())
    plan.validate(mu, nu)


def test_coupling_plan_invariants():
    with pytest.raises(ValueError):
        CouplingPlan([0], [0], [-0.5], 0.0, 1.0)
    plan = CouplingPlan([0, 0], [0, 1], [0.5, 0.5], 0.5, 1.0)
    mu = DiscreteMeasure([[0.0]], [1.0])
    nu = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
    plan.validate(mu, nu)
    wrong = CouplingPlan([0, 0], [0, 1], [0.5, 0.5], 0.9, 1.0)
    with pytest.raises(AssertionError):
        wrong.validate(mu, nu)
