"""Tests for discrete measures and the telescope decomposition."""

import math

import numpy as np
import pytest

from otlab.covering import RhoFunctional
from otlab.measures import DiscreteMeasure, empirical_measure, telescope_split


def test_empirical_two_points():
    mu = empirical_measure([[0.0], [1.0]])
    assert np.allclose(mu.weights, [0.5, 0.5])
    assert mu.dim == 1


def test_empirical_single_atom():
    mu = empirical_measure([[1.0, 2.0]])
    assert mu.n_atoms == 1
    assert mu.weights[0] == 1.0


def test_empirical_uniform_draws():
    rng = np.random.default_rng(0)
    mu = empirical_measure(rng.uniform(size=(100, 1)))
    assert np.allclose(mu.weights, 0.01)
    assert abs(mu.total_mass - 1.0) <= 1e-12


def test_empirical_rejects_bad_input():
    with pytest.raises(ValueError):
        empirical_measure([])
    with pytest.raises(ValueError):
        empirical_measure([[0.0], [1.0, 2.0]])


def test_duplicates_kept_as_atoms():
    mu = empirical_measure([[0.0], [0.0], [1.0]])
    assert mu.n_atoms == 3
    merged = mu.merged_duplicates()
    assert merged.n_atoms == 2
    assert abs(merged.total_mass - 1.0) <= 1e-12


def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure([[0.0]], [-0.1])
    with pytest.raises(ValueError):
        DiscreteMeasure([[np.inf]], [1.0])
    with pytest.raises(ValueError):
        DiscreteMeasure([[0.0], [1.0]], [1.0])


def test_json_roundtrip(tmp_path):
    mu = empirical_measure([[0.0, 1.0], [2.0, 3.0]])
    path = tmp_path / "mu.json"
    mu.save_json(path)
    back = DiscreteMeasure.load_json(path)
    assert np.array_equal(back.points, mu.points)
    assert np.array_equal(back.weights, mu.weights)


def test_csv_load(tmp_path):
    path = tmp_path / "samples.csv"
    path.write_text("0.0,1.0\n2.0,3.0\n")
    mu = DiscreteMeasure.from_csv(path)
    assert mu.n_atoms == 2
    assert np.allclose(mu.weights, 0.5)


# ---- telescope decomposition -------------------------------------------------

EUCLID = RhoFunctional("euclidean")


def test_layers_hand_evaluated():
    # rho values 0.5 -> layer 0, 3.0 in (2,4] -> layer 2, 10.0 in (8,16] -> layer 4
    mu = empirical_measure([[0.5], [3.0], [10.0]])
    layers = telescope_split(mu, EUCLID)
    assert list(layers.layer_index_of_point) == [0, 2, 4]


def test_bounded_support_single_layer():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(20, 3))
    pts /= np.maximum(1.0, np.linalg.norm(pts, axis=1))[:, None]
    mu = empirical_measure(pts)
    layers = telescope_split(mu, EUCLID)
    assert set(layers.layer_index_of_point) == {0}
    tilde0 = layers.scaled_layer(0)
    assert np.array_equal(tilde0.points, mu.points)
    assert np.allclose(tilde0.weights, mu.weights)


def test_layer_boundary_is_closed_above():
    mu = empirical_measure([[2.0]])
    layers = telescope_split(mu, EUCLID)
    assert layers.layer_index_of_point[0] == 1


def test_rescaled_layers_inside_base_set():
    rng = np.random.default_rng(2)
    mu = empirical_measure(rng.standard_cauchy(size=(200, 2)))
    layers = telescope_split(mu, EUCLID)
    for j in layers.occupied_layers():
        tilde = layers.scaled_layer(j)
        assert np.all(EUCLID(tilde.points) <= 1.0 + 1e-12)
        assert abs(tilde.total_mass - 1.0) <= 1e-12


def test_reassembly_reproduces_measure():
    rng = np.random.default_rng(3)
    mu = empirical_measure(rng.normal(scale=5.0, size=(157, 3)))
    layers = telescope_split(mu, EUCLID)
    back = layers.reassemble()
    assert np.allclose(back.points, mu.points, atol=1e-14)
    assert np.allclose(back.weights, mu.weights, atol=1e-15)
    assert abs(layers.layer_masses.sum() - mu.total_mass) <= 1e-12


def test_nonfinite_rho_rejected():
    mu = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])

    class BadRho(RhoFunctional):
        def __call__(self, points):
            return np.array([np.inf, 1.0])

    with pytest.raises(ValueError):
        telescope_split(mu, BadRho("euclidean"))


def test_population_layer_masses_obey_markov_bound():
    # Exponential(1) radius: P(B_j) = F(2^j) - F(2^(j-1)) for j >= 1 must sit
    # below M_q^q 2^(-q(j-1)) with M_q^q = E X^q = q!
    q = 3
    mq_q = math.factorial(q)
    cdf = lambda t: 1.0 - math.exp(-t)
    for j in range(1, 12):
        mass = cdf(2.0 ** j) - cdf(2.0 ** (j - 1))
        assert mass <= mq_q * 2.0 ** (-q * (j - 1)) + 1e-15
