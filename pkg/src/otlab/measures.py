"""Discrete measures on R^D and their telescope layering by rho-magnitude.

A DiscreteMeasure is an immutable weighted point cloud; empirical measures put
1/n at each sample and keep duplicate draws as separate atoms.  The telescope
split grades the atoms into shells B_0 = {rho <= 1} and
B_j = (2^j B_0) \\ B_{j-1}, whose rescaled, renormalized restrictions all live
back inside the base set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .covering import RhoFunctional

__all__ = [
    "DiscreteMeasure",
    "TelescopeLayers",
    "empirical_measure",
    "telescope_split",
]

MASS_ATOL = 1e-12


def _frozen_array(a, dtype=np.float64) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud in R^D with nonnegative weights.

    The arrays are copied, frozen, and validated at construction, so instances
    are safe to share across threads.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if pts.ndim != 2:
            raise ValueError("points must form a 2-d array (n_atoms, dim)")
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights must have equal length")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite coordinates")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "points", _frozen_array(pts))
        object.__setattr__(self, "weights", _frozen_array(w))

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def require_mass(self, expected: float = 1.0, atol: float = MASS_ATOL) -> None:
        if abs(self.total_mass - expected) > atol:
            raise ValueError(
                f"total mass {self.total_mass!r} differs from {expected!r} by more than {atol}")

    def normalized(self) -> "DiscreteMeasure":
        total = self.total_mass
        if total <= 0:
            raise ValueError("cannot normalize a zero-mass measure")
        return DiscreteMeasure(self.points, self.weights / total)

    def scaled(self, factor: float) -> "DiscreteMeasure":
        """Scale all support points by ``factor`` (weights unchanged)."""
        return DiscreteMeasure(self.points * factor, self.weights)

    def merged_duplicates(self, decimals: int = 12) -> "DiscreteMeasure":
        """Optional normalization: merge coinciding atoms, summing weights."""
        key = np.round(self.points, decimals)
        _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        w = np.zeros(first.shape[0])
        np.add.at(w, inv, self.weights)
        return DiscreteMeasure(self.points[first], w)

    # ---- serialization ----------------------------------------------------
    def to_json_dict(self) -> dict:
        return {"points": self.points.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_json_dict(cls, data: dict) -> "DiscreteMeasure":
        return cls(np.asarray(data["points"]), np.asarray(data["weights"]))

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load_json(cls, path) -> "DiscreteMeasure":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    @classmethod
    def from_csv(cls, path) -> "DiscreteMeasure":
        """Read samples (one point per row) as an equal-weight measure."""
        pts = np.loadtxt(path, delimiter=",", ndmin=2)
        return empirical_measure(pts)


def empirical_measure(samples) -> DiscreteMeasure:
    """Equal-weight measure putting 1/n at each sample; duplicates kept apart."""
    try:
        pts = np.asarray(samples, dtype=np.float64)
    except ValueError as exc:
        raise ValueError("samples have mixed dimensions") from exc
    pts = np.atleast_2d(pts)
    if pts.size == 0:
        raise ValueError("empty sample list")
    if pts.ndim != 2 or pts.dtype == object:
        raise ValueError("samples have mixed dimensions")
    n = pts.shape[0]
    return DiscreteMeasure(pts, np.full(n, 1.0 / n))


@dataclass(frozen=True)
class TelescopeLayers:
    """Assignment of atoms to the shells B_j, with per-layer masses.

    Atom i belongs to layer 0 when rho(x_i) <= 1 and to layer j >= 1 when
    rho(x_i) lies in (2^(j-1), 2^j]; ties sit in the lower layer.  Layer j of
    the measure, rescaled by 2^-j and renormalized, satisfies rho <= 1 again.
    """

    measure: DiscreteMeasure
    layer_index_of_point: np.ndarray
    layer_masses: np.ndarray
    scale_factors: np.ndarray = field(init=False)

    def __post_init__(self):
        idx = _frozen_array(self.layer_index_of_point, dtype=np.int64)
        object.__setattr__(self, "layer_index_of_point", idx)
        object.__setattr__(self, "layer_masses", _frozen_array(self.layer_masses))
        object.__setattr__(self, "scale_factors",
                           _frozen_array(2.0 ** np.arange(self.layer_masses.shape[0])))

    @property
    def n_layers(self) -> int:
        return self.layer_masses.shape[0]

    def occupied_layers(self) -> np.ndarray:
        return np.flatnonzero(self.layer_masses > 0)

    def atom_indices(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.layer_index_of_point == j)

    def scaled_layer(self, j: int) -> DiscreteMeasure:
        """The layer-j measure mapped through x -> 2^-j x and renormalized."""
        idx = self.atom_indices(j)
        mass = self.layer_masses[j]
        if idx.size == 0 or mass <= 0:
            raise ValueError(f"layer {j} carries no mass")
        pts = self.measure.points[idx] * (2.0 ** (-j))
        return DiscreteMeasure(pts, self.measure.weights[idx] / mass)

    def reassemble(self) -> DiscreteMeasure:
        """Undo the scaling and layer normalization; reproduces the original."""
        pts = np.empty_like(self.measure.points)
        w = np.empty_like(self.measure.weights)
        for j in self.occupied_layers():
            idx = self.atom_indices(j)
            layer = self.scaled_layer(j)
            pts[idx] = layer.points * self.scale_factors[j]
            w[idx] = layer.weights * self.layer_masses[j]
        return DiscreteMeasure(pts, w)


def telescope_split(mu: DiscreteMeasure, rho: RhoFunctional) -> TelescopeLayers:
    """Grade the atoms of ``mu`` into the telescoping shells defined by rho."""
    values = rho(mu.points)
    if not np.all(np.isfinite(values)):
        raise ValueError("rho is non-finite on some atom; moment condition "
                         "cannot hold on this support")
    j = np.zeros(mu.n_atoms, dtype=np.int64)
    outer = values > 1.0
    j[outer] = np.ceil(np.log2(values[outer])).astype(np.int64)
    n_layers = int(j.max()) + 1 if j.size else 1
    masses = np.zeros(n_layers)
    np.add.at(masses, j, mu.weights)
    return TelescopeLayers(mu, j, masses)
