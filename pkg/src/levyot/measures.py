"""Discrete representations of Levy measures.

A measure here is a finite list of weighted atoms in R^d \\ {0}.  The origin
is reserved for the mass reservoir: atoms sitting exactly at 0 are rejected,
because mass there is free to appear and disappear and carries no information.

The module provides the elementary functionals used everywhere else:
the capped p-mass ``n_p``, the ball/complement decomposition, restrictions
away from the origin, total-variation distance, and the |z|^p reweighting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = [
    "Atom",
    "DiscreteMeasure",
    "MeasureDecomposition",
    "SchemaError",
    "n_p",
    "decompose",
    "restrict_outside",
    "tv_distance",
    "weight_by_power",
    "measure_to_dict",
    "measure_from_dict",
    "load_measure",
    "save_measure",
]


class SchemaError(ValueError):
    """Raised when measure JSON violates the on-disk schema."""


def _check_p(p: float) -> float:
    p = float(p)
    if not 1.0 <= p <= 2.0:
        raise ValueError(f"exponent p must lie in [1, 2], got {p}")
    return p


def _pow(r: np.ndarray, p: float) -> np.ndarray:
    """|r|^p with exact fast paths for the endpoint exponents."""
    if p == 1.0:
        return np.asarray(r, dtype=float)
    if p == 2.0:
        r = np.asarray(r, dtype=float)
        return r * r
    return np.power(np.asarray(r, dtype=float), p)


@dataclass(frozen=True)
class Atom:
    """A single weighted atom: positive mass ``weight`` at ``position`` != 0."""

    position: np.ndarray
    weight: float

    def __post_init__(self) -> None:
        pos = np.atleast_1d(np.asarray(self.position, dtype=float))
        if pos.ndim != 1:
            raise ValueError("atom position must be a flat coordinate vector")
        if not np.all(np.isfinite(pos)):
            raise ValueError("atom position must be finite")
        if float(np.linalg.norm(pos)) == 0.0:
            raise ValueError("atom at the origin is not allowed (the origin is the reservoir)")
        w = float(self.weight)
        if not math.isfinite(w) or w <= 0.0:
            raise ValueError(f"atom weight must be positive and finite, got {w}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "weight", w)

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.position))


class DiscreteMeasure:
    """A finite positive measure on R^d \\ {0}, stored as parallel arrays.

    Atoms with bit-identical coordinates are merged at construction by
    summing their weights; no fuzzy matching is performed, so callers who
    want tolerance-based merging must snap coordinates first.

    Parameters
    ----------
    dim : int
        Ambient dimension d >= 1.
    positions : array-like, shape (n, dim)
        Atom coordinates; no row may be the zero vector.
    weights : array-like, shape (n,)
        Strictly positive masses.
    """

    __slots__ = ("dim", "positions", "weights", "_radii")

    def __init__(self, dim: int, positions, weights) -> None:
        dim = int(dim)
        if dim < 1:
            raise ValueError("dim must be >= 1")
        pos = np.asarray(positions, dtype=float).reshape(-1, dim)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if pos.shape[0] != w.shape[0]:
            raise ValueError("positions and weights disagree in length")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w <= 0.0):
            raise ValueError("weights must be strictly positive")

        if pos.shape[0]:
            merged: dict[bytes, int] = {}
            keep_pos: list[np.ndarray] = []
            keep_w: list[float] = []
            for k in range(pos.shape[0]):
                key = pos[k].tobytes()
                if key in merged:
                    keep_w[merged[key]] += w[k]
                else:
                    merged[key] = len(keep_pos)
                    keep_pos.append(pos[k])
                    keep_w.append(float(w[k]))
            pos = np.array(keep_pos, dtype=float).reshape(-1, dim)
            w = np.array(keep_w, dtype=float)

        radii = np.linalg.norm(pos, axis=1) if pos.shape[0] else np.zeros(0)
        if np.any(radii == 0.0):
            raise ValueError("atom at the origin is not allowed (the origin is the reservoir)")

        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_radii", radii)
        self.positions.setflags(write=False)
        self.weights.setflags(write=False)
        self._radii.setflags(write=False)

    def __setattr__(self, name, value):  # measures are immutable once built
        raise AttributeError("DiscreteMeasure is immutable")

    @classmethod
    def empty(cls, dim: int) -> "DiscreteMeasure":
        return cls(dim, np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def from_atoms(cls, dim: int, atoms: Iterable[Atom]) -> "DiscreteMeasure":
        atoms = list(atoms)
        if not atoms:
            return cls.empty(dim)
        for a in atoms:
            if a.position.shape[0] != dim:
                raise ValueError("atom dimension does not match measure dimension")
        pos = np.array([a.position for a in atoms], dtype=float)
        w = np.array([a.weight for a in atoms], dtype=float)
        return cls(dim, pos, w)

    @property
    def n_atoms(self) -> int:
        return int(self.weights.shape[0])

    @property
    def radii(self) -> np.ndarray:
        return self._radii

    @property
    def atoms(self) -> list[Atom]:
        return [Atom(self.positions[k], float(self.weights[k])) for k in range(self.n_atoms)]

    def total_mass(self) -> float:
        return math.fsum(self.weights.tolist())

    def p_moment(self, p: float) -> float:
        """The p-th cost moment: sum of w_i |z_i|^p."""
        p = _check_p(p)
        if self.n_atoms == 0:
            return 0.0
        return math.fsum((self.weights * _pow(self._radii, p)).tolist())

    def max_radius(self) -> float:
        return float(self._radii.max()) if self.n_atoms else 0.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return self.dim == other.dim and tv_distance(self, other) == 0.0

    def __repr__(self) -> str:
        return f"DiscreteMeasure(dim={self.dim}, n_atoms={self.n_atoms}, mass={self.total_mass():.6g})"


@dataclass(frozen=True)
class MeasureDecomposition:
    """Split of a measure into the part inside the open unit ball and the rest."""

    hat: DiscreteMeasure
    check: DiscreteMeasure


def n_p(mu: DiscreteMeasure, p: float) -> float:
    """Capped p-mass: sum of min(1, |z_i|^p) w_i.  Zero for the empty measure."""
    p = _check_p(p)
    if mu.n_atoms == 0:
        return 0.0
    capped = np.minimum(1.0, _pow(mu.radii, p))
    return math.fsum((capped * mu.weights).tolist())


def decompose(mu: DiscreteMeasure) -> MeasureDecomposition:
    """Split atoms at the unit sphere: |z| < 1 goes to ``hat``, |z| >= 1 to ``check``."""
    inside = mu.radii < 1.0
    hat = DiscreteMeasure(mu.dim, mu.positions[inside], mu.weights[inside])
    check = DiscreteMeasure(mu.dim, mu.positions[~inside], mu.weights[~inside])
    return MeasureDecomposition(hat=hat, check=check)


def restrict_outside(mu: DiscreteMeasure, r: float) -> DiscreteMeasure:
    """Keep only the atoms with |z| >= r (the measure with B_r emptied out)."""
    r = float(r)
    if r <= 0.0:
        raise ValueError("restriction radius must be positive")
    keep = mu.radii >= r
    return DiscreteMeasure(mu.dim, mu.positions[keep], mu.weights[keep])


def tv_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Total variation of mu - nu: sum over the union of atom sites of |w_mu - w_nu|.

    Sites are compared bit-exactly, matching the construction-time merge rule.
    """
    if mu.dim != nu.dim:
        raise ValueError("measures must share the ambient dimension")
    diff: dict[bytes, float] = {}
    for k in range(mu.n_atoms):
        key = mu.positions[k].tobytes()
        diff[key] = diff.get(key, 0.0) + float(mu.weights[k])
    for k in range(nu.n_atoms):
        key = nu.positions[k].tobytes()
        diff[key] = diff.get(key, 0.0) - float(nu.weights[k])
    return math.fsum(abs(v) for v in diff.values())


def weight_by_power(mu: DiscreteMeasure, p: float) -> DiscreteMeasure:
    """Reweight every atom by |z|^p, leaving positions unchanged."""
    p = _check_p(p)
    if mu.n_atoms == 0:
        return DiscreteMeasure.empty(mu.dim)
    return DiscreteMeasure(mu.dim, mu.positions, mu.weights * _pow(mu.radii, p))


# ---------------------------------------------------------------------------
# JSON schema: { "dim": d, "atoms": [ { "z": [f, ...], "w": f } ] }
# ---------------------------------------------------------------------------

def measure_to_dict(mu: DiscreteMeasure) -> dict:
    return {
        "dim": mu.dim,
        "atoms": [
            {"z": [float(c) for c in mu.positions[k]], "w": float(mu.weights[k])}
            for k in range(mu.n_atoms)
        ],
    }


def measure_from_dict(data: dict) -> DiscreteMeasure:
    if not isinstance(data, dict):
        raise SchemaError("measure document must be a JSON object")
    try:
        dim = int(data["dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError("missing or invalid 'dim' field") from exc
    atoms = data.get("atoms", [])
    if not isinstance(atoms, list):
        raise SchemaError("'atoms' must be a list")
    positions = []
    weights = []
    for idx, entry in enumerate(atoms):
        if not isinstance(entry, dict) or "z" not in entry or "w" not in entry:
            raise SchemaError(f"atom {idx} must be an object with 'z' and 'w'")
        z = entry["z"]
        if not isinstance(z, list) or len(z) != dim:
            raise SchemaError(f"atom {idx}: 'z' must be a list of {dim} coordinates")
        try:
            pos = [float(c) for c in z]
            w = float(entry["w"])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"atom {idx}: non-numeric coordinate or weight") from exc
        if w <= 0.0 or not math.isfinite(w):
            raise SchemaError(f"atom {idx}: weight must be positive and finite, got {w}")
        if not all(math.isfinite(c) for c in pos):
            raise SchemaError(f"atom {idx}: coordinates must be finite")
        if math.fsum(c * c for c in pos) == 0.0:
            raise SchemaError(f"atom {idx}: |z| = 0 is not a valid atom site")
        positions.append(pos)
        weights.append(w)
    if not positions:
        return DiscreteMeasure.empty(dim)
    return DiscreteMeasure(dim, np.array(positions), np.array(weights))


def load_measure(path: str) -> DiscreteMeasure:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(
                f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    return measure_from_dict(data)


def save_measure(mu: DiscreteMeasure, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(measure_to_dict(mu), fh, indent=2)
        fh.write("\n")
