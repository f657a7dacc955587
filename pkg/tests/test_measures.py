"""Tests for discrete measures: functionals, decompositions, JSON round trips."""

import json

import numpy as np
import pytest

from levyot.measures import (
    Atom,
    DiscreteMeasure,
    SchemaError,
    decompose,
    measure_from_dict,
    measure_to_dict,
    n_p,
    restrict_outside,
    tv_distance,
    weight_by_power,
)


def test_atom_validation():
    with pytest.raises(ValueError):
        Atom(np.array([0.0, 0.0]), 1.0)
    with pytest.raises(ValueError):
        Atom(np.array([1.0]), 0.0)
    with pytest.raises(ValueError):
        Atom(np.array([1.0]), -2.0)
    with pytest.raises(ValueError):
        Atom(np.array([np.inf]), 1.0)
    a = Atom(np.array([3.0, 4.0]), 2.0)
    assert a.radius == 5.0


def test_measure_rejects_origin_and_merges_duplicates():
    with pytest.raises(ValueError):
        DiscreteMeasure(2, [[0.0, 0.0]], [1.0])
    mu = DiscreteMeasure(1, [[0.5], [0.5], [1.0]], [1.0, 2.0, 3.0])
    assert mu.n_atoms == 2
    assert mu.total_mass() == 6.0
    # bit-exact merge only
    nu = DiscreteMeasure(1, [[0.5], [0.5 + 1e-16]], [1.0, 1.0])
    assert nu.n_atoms == 2 or 0.5 + 1e-16 == 0.5  # identical floats merge


def test_measure_is_immutable():
    mu = DiscreteMeasure(1, [[0.5]], [1.0])
    with pytest.raises(AttributeError):
        mu.dim = 3
    with pytest.raises(ValueError):
        mu.weights[0] = 2.0


def test_n_p_examples():
    assert n_p(DiscreteMeasure.empty(2), 2.0) == 0.0
    single = DiscreteMeasure(1, [[2.0]], [3.0])
    assert n_p(single, 1.0) == 3.0  # capped at one
    two = DiscreteMeasure(1, [[0.5], [3.0]], [2.0, 1.0])
    assert n_p(two, 2.0) == pytest.approx(1.5, abs=0)


def test_n_p_monotonicity(rng, make_measure):
    for _ in range(50):
        mu = make_measure(rng, int(rng.integers(1, 4)), max_atoms=20, inner=0.05, outer=0.95)
        # inside the unit ball the capped mass decreases as p grows
        assert n_p(mu, 1.0) >= n_p(mu, 1.5) >= n_p(mu, 2.0)
        if mu.n_atoms:
            heavier = DiscreteMeasure(mu.dim, mu.positions, mu.weights * 2.0)
            assert n_p(heavier, 1.5) >= n_p(mu, 1.5)


def test_decompose_boundary_convention():
    mu = DiscreteMeasure(1, [[0.5], [1.0], [2.0]], [1.0, 1.0, 1.0])
    dec = decompose(mu)
    assert dec.hat.n_atoms == 1 and dec.hat.radii[0] == 0.5
    assert dec.check.n_atoms == 2  # |z| = 1 goes with the far part
    inside = DiscreteMeasure(2, [[0.2, 0.1], [0.0, -0.5]], [1.0, 1.0])
    assert decompose(inside).check.n_atoms == 0
    empty = decompose(DiscreteMeasure.empty(3))
    assert empty.hat.n_atoms == 0 and empty.check.n_atoms == 0


def test_decompose_recombines_exactly(rng, make_measure):
    for _ in range(20):
        mu = make_measure(rng, 2, max_atoms=30)
        dec = decompose(mu)
        combined = DiscreteMeasure(
            mu.dim,
            np.concatenate([dec.hat.positions, dec.check.positions]),
            np.concatenate([dec.hat.weights, dec.check.weights]),
        )
        assert tv_distance(combined, mu) == 0.0


def test_restrict_outside():
    mu = DiscreteMeasure(1, [[0.1], [0.5]], [1.0, 1.0])
    kept = restrict_outside(mu, 0.3)
    assert kept.n_atoms == 1 and kept.radii[0] == 0.5
    assert restrict_outside(mu, 10.0).n_atoms == 0
    assert tv_distance(restrict_outside(mu, 0.01), mu) == 0.0
    with pytest.raises(ValueError):
        restrict_outside(mu, 0.0)


def test_restrict_outside_nested(rng, make_measure):
    mu = make_measure(rng, 2, max_atoms=30, allow_empty=False)
    big = restrict_outside(mu, 0.2)
    small = restrict_outside(mu, 0.8)
    # every atom surviving the tighter cut also survives the looser one
    kept = {small.positions[k].tobytes() for k in range(small.n_atoms)}
    pool = {big.positions[k].tobytes() for k in range(big.n_atoms)}
    assert kept <= pool


def test_tv_distance_examples():
    mu = DiscreteMeasure(1, [[0.5]], [1.0])
    assert tv_distance(mu, mu) == 0.0
    nu = DiscreteMeasure(1, [[0.7]], [2.0])
    assert tv_distance(mu, nu) == 3.0
    nu2 = DiscreteMeasure(1, [[0.5]], [2.0])
    assert tv_distance(mu, nu2) == 1.0
    with pytest.raises(ValueError):
        tv_distance(mu, DiscreteMeasure(2, [[0.5, 0.0]], [1.0]))


def test_tv_distance_metric_axioms(rng, make_measure):
    for _ in range(30):
        a = make_measure(rng, 1, max_atoms=8)
        b = make_measure(rng, 1, max_atoms=8)
        c = make_measure(rng, 1, max_atoms=8)
        assert tv_distance(a, b) == tv_distance(b, a)
        assert tv_distance(a, a) == 0.0
        assert tv_distance(a, c) <= tv_distance(a, b) + tv_distance(b, c) + 1e-12


def test_weight_by_power():
    assert weight_by_power(DiscreteMeasure.empty(1), 2.0).n_atoms == 0
    unit = DiscreteMeasure(1, [[1.0]], [2.0])
    assert weight_by_power(unit, 2.0).weights[0] == 2.0
    half = DiscreteMeasure(1, [[0.5]], [4.0])
    assert weight_by_power(half, 2.0).weights[0] == 1.0


def test_json_round_trip(rng, make_measure):
    mu = make_measure(rng, 3, max_atoms=10, allow_empty=False)
    doc = measure_to_dict(mu)
    back = measure_from_dict(json.loads(json.dumps(doc)))
    assert tv_distance(mu, back) == 0.0


def test_json_schema_errors():
    with pytest.raises(SchemaError):
        measure_from_dict({"atoms": []})
    with pytest.raises(SchemaError):
        measure_from_dict({"dim": 1, "atoms": [{"z": [0.0], "w": 1.0}]})
    with pytest.raises(SchemaError):
        measure_from_dict({"dim": 1, "atoms": [{"z": [0.5], "w": 0.0}]})
    with pytest.raises(SchemaError):
        measure_from_dict({"dim": 2, "atoms": [{"z": [0.5], "w": 1.0}]})
    with pytest.raises(SchemaError):
        measure_from_dict({"dim": 1, "atoms": [{"z": [0.5]}]})
