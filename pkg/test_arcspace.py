#!/usr/bin/env python3
"""
Tests for arc towers and the motivic measure of cylinder sets.
"""

import random

import hypothesis
import hypothesis.strategies as strat
import pytest

from arcspace import ArcTower, arc_tower, is_stable_set, motivic_measure
from errors import ProchernError, TowerMismatchError, UnsupportedInputError
from geom import VarietyModel
from prosys import CylinderSet, ProductTower, chi_pro, cyl_union, lift_cyl, procharacteristic
from random_models import random_model, random_table
from rings import AtomTable, LocClass, loc_add, loc_eq

seeds = strat.integers(0, 2 ** 32 - 1)

TABLE = AtomTable([("C", 2)])
L = TABLE.tate()
C = TABLE.atom("C")


def curve():
    return VarietyModel("X", [("u", L), ("p", TABLE.one()), ("q", C)], TABLE)


def test_levels_start_at_zero():
    T = arc_tower(curve(), 1)
    assert T.base == 0
    assert T.level(0).ids == ("u", "p", "q")
    assert T.level(2).cls("q") == C * L ** 2
    assert T.name == "L(X)"


def test_measure_of_the_whole_space_is_the_class():
    X = curve()
    T = arc_tower(X, 2)
    assert motivic_measure(CylinderSet.whole(T)) == LocClass.of(X.gamma())
    assert motivic_measure(CylinderSet.whole(T, 3)) == LocClass.of(X.gamma())


def test_measure_of_a_cylinder():
    T = arc_tower(curve(), 1)
    measure = motivic_measure(CylinderSet(T, 2, ["u", "q"]))
    assert measure == LocClass.of(L + C)
    assert measure.render() == "(C + L)/(1)"


@hypothesis.given(seeds, strat.integers(1, 3), strat.integers(0, 4))
def test_measure_does_not_depend_on_the_level(seed, d, m):
    rng = random.Random(seed)
    X = random_model(rng, random_table(rng), max_strata=4)
    T = arc_tower(X, d)
    members = [sid for sid in X.ids if rng.random() < 0.5]
    c = CylinderSet(T, 0, members)
    assert motivic_measure(lift_cyl(c, m)) == motivic_measure(c)
    assert is_stable_set(c)


def test_shifted_measure():
    X = curve()
    T = arc_tower(X, 1)
    shifted = motivic_measure(CylinderSet.whole(T), w=1)
    assert shifted == LocClass.fraction(X.gamma(), L)
    assert shifted.render() == "(C + L + 1)/(L)"
    assert motivic_measure(CylinderSet.whole(T, 2), w=1) == shifted
    assert motivic_measure(CylinderSet.whole(arc_tower(X, 2)), w=1) == LocClass.fraction(X.gamma(), L ** 2)


@hypothesis.given(seeds, strat.integers(1, 2), strat.integers(0, 3))
def test_measure_is_additive_on_disjoint_cylinders(seed, d, m):
    rng = random.Random(seed)
    X = random_model(rng, random_table(rng), max_strata=4)
    T = arc_tower(X, d)
    side = {sid: rng.randint(0, 2) for sid in X.ids}
    A = CylinderSet(T, 0, [sid for sid in X.ids if side[sid] == 0])
    B = lift_cyl(CylinderSet(T, 0, [sid for sid in X.ids if side[sid] == 1]), m)
    total = motivic_measure(cyl_union(A, B))
    assert loc_eq(total, loc_add(motivic_measure(A), motivic_measure(B)))


@hypothesis.given(seeds, strat.integers(1, 3), strat.integers(0, 3))
def test_euler_characteristic_of_the_measure(seed, d, m):
    rng = random.Random(seed)
    X = random_model(rng, random_table(rng), max_strata=4)
    T = arc_tower(X, d)
    c = CylinderSet(T, m, [sid for sid in T.level(m).ids if rng.random() < 0.5])
    assert motivic_measure(c).euler() == chi_pro(c.indicator())


def test_pro_euler_characteristic_of_arcs():
    T = arc_tower(curve(), 1)
    assert chi_pro(procharacteristic(T)) == 1 + 1 + 2


def test_singular_bases_are_refused():
    with pytest.raises(UnsupportedInputError):
        arc_tower(curve(), 1, smooth=False)
    with pytest.raises(ProchernError):
        arc_tower(curve(), 0)


def test_measure_needs_an_arc_tower():
    T = ProductTower("T", curve())
    with pytest.raises(TowerMismatchError):
        motivic_measure(CylinderSet.whole(T))
    with pytest.raises(TowerMismatchError):
        is_stable_set(CylinderSet.whole(T))
    assert isinstance(arc_tower(curve(), 1, name="J"), ArcTower)


def main():
    """Run all tests."""
    print("\n" + "=" * 80)
    print("ARC SPACE TEST SUITE")
    print("=" * 80)
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_") and callable(v)]
    for test in tests:
        test()
        print(f"✓ {test.__name__}")


if __name__ == "__main__":
    main()
