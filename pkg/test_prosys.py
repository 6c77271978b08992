#!/usr/bin/env python3
"""
Tests for towers, proconstructible functions, pro-Euler characteristics,
pro-classes, stability, cylinders, series and promorphisms.
"""

import random
from fractions import Fraction
from math import factorial

import hypothesis
import hypothesis.strategies as strat
import pytest

from errors import (
    LevelError,
    StratumError,
    TowerMismatchError,
    UnstableFunctionError,
    ZeroMultiplierError,
    ZeroWeightError,
)
from geom import ConstructibleFunction, MorphismModel, VarietyModel, chi_of_fn, collapse, identity, point_model
from prosys import (
    BundleTower,
    CylinderSet,
    ProductTower,
    ProFunction,
    ProjectiveTower,
    ProPoint,
    SeriesProFunction,
    StepSystem,
    StepsTower,
    check_naturality,
    chi_pro,
    chi_pro_partial_sums,
    cyl_complement,
    cyl_difference,
    cyl_eq,
    cyl_intersect,
    cyl_symmdiff,
    cyl_union,
    eval_at,
    gamma_pro,
    gamma_pushed,
    greedy_series,
    identity_promorphism,
    integrate_chi_pro,
    integrate_gamma_pro,
    is_chi_stable,
    is_gamma_stable,
    level_sets,
    lift,
    lift_cyl,
    pro_add,
    pro_eq,
    pro_is_zero,
    pro_pushforward,
    procharacteristic,
    product_weight_system,
    pullback_promorphism,
    stable_chi_pro,
    stable_gamma_pro,
)
from random_models import mutate_promorphism, random_function, random_model, random_pullback_promorphism, random_table
from rings import AtomTable, LocClass
from verdicts import CheckStatus, Verdict

seeds = strat.integers(0, 2 ** 32 - 1)

TABLE = AtomTable([("E", 0)])
L = TABLE.tate()
E = TABLE.atom("E")


def plane():
    return VarietyModel("X", [("a", TABLE.one()), ("b", L)], TABLE)


def product_tower():
    return ProductTower("T", plane())


def two_point_tower():
    """X1 = {a, b}, X2 = {a}: the stratum b dies after one step."""
    X1 = VarietyModel("X1", [("a", TABLE.one()), ("b", TABLE.one())], TABLE)
    X2 = VarietyModel("X2", [("a", TABLE.one())], TABLE)
    M = MorphismModel("M", X2, X1, {"a": "a"}, {"a": TABLE.one()}, strict=True)
    return StepsTower("S", [M])


# Towers


def test_product_tower_levels():
    T = product_tower()
    assert T.level(2).ids == ("a.a", "a.b", "b.a", "b.b")
    assert T.level(3).cls("b.a.b") == L ** 2
    assert T.components(3, "b.a.b") == ("b", "a", "b")
    assert T.composite(1, 3).stratum_map["b.a.b"] == "b"
    with pytest.raises(LevelError):
        T.level(0)


def test_products_refuse_dotted_strata():
    X = VarietyModel("X", [("a", TABLE.one()), ("a.a", L)], TABLE)
    with pytest.raises(StratumError):
        ProductTower("T", X)


def test_level_size_is_capped():
    X = VarietyModel("X", [(f"s{i}", TABLE.one()) for i in range(40)], TABLE)
    T = ProductTower("T", X)
    assert len(T.level(2)) == 1600
    with pytest.raises(LevelError):
        T.level(3)


def test_bundle_fibers_repeat():
    X0 = plane()
    flat = BundleTower("B", X0, [L, L + 1])
    assert [flat.fiber_at(n) for n in (1, 2, 3)] == [L, L + 1, L + 1]
    cyclic = BundleTower("C", X0, [L, L + 1], periodic=True)
    assert [cyclic.fiber_at(n) for n in (1, 2, 3)] == [L, L + 1, L]
    assert cyclic.periodicity() == (1, 2)


def test_projective_steps():
    T = ProjectiveTower("P", point_model(TABLE), shift=0)
    assert T.level(2).ids == ("pt.o", "pt.c")
    assert T.level(2).cls("pt.c") == L
    assert T.level(3).cls("pt.c.c") == L * (L + L ** 2)
    first = ProjectiveTower("Q", point_model(TABLE), shift=-1)
    assert first.level(2).ids == ("pt.o",)


def test_steps_tower_continues_with_identities():
    S = two_point_tower()
    assert S.level(1).ids == ("a", "b")
    assert S.level(4).ids == ("a",)
    assert not S.surjective_from(1)
    assert S.surjective_from(2)


# Proconstructible functions


def test_lifting_pulls_back():
    T = product_tower()
    pf = ProFunction.sparse(T, 1, {"b": 3})
    lifted = lift(pf, 2)
    assert lifted.fn.as_dict() == {"a.a": 0, "a.b": 0, "b.a": 3, "b.b": 3}
    with pytest.raises(LevelError):
        lift(lifted, 1)


def test_sum_lifts_to_the_common_level():
    T = product_tower()
    total = pro_add(ProFunction.sparse(T, 1, {"a": 1}), ProFunction.sparse(T, 2, {"b.b": 2}))
    assert total.level == 2
    assert total.fn.as_dict() == {"a.a": 1, "a.b": 1, "b.a": 0, "b.b": 2}


def test_operands_on_different_towers():
    with pytest.raises(TowerMismatchError):
        pro_add(procharacteristic(product_tower()), procharacteristic(product_tower()))


def test_zero_after_a_lift():
    S = two_point_tower()
    pf = ProFunction.sparse(S, 1, {"b": 7})
    decision = pro_eq(pf, ProFunction.sparse(S, 1, {}))
    assert decision.verdict == Verdict.YES
    assert decision.level == 2


def test_non_zero_is_definitive_on_surjective_towers():
    T = product_tower()
    decision = pro_is_zero(ProFunction.sparse(T, 1, {"a": 1}))
    assert decision.verdict == Verdict.NO
    assert decision.render() == "no (level 1)"


def test_non_zero_to_the_horizon():
    T = product_tower()
    system = product_weight_system(T, {"b": 0})
    pf = ProFunction.sparse(T, 1, {"a": 1}, system)
    decision = pro_is_zero(pf, horizon=3)
    assert decision.verdict == Verdict.NO_TO_HORIZON
    assert decision.level == 3


def test_weights_can_kill_a_class():
    T = ProductTower("T", VarietyModel("X", [("a", L)], TABLE))
    system = product_weight_system(T, {"a": 0})
    decision = pro_is_zero(procharacteristic(T, system))
    assert decision.verdict == Verdict.YES
    assert decision.level == 2


def test_points():
    T = product_tower()
    x = ProPoint(T, ["b", "b.a"])
    assert x.at(3) == "b.a.a"
    assert eval_at(ProFunction.sparse(T, 3, {"b.a.a": 5}), x) == 5
    assert eval_at(ProFunction.sparse(T, 1, {"b": 2}), x) == 2
    with pytest.raises(StratumError):
        ProPoint(T, ["a", "b.a"])


# Pro-Euler characteristics and pro-classes


def test_chi_pro_of_a_product_tower_is_chi():
    T = product_tower()
    one = procharacteristic(T)
    assert chi_pro(one) == Fraction(2)
    assert chi_pro(lift(one, 4)) == Fraction(2)
    assert chi_pro(one, w=1) == Fraction(1)


@hypothesis.given(seeds)
@hypothesis.settings(max_examples=20)
def test_chi_pro_of_random_product_towers(seed):
    rng = random.Random(seed)
    X = random_model(rng, random_table(rng), max_strata=4, nonzero_chi=True)
    hypothesis.assume(X.chi() != 0)
    one = procharacteristic(ProductTower("T", X))
    assert chi_pro(one) == chi_pro(lift(one, 3)) == Fraction(X.chi())


@pytest.mark.parametrize("n", range(1, 8))
def test_projective_towers_give_factorials(n):
    shifted = ProjectiveTower("Q", point_model(TABLE), shift=-1)
    plain = ProjectiveTower("P", point_model(TABLE), shift=0)
    point_chain = "pt" + ".o" * (n - 1)
    assert chi_pro(ProFunction.sparse(shifted, n, {point_chain: 1})) == Fraction(1, factorial(n - 1))
    assert chi_pro(ProFunction.sparse(plain, n, {point_chain: 1})) == Fraction(1, factorial(n))


def test_zero_weight_denominator():
    T = ProductTower("T", VarietyModel("X", [("a", E)], TABLE))
    with pytest.raises(ZeroWeightError):
        chi_pro(lift(procharacteristic(T), 2))


def test_weighted_chi_pro_is_level_independent():
    T = product_tower()
    one = procharacteristic(T, product_weight_system(T, {"a": 2}))
    assert chi_pro(lift(one, 3)) == chi_pro(one) == Fraction(2)


def test_gamma_pro_of_a_bundle_is_the_base_class():
    X0 = plane()
    B = BundleTower("B", X0, [L, L + 1])
    one = procharacteristic(B)
    assert gamma_pro(lift(one, 3)) == LocClass.of(X0.gamma())
    assert gamma_pro(lift(one, 3)).render() == "(L + 1)/(1)"


def test_gamma_pro_shift():
    T = product_tower()
    one = procharacteristic(T)
    assert gamma_pro(one, 1).render() == "(1)/(1)"
    assert gamma_pro(one, -1).render() == "(L^2 + 2*L + 1)/(1)"


@hypothesis.given(seeds, strat.integers(1, 3))
@hypothesis.settings(max_examples=30)
def test_chi_of_gamma_pro_is_chi_pro(seed, level):
    rng = random.Random(seed)
    phi = random_pullback_promorphism(rng)
    tower = phi.target
    hypothesis.assume(tower.X.chi() != 0)
    pf = ProFunction(tower, level, random_function(rng, tower.level(level)))
    assert gamma_pro(pf).euler() == chi_pro(pf)


# Stability


def test_own_steps_are_stable_on_a_product_tower():
    T = product_tower()
    pf = ProFunction.sparse(T, 1, {"b": 4})
    decision = is_chi_stable(pf, StepSystem.chi_weights_of(T))
    assert decision.verdict == Verdict.YES
    assert stable_chi_pro(pf, StepSystem.chi_weights_of(T)) == chi_pro(pf)
    assert is_gamma_stable(pf, StepSystem.fiber_classes_of(T)).verdict == Verdict.YES
    assert stable_gamma_pro(pf, StepSystem.fiber_classes_of(T)) == gamma_pro(pf)


def test_wrong_steps_are_unstable():
    T = product_tower()
    pf = ProFunction.sparse(T, 1, {"b": 4})
    wrong = StepSystem.listed([5])
    decision = is_chi_stable(pf, wrong)
    assert decision.verdict == Verdict.NO
    assert decision.level == 2
    with pytest.raises(UnstableFunctionError) as info:
        stable_chi_pro(pf, wrong)
    assert info.value.witness_level == 2


def test_steps_without_a_period_check_to_the_horizon():
    X1 = VarietyModel("X1", [("a", TABLE.one())], TABLE)
    pf = procharacteristic(ProjectiveTower("P", X1))
    steps = StepSystem(lambda n: n + 1, 1, None)
    decision = is_chi_stable(pf, steps, horizon=5)
    assert decision.verdict == Verdict.YES_TO_HORIZON
    assert decision.level == 5


def test_step_systems_reject_zero():
    with pytest.raises(ZeroMultiplierError):
        StepSystem.listed([2, 0])
    assert StepSystem.listed([2, 3], periodic=True).between(1, 5) == 36
    assert StepSystem.listed([2, 3]).between(1, 5) == 54


# Cylinders and integration


def test_cylinder_operations():
    T = product_tower()
    C = CylinderSet(T, 1, ["a"])
    lifted = lift_cyl(C, 2)
    assert lifted.set.members == frozenset({"a.a", "a.b"})
    assert cyl_eq(C, lifted)
    D = CylinderSet(T, 2, ["a.a", "b.a"])
    assert cyl_intersect(C, D).set.members == frozenset({"a.a"})
    assert cyl_union(C, D).set.members == frozenset({"a.a", "a.b", "b.a"})
    assert cyl_complement(C).set.members == frozenset({"b"})
    assert cyl_eq(cyl_union(C, cyl_complement(C)), CylinderSet.whole(T))
    assert not cyl_eq(C, D)


def test_two_cylinder_decomposition():
    T = product_tower()
    A = CylinderSet(T, 1, ["a"])
    B = CylinderSet(T, 2, ["a.a", "b.a"])
    assert cyl_difference(A, B).set.members == frozenset({"a.b"})
    assert cyl_symmdiff(A, B).set.members == frozenset({"a.b", "b.a"})
    alpha = pro_add(A.indicator(), B.indicator())
    for m in (2, 3):
        levels = level_sets(lift(alpha, m))
        assert list(levels) == [1, 2]
        assert cyl_eq(levels[1], cyl_symmdiff(A, B))
        assert cyl_eq(levels[2], cyl_intersect(A, B))
        assert levels[1].level == m


@hypothesis.given(seeds)
def test_sums_of_two_indicators_split_into_cylinders(seed):
    rng = random.Random(seed)
    T = ProductTower("T", random_model(rng, random_table(rng), max_strata=3))
    A, B = (CylinderSet(T, n, [s for s in T.level(n).ids if rng.random() < 0.5]) for n in (1, 2))
    levels = level_sets(pro_add(A.indicator(), B.indicator()))
    for k, expected in ((1, cyl_symmdiff(A, B)), (2, cyl_intersect(A, B))):
        if expected.is_empty():
            assert k not in levels
        else:
            assert cyl_eq(levels[k], expected)
    assert cyl_eq(cyl_union(cyl_difference(A, B), cyl_intersect(A, B)), A)


def test_level_sets_are_cylinders():
    T = product_tower()
    pf = ProFunction.sparse(T, 2, {"a.a": 2, "b.b": 2, "a.b": -1})
    levels = level_sets(pf)
    assert list(levels) == [-1, 2]
    assert levels[2].set.members == frozenset({"a.a", "b.b"})


def test_integration_over_a_product_tower():
    T = product_tower()
    pf = ProFunction.sparse(T, 1, {"a": 2, "b": 3})
    own = StepSystem.chi_weights_of(T)
    assert integrate_chi_pro(pf, own, lambda n: n) == chi_pro(pf) == Fraction(5)
    assert integrate_chi_pro(pf, own, {2: Fraction(1, 2), 3: 1}) == Fraction(3, 2)
    classes = StepSystem.fiber_classes_of(T)
    total = integrate_gamma_pro(pf, classes, {2: LocClass.fraction(TABLE.one(), L + 1), 3: 1})
    assert total == LocClass.fraction(L ** 2 + L + 1, L + 1)


# Series


def test_partial_sums():
    T = product_tower()
    s = SeriesProFunction(T, [procharacteristic(T), ProFunction.sparse(T, 2, {"b.b": 1})])
    assert chi_pro_partial_sums(s, 3) == [Fraction(2), Fraction(5, 2), Fraction(5, 2)]
    assert s.partial_sum(2).fn.as_dict() == {"a.a": 1, "a.b": 1, "b.a": 1, "b.b": 2}


def test_greedy_series_for_two_thirds():
    P = ProjectiveTower("P", point_model(TABLE), shift=0)
    sums = chi_pro_partial_sums(greedy_series(P, Fraction(2, 3)), 8)
    for N in range(2, 9):
        assert abs(sums[N - 1] - Fraction(2, 3)) <= Fraction(1, factorial(N + 1))


@hypothesis.given(strat.fractions(min_value=-3, max_value=3, max_denominator=50), strat.integers(1, 6))
@hypothesis.settings(max_examples=50)
def test_greedy_remainders_shrink(x, N):
    P = ProjectiveTower("P", point_model(TABLE), shift=0)
    partial = chi_pro_partial_sums(greedy_series(P, x), N)[-1]
    assert 0 <= x - partial < Fraction(1, factorial(N))


# Promorphisms


def test_identity_promorphism_pushes_forward_to_itself():
    T = product_tower()
    pf = ProFunction.sparse(T, 2, {"a.b": 3})
    pushed = pro_pushforward(identity_promorphism(T), pf)
    assert pushed.level == 2
    assert pushed.fn == pf.fn
    assert check_naturality(identity_promorphism(T), depth=3).passed


@hypothesis.given(seeds)
@hypothesis.settings(max_examples=50, deadline=None)
def test_naturality_of_random_pullbacks(seed):
    phi = random_pullback_promorphism(random.Random(seed))
    report = check_naturality(phi, depth=4, seed=seed)
    assert report.status == CheckStatus.PASS


def test_class_weighted_pushforward():
    T = product_tower()
    alpha = ProFunction.sparse(T, 2, {"a.b": 1, "b.b": -2}).fn
    assert gamma_pushed(T, 2, identity(T.level(2)), alpha) == gamma_pro(ProFunction(T, 2, alpha))
    X = plane()
    Q = ProductTower("Q", point_model(TABLE))
    pushed = gamma_pushed(Q, 1, collapse(X), ConstructibleFunction.constant(X, 1))
    assert pushed == LocClass.of(L + 1)


def test_naturality_fails_when_one_side_is_undefined():
    X1 = VarietyModel("X1", [("a", TABLE.one()), ("b", TABLE.one())], TABLE)
    X2 = VarietyModel("X2", [("a1", TABLE.one()), ("b1", L), ("b2", L)], TABLE)
    M = MorphismModel("M", X2, X1, {"a1": "a", "b1": "b", "b2": "b"},
                      {"a1": TABLE.one(), "b1": L, "b2": L}, strict=True)
    Y = VarietyModel("Y", [("y", TABLE.one())], TABLE)
    f = MorphismModel("f", Y, X1, {"y": "a"}, {"y": TABLE.one()}, strict=True)
    report = check_naturality(pullback_promorphism("R", StepsTower("S", [M]), f), depth=2)
    assert report.status == CheckStatus.FAIL
    assert report.witness.startswith("level 2: chi_pro is defined on one side only")


@hypothesis.given(seeds)
@hypothesis.settings(max_examples=30, deadline=None)
def test_pushforward_preserves_chi_pro(seed):
    rng = random.Random(seed)
    phi = random_pullback_promorphism(rng)
    hypothesis.assume(phi.target.X.chi() != 0)
    pf = ProFunction(phi.source, 2, random_function(rng, phi.source.level(2)))
    assert chi_pro(pro_pushforward(phi, pf)) == chi_pro(pf)
    assert chi_of_fn(pro_pushforward(phi, pf).fn) == chi_of_fn(pf.fn)


def test_mutations_are_located():
    rng = random.Random(2024)
    depth = 2
    located = 0
    mutated = 0
    for _ in range(200):
        phi = random_pullback_promorphism(rng)
        mutant, n, delta = mutate_promorphism(rng, phi, depth)
        report = check_naturality(mutant, depth=depth)
        if delta == 0:
            assert report.passed
            continue
        mutated += 1
        assert report.status == CheckStatus.FAIL
        if report.witness.startswith((f"level {n}:", f"level {n + 1}:")):
            located += 1
    assert mutated > 0
    assert located >= 0.95 * mutated


def main():
    """Run all tests."""
    print("\n" + "=" * 80)
    print("PRO-SYSTEM TEST SUITE")
    print("=" * 80)
    tests = [v for k, v in sorted(globals().items())
             if k.startswith("test_") and callable(v) and not hasattr(v, "pytestmark")]
    for test in tests:
        test()
        print(f"✓ {test.__name__}")
    for n in range(1, 8):
        test_projective_towers_give_factorials(n)
    print("✓ test_projective_towers_give_factorials")


if __name__ == "__main__":
    main()
