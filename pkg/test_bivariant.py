#!/usr/bin/env python3
"""
Tests for bivariant constructible functions, fiber weights and class systems.
"""

import random

import hypothesis
import hypothesis.strategies as strat
import pytest

from bivariant import (
    BivariantFn,
    EquippedMorphism,
    biv_product,
    biv_pullback,
    biv_pushforward,
    check_projection_formula,
    check_system,
    chi_f,
    chi_of_product_factors,
    unit_system,
)
from errors import EndpointMismatchError, NonConstantWeightError, ParentMismatchError
from geom import (
    ConstructibleFunction,
    FiberSquare,
    MorphismModel,
    VarietyModel,
    collapse,
    fn_mul,
    identity,
    identity_square,
    pushforward,
)
from prosys import ProductTower, product_weight_system
from random_models import random_function, random_model, random_square, random_strict_morphism, random_table
from rings import AtomTable
from verdicts import CheckStatus

seeds = strat.integers(0, 2 ** 32 - 1)

TABLE = AtomTable([("E", 0)])
L = TABLE.tate()
E = TABLE.atom("E")


def two_strata(name="X"):
    return VarietyModel(name, [("a", L + 1), ("b", E * L)], TABLE)


def tower():
    return ProductTower("T", VarietyModel("X", [("a", L), ("b", TABLE.one())], TABLE))


# Classes and weights


def test_class_lives_on_the_source():
    f = collapse(two_strata())
    with pytest.raises(ParentMismatchError):
        BivariantFn(f, ConstructibleFunction.constant(two_strata("Y"), 1))


def test_unit_weight_is_chi_of_the_fiber():
    f = collapse(two_strata())
    assert chi_f(BivariantFn.unit(f)) == 2
    assert EquippedMorphism.euler(f).cls == BivariantFn.unit(f)


def test_equipment_must_match():
    X = two_strata()
    with pytest.raises(EndpointMismatchError):
        EquippedMorphism(identity(X), BivariantFn.unit(collapse(X)))


def test_non_constant_weight():
    X = two_strata()
    alpha = BivariantFn(identity(X), ConstructibleFunction(X, {"a": 1, "b": 2}))
    assert not alpha.has_constant_weight()
    with pytest.raises(NonConstantWeightError) as info:
        chi_f(alpha)
    assert "a" in str(info.value) and "b" in str(info.value)


@hypothesis.given(seeds)
def test_chi_of_a_product_factors(seed):
    rng = random.Random(seed)
    T = ProductTower("T", random_model(rng, random_table(rng), max_strata=3))
    alpha = BivariantFn.unit(T.step(1))
    beta = random_function(rng, T.level(1))
    lhs, rhs = chi_of_product_factors(alpha, beta)
    assert lhs == rhs


# Operations


@hypothesis.given(seeds)
def test_pushforward_of_a_product(seed):
    rng = random.Random(seed)
    Z = random_model(rng, random_table(rng), max_strata=3)
    g = random_strict_morphism(rng, Z, "g", max_strata=4)
    f = random_strict_morphism(rng, g.source, "f", max_strata=5)
    alpha = BivariantFn(f, random_function(rng, f.source))
    beta = BivariantFn(g, random_function(rng, g.source))
    pushed = biv_pushforward(f, g, biv_product(alpha, beta))
    assert pushed.over == g
    assert pushed.fn == fn_mul(pushforward(f, alpha.fn), beta.fn)


def test_product_needs_composable_maps():
    X = two_strata()
    with pytest.raises(EndpointMismatchError):
        biv_product(BivariantFn.unit(collapse(X)), BivariantFn.unit(identity(X)))


@hypothesis.given(seeds)
def test_pullback_lands_over_the_base_change(seed):
    rng = random.Random(seed)
    square = random_square(rng)
    alpha = BivariantFn(square.f, random_function(rng, square.f.source))
    pulled = biv_pullback(square, alpha)
    assert pulled.over == square.f_prime
    with pytest.raises(EndpointMismatchError):
        biv_pullback(square, BivariantFn.unit(square.pi))


# Projection formula


@hypothesis.given(seeds, strat.booleans())
@hypothesis.settings(max_examples=50)
def test_projection_formula_on_random_squares(seed, strict_f):
    rng = random.Random(seed)
    square = random_square(rng, strict_f=strict_f)
    alpha = random_function(rng, square.f.source)
    beta = random_function(rng, square.pi.source)
    report = check_projection_formula(square, alpha, beta)
    assert report.status == CheckStatus.PASS
    assert report.witness is None


def test_projection_formula_reports_a_broken_square():
    X = two_strata()
    square = identity_square(collapse(X))
    fiber = dict(square.f_prime.fiber)
    sid = square.model.ids[0]
    fiber[sid] = fiber[sid] + 1
    f_prime = MorphismModel("f'", square.model, square.f_prime.target, square.f_prime.stratum_map, fiber)
    bad = FiberSquare(square.f, square.pi, square.model, square.pi_prime, f_prime)
    report = check_projection_formula(bad, ConstructibleFunction.constant(X, 1),
                                      ConstructibleFunction.constant(square.pi.source, 1))
    assert report.status == CheckStatus.FAIL
    assert report.witness.startswith("base change at")


# Class systems


def test_unit_system_composes():
    assert check_system(unit_system(tower()), depth=3).passed


def test_weight_system_composes():
    T = tower()
    system = product_weight_system(T, {"a": 2, "b": -1})
    assert check_system(system, depth=3).passed
    assert system.nonvanishing
    assert system.classes(1, 3).fn("a.b.a") == -2


def test_zero_weights_are_not_nonvanishing():
    assert not product_weight_system(tower(), {"b": 0}).nonvanishing


def test_an_override_breaks_composition():
    T = tower()
    system = product_weight_system(T, {"a": 2})
    broken = system.with_override(1, BivariantFn.unit(T.step(1)))
    report = check_system(broken, depth=2)
    assert report.status == CheckStatus.FAIL
    assert report.witness.startswith("(1,2,3)")
    assert not broken.nonvanishing


def test_override_must_be_over_its_step():
    T = tower()
    with pytest.raises(EndpointMismatchError):
        unit_system(T).with_override(1, BivariantFn.unit(T.step(2)))


def main():
    """Run all tests."""
    print("\n" + "=" * 80)
    print("BIVARIANT TEST SUITE")
    print("=" * 80)
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_") and callable(v)]
    for test in tests:
        test()
        print(f"✓ {test.__name__}")


if __name__ == "__main__":
    main()
