#!/usr/bin/env python3
"""
Tests for the exact arithmetic layer: atom tables, Grothendieck classes,
localized classes and inductive-limit evaluation.
"""

from fractions import Fraction

import hypothesis
import hypothesis.strategies as strat
import pytest

from errors import AtomTableError, DenominatorError, LevelError, ProchernError, UnknownAtomError, ZeroMultiplierError
from rings import (
    AtomTable,
    DenominatorSet,
    LimitTermSeq,
    LocClass,
    chi_hom,
    gclass_add,
    gclass_eq,
    gclass_mul,
    gclass_sum,
    loc_add,
    loc_eq,
    loc_mul,
    phi_w,
    psi_limit,
    render_rat,
)

TABLE = AtomTable([("E", 0), ("C", 2)])
L = TABLE.tate()
E = TABLE.atom("E")
C = TABLE.atom("C")

COEFFS = strat.sampled_from([-3, -2, -1, 1, 2, 3])
MONOMIALS = strat.tuples(COEFFS, strat.integers(0, 2), strat.integers(0, 2), strat.integers(0, 2))


def to_class(monomials):
    return gclass_sum((TABLE.monomial({"C": c, "E": e, "L": l}, k) for k, c, e, l in monomials), TABLE)


classes = strat.lists(MONOMIALS, max_size=4).map(to_class)
nonzero_classes = classes.filter(lambda a: not a.is_zero())
multipliers = strat.sampled_from([2, 3, 5, -2])


# Atom tables


def test_tate_is_always_declared():
    table = AtomTable()
    assert table.names == ("L",)
    assert table.euler["L"] == 1
    assert table.tate().euler() == 1


def test_unit_cannot_be_declared():
    with pytest.raises(AtomTableError):
        AtomTable([("1", 1)])


def test_tate_euler_must_be_one():
    with pytest.raises(AtomTableError):
        AtomTable([("L", 2)])


def test_unknown_atom():
    with pytest.raises(UnknownAtomError):
        TABLE.atom("Z")


def test_classes_over_different_tables_do_not_mix():
    other = AtomTable([("F", 3)])
    with pytest.raises(AtomTableError):
        L + other.tate()


# Grothendieck classes


def test_render_is_lex_descending():
    assert (E * L + L ** 2 - 3).render() == "E*L + L^2 - 3"
    assert ((L + 1) ** 2).render() == "L^2 + 2*L + 1"
    assert (-L).render() == "-L"
    assert TABLE.zero().render() == "0"
    assert (2 * C ** 2 * L).render() == "2*C^2*L"


def test_chi_hom_values():
    assert chi_hom(E * L + L ** 2 - 3, TABLE) == -2
    assert chi_hom(C ** 3, TABLE) == 8
    assert chi_hom(TABLE.one(), TABLE) == 1


def test_chi_hom_needs_every_atom():
    smaller = AtomTable([("E", 0)])
    with pytest.raises(UnknownAtomError):
        chi_hom(C, smaller)


@hypothesis.given(classes, classes)
def test_chi_hom_is_additive(a, b):
    assert (a + b).euler() == a.euler() + b.euler()


@hypothesis.given(classes, classes)
def test_chi_hom_is_multiplicative(a, b):
    assert (a * b).euler() == a.euler() * b.euler()


@hypothesis.given(classes, classes, classes)
def test_distributivity(a, b, c):
    assert gclass_eq(gclass_mul(a, gclass_add(b, c)), gclass_add(gclass_mul(a, b), gclass_mul(a, c)))


@hypothesis.given(nonzero_classes, nonzero_classes)
def test_exquo_inverts_multiplication(a, b):
    assert (a * b).exquo(b) == a


def test_exquo_reports_failure():
    assert (L + 1).exquo(L) is None


# Localized classes


def test_fraction_reduces():
    assert LocClass.fraction(L ** 2, L ** 3).render() == "(1)/(L)"
    assert LocClass.fraction(L ** 3, L ** 3).render() == "(1)/(1)"


def test_sum_of_localized_classes():
    total = LocClass.of(L) + LocClass.fraction(TABLE.one(), L)
    assert total.render() == "(L^2 + 1)/(L)"
    assert total.euler() == Fraction(2)


def test_compound_denominators_render_with_parentheses():
    assert LocClass.fraction(TABLE.one(), L + 1).render() == "(1)/(L + 1)"
    fset = DenominatorSet.generated_by(TABLE, [L + 1, L])
    x = LocClass(TABLE.one(), fset.exponents_of_factors([L + 1, L + 1, L]), fset)
    assert x.render() == "(1)/(L*(L + 1)^2)"


def test_equality_is_cross_multiplication():
    assert LocClass.fraction(L, L ** 2) == LocClass.fraction(TABLE.one(), L)
    assert LocClass.fraction(L + 1, L) != LocClass.fraction(TABLE.one(), L)


def test_operands_promote_to_the_union_of_denominators():
    a = LocClass.fraction(TABLE.one(), L)
    b = LocClass.fraction(TABLE.one(), L + 1)
    total = a + b
    assert total.fset.generators == (L, L + 1)
    assert total == LocClass.fraction(2 * L + 1, L * (L + 1), DenominatorSet(TABLE, [L, L + 1]))


def test_denominator_outside_the_set():
    fset = DenominatorSet(TABLE, [L])
    with pytest.raises(DenominatorError):
        fset.exponents_of(L + 1)
    with pytest.raises(DenominatorError):
        DenominatorSet(TABLE, [TABLE.zero()])


def test_euler_of_a_degenerate_denominator():
    with pytest.raises(DenominatorError):
        LocClass.fraction(L, E).euler()


@hypothesis.given(classes, strat.integers(0, 4), classes, strat.integers(0, 4))
def test_localized_addition_commutes(a, i, b, j):
    x = LocClass.fraction(a, L ** i) if i else LocClass.of(a)
    y = LocClass.fraction(b, L ** j) if j else LocClass.of(b)
    assert loc_eq(loc_add(x, y), loc_add(y, x))
    assert (x + y) - y == x


localized = strat.tuples(classes, strat.integers(0, 3)).map(
    lambda t: LocClass.fraction(t[0], L ** t[1]) if t[1] else LocClass.of(t[0])
)


@hypothesis.given(localized, localized, localized)
def test_equality_is_a_congruence(x, y, z):
    assert loc_eq(x, x)
    assert loc_eq(x, y) == loc_eq(y, x)
    shifted = LocClass.fraction(x.num * L, x.den() * L)
    assert loc_eq(x, shifted)
    assert loc_eq(loc_add(x, z), loc_add(shifted, z))
    assert loc_eq(loc_mul(x, z), loc_mul(shifted, z))
    assert loc_eq(loc_mul(x, loc_add(y, z)), loc_add(loc_mul(x, y), loc_mul(x, z)))


@hypothesis.given(nonzero_classes, strat.integers(1, 4))
def test_multiplying_back_the_denominator(a, i):
    x = LocClass.fraction(a, L ** i)
    assert x * L ** i == LocClass.of(a)


# Inductive limits


def test_render_rat_always_has_a_denominator():
    assert render_rat(Fraction(2)) == "2/1"
    assert render_rat(Fraction(-3, 6)) == "-1/2"


def test_psi_with_growing_multipliers():
    assert psi_limit(LimitTermSeq(((3, 5),), (1, 2, 3, 4))) == Fraction(5, 2)


def test_phi_with_a_constant_multiplier():
    assert psi_limit(LimitTermSeq(((1, 1), (2, 1)), 2)) == Fraction(3, 2)
    assert phi_w(LimitTermSeq(((1, 1), (2, 1)), 2)) == Fraction(3, 2)


def test_phi_shift():
    assert phi_w(LimitTermSeq(((1, 3),), 2, 1)) == Fraction(3, 2)
    assert phi_w(LimitTermSeq(((2, 3),), 2, -1)) == Fraction(3)


def test_limit_errors():
    with pytest.raises(LevelError):
        LimitTermSeq(((0, 1),), 2)
    with pytest.raises(ZeroMultiplierError):
        LimitTermSeq(((1, 1),), 0)
    with pytest.raises(ZeroMultiplierError):
        LimitTermSeq(((1, 1),), (1, 0))
    with pytest.raises(LevelError):
        psi_limit(LimitTermSeq(((4, 1),), (2,)))
    with pytest.raises(ProchernError):
        psi_limit(LimitTermSeq(((1, 1),), (2, 2), 1))


@hypothesis.given(multipliers, strat.integers(1, 8), strat.integers(-100, 100), strat.integers(-2, 2))
def test_phi_is_compatible_with_the_bonds(p, k, m, w):
    assert phi_w(LimitTermSeq(((k, m),), p, w)) == phi_w(LimitTermSeq(((k + 1, m * p),), p, w))


@hypothesis.given(multipliers, strat.lists(strat.tuples(strat.integers(1, 8), strat.integers(-50, 50)), max_size=6))
@hypothesis.settings(max_examples=200)
def test_psi_with_constant_bonds_agrees_with_phi(p, terms):
    terms = tuple(terms)
    assert psi_limit(LimitTermSeq(terms, (p,) * 8)) == phi_w(LimitTermSeq(terms, p))


@hypothesis.given(strat.lists(multipliers, min_size=8, max_size=8), strat.integers(1, 7), strat.integers(-100, 100))
def test_psi_is_compatible_with_the_bonds(ps, k, m):
    ps = tuple(ps)
    assert psi_limit(LimitTermSeq(((k, m),), ps)) == psi_limit(LimitTermSeq(((k + 1, m * ps[k - 1]),), ps))


def main():
    """Run all tests."""
    print("\n" + "=" * 80)
    print("RINGS TEST SUITE")
    print("=" * 80)
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_") and callable(v)]
    for test in tests:
        test()
        print(f"✓ {test.__name__}")


if __name__ == "__main__":
    main()
