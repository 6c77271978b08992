"""
Exact arithmetic for prochern.

Grothendieck classes are modeled as polynomials over the integers in a set
of declared atomic classes (the Tate class L is always one of them); the
polynomial backend is sympy's sparse PolyRing with lexicographic order on
atom names. Localized classes keep their denominators as monomials in a
finitely generated multiplicative set of classes, and the inductive-limit
groups built from multiplication maps evaluate to exact rationals.

All values in this module are immutable.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from sympy.polys.domains import ZZ
from sympy.polys.orderings import lex
from sympy.polys.polyerrors import ExactQuotientFailed
from sympy.polys.rings import PolyElement, PolyRing

from errors import (
    AtomTableError,
    DenominatorError,
    LevelError,
    ProchernError,
    UnknownAtomError,
    ZeroMultiplierError,
)

Rat = Fraction

TATE = "L"
UNIT = "1"


class AtomTable:
    """
    Declared atomic classes with their Euler characteristics.

    `L` is always present with euler 1. `1` names the ring unit and is not a
    polynomial variable, so it may not be declared.
    """

    def __init__(self, entries: Iterable[Tuple[str, int]] = ()):
        euler: Dict[str, int] = {}
        for symbol, value in entries:
            if symbol == UNIT:
                raise AtomTableError("'1' is the ring unit and cannot be declared as an atom")
            if symbol in euler:
                raise AtomTableError(f"atom '{symbol}' declared twice")
            euler[symbol] = int(value)
        if euler.get(TATE, 1) != 1:
            raise AtomTableError(f"euler({TATE}) must be 1, got {euler[TATE]}")
        euler[TATE] = 1

        self.names: Tuple[str, ...] = tuple(sorted(euler))
        self.euler: Dict[str, int] = {name: euler[name] for name in self.names}
        self.ring: PolyRing = PolyRing(list(self.names), ZZ, lex)
        self._index = {name: i for i, name in enumerate(self.names)}

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, AtomTable):
            return NotImplemented
        return self.euler == other.euler

    def __hash__(self) -> int:
        return hash(tuple(self.euler.items()))

    def __contains__(self, symbol: str) -> bool:
        return symbol == UNIT or symbol in self._index

    def __repr__(self) -> str:
        return f"AtomTable({list(self.euler.items())})"

    def position(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownAtomError(symbol) from None

    def zero(self) -> "GClass":
        return GClass(self, self.ring.zero)

    def one(self) -> "GClass":
        return GClass(self, self.ring.one)

    def integer(self, n: int) -> "GClass":
        return GClass(self, self.ring(n))

    def atom(self, symbol: str) -> "GClass":
        if symbol == UNIT:
            return self.one()
        return GClass(self, self.ring.gens[self.position(symbol)])

    def tate(self) -> "GClass":
        return self.atom(TATE)

    def monomial(self, powers: Mapping[str, int], coeff: int = 1) -> "GClass":
        exps = [0] * len(self.names)
        for symbol, e in powers.items():
            if symbol == UNIT:
                continue
            if e < 0:
                raise ProchernError(f"negative exponent {e} on atom '{symbol}'")
            exps[self.position(symbol)] += e
        return GClass(self, self.ring({tuple(exps): coeff}))


class GClass:
    """Element of the modeled Grothendieck ring: an integer polynomial in declared atoms."""

    __slots__ = ("table", "poly")

    def __init__(self, table: AtomTable, poly: PolyElement):
        self.table = table
        self.poly = poly

    def _coerce(self, other: object) -> Optional["GClass"]:
        if isinstance(other, GClass):
            if other.table != self.table:
                raise AtomTableError("classes over different atom tables")
            return other
        if isinstance(other, int):
            return self.table.integer(other)
        return None

    def __add__(self, other: object) -> "GClass":
        rhs = self._coerce(other)
        if rhs is None:
            return NotImplemented
        return GClass(self.table, self.poly + rhs.poly)

    __radd__ = __add__

    def __sub__(self, other: object) -> "GClass":
        rhs = self._coerce(other)
        if rhs is None:
            return NotImplemented
        return GClass(self.table, self.poly - rhs.poly)

    def __rsub__(self, other: object) -> "GClass":
        rhs = self._coerce(other)
        if rhs is None:
            return NotImplemented
        return GClass(self.table, rhs.poly - self.poly)

    def __neg__(self) -> "GClass":
        return GClass(self.table, -self.poly)

    def __mul__(self, other: object) -> "GClass":
        rhs = self._coerce(other)
        if rhs is None:
            return NotImplemented
        return GClass(self.table, self.poly * rhs.poly)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "GClass":
        if n < 0:
            raise ProchernError("classes have no negative powers outside a localization")
        return GClass(self.table, self.poly ** n)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, int):
            return self.poly == self.table.ring(other)
        if not isinstance(other, GClass):
            return NotImplemented
        if other.table != self.table:
            raise AtomTableError("classes over different atom tables")
        return self.poly == other.poly

    def __hash__(self) -> int:
        return hash((self.table, tuple(sorted(self.poly.terms()))))

    def __bool__(self) -> bool:
        return bool(self.poly)

    def __repr__(self) -> str:
        return f"GClass({self.render()})"

    def __str__(self) -> str:
        return self.render()

    def is_zero(self) -> bool:
        return not self.poly

    def terms(self) -> List[Tuple[Tuple[int, ...], int]]:
        """(exponent vector, coefficient) pairs in canonical (lex descending) order."""
        return [(monom, int(coeff)) for monom, coeff in self.poly.terms()]

    def monic_monomial(self) -> Optional[Dict[str, int]]:
        """The atom powers if this class is a single monomial with coefficient 1."""
        terms = self.terms()
        if len(terms) != 1 or terms[0][1] != 1:
            return None
        monom = terms[0][0]
        return {name: e for name, e in zip(self.table.names, monom) if e}

    def euler(self) -> int:
        return chi_hom(self, self.table)

    def exquo(self, other: "GClass") -> Optional["GClass"]:
        """Exact quotient, or None when other does not divide self."""
        try:
            return GClass(self.table, self.poly.exquo(other.poly))
        except (ExactQuotientFailed, ZeroDivisionError):
            return None

    def is_compound(self) -> bool:
        """True when rendering needs parentheses to be used as a factor."""
        terms = self.terms()
        if len(terms) != 1:
            return True
        return terms[0][1] < 0

    def render(self) -> str:
        terms = self.terms()
        if not terms:
            return "0"
        pieces = []
        for monom, coeff in terms:
            factors = "*".join(
                name if e == 1 else f"{name}^{e}"
                for name, e in zip(self.table.names, monom)
                if e
            )
            if not factors:
                pieces.append(str(coeff))
            elif coeff == 1:
                pieces.append(factors)
            elif coeff == -1:
                pieces.append(f"-{factors}")
            else:
                pieces.append(f"{coeff}*{factors}")
        out = pieces[0]
        for piece in pieces[1:]:
            if piece.startswith("-"):
                out += " - " + piece[1:]
            else:
                out += " + " + piece
        return out


def gclass_add(a: GClass, b: GClass) -> GClass:
    return a + b


def gclass_mul(a: GClass, b: GClass) -> GClass:
    return a * b


def gclass_eq(a: GClass, b: GClass) -> bool:
    return a == b


def gclass_sum(classes: Iterable[GClass], table: AtomTable) -> GClass:
    total = table.zero()
    for c in classes:
        total = total + c
    return total


def chi_hom(a: GClass, table: AtomTable) -> int:
    """
    Euler characteristic of a class: the ring morphism sending each atom to
    its declared euler value (so 1 and L both go to 1).
    """
    values = []
    for name in a.table.names:
        if name not in table.euler:
            values.append(None)
        else:
            values.append(table.euler[name])
    total = 0
    for monom, coeff in a.terms():
        term = coeff
        for name, value, e in zip(a.table.names, values, monom):
            if not e:
                continue
            if value is None:
                raise UnknownAtomError(name)
            term *= value ** e
        total += term
    return total


class DenominatorSet:
    """
    A finitely generated multiplicative set of classes.

    Elements are monomials in the generators. Use `generated_by` to build one
    from arbitrary fiber classes: monic monomials contribute their atoms,
    anything else is a generator as a whole.
    """

    def __init__(self, table: AtomTable, generators: Iterable[GClass] = ()):
        unique: Dict[str, GClass] = {}
        for g in generators:
            if g.table != table:
                raise AtomTableError("denominator generator over a different atom table")
            if g.is_zero():
                raise DenominatorError("zero cannot be a denominator generator")
            if g == 1:
                continue
            unique.setdefault(g.render(), g)
        self.table = table
        self.generators: Tuple[GClass, ...] = tuple(
            unique[key] for key in sorted(unique, key=lambda k: (len(unique[k].terms()), k))
        )

    @classmethod
    def generated_by(cls, table: AtomTable, classes: Iterable[GClass]) -> "DenominatorSet":
        gens: List[GClass] = []
        for c in classes:
            if c.is_zero():
                raise DenominatorError("zero fiber class cannot be inverted")
            powers = c.monic_monomial()
            if powers is not None:
                gens.extend(table.atom(name) for name in powers)
            else:
                gens.append(c)
        return cls(table, gens)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DenominatorSet):
            return NotImplemented
        return self.table == other.table and self.generators == other.generators

    def __hash__(self) -> int:
        return hash(self.generators)

    def __repr__(self) -> str:
        return f"DenominatorSet({[g.render() for g in self.generators]})"

    def union(self, other: "DenominatorSet") -> "DenominatorSet":
        if other.table != self.table:
            raise AtomTableError("denominator sets over different atom tables")
        if other == self:
            return self
        return DenominatorSet(self.table, self.generators + other.generators)

    def index(self, g: GClass) -> int:
        for i, gen in enumerate(self.generators):
            if gen == g:
                return i
        raise DenominatorError(f"'{g.render()}' is not a generator of the denominator set")

    def exponents_of(self, c: GClass) -> Tuple[int, ...]:
        """Write c as a monomial in the generators, dividing greedily."""
        if c.is_zero():
            raise DenominatorError("zero denominator")
        exps = [0] * len(self.generators)
        rest = c
        for i, g in enumerate(self.generators):
            while True:
                q = rest.exquo(g)
                if q is None:
                    break
                rest = q
                exps[i] += 1
        if rest != 1:
            raise DenominatorError(
                f"'{c.render()}' is not a product of declared denominators {self!r}"
            )
        return tuple(exps)

    def exponents_of_factors(self, factors: Iterable[GClass]) -> Tuple[int, ...]:
        """Exponents of a product given factor by factor, as `generated_by` splits them."""
        exps = [0] * len(self.generators)
        for c in factors:
            if c.is_zero():
                raise DenominatorError("zero denominator factor")
            powers = c.monic_monomial()
            if powers is not None:
                for name, e in powers.items():
                    exps[self.index(self.table.atom(name))] += e
            else:
                exps[self.index(c)] += 1
        return tuple(exps)

    def value(self, exps: Sequence[int]) -> GClass:
        out = self.table.one()
        for g, e in zip(self.generators, exps):
            if e:
                out = out * g ** e
        return out

    def render(self, exps: Sequence[int]) -> str:
        factors = []
        alone = sum(1 for e in exps if e) == 1
        for g, e in zip(self.generators, exps):
            if not e:
                continue
            text = g.render()
            wrap = (g.is_compound() and not (alone and e == 1)) or ("*" in text and e > 1)
            base = f"({text})" if wrap else text
            factors.append(base if e == 1 else f"{base}^{e}")
        return "*".join(factors) if factors else "1"


class LocClass:
    """
    A class divided by a monomial in a declared multiplicative set.

    Equality is cross-multiplication, which is sound because the model ring
    is an integral domain. Operands over different sets are promoted to the
    union of their generators.
    """

    __slots__ = ("num", "exps", "fset")

    def __init__(self, num: GClass, exps: Sequence[int], fset: DenominatorSet):
        if num.table != fset.table:
            raise AtomTableError("numerator and denominators over different atom tables")
        exps = tuple(int(e) for e in exps)
        if len(exps) != len(fset.generators) or any(e < 0 for e in exps):
            raise DenominatorError(f"bad denominator exponents {exps} for {fset!r}")
        self.num = num
        self.exps = exps
        self.fset = fset

    @classmethod
    def of(cls, num: GClass, fset: Optional[DenominatorSet] = None) -> "LocClass":
        fset = fset or DenominatorSet(num.table)
        return cls(num, (0,) * len(fset.generators), fset)

    @classmethod
    def fraction(cls, num: GClass, den: GClass, fset: Optional[DenominatorSet] = None) -> "LocClass":
        fset = fset or DenominatorSet.generated_by(num.table, [den])
        return cls(num, fset.exponents_of(den), fset).reduce()

    @property
    def table(self) -> AtomTable:
        return self.num.table

    def den(self) -> GClass:
        return self.fset.value(self.exps)

    def promote(self, fset: DenominatorSet) -> "LocClass":
        if fset == self.fset:
            return self
        exps = [0] * len(fset.generators)
        for g, e in zip(self.fset.generators, self.exps):
            exps[fset.index(g)] += e
        return LocClass(self.num, exps, fset)

    def _aligned(self, other: "LocClass") -> Tuple["LocClass", "LocClass"]:
        if other.table != self.table:
            raise AtomTableError("localized classes over different atom tables")
        fset = self.fset.union(other.fset)
        return self.promote(fset), other.promote(fset)

    def __add__(self, other: object) -> "LocClass":
        if isinstance(other, (GClass, int)):
            other = LocClass.of(self.num._coerce(other), self.fset)
        if not isinstance(other, LocClass):
            return NotImplemented
        a, b = self._aligned(other)
        common = tuple(max(x, y) for x, y in zip(a.exps, b.exps))
        num = (
            a.num * a.fset.value([c - x for c, x in zip(common, a.exps)])
            + b.num * b.fset.value([c - y for c, y in zip(common, b.exps)])
        )
        return LocClass(num, common, a.fset).reduce()

    __radd__ = __add__

    def __neg__(self) -> "LocClass":
        return LocClass(-self.num, self.exps, self.fset)

    def __sub__(self, other: object) -> "LocClass":
        if isinstance(other, (GClass, int)):
            other = LocClass.of(self.num._coerce(other), self.fset)
        if not isinstance(other, LocClass):
            return NotImplemented
        return self + (-other)

    def __mul__(self, other: object) -> "LocClass":
        if isinstance(other, (GClass, int)):
            return LocClass(self.num * other, self.exps, self.fset).reduce()
        if not isinstance(other, LocClass):
            return NotImplemented
        a, b = self._aligned(other)
        exps = tuple(x + y for x, y in zip(a.exps, b.exps))
        return LocClass(a.num * b.num, exps, a.fset).reduce()

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (GClass, int)):
            other = LocClass.of(self.num._coerce(other))
        if not isinstance(other, LocClass):
            return NotImplemented
        if other.table != self.table:
            raise AtomTableError("localized classes over different atom tables")
        return self.num * other.den() == other.num * self.den()

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"LocClass({self.render()})"

    def __str__(self) -> str:
        return self.render()

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def reduce(self) -> "LocClass":
        """Cancel generator powers that divide the numerator exactly."""
        if self.num.is_zero():
            return LocClass(self.num, (0,) * len(self.exps), self.fset)
        num = self.num
        exps = list(self.exps)
        for i, g in enumerate(self.fset.generators):
            while exps[i]:
                q = num.exquo(g)
                if q is None:
                    break
                num = q
                exps[i] -= 1
        return LocClass(num, exps, self.fset)

    def euler(self) -> Fraction:
        """Apply chi_hom to numerator and denominator."""
        den = self.den().euler()
        if den == 0:
            raise DenominatorError(f"denominator {self.fset.render(self.exps)} has Euler characteristic 0")
        return Fraction(self.num.euler(), den)

    def render(self) -> str:
        reduced = self.reduce()
        return f"({reduced.num.render()})/({reduced.fset.render(reduced.exps)})"


def loc_add(a: LocClass, b: LocClass) -> LocClass:
    return a + b


def loc_mul(a: LocClass, b: LocClass) -> LocClass:
    return a * b


def loc_eq(a: LocClass, b: LocClass) -> bool:
    return a == b


def render_rat(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


Multipliers = Union[int, Tuple[int, ...]]


@dataclass(frozen=True)
class LimitTermSeq:
    """
    A finite sum of level-tagged integers in an inductive limit of copies of Z.

    With a single multiplier p the bonding maps are all multiplication by p.
    With a list, entry k (1-based) is the multiplier from level k to level k+1.
    """
    terms: Tuple[Tuple[int, int], ...]
    multipliers: Multipliers
    shift: int = 0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((int(k), int(m)) for k, m in self.terms))
        if not isinstance(self.multipliers, int):
            object.__setattr__(self, "multipliers", tuple(int(p) for p in self.multipliers))
        for level, _ in self.terms:
            if level < 1:
                raise LevelError(f"limit levels start at 1, got {level}")
        ps = (self.multipliers,) if isinstance(self.multipliers, int) else self.multipliers
        for p in ps:
            if p == 0:
                raise ZeroMultiplierError("multiplier 0 collapses the inductive limit to 0")


def phi_w(s: LimitTermSeq) -> Fraction:
    """Sum of m_k / p^(k-1+w)."""
    if not isinstance(s.multipliers, int):
        raise ProchernError("phi_w needs a single multiplier; use psi_limit for a list")
    p = Fraction(s.multipliers)
    total = Fraction(0)
    for level, value in s.terms:
        total += Fraction(value) / p ** (level - 1 + s.shift)
    return total


def psi_limit(s: LimitTermSeq) -> Fraction:
    """Sum of r_n / (p_0 p_1 ... p_{n-1}) with p_0 = 1."""
    if isinstance(s.multipliers, int):
        return phi_w(s)
    if s.shift:
        raise ProchernError("a shift needs a single multiplier")
    total = Fraction(0)
    for level, value in s.terms:
        if level - 1 > len(s.multipliers):
            raise LevelError(
                f"level {level} needs {level - 1} multipliers, only {len(s.multipliers)} given"
            )
        den = 1
        for p in s.multipliers[: level - 1]:
            den *= p
        total += Fraction(value, den)
    return total
