"""
Stratified variety models and the constructible-function calculus on them.

A variety is modeled as a finite list of strata, each carrying a class in the
modeled Grothendieck ring; a constructible function is an integer per
stratum. Morphisms carry a target stratum and a fiber class per source
stratum, which is everything pushforward, pullback, Euler characteristics and
Grothendieck classes consume.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

from errors import (
    AtomTableError,
    EndpointMismatchError,
    ParentMismatchError,
    SquareError,
    StrictnessError,
    StratumError,
    UndefinedValueError,
)
from rings import AtomTable, GClass, LocClass, chi_hom

POINT_STRATUM = "pt"


@dataclass(frozen=True)
class Stratum:
    id: str
    cls: GClass


class VarietyModel:
    """A named finite stratification with a class on each stratum."""

    def __init__(self, name: str, strata: Iterable[Tuple[str, GClass]], table: AtomTable):
        self.name = name
        self.table = table
        seen = set()
        items: List[Stratum] = []
        for sid, cls in strata:
            if sid in seen:
                raise StratumError(f"{name}: stratum '{sid}' declared twice")
            if cls.table != table:
                raise AtomTableError(f"{name}: stratum '{sid}' uses a different atom table")
            if cls.is_zero():
                raise StratumError(f"{name}: stratum '{sid}' has class 0")
            seen.add(sid)
            items.append(Stratum(sid, cls))
        self.strata: Tuple[Stratum, ...] = tuple(items)
        self.ids: Tuple[str, ...] = tuple(s.id for s in items)
        self._cls: Dict[str, GClass] = {s.id: s.cls for s in items}
        self._chi: Dict[str, int] = {s.id: chi_hom(s.cls, table) for s in items}

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, VarietyModel):
            return NotImplemented
        return self.name == other.name and self.strata == other.strata

    def __hash__(self) -> int:
        return hash((self.name, self.ids))

    def __repr__(self) -> str:
        return f"VarietyModel({self.name}, {list(self.ids)})"

    def __len__(self) -> int:
        return len(self.strata)

    def __contains__(self, sid: str) -> bool:
        return sid in self._cls

    def require(self, sid: str) -> str:
        if sid not in self._cls:
            raise StratumError(f"model '{self.name}' has no stratum '{sid}'")
        return sid

    def cls(self, sid: str) -> GClass:
        return self._cls[self.require(sid)]

    def chi(self, sid: Optional[str] = None) -> int:
        """Euler characteristic of one stratum, or of the whole model."""
        if sid is None:
            return sum(self._chi.values())
        return self._chi[self.require(sid)]

    def gamma(self) -> GClass:
        total = self.table.zero()
        for s in self.strata:
            total = total + s.cls
        return total

    def renamed(self, name: str) -> "VarietyModel":
        return VarietyModel(name, [(s.id, s.cls) for s in self.strata], self.table)


class ConstructibleSet:
    """A union of strata of one model."""

    def __init__(self, parent: VarietyModel, members: Iterable[str]):
        self.parent = parent
        self.members = frozenset(parent.require(m) for m in members)

    @classmethod
    def whole(cls, parent: VarietyModel) -> "ConstructibleSet":
        return cls(parent, parent.ids)

    @classmethod
    def empty(cls, parent: VarietyModel) -> "ConstructibleSet":
        return cls(parent, ())

    def _check(self, other: "ConstructibleSet") -> None:
        if other.parent != self.parent:
            raise ParentMismatchError(
                f"sets over '{self.parent.name}' and '{other.parent.name}'"
            )

    def union(self, other: "ConstructibleSet") -> "ConstructibleSet":
        self._check(other)
        return ConstructibleSet(self.parent, self.members | other.members)

    def intersection(self, other: "ConstructibleSet") -> "ConstructibleSet":
        self._check(other)
        return ConstructibleSet(self.parent, self.members & other.members)

    def difference(self, other: "ConstructibleSet") -> "ConstructibleSet":
        self._check(other)
        return ConstructibleSet(self.parent, self.members - other.members)

    def symmetric_difference(self, other: "ConstructibleSet") -> "ConstructibleSet":
        self._check(other)
        return ConstructibleSet(self.parent, self.members ^ other.members)

    def complement(self) -> "ConstructibleSet":
        return ConstructibleSet(self.parent, set(self.parent.ids) - self.members)

    def is_empty(self) -> bool:
        return not self.members

    def ordered(self) -> List[str]:
        """Members in the parent's stratum order."""
        return [sid for sid in self.parent.ids if sid in self.members]

    def indicator(self) -> "ConstructibleFunction":
        return ConstructibleFunction.indicator(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConstructibleSet):
            return NotImplemented
        return self.parent == other.parent and self.members == other.members

    def __hash__(self) -> int:
        return hash((self.parent, self.members))

    def __repr__(self) -> str:
        return f"ConstructibleSet({self.parent.name}, {self.ordered()})"


class ConstructibleFunction:
    """An integer on every stratum of a model."""

    def __init__(self, parent: VarietyModel, values: Mapping[str, int]):
        missing = [sid for sid in parent.ids if sid not in values]
        if missing:
            raise StratumError(f"function on '{parent.name}' has no value on {missing}")
        for sid in values:
            parent.require(sid)
        self.parent = parent
        self.values: Tuple[int, ...] = tuple(int(values[sid]) for sid in parent.ids)

    @classmethod
    def from_sparse(cls, parent: VarietyModel, values: Mapping[str, int]) -> "ConstructibleFunction":
        """Unlisted strata get value 0."""
        for sid in values:
            parent.require(sid)
        return cls(parent, {sid: values.get(sid, 0) for sid in parent.ids})

    @classmethod
    def constant(cls, parent: VarietyModel, c: int) -> "ConstructibleFunction":
        return cls(parent, {sid: c for sid in parent.ids})

    @classmethod
    def zero(cls, parent: VarietyModel) -> "ConstructibleFunction":
        return cls.constant(parent, 0)

    @classmethod
    def indicator(cls, W: ConstructibleSet) -> "ConstructibleFunction":
        return cls(W.parent, {sid: int(sid in W.members) for sid in W.parent.ids})

    def __call__(self, sid: str) -> int:
        return self.values[self.parent.ids.index(self.parent.require(sid))]

    def items(self) -> Iterator[Tuple[str, int]]:
        return zip(self.parent.ids, self.values)

    def as_dict(self) -> Dict[str, int]:
        return dict(self.items())

    def is_zero(self) -> bool:
        return not any(self.values)

    def level_sets(self, include_zero: bool = False) -> Dict[int, ConstructibleSet]:
        """alpha^-1(n) for every realized n, in increasing n; n = 0 only on request."""
        members: Dict[int, List[str]] = {}
        for sid, n in self.items():
            if n == 0 and not include_zero:
                continue
            members.setdefault(n, []).append(sid)
        return {n: ConstructibleSet(self.parent, members[n]) for n in sorted(members)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConstructibleFunction):
            return NotImplemented
        return self.parent == other.parent and self.values == other.values

    def __hash__(self) -> int:
        return hash((self.parent, self.values))

    def __add__(self, other: "ConstructibleFunction") -> "ConstructibleFunction":
        return fn_add(self, other)

    def __mul__(self, other: "ConstructibleFunction") -> "ConstructibleFunction":
        return fn_mul(self, other)

    def __neg__(self) -> "ConstructibleFunction":
        return fn_scale(self, -1)

    def __repr__(self) -> str:
        return f"ConstructibleFunction({self.parent.name}, {self.as_dict()})"


class MorphismModel:
    """
    A map of stratified models: a target stratum and a fiber class per source
    stratum. In strict mode cls(s) = cls(map(s)) * F_s is enforced.
    """

    def __init__(
        self,
        name: str,
        source: VarietyModel,
        target: VarietyModel,
        stratum_map: Mapping[str, str],
        fiber: Mapping[str, GClass],
        strict: bool = False,
    ):
        if source.table != target.table:
            raise AtomTableError(f"{name}: source and target use different atom tables")
        for sid in source.ids:
            if sid not in stratum_map:
                raise StratumError(f"{name}: source stratum '{sid}' is not mapped")
            if sid not in fiber:
                raise StratumError(f"{name}: source stratum '{sid}' has no fiber class")
            target.require(stratum_map[sid])
            if fiber[sid].is_zero():
                raise StratumError(f"{name}: fiber over '{sid}' has class 0")
        for sid in list(stratum_map) + list(fiber):
            source.require(sid)

        self.name = name
        self.source = source
        self.target = target
        self.stratum_map: Dict[str, str] = {sid: stratum_map[sid] for sid in source.ids}
        self.fiber: Dict[str, GClass] = {sid: fiber[sid] for sid in source.ids}
        self.strict = strict
        self._preimage: Dict[str, List[str]] = {t: [] for t in target.ids}
        for sid in source.ids:
            self._preimage[self.stratum_map[sid]].append(sid)

        if strict:
            for sid in source.ids:
                expected = target.cls(self.stratum_map[sid]) * self.fiber[sid]
                if source.cls(sid) != expected:
                    raise StrictnessError(
                        f"{name}: stratum '{sid}' has class {source.cls(sid).render()}, "
                        f"expected {expected.render()}"
                    )

    def __repr__(self) -> str:
        return f"MorphismModel({self.name}: {self.source.name} -> {self.target.name})"

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, MorphismModel):
            return NotImplemented
        return (
            self.source == other.source
            and self.target == other.target
            and self.stratum_map == other.stratum_map
            and self.fiber == other.fiber
        )

    def __hash__(self) -> int:
        return hash((self.source, self.target, tuple(self.stratum_map.items())))

    def preimage(self, t: str) -> List[str]:
        return list(self._preimage[self.target.require(t)])

    def fiber_chi(self, sid: str) -> int:
        return chi_hom(self.fiber[self.source.require(sid)], self.source.table)

    def fchi(self, t: str) -> int:
        """Euler characteristic of the fiber over a point of target stratum t."""
        return sum(self.fiber_chi(s) for s in self.preimage(t))

    def fiber_class_over(self, t: str) -> GClass:
        total = self.source.table.zero()
        for s in self.preimage(t):
            total = total + self.fiber[s]
        return total

    def surjective(self) -> bool:
        return all(self._preimage[t] for t in self.target.ids)

    def chi_compatible(self) -> bool:
        """chi(s) = chi(map(s)) * chi(F_s) on every source stratum."""
        return all(
            self.source.chi(s) == self.target.chi(self.stratum_map[s]) * self.fiber_chi(s)
            for s in self.source.ids
        )

    def uniform_fiber_class(self) -> Optional[GClass]:
        """The fiber class over every target stratum when they all agree."""
        classes = [self.fiber_class_over(t) for t in self.target.ids]
        if not classes:
            return None
        first = classes[0]
        return first if all(c == first for c in classes[1:]) else None


# Set measures


def chi_of_set(W: ConstructibleSet) -> int:
    return sum(W.parent.chi(sid) for sid in W.members)


def gamma_of_set(W: ConstructibleSet) -> GClass:
    total = W.parent.table.zero()
    for sid in W.ordered():
        total = total + W.parent.cls(sid)
    return total


# Function measures


def chi_of_fn(alpha: ConstructibleFunction) -> int:
    """Sum over realized n of n * chi(alpha^-1(n))."""
    return sum(n * chi_of_set(W) for n, W in alpha.level_sets().items())


def chi_of_fn_pointwise(alpha: ConstructibleFunction) -> int:
    return sum(n * alpha.parent.chi(sid) for sid, n in alpha.items())


def gamma_of_fn(alpha: ConstructibleFunction) -> GClass:
    total = alpha.parent.table.zero()
    for n, W in alpha.level_sets().items():
        total = total + gamma_of_set(W) * n
    return total


def gamma_of_fn_pointwise(alpha: ConstructibleFunction) -> GClass:
    total = alpha.parent.table.zero()
    for sid, n in alpha.items():
        total = total + alpha.parent.cls(sid) * n
    return total


Integrand = Union[Callable[[int], object], Mapping[int, object]]


def apply_integrand(f: Integrand, n: int):
    """f(n), raising UndefinedValueError when f has no value there."""
    try:
        value = f[n] if isinstance(f, Mapping) else f(n)
    except (KeyError, ValueError, ZeroDivisionError):
        raise UndefinedValueError(n) from None
    if value is None:
        raise UndefinedValueError(n)
    return value


def integrate_chi(alpha: ConstructibleFunction, f: Integrand) -> Fraction:
    """Sum over every realized value n (0 included) of f(n) * chi(alpha^-1(n))."""
    total = Fraction(0)
    for n, W in alpha.level_sets(include_zero=True).items():
        total += Fraction(apply_integrand(f, n)) * chi_of_set(W)
    return total


def integrate_gamma(alpha: ConstructibleFunction, f: Integrand) -> LocClass:
    table = alpha.parent.table
    total = LocClass.of(table.zero())
    for n, W in alpha.level_sets(include_zero=True).items():
        value = apply_integrand(f, n)
        if not isinstance(value, LocClass):
            value = LocClass.of(table.zero() + value)
        total = total + value * gamma_of_set(W)
    return total


# Function calculus


def _same_parent(alpha: ConstructibleFunction, beta: ConstructibleFunction) -> None:
    if alpha.parent != beta.parent:
        raise ParentMismatchError(
            f"functions on '{alpha.parent.name}' and '{beta.parent.name}'"
        )


def fn_add(alpha: ConstructibleFunction, beta: ConstructibleFunction) -> ConstructibleFunction:
    _same_parent(alpha, beta)
    return ConstructibleFunction(
        alpha.parent, {sid: a + b for sid, a, b in zip(alpha.parent.ids, alpha.values, beta.values)}
    )


def fn_mul(alpha: ConstructibleFunction, beta: ConstructibleFunction) -> ConstructibleFunction:
    _same_parent(alpha, beta)
    return ConstructibleFunction(
        alpha.parent, {sid: a * b for sid, a, b in zip(alpha.parent.ids, alpha.values, beta.values)}
    )


def fn_scale(alpha: ConstructibleFunction, c: int) -> ConstructibleFunction:
    return ConstructibleFunction(alpha.parent, {sid: c * a for sid, a in alpha.items()})


def pushforward(f: MorphismModel, alpha: ConstructibleFunction) -> ConstructibleFunction:
    """(f_* alpha)(t) = sum over s mapping to t of alpha(s) * chi(F_s)."""
    if alpha.parent != f.source:
        raise ParentMismatchError(
            f"pushforward along '{f.name}' needs a function on '{f.source.name}', "
            f"got one on '{alpha.parent.name}'"
        )
    values = {t: 0 for t in f.target.ids}
    for sid, a in alpha.items():
        if a:
            values[f.stratum_map[sid]] += a * f.fiber_chi(sid)
    return ConstructibleFunction(f.target, values)


def pullback(f: MorphismModel, beta: ConstructibleFunction) -> ConstructibleFunction:
    if beta.parent != f.target:
        raise ParentMismatchError(
            f"pullback along '{f.name}' needs a function on '{f.target.name}', "
            f"got one on '{beta.parent.name}'"
        )
    target_values = beta.as_dict()
    return ConstructibleFunction(
        f.source, {sid: target_values[f.stratum_map[sid]] for sid in f.source.ids}
    )


def pair_id(s: str, t: str) -> str:
    return f"{s}.{t}"


def check_pairs(pairs: Iterable[Tuple[str, str]], left: str, right: str) -> None:
    """Pair ids are joined with a dot, so two pairs may not render alike."""
    seen: Dict[str, Tuple[str, str]] = {}
    for s, t in pairs:
        sid = pair_id(s, t)
        if sid in seen:
            raise StratumError(
                f"strata of '{left}' and '{right}' pair ambiguously: "
                f"{seen[sid]} and {(s, t)} both give '{sid}'"
            )
        seen[sid] = (s, t)


def cross_model(X: VarietyModel, Y: VarietyModel, name: Optional[str] = None) -> VarietyModel:
    if X.table != Y.table:
        raise AtomTableError(f"cannot multiply '{X.name}' and '{Y.name}': different atom tables")
    check_pairs(((s, t) for s in X.ids for t in Y.ids), X.name, Y.name)
    return VarietyModel(
        name or f"{X.name}x{Y.name}",
        [(pair_id(s.id, t.id), s.cls * t.cls) for s in X.strata for t in Y.strata],
        X.table,
    )


def cross_fn(
    alpha: ConstructibleFunction,
    beta: ConstructibleFunction,
    product: Optional[VarietyModel] = None,
) -> ConstructibleFunction:
    product = product or cross_model(alpha.parent, beta.parent)
    return ConstructibleFunction(
        product,
        {pair_id(s, t): a * b for s, a in alpha.items() for t, b in beta.items()},
    )


def compose(g: MorphismModel, f: MorphismModel, name: Optional[str] = None) -> MorphismModel:
    """g after f; fibers multiply along the way."""
    if f.target != g.source:
        raise EndpointMismatchError(
            f"cannot compose '{g.name}' after '{f.name}': "
            f"'{f.target.name}' is not '{g.source.name}'"
        )
    return MorphismModel(
        name or f"{g.name}*{f.name}",
        f.source,
        g.target,
        {sid: g.stratum_map[f.stratum_map[sid]] for sid in f.source.ids},
        {sid: f.fiber[sid] * g.fiber[f.stratum_map[sid]] for sid in f.source.ids},
        strict=f.strict and g.strict,
    )


def identity(X: VarietyModel) -> MorphismModel:
    one = X.table.one()
    return MorphismModel(
        f"id_{X.name}", X, X, {sid: sid for sid in X.ids}, {sid: one for sid in X.ids}, strict=True
    )


def point_model(table: AtomTable, name: str = "pt") -> VarietyModel:
    return VarietyModel(name, [(POINT_STRATUM, table.one())], table)


def collapse(X: VarietyModel, point: Optional[VarietyModel] = None) -> MorphismModel:
    point = point or point_model(X.table)
    return MorphismModel(
        f"{X.name}->pt",
        X,
        point,
        {sid: POINT_STRATUM for sid in X.ids},
        {sid: X.cls(sid) for sid in X.ids},
        strict=True,
    )


def projection(
    X: VarietyModel, Y: VarietyModel, product: Optional[VarietyModel] = None
) -> MorphismModel:
    """First-factor projection X x Y -> X with fibers [Y-stratum]."""
    product = product or cross_model(X, Y)
    return MorphismModel(
        f"pr_{X.name}",
        product,
        X,
        {pair_id(s, t): s for s in X.ids for t in Y.ids},
        {pair_id(s, t): Y.cls(t) for s in X.ids for t in Y.ids},
        strict=True,
    )


@dataclass(frozen=True)
class FiberSquare:
    """
    Y' --f'--> X'
    |pi'       |pi
    Y  --f-->  X
    """
    f: MorphismModel
    pi: MorphismModel
    model: VarietyModel
    pi_prime: MorphismModel
    f_prime: MorphismModel

    def problems(self) -> List[str]:
        """Every way the square fails to be the fiber product of f and pi."""
        out: List[str] = []
        f, pi = self.f, self.pi
        if self.pi_prime.source != self.model or self.f_prime.source != self.model:
            out.append("projections do not start at the fibered model")
        if self.pi_prime.target != f.source or self.f_prime.target != pi.source:
            out.append("projections do not end at the corners")
        if f.target != pi.target:
            out.append("f and pi have different targets")
        if out:
            return out
        for sid in self.model.ids:
            s = self.pi_prime.stratum_map[sid]
            t = self.f_prime.stratum_map[sid]
            if f.stratum_map[s] != pi.stratum_map[t]:
                out.append(f"{sid}: does not commute ({s} and {t} land in different strata)")
                continue
            if self.model.cls(sid) != f.source.cls(s) * pi.fiber[t]:
                out.append(f"{sid}: class is not cls({s}) * F_{t}")
            if self.pi_prime.fiber[sid] != pi.fiber[t]:
                out.append(f"{sid}: fiber of pi' is not F_{t}")
            if self.f_prime.fiber[sid] != f.fiber[s]:
                out.append(f"{sid}: fiber of f' is not F_{s}")
        pairs = {(self.pi_prime.stratum_map[sid], self.f_prime.stratum_map[sid]) for sid in self.model.ids}
        expected = {(s, t) for s in f.source.ids for t in pi.source.ids if f.stratum_map[s] == pi.stratum_map[t]}
        if pairs != expected or len(pairs) != len(self.model):
            out.append("fibered strata are not exactly the compatible pairs")
        return out

    def validate(self) -> "FiberSquare":
        problems = self.problems()
        if problems:
            raise SquareError("; ".join(problems))
        return self


def fiber_product(f: MorphismModel, pi: MorphismModel, name: Optional[str] = None) -> FiberSquare:
    """Base change of f: Y -> X along a strict pi: X' -> X."""
    if not pi.strict:
        raise StrictnessError(f"base change along '{pi.name}' needs a strict morphism")
    if f.target != pi.target:
        raise EndpointMismatchError(
            f"'{f.name}' and '{pi.name}' do not share a target"
        )
    pairs = [
        (s, t)
        for s in f.source.ids
        for t in pi.source.ids
        if f.stratum_map[s] == pi.stratum_map[t]
    ]
    check_pairs(pairs, f.source.name, pi.source.name)
    model = VarietyModel(
        name or f"{f.source.name}x_{f.target.name}{pi.source.name}",
        [(pair_id(s, t), f.source.cls(s) * pi.fiber[t]) for s, t in pairs],
        f.source.table,
    )
    pi_prime = MorphismModel(
        f"{pi.name}'",
        model,
        f.source,
        {pair_id(s, t): s for s, t in pairs},
        {pair_id(s, t): pi.fiber[t] for s, t in pairs},
        strict=True,
    )
    f_prime = MorphismModel(
        f"{f.name}'",
        model,
        pi.source,
        {pair_id(s, t): t for s, t in pairs},
        {pair_id(s, t): f.fiber[s] for s, t in pairs},
        strict=f.strict,
    )
    return FiberSquare(f, pi, model, pi_prime, f_prime)


def identity_square(f: MorphismModel) -> FiberSquare:
    return fiber_product(f, identity(f.target))
