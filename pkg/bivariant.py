"""
Bivariant constructible functions.

A bivariant function over f: X -> Y is a constructible function on X read
relative to f. Product, pushforward and pullback follow the usual bivariant
operations; `chi_f` extracts the common fiber weight used as the step
denominator of pro-Euler characteristics.
"""

import threading
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Mapping, Optional, Tuple

from errors import EndpointMismatchError, NonConstantWeightError, ParentMismatchError, ProchernError
from geom import (
    ConstructibleFunction,
    FiberSquare,
    MorphismModel,
    chi_of_fn,
    compose,
    fn_mul,
    identity,
    pullback,
    pushforward,
)
from verdicts import CheckReport


class BivariantFn:
    """A constructible function on the source of `over`."""

    def __init__(self, over: MorphismModel, fn: ConstructibleFunction):
        if fn.parent != over.source:
            raise ParentMismatchError(
                f"bivariant class over '{over.name}' needs a function on "
                f"'{over.source.name}', got one on '{fn.parent.name}'"
            )
        self.over = over
        self.fn = fn

    @classmethod
    def unit(cls, over: MorphismModel) -> "BivariantFn":
        return cls(over, ConstructibleFunction.constant(over.source, 1))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BivariantFn):
            return NotImplemented
        return self.over == other.over and self.fn == other.fn

    def __hash__(self) -> int:
        return hash((self.over, self.fn))

    def __repr__(self) -> str:
        return f"BivariantFn({self.over.name}, {self.fn.as_dict()})"

    @cached_property
    def weights(self) -> Dict[str, int]:
        """Fiber weight over each target stratum: sum of fn(s) * chi(F_s) over s -> t."""
        return pushforward(self.over, self.fn).as_dict()

    @cached_property
    def weight_break(self) -> Optional[Tuple[str, str]]:
        """Two target strata with different weights, or None when the weight is constant."""
        items = list(self.weights.items())
        for t, w in items[1:]:
            if w != items[0][1]:
                return items[0][0], t
        return None

    def has_constant_weight(self) -> bool:
        return self.weight_break is None


@dataclass(frozen=True)
class EquippedMorphism:
    morphism: MorphismModel
    cls: BivariantFn

    def __post_init__(self):
        if self.cls.over != self.morphism:
            raise EndpointMismatchError(
                f"class over '{self.cls.over.name}' does not equip '{self.morphism.name}'"
            )

    @classmethod
    def euler(cls, morphism: MorphismModel) -> "EquippedMorphism":
        return cls(morphism, BivariantFn.unit(morphism))


def biv_product(alpha: BivariantFn, beta: BivariantFn) -> BivariantFn:
    """alpha . f^* beta over g after f, for alpha over f: X -> Y and beta over g: Y -> Z."""
    f, g = alpha.over, beta.over
    if f.target != g.source:
        raise EndpointMismatchError(
            f"cannot multiply classes over '{f.name}' and '{g.name}'"
        )
    return BivariantFn(compose(g, f), fn_mul(alpha.fn, pullback(f, beta.fn)))


def biv_pushforward(f: MorphismModel, g: MorphismModel, alpha: BivariantFn) -> BivariantFn:
    """Push a class over g after f down to a class over g."""
    if alpha.over != compose(g, f):
        raise EndpointMismatchError(
            f"class over '{alpha.over.name}' is not over '{g.name}' after '{f.name}'"
        )
    return BivariantFn(g, pushforward(f, alpha.fn))


def biv_pullback(square: FiberSquare, alpha: BivariantFn) -> BivariantFn:
    """Pull a class over f back to a class over f' along the square's pi'."""
    square.validate()
    if alpha.over != square.f:
        raise EndpointMismatchError(
            f"class over '{alpha.over.name}' is not over the square's '{square.f.name}'"
        )
    return BivariantFn(square.f_prime, pullback(square.pi_prime, alpha.fn))


def chi_f(alpha: BivariantFn) -> int:
    """The common fiber weight of alpha."""
    if not alpha.weights:
        raise ProchernError(f"'{alpha.over.name}' has an empty target; no fiber weight")
    broken = alpha.weight_break
    if broken is not None:
        first, second = broken
        raise NonConstantWeightError(first, alpha.weights[first], second, alpha.weights[second])
    return next(iter(alpha.weights.values()))


def _first_difference(
    lhs: ConstructibleFunction, rhs: ConstructibleFunction
) -> Optional[str]:
    for (sid, a), (_, b) in zip(lhs.items(), rhs.items()):
        if a != b:
            return f"{sid}: {a} != {b}"
    return None


def check_projection_formula(
    square: FiberSquare,
    alpha: ConstructibleFunction,
    beta: ConstructibleFunction,
    name: str = "projection_formula",
) -> CheckReport:
    """
    For the square with f: Y -> X along pi: X' -> X, alpha on Y and beta on X',
    checks base change pi^* f_* alpha = f'_* pi'^* alpha, the projection
    formula f_*(alpha . f^* pi_* beta) = f_* alpha . pi_* beta on X, and
    f'_*(pi'^* alpha . f'^* beta) = pi^* f_* alpha . beta on X'.
    The witness names the identity and the first stratum where it fails.
    """
    f, pi = square.f, square.pi
    pushed = pushforward(f, alpha)

    lhs = pullback(pi, pushed)
    rhs = pushforward(square.f_prime, pullback(square.pi_prime, alpha))
    where = _first_difference(lhs, rhs)
    if where:
        return CheckReport.failed(name, f"base change at {where}")

    gamma = pushforward(pi, beta)
    lhs = pushforward(f, fn_mul(alpha, pullback(f, gamma)))
    rhs = fn_mul(pushed, gamma)
    where = _first_difference(lhs, rhs)
    if where:
        return CheckReport.failed(name, f"projection formula along {f.name} at {where}")

    lhs = pushforward(square.f_prime, fn_mul(pullback(square.pi_prime, alpha), pullback(square.f_prime, beta)))
    rhs = fn_mul(pullback(pi, pushed), beta)
    where = _first_difference(lhs, rhs)
    if where:
        return CheckReport.failed(name, f"projection formula along {square.f_prime.name} at {where}")

    return CheckReport.ok(name)


ClassRule = Callable[[int, int], BivariantFn]


class BivClassSystem:
    """
    A bivariant class b_{lm} over every composite structure map of a tower.

    `rule(l, m)` produces b_{lm} over tower.composite(l, m); `overrides`
    replace single-step classes b_{n(n+1)}. The tower needs `base`,
    `step(n)` and `composite(l, m)`.
    """

    def __init__(self, name: str, tower, rule: ClassRule,
                 overrides: Optional[Mapping[int, BivariantFn]] = None, nonvanishing: bool = False):
        self.name = name
        # every class is nowhere zero, so bonding maps are injective on surjective steps
        self.nonvanishing = nonvanishing and not overrides
        self.tower = tower
        self.rule = rule
        self.overrides: Dict[int, BivariantFn] = dict(overrides or {})
        self._cache: Dict[Tuple[int, int], BivariantFn] = {}
        self._lock = threading.Lock()
        for n, cls in self.overrides.items():
            if cls.over != tower.step(n):
                raise EndpointMismatchError(
                    f"override for step {n} of '{name}' is not over that step"
                )

    def classes(self, lam: int, mu: int) -> BivariantFn:
        """b_{lam mu} over the structure map from level mu to level lam."""
        if mu == lam + 1 and lam in self.overrides:
            return self.overrides[lam]
        key = (lam, mu)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        if lam == mu:
            value = BivariantFn.unit(identity(self.tower.level(lam)))
        else:
            value = self.rule(lam, mu)
        with self._lock:
            return self._cache.setdefault(key, value)

    def step_class(self, n: int) -> BivariantFn:
        return self.classes(n, n + 1)

    def with_override(self, n: int, cls: BivariantFn) -> "BivClassSystem":
        overrides = dict(self.overrides)
        overrides[n] = cls
        return BivClassSystem(self.name, self.tower, self.rule, overrides, self.nonvanishing)


def unit_system(tower, name: str = "unit") -> BivClassSystem:
    return BivClassSystem(
        name, tower, lambda lam, mu: BivariantFn.unit(tower.composite(lam, mu)), nonvanishing=True
    )


def check_system(system: BivClassSystem, depth: int, name: str = "system") -> CheckReport:
    """b_{mn} . b_{lm} = b_{ln} for every base <= l < m < n <= base + depth."""
    base = system.tower.base
    top = base + depth
    for lam in range(base, top + 1):
        for mu in range(lam + 1, top + 1):
            for nu in range(mu + 1, top + 1):
                product = biv_product(system.classes(mu, nu), system.classes(lam, mu))
                expected = system.classes(lam, nu)
                if product.over != expected.over:
                    return CheckReport.failed(name, f"({lam},{mu},{nu}): composite maps differ")
                where = _first_difference(product.fn, expected.fn)
                if where:
                    return CheckReport.failed(name, f"({lam},{mu},{nu}) at {where}")
    return CheckReport.ok(name)


def chi_of_product_factors(alpha: BivariantFn, beta: ConstructibleFunction) -> Tuple[int, int]:
    """chi(alpha . beta) and chi_f(alpha) * chi(beta), for beta on the target of alpha."""
    product = fn_mul(alpha.fn, pullback(alpha.over, beta))
    return chi_of_fn(product), chi_f(alpha) * chi_of_fn(beta)
