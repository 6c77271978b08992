"""
Towers of variety models and the pro-level calculus on them.

A tower is an N-indexed projective system X_base <- X_base+1 <- ... whose
levels are realized lazily. Proconstructible functions and cylinder sets are
held as one representative at one level; everything that compares or
combines them lifts to a common level first.
"""

import operator
import random
import threading
from fractions import Fraction
from math import floor, lcm
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from bivariant import BivClassSystem, BivariantFn, chi_f
from errors import (
    EndpointMismatchError,
    LevelError,
    NonConstantWeightError,
    ParentMismatchError,
    ProchernError,
    SquareError,
    StratumError,
    StrictnessError,
    TowerMismatchError,
    UnstableFunctionError,
    UnsupportedInputError,
    ZeroMultiplierError,
    ZeroWeightError,
)
from geom import (
    ConstructibleFunction,
    ConstructibleSet,
    FiberSquare,
    Integrand,
    MorphismModel,
    VarietyModel,
    apply_integrand,
    chi_of_fn,
    compose,
    fiber_product,
    fn_add,
    fn_mul,
    fn_scale,
    gamma_of_fn,
    identity,
    pair_id,
    pullback,
    pushforward,
)
from rings import AtomTable, DenominatorSet, GClass, LocClass, gclass_sum, loc_eq, render_rat
from verdicts import CheckReport, Decision, Verdict

DEFAULT_HORIZON = 8
MAX_LEVEL_STRATA = 50_000

Periodicity = Optional[Tuple[int, int]]


class Tower:
    """
    Base class for towers. Subclasses provide the base model and how to build
    level n+1 with its structure map from level n.
    """

    base = 1
    kind = "tower"

    def __init__(self, name: str, table: AtomTable):
        self.name = name
        self.table = table
        self._levels: List[VarietyModel] = []
        self._steps: List[MorphismModel] = []
        self._composites: Dict[Tuple[int, int], MorphismModel] = {}
        self._lock = threading.RLock()

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name})"

    # Subclass hooks

    def _build_base(self) -> VarietyModel:
        raise NotImplementedError

    def _build_step(self, n: int, lower: VarietyModel) -> Tuple[VarietyModel, MorphismModel]:
        raise NotImplementedError

    def periodicity(self) -> Periodicity:
        """(start, period) such that step k and step k + period are alike for k >= start."""
        return None

    def surjective_from(self, n: int) -> bool:
        """True when every step from level n upward is stratum-surjective."""
        return True

    # Realization

    def level_name(self, n: int) -> str:
        return f"{self.name}_{n}"

    def _realize(self, n: int) -> None:
        if n < self.base:
            raise LevelError(f"tower '{self.name}' starts at level {self.base}, asked for {n}")
        with self._lock:
            if not self._levels:
                self._levels.append(self._build_base())
            while len(self._levels) <= n - self.base:
                k = self.base + len(self._levels) - 1
                upper, step = self._build_step(k, self._levels[-1])
                self._check_size(k + 1, len(upper))
                self._levels.append(upper)
                self._steps.append(step)

    def _check_size(self, n: int, size: int) -> None:
        if size > MAX_LEVEL_STRATA:
            raise LevelError(f"level {n} of '{self.name}' has {size} strata, more than {MAX_LEVEL_STRATA}")

    def level(self, n: int) -> VarietyModel:
        self._realize(n)
        return self._levels[n - self.base]

    def step(self, n: int) -> MorphismModel:
        """The structure map from level n+1 to level n."""
        self._realize(n + 1)
        return self._steps[n - self.base]

    def composite(self, lam: int, mu: int) -> MorphismModel:
        """The structure map from level mu down to level lam."""
        if mu < lam:
            raise LevelError(f"no map from level {mu} up to level {lam}")
        if mu == lam:
            return identity(self.level(lam))
        if mu == lam + 1:
            return self.step(lam)
        with self._lock:
            cached = self._composites.get((lam, mu))
            if cached is None:
                cached = compose(self.composite(lam, mu - 1), self.step(mu - 1),
                                 name=f"{self.name}[{lam}<-{mu}]")
                self._composites[(lam, mu)] = cached
            return cached


class ProductTower(Tower):
    """X^n with projections forgetting the last factor."""

    kind = "product"

    def __init__(self, name: str, X: VarietyModel):
        dotted = [sid for sid in X.ids if "." in sid]
        if dotted:
            raise StratumError(f"cannot repeat '{X.name}': stratum '{dotted[0]}' contains '.'")
        super().__init__(name, X.table)
        self.X = X
        self._components: List[Dict[str, Tuple[str, ...]]] = []

    def _build_base(self) -> VarietyModel:
        self._components.append({sid: (sid,) for sid in self.X.ids})
        return self.X.renamed(self.level_name(1))

    def _build_step(self, n: int, lower: VarietyModel) -> Tuple[VarietyModel, MorphismModel]:
        self._check_size(n + 1, len(lower) * len(self.X))
        comps = self._components[n - self.base]
        upper_comps: Dict[str, Tuple[str, ...]] = {}
        strata = []
        stratum_map: Dict[str, str] = {}
        fiber: Dict[str, GClass] = {}
        for x in lower.strata:
            for s in self.X.strata:
                sid = pair_id(x.id, s.id)
                strata.append((sid, x.cls * s.cls))
                stratum_map[sid] = x.id
                fiber[sid] = s.cls
                upper_comps[sid] = comps[x.id] + (s.id,)
        self._components.append(upper_comps)
        upper = VarietyModel(self.level_name(n + 1), strata, self.table)
        step = MorphismModel(f"{self.name}.p{n}", upper, lower, stratum_map, fiber, strict=True)
        return upper, step

    def components(self, n: int, sid: str) -> Tuple[str, ...]:
        self._realize(n)
        return self._components[n - self.base][self.level(n).require(sid)]

    def periodicity(self) -> Periodicity:
        return (self.base, 1)


class BundleTower(Tower):
    """
    X_1 = X_0 and X_{n+1} -> X_n a strict bundle with fiber F_n on every
    stratum. The fiber list repeats when periodic; otherwise its last entry
    repeats.
    """

    kind = "bundle"

    def __init__(self, name: str, X0: VarietyModel, fibers: Sequence[GClass], periodic: bool = False):
        super().__init__(name, X0.table)
        if not fibers:
            raise ProchernError(f"bundle tower '{name}' needs at least one fiber class")
        for F in fibers:
            if F.is_zero():
                raise ProchernError(f"bundle tower '{name}' has a zero fiber class")
        self.X0 = X0
        self.fibers = tuple(fibers)
        self.periodic = periodic

    def fiber_at(self, n: int) -> GClass:
        i = n - self.base
        if self.periodic:
            return self.fibers[i % len(self.fibers)]
        return self.fibers[min(i, len(self.fibers) - 1)]

    def _build_base(self) -> VarietyModel:
        return self.X0.renamed(self.level_name(1))

    def _build_step(self, n: int, lower: VarietyModel) -> Tuple[VarietyModel, MorphismModel]:
        F = self.fiber_at(n)
        upper = VarietyModel(self.level_name(n + 1), [(s.id, s.cls * F) for s in lower.strata], self.table)
        step = MorphismModel(
            f"{self.name}.p{n}", upper, lower,
            {sid: sid for sid in lower.ids}, {sid: F for sid in lower.ids}, strict=True,
        )
        return upper, step

    def periodicity(self) -> Periodicity:
        if self.periodic:
            return (self.base, len(self.fibers))
        return (self.base + len(self.fibers) - 1, 1)


POINT_PART = "o"
CELL_PART = "c"


class ProjectiveTower(Tower):
    """
    Step n has fiber P^(n + shift), stratified as a point (class 1) and its
    complement (class L + ... + L^k). shift = -1 starts with a point fiber.
    """

    kind = "projective"

    def __init__(self, name: str, X: VarietyModel, shift: int = 0):
        super().__init__(name, X.table)
        if self.base + shift < 0:
            raise ProchernError(f"projective tower '{name}': shift {shift} gives a negative dimension")
        self.X = X
        self.shift = shift

    def dimension_at(self, n: int) -> int:
        return n + self.shift

    def cell_class(self, k: int) -> GClass:
        L = self.table.tate()
        total = self.table.zero()
        for i in range(1, k + 1):
            total = total + L ** i
        return total

    def _build_base(self) -> VarietyModel:
        return self.X.renamed(self.level_name(1))

    def _build_step(self, n: int, lower: VarietyModel) -> Tuple[VarietyModel, MorphismModel]:
        k = self.dimension_at(n)
        parts = [(POINT_PART, self.table.one())]
        if k > 0:
            parts.append((CELL_PART, self.cell_class(k)))
        strata = []
        stratum_map: Dict[str, str] = {}
        fiber: Dict[str, GClass] = {}
        for x in lower.strata:
            for part, cls in parts:
                sid = pair_id(x.id, part)
                strata.append((sid, x.cls * cls))
                stratum_map[sid] = x.id
                fiber[sid] = cls
        upper = VarietyModel(self.level_name(n + 1), strata, self.table)
        step = MorphismModel(f"{self.name}.p{n}", upper, lower, stratum_map, fiber, strict=True)
        return upper, step


class StepsTower(Tower):
    """An explicit list of structure maps, continued by identities."""

    kind = "steps"

    def __init__(self, name: str, maps: Sequence[MorphismModel]):
        if not maps:
            raise ProchernError(f"steps tower '{name}' needs at least one morphism")
        super().__init__(name, maps[0].source.table)
        for lower, upper in zip(maps, maps[1:]):
            if upper.target != lower.source:
                raise EndpointMismatchError(
                    f"steps tower '{name}': '{upper.name}' does not land on the source of '{lower.name}'"
                )
        self.maps = tuple(maps)

    def level(self, n: int) -> VarietyModel:
        if n < self.base:
            raise LevelError(f"tower '{self.name}' starts at level {self.base}, asked for {n}")
        if n == self.base:
            return self.maps[0].target
        return self.maps[min(n - self.base, len(self.maps)) - 1].source

    def step(self, n: int) -> MorphismModel:
        if n < self.base:
            raise LevelError(f"tower '{self.name}' starts at level {self.base}, asked for {n}")
        i = n - self.base
        if i < len(self.maps):
            return self.maps[i]
        with self._lock:
            while len(self._steps) <= i - len(self.maps):
                self._steps.append(identity(self.maps[-1].source))
            return self._steps[i - len(self.maps)]

    def periodicity(self) -> Periodicity:
        return (self.base + len(self.maps), 1)

    def surjective_from(self, n: int) -> bool:
        return all(m.surjective() for m in self.maps[max(n - self.base, 0):])


class PullbackTower(Tower):
    """
    Base change of a tower along f: Y -> X_base: level n is Y x_{X_base} X_n,
    with the fiber-square projections f_n to X_n.
    """

    kind = "pullback"

    def __init__(self, name: str, under: Tower, f: MorphismModel):
        super().__init__(name, under.table)
        base = under.level(under.base)
        if f.target != base:
            # a map onto the variety the tower was built from lands on its renamed base level
            if f.target.strata != base.strata:
                raise EndpointMismatchError(
                    f"pullback tower '{name}': '{f.name}' does not land on the base of '{under.name}'"
                )
            f = MorphismModel(f.name, f.source, base, f.stratum_map, f.fiber, f.strict)
        self.base = under.base
        self.under = under
        self.f = f
        self._squares: Dict[int, FiberSquare] = {}

    def square(self, n: int) -> FiberSquare:
        with self._lock:
            sq = self._squares.get(n)
            if sq is None:
                sq = fiber_product(self.f, self.under.composite(self.base, n), name=self.level_name(n))
                self._squares[n] = sq
            return sq

    def projection(self, n: int) -> MorphismModel:
        """f_n: level n of this tower to level n of the underlying one."""
        self.level(n)
        return self.square(n).f_prime

    def _build_base(self) -> VarietyModel:
        return self.square(self.base).model

    def _build_step(self, n: int, lower: VarietyModel) -> Tuple[VarietyModel, MorphismModel]:
        upper = self.square(n + 1).model
        under_step = self.under.step(n)
        up_pi = self.square(n + 1).pi_prime
        up_f = self.square(n + 1).f_prime
        stratum_map: Dict[str, str] = {}
        fiber: Dict[str, GClass] = {}
        for sid in upper.ids:
            s, t = up_pi.stratum_map[sid], up_f.stratum_map[sid]
            stratum_map[sid] = pair_id(s, under_step.stratum_map[t])
            fiber[sid] = under_step.fiber[t]
        step = MorphismModel(f"{self.name}.p{n}", upper, lower, stratum_map, fiber, strict=True)
        return upper, step

    def periodicity(self) -> Periodicity:
        return self.under.periodicity()

    def surjective_from(self, n: int) -> bool:
        return self.under.surjective_from(n)


def product_weight_system(tower: ProductTower, weights: Mapping[str, int], name: str = "weights") -> BivClassSystem:
    """
    b_{lm}(x) = h(x_{l+1}) * ... * h(x_m) on a product tower, where x_k is the
    k-th factor of x and h defaults to 1 on unlisted strata.
    """
    if not isinstance(tower, ProductTower):
        raise UnsupportedInputError(f"weight systems need a product tower, '{tower.name}' is a {tower.kind} tower")
    for sid in weights:
        tower.X.require(sid)
    h = {sid: int(weights.get(sid, 1)) for sid in tower.X.ids}

    def rule(lam: int, mu: int) -> BivariantFn:
        over = tower.composite(lam, mu)
        values = {}
        for sid in over.source.ids:
            comps = tower.components(mu, sid)
            w = 1
            for k in range(lam + 1, mu + 1):
                w *= h[comps[k - 1]]
            values[sid] = w
        return BivariantFn(over, ConstructibleFunction(over.source, values))

    return BivClassSystem(name, tower, rule, nonvanishing=all(h.values()))


# Proconstructible functions


def _same_system(a, b) -> None:
    if a.tower is not b.tower:
        raise TowerMismatchError(f"'{a.tower.name}' and '{b.tower.name}' are different towers")
    if getattr(a, "system", None) is not getattr(b, "system", None):
        raise TowerMismatchError(f"operands on '{a.tower.name}' use different bonding systems")


class ProFunction:
    """
    The class of a constructible function at some level in the inductive
    limit. Lifting pulls back along the structure maps, or multiplies by the
    step classes of a bivariant class system when one is attached.
    """

    def __init__(self, tower: Tower, level: int, fn: ConstructibleFunction,
                 system: Optional[BivClassSystem] = None):
        if level < tower.base:
            raise LevelError(f"tower '{tower.name}' starts at level {tower.base}, got level {level}")
        if fn.parent != tower.level(level):
            raise ParentMismatchError(
                f"function on '{fn.parent.name}' is not on level {level} of '{tower.name}'"
            )
        if system is not None and system.tower is not tower:
            raise TowerMismatchError(f"system '{system.name}' belongs to another tower")
        self.tower = tower
        self.level = level
        self.fn = fn
        self.system = system

    @classmethod
    def sparse(cls, tower: Tower, level: int, values: Mapping[str, int],
               system: Optional[BivClassSystem] = None) -> "ProFunction":
        return cls(tower, level, ConstructibleFunction.from_sparse(tower.level(level), values), system)

    def __repr__(self) -> str:
        return f"ProFunction({self.tower.name}@{self.level}, {self.fn.as_dict()})"

    def lift_once(self) -> "ProFunction":
        step = self.tower.step(self.level)
        lifted = pullback(step, self.fn)
        if self.system is not None:
            lifted = fn_mul(self.system.step_class(self.level).fn, lifted)
        return ProFunction(self.tower, self.level + 1, lifted, self.system)

    def lift(self, m: int) -> "ProFunction":
        return lift(self, m)

    def is_zero(self) -> bool:
        return self.fn.is_zero()


def lift(pf: ProFunction, m: int) -> ProFunction:
    if m < pf.level:
        raise LevelError(f"cannot lift from level {pf.level} down to level {m}")
    out = pf
    while out.level < m:
        out = out.lift_once()
    return out


def procharacteristic(tower: Tower, system: Optional[BivClassSystem] = None) -> ProFunction:
    return ProFunction(tower, tower.base, ConstructibleFunction.constant(tower.level(tower.base), 1), system)


def pro_add(a: ProFunction, b: ProFunction) -> ProFunction:
    _same_system(a, b)
    m = max(a.level, b.level)
    return ProFunction(a.tower, m, fn_add(lift(a, m).fn, lift(b, m).fn), a.system)


def pro_scale(a: ProFunction, c: int) -> ProFunction:
    return ProFunction(a.tower, a.level, fn_scale(a.fn, c), a.system)


def pro_sub(a: ProFunction, b: ProFunction) -> ProFunction:
    return pro_add(a, pro_scale(b, -1))


def _lifts_injective(pf: ProFunction) -> bool:
    """Every further lift is injective: surjective steps and nowhere-zero bonding classes."""
    if not pf.tower.surjective_from(pf.level):
        return False
    if pf.system is None:
        return True
    return pf.system.nonvanishing


def pro_is_zero(pf: ProFunction, horizon: int = DEFAULT_HORIZON) -> Decision:
    """
    Zero at some level is zero in the limit. Non-zero is definitive only
    when every further lift is injective; otherwise lifts are tried up to
    the horizon.
    """
    current = pf
    while True:
        if current.is_zero():
            return Decision(Verdict.YES, current.level, "vanishes at this level")
        if _lifts_injective(current):
            return Decision(Verdict.NO, current.level, "non-zero and every further lift is injective")
        if current.level >= horizon:
            return Decision(Verdict.NO_TO_HORIZON, current.level, "non-zero up to the horizon")
        current = current.lift_once()


def pro_eq(a: ProFunction, b: ProFunction, horizon: int = DEFAULT_HORIZON) -> Decision:
    return pro_is_zero(pro_sub(a, b), horizon)


class ProPoint:
    """A compatible sequence of strata x_base, x_base+1, ... of a tower."""

    def __init__(self, tower: Tower, ids: Sequence[str]):
        if not ids:
            raise StratumError("a point needs at least its base stratum")
        self.tower = tower
        self.ids: Tuple[str, ...] = tuple(ids)
        for i, sid in enumerate(self.ids):
            n = tower.base + i
            tower.level(n).require(sid)
            if i and tower.step(n - 1).stratum_map[sid] != self.ids[i - 1]:
                raise StratumError(
                    f"point is incompatible: '{sid}' at level {n} does not map to '{self.ids[i - 1]}'"
                )

    @property
    def top(self) -> int:
        return self.tower.base + len(self.ids) - 1

    def extend(self, m: int) -> "ProPoint":
        """Extend to level m by picking the first preimage stratum at each step."""
        ids = list(self.ids)
        n = self.top
        while n < m:
            preimage = self.tower.step(n).preimage(ids[-1])
            if not preimage:
                raise StratumError(f"no stratum of level {n + 1} lies over '{ids[-1]}'")
            ids.append(preimage[0])
            n += 1
        return ProPoint(self.tower, ids)

    def at(self, n: int) -> str:
        if n < self.tower.base:
            raise LevelError(f"tower '{self.tower.name}' starts at level {self.tower.base}")
        if n > self.top:
            return self.extend(n).ids[-1]
        return self.ids[n - self.tower.base]


def eval_at(pf: ProFunction, x: ProPoint) -> int:
    """Value of the limit class at a point of the limit, read at the representative's level."""
    if x.tower is not pf.tower:
        raise TowerMismatchError("point and function live on different towers")
    if pf.system is not None:
        raise UnsupportedInputError("pointwise values are defined for pullback limits only")
    return pf.fn(x.at(pf.level))


# Pro-Euler characteristics


def step_weight(tower: Tower, k: int, system: Optional[BivClassSystem] = None) -> int:
    """chi_f of the class equipping step k (the unit class without a system)."""
    step = tower.step(k)
    if not step.chi_compatible():
        raise StrictnessError(f"step {k} of '{tower.name}' does not multiply Euler characteristics")
    cls = system.step_class(k) if system is not None else BivariantFn.unit(step)
    return chi_f(cls)


def chi_denominator(tower: Tower, n: int, system: Optional[BivClassSystem] = None) -> Tuple[int, List[int]]:
    weights = []
    for k in range(tower.base, n):
        w = step_weight(tower, k, system)
        if w == 0:
            raise ZeroWeightError(k)
        weights.append(w)
    den = 1
    for w in weights:
        den *= w
    return den, weights


def chi_pro(pf: ProFunction, w: int = 0) -> Fraction:
    """chi(alpha_n) over the product of step weights below level n, shifted by chi^-w."""
    den, weights = chi_denominator(pf.tower, pf.level, pf.system)
    value = Fraction(chi_of_fn(pf.fn), den)
    if w:
        chi = _constant_weight(pf)
        value /= Fraction(chi) ** w
    return value


def _constant_weight(pf: ProFunction) -> int:
    top = max(pf.level, pf.tower.base + 1)
    weights = [(k, step_weight(pf.tower, k, pf.system)) for k in range(pf.tower.base, top)]
    k0, w0 = weights[0]
    for k, wk in weights[1:]:
        if wk != w0:
            raise NonConstantWeightError(f"step {k0}", w0, f"step {k}", wk)
    if w0 == 0:
        raise ZeroWeightError(k0)
    return w0


def _constant_fiber_class(tower: Tower, n: int) -> GClass:
    top = max(n, tower.base + 1)
    classes = [(k, step_fiber_class(tower, k)) for k in range(tower.base, top)]
    k0, W = classes[0]
    for k, F in classes[1:]:
        if F != W:
            raise NonConstantWeightError(f"step {k0}", W.render(), f"step {k}", F.render())
    return W


def step_fiber_class(tower: Tower, k: int) -> GClass:
    """The single fiber class of a strict step."""
    step = tower.step(k)
    if not step.strict:
        raise StrictnessError(f"step {k} of '{tower.name}' is not strict")
    classes = [(t, step.fiber_class_over(t)) for t in step.target.ids]
    for t, F in classes[1:]:
        if F != classes[0][1]:
            raise NonConstantWeightError(classes[0][0], classes[0][1].render(), t, F.render())
    if not classes:
        raise ProchernError(f"step {k} of '{tower.name}' has an empty target")
    return classes[0][1]


def gamma_denominator(tower: Tower, n: int) -> Tuple[DenominatorSet, Tuple[int, ...], List[GClass]]:
    fibers = [step_fiber_class(tower, k) for k in range(tower.base, n)]
    fset = DenominatorSet.generated_by(tower.table, fibers)
    return fset, fset.exponents_of_factors(fibers), fibers


def gamma_pro(pf: ProFunction, w: int = 0) -> LocClass:
    """Gamma(alpha_n) over the product of the step fiber classes below level n, shifted by [W]^-w."""
    if pf.system is not None:
        raise UnsupportedInputError("Grothendieck-class limits are defined for pullback bonds only")
    tower = pf.tower
    factors = [step_fiber_class(tower, k) for k in range(tower.base, pf.level)]
    num = gamma_of_fn(pf.fn)
    generators = list(factors)
    if w:
        W = _constant_fiber_class(tower, pf.level)
        generators.append(W)
        if w > 0:
            factors.extend([W] * w)
        else:
            num = num * W ** (-w)
    fset = DenominatorSet.generated_by(tower.table, generators)
    return LocClass(num, fset.exponents_of_factors(factors), fset).reduce()


# Stability


class StepSystem:
    """
    A projective system given by its single steps p_{n(n+1)}, n >= base.
    Longer composites multiply out.
    """

    def __init__(self, rule: Callable[[int], object], base: int, periodicity: Periodicity,
                 one: object = 1, label: str = ""):
        self.rule = rule
        self.base = base
        self.periodicity = periodicity
        self.one = one
        self.label = label

    @classmethod
    def listed(cls, values: Sequence, base: int = 1, periodic: bool = False, one: object = 1) -> "StepSystem":
        values = tuple(values)
        if not values:
            raise ProchernError("a step system needs at least one value")
        for v in values:
            if (isinstance(v, int) and v == 0) or (isinstance(v, GClass) and v.is_zero()):
                raise ZeroMultiplierError("step systems need non-zero steps")

        def rule(n: int):
            i = n - base
            return values[i % len(values)] if periodic else values[min(i, len(values) - 1)]

        period = (base, len(values)) if periodic else (base + len(values) - 1, 1)
        return cls(rule, base, period, one)

    @classmethod
    def chi_weights_of(cls, tower: Tower, system: Optional[BivClassSystem] = None) -> "StepSystem":
        return cls(lambda n: step_weight(tower, n, system), tower.base, tower.periodicity(), label="own")

    @classmethod
    def fiber_classes_of(cls, tower: Tower) -> "StepSystem":
        return cls(lambda n: step_fiber_class(tower, n), tower.base, tower.periodicity(),
                   one=tower.table.one(), label="own")

    def at(self, n: int):
        if n < self.base:
            raise LevelError(f"step system starts at {self.base}, asked for step {n}")
        value = self.rule(n)
        if (isinstance(value, int) and value == 0) or (isinstance(value, GClass) and value.is_zero()):
            raise ZeroMultiplierError(f"step {n} of the projective system is zero")
        return value

    def between(self, n: int, m: int):
        """p_{nm} as the product of single steps n, ..., m-1."""
        out = self.one
        for k in range(n, m):
            out = out * self.at(k)
        return out


def _stability_span(pf: ProFunction, steps: StepSystem, horizon: int) -> Tuple[int, bool]:
    """Top level to check, and whether passing it is definitive."""
    tower_period = pf.tower.periodicity()
    if tower_period is not None and steps.periodicity is not None:
        start = max(pf.level, tower_period[0], steps.periodicity[0])
        return start + lcm(tower_period[1], steps.periodicity[1]), True
    return max(horizon, pf.level), False


def _check_stable(pf: ProFunction, steps: StepSystem, horizon: int, measure) -> Decision:
    if pf.is_zero():
        return Decision(Verdict.YES, pf.level, "zero function")
    top, definitive = _stability_span(pf, steps, horizon)
    current = pf
    value = measure(current.fn)
    while current.level < top:
        factor = steps.at(current.level)
        current = current.lift_once()
        lifted = measure(current.fn)
        if lifted != value * factor:
            return Decision(Verdict.NO, current.level, "measure does not scale by the step")
        value = lifted
    if definitive:
        return Decision(Verdict.YES, top, "one full period checked")
    return Decision(Verdict.YES_TO_HORIZON, top, "checked up to the horizon")


def is_chi_stable(pf: ProFunction, p: StepSystem, horizon: int = DEFAULT_HORIZON) -> Decision:
    return _check_stable(pf, p, horizon, chi_of_fn)


def is_gamma_stable(pf: ProFunction, F: StepSystem, horizon: int = DEFAULT_HORIZON) -> Decision:
    return _check_stable(pf, F, horizon, gamma_of_fn)


def _require_stable(decision: Decision, what: str) -> None:
    if not decision:
        raise UnstableFunctionError(f"function is not {what}-stable (fails at level {decision.level})",
                                    decision.level)


def stable_chi_pro(pf: ProFunction, p: StepSystem, horizon: int = DEFAULT_HORIZON) -> Fraction:
    _require_stable(is_chi_stable(pf, p, horizon), "chi")
    return Fraction(chi_of_fn(pf.fn), p.between(pf.tower.base, pf.level))


def stable_gamma_pro(pf: ProFunction, F: StepSystem, horizon: int = DEFAULT_HORIZON) -> LocClass:
    _require_stable(is_gamma_stable(pf, F, horizon), "Gamma")
    fibers = [F.at(k) for k in range(pf.tower.base, pf.level)]
    fset = DenominatorSet.generated_by(pf.tower.table, fibers)
    return LocClass(gamma_of_fn(pf.fn), fset.exponents_of_factors(fibers), fset).reduce()


# Cylinder sets


class CylinderSet:
    """The preimage in the limit of a union of strata at some level."""

    def __init__(self, tower: Tower, level: int, members: Union[ConstructibleSet, Iterable[str]]):
        model = tower.level(level)
        if isinstance(members, ConstructibleSet):
            if members.parent != model:
                raise ParentMismatchError(f"set on '{members.parent.name}' is not on level {level}")
            members = members.members
        self.tower = tower
        self.level = level
        self.set = ConstructibleSet(model, members)

    @classmethod
    def whole(cls, tower: Tower, level: Optional[int] = None) -> "CylinderSet":
        level = tower.base if level is None else level
        return cls(tower, level, tower.level(level).ids)

    def __repr__(self) -> str:
        return f"CylinderSet({self.tower.name}@{self.level}, {self.set.ordered()})"

    def indicator(self) -> ProFunction:
        return ProFunction(self.tower, self.level, self.set.indicator())

    def is_empty(self) -> bool:
        return self.set.is_empty()


def lift_cyl(c: CylinderSet, m: int) -> CylinderSet:
    if m < c.level:
        raise LevelError(f"cannot lift a cylinder from level {c.level} down to level {m}")
    pi = c.tower.composite(c.level, m)
    return CylinderSet(c.tower, m, [sid for sid in pi.source.ids if pi.stratum_map[sid] in c.set.members])


def _common(a: CylinderSet, b: CylinderSet) -> Tuple[CylinderSet, CylinderSet]:
    if a.tower is not b.tower:
        raise TowerMismatchError(f"cylinders on '{a.tower.name}' and '{b.tower.name}'")
    m = max(a.level, b.level)
    return lift_cyl(a, m), lift_cyl(b, m)


def cyl_eq(a: CylinderSet, b: CylinderSet) -> bool:
    a, b = _common(a, b)
    return a.set == b.set


def cyl_intersect(a: CylinderSet, b: CylinderSet) -> CylinderSet:
    a, b = _common(a, b)
    return CylinderSet(a.tower, a.level, a.set.intersection(b.set))


def cyl_union(a: CylinderSet, b: CylinderSet) -> CylinderSet:
    a, b = _common(a, b)
    return CylinderSet(a.tower, a.level, a.set.union(b.set))


def cyl_difference(a: CylinderSet, b: CylinderSet) -> CylinderSet:
    a, b = _common(a, b)
    return CylinderSet(a.tower, a.level, a.set.difference(b.set))


def cyl_symmdiff(a: CylinderSet, b: CylinderSet) -> CylinderSet:
    a, b = _common(a, b)
    return CylinderSet(a.tower, a.level, a.set.symmetric_difference(b.set))


def cyl_complement(a: CylinderSet) -> CylinderSet:
    return CylinderSet(a.tower, a.level, a.set.complement())


def level_sets(pf: ProFunction) -> Dict[int, CylinderSet]:
    """alpha^-1(k) for the non-zero realized values k, as cylinders at the representative's level."""
    return {k: CylinderSet(pf.tower, pf.level, W) for k, W in pf.fn.level_sets().items()}


def integrate_chi_pro(pf: ProFunction, p: StepSystem, f: Integrand, horizon: int = DEFAULT_HORIZON) -> Fraction:
    total = Fraction(0)
    for k, cyl in level_sets(pf).items():
        value = Fraction(apply_integrand(f, k))
        total += value * stable_chi_pro(cyl.indicator(), p, horizon)
    return total


def integrate_gamma_pro(pf: ProFunction, F: StepSystem, f: Integrand, horizon: int = DEFAULT_HORIZON) -> LocClass:
    total = LocClass.of(pf.tower.table.zero())
    for k, cyl in level_sets(pf).items():
        value = apply_integrand(f, k)
        if not isinstance(value, LocClass):
            value = LocClass.of(pf.tower.table.zero() + value)
        total = total + value * stable_gamma_pro(cyl.indicator(), F, horizon)
    return total


# Formal series


class SeriesProFunction:
    """A formal sum of proconstructible functions, listed or produced by a rule."""

    def __init__(self, tower: Tower, terms: Sequence[ProFunction] = (),
                 rule: Optional[Callable[[int], ProFunction]] = None):
        for t in terms:
            if t.tower is not tower:
                raise TowerMismatchError(f"series term on '{t.tower.name}', series on '{tower.name}'")
        self.tower = tower
        self.terms = tuple(terms)
        self.rule = rule

    def term(self, i: int) -> Optional[ProFunction]:
        if self.rule is not None:
            return self.rule(i)
        return self.terms[i] if i < len(self.terms) else None

    def partial_sum(self, N: int) -> ProFunction:
        total = ProFunction(self.tower, self.tower.base, ConstructibleFunction.zero(self.tower.level(self.tower.base)))
        for i in range(N):
            t = self.term(i)
            if t is not None:
                total = pro_add(total, t)
        return total


def chi_pro_partial_sums(s: SeriesProFunction, N: int) -> List[Fraction]:
    sums: List[Fraction] = []
    total = Fraction(0)
    for i in range(N):
        t = s.term(i)
        if t is not None:
            total += chi_pro(t)
        sums.append(total)
    return sums


def greedy_series(tower: Tower, x: Fraction) -> SeriesProFunction:
    """
    Term i lives at level base + i and is d * 1_s, where s is the first
    stratum with chi = 1 and d is the largest integer with d / D <= the
    remainder, D the level's chi denominator.
    """
    x = Fraction(x)
    cache: List[ProFunction] = []
    remainders = [x]

    def rule(i: int) -> ProFunction:
        while len(cache) <= i:
            n = tower.base + len(cache)
            model = tower.level(n)
            unit = next((sid for sid in model.ids if model.chi(sid) == 1), None)
            if unit is None:
                raise UnsupportedInputError(f"level {n} of '{tower.name}' has no stratum with Euler characteristic 1")
            den, _ = chi_denominator(tower, n)
            if den < 0:
                raise UnsupportedInputError(f"level {n} of '{tower.name}' has a negative denominator")
            r = remainders[-1]
            d = floor(r * den)
            cache.append(ProFunction.sparse(tower, n, {unit: d}))
            remainders.append(r - Fraction(d, den))
        return cache[i]

    return SeriesProFunction(tower, rule=rule)


# Promorphisms


class ProMorphism:
    """
    Level maps f_n: Y_xi(n) -> X_n between towers. With the fiber-square flag
    each square over the structure maps must be a fiber product.
    """

    def __init__(self, name: str, source: Tower, target: Tower, maps: Callable[[int], MorphismModel],
                 xi: Callable[[int], int] = lambda n: n, fiber_square: bool = True):
        self.name = name
        self.source = source
        self.target = target
        self._maps = maps
        self.xi = xi
        self.fiber_square = fiber_square
        self.overrides: Dict[int, MorphismModel] = {}

    def at(self, n: int) -> MorphismModel:
        if n in self.overrides:
            return self.overrides[n]
        return self._maps(n)

    def with_override(self, n: int, f: MorphismModel) -> "ProMorphism":
        out = ProMorphism(self.name, self.source, self.target, self._maps, self.xi, self.fiber_square)
        out.overrides = dict(self.overrides)
        out.overrides[n] = f
        return out

    def square(self, n: int) -> FiberSquare:
        """The square from level n+1 down to level n."""
        return FiberSquare(
            f=self.at(n),
            pi=self.target.step(n),
            model=self.source.level(self.xi(n + 1)),
            pi_prime=self.source.composite(self.xi(n), self.xi(n + 1)),
            f_prime=self.at(n + 1),
        )

    def problems(self, n: int) -> List[str]:
        sq = self.square(n)
        if self.fiber_square:
            return sq.problems()
        out = []
        for sid in sq.model.ids:
            down = sq.f.stratum_map[sq.pi_prime.stratum_map[sid]]
            across = sq.pi.stratum_map[sq.f_prime.stratum_map[sid]]
            if down != across:
                out.append(f"{sid}: does not commute")
        return out

    def validate(self, n: int) -> None:
        problems = self.problems(n)
        if problems:
            raise SquareError(f"{self.name} at level {n + 1}: {problems[0]}")


def identity_promorphism(tower: Tower) -> ProMorphism:
    return ProMorphism(f"id_{tower.name}", tower, tower, lambda n: identity(tower.level(n)))


def pullback_promorphism(name: str, tower: Tower, f: MorphismModel) -> ProMorphism:
    """The base-change tower of `tower` along f with its fiber-square projections."""
    source = PullbackTower(name, tower, f)
    return ProMorphism(name, source, tower, source.projection)


def pro_pushforward(phi: ProMorphism, pf: ProFunction) -> ProFunction:
    if pf.tower is not phi.source:
        raise TowerMismatchError(f"function on '{pf.tower.name}', promorphism from '{phi.source.name}'")
    if pf.system is not None:
        raise UnsupportedInputError("pushforward of bivariant-bonded limits is not defined")
    n = phi.target.base
    while phi.xi(n) < pf.level:
        n += 1
    phi.validate(n)
    lifted = lift(pf, phi.xi(n))
    return ProFunction(phi.target, n, pushforward(phi.at(n), lifted.fn))


def _first_mismatch(lhs: ConstructibleFunction, rhs: ConstructibleFunction) -> Optional[str]:
    for (sid, a), (_, b) in zip(lhs.items(), rhs.items()):
        if a != b:
            return sid
    return None


def _random_function(model: VarietyModel, rng: random.Random) -> ConstructibleFunction:
    return ConstructibleFunction(model, {sid: rng.randint(-3, 3) for sid in model.ids})


def attempt(fn, *args) -> Tuple[bool, Any]:
    try:
        return True, fn(*args)
    except ProchernError as e:
        return False, e


def disagreement(label: str, lhs: Tuple[bool, Any], rhs: Tuple[bool, Any],
                 render: Callable[[Any], str] = str,
                 equal: Callable[[Any, Any], bool] = operator.eq) -> Optional[str]:
    """
    How two attempted values differ, or None. A value that exists on one
    side only is a difference; raising on both sides is not.
    """
    (lok, lhs_value), (rok, rhs_value) = lhs, rhs
    if lok and rok:
        return None if equal(lhs_value, rhs_value) else f"{label} {render(lhs_value)} != {render(rhs_value)}"
    if lok or rok:
        err = rhs_value if lok else lhs_value
        return f"{label} is defined on one side only ({err})"
    return None


def gamma_pushed(tower: Tower, n: int, f: MorphismModel, alpha: ConstructibleFunction) -> LocClass:
    """
    Pro-class on level n of the tower of the class-weighted pushforward of
    alpha along f: target stratum t carries sum over s -> t of alpha(s) [F_s].
    """
    if not f.strict:
        raise StrictnessError(f"'{f.name}' is not strict")
    carried = {t: tower.table.zero() for t in f.target.ids}
    for sid, a in alpha.items():
        if a:
            carried[f.stratum_map[sid]] = carried[f.stratum_map[sid]] + f.fiber[sid] * a
    num = gclass_sum((f.target.cls(t) * c for t, c in carried.items()), tower.table)
    fset, exps, _ = gamma_denominator(tower, n)
    return LocClass(num, exps, fset).reduce()


def check_naturality(phi: ProMorphism, depth: int, seed: int = 0, trials: int = 3,
                     name: str = "naturality") -> CheckReport:
    """
    Per level up to base + depth: the square is a fiber product, pushforward
    commutes with lifting on random functions, and the pro-Euler
    characteristic and pro-class are preserved by the pushforward.
    """
    rng = random.Random(seed)
    base = phi.target.base
    for n in range(base, base + depth):
        problems = phi.problems(n)
        if problems:
            return CheckReport.failed(name, f"level {n + 1}: {problems[0]}")
        sq = phi.square(n)
        for _ in range(trials):
            alpha = _random_function(phi.source.level(phi.xi(n)), rng)
            push_then_lift = pullback(sq.pi, pushforward(sq.f, alpha))
            lift_then_push = pushforward(sq.f_prime, pullback(sq.pi_prime, alpha))
            where = _first_mismatch(push_then_lift, lift_then_push)
            if where is not None:
                return CheckReport.failed(name, f"level {n + 1}: pushforward and lift differ at {where}")

            source_pf = ProFunction(phi.source, phi.xi(n), alpha)
            target_pf = ProFunction(phi.target, n, pushforward(sq.f, alpha))
            differs = disagreement("chi_pro", attempt(chi_pro, source_pf), attempt(chi_pro, target_pf), render_rat)
            if differs:
                return CheckReport.failed(name, f"level {n}: {differs}")

            if sq.f.strict:
                differs = disagreement(
                    "gamma_pro", attempt(gamma_pro, source_pf), attempt(gamma_pushed, phi.target, n, sq.f, alpha),
                    lambda v: v.render(), loc_eq,
                )
                if differs:
                    return CheckReport.failed(name, f"level {n}: {differs}")
    return CheckReport.ok(name)
