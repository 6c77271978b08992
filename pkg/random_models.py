"""
Seeded random stratified models, morphisms and fiber squares.

Shared by the check runner and the test suite. Every generator takes a
`random.Random`, so a seed fixes everything it produces.
"""

import random
from typing import Dict, List, Optional, Tuple

from geom import ConstructibleFunction, FiberSquare, MorphismModel, VarietyModel, fiber_product
from prosys import ProductTower, ProMorphism, pullback_promorphism
from rings import AtomTable, GClass

MAX_STRATA = 8

# E has euler 0 so that chi-degenerate strata show up too
DEFAULT_ATOMS = (("E", 0), ("C", 2), ("M", -1))


def random_table(rng: random.Random, max_atoms: int = 4) -> AtomTable:
    """L plus up to max_atoms - 1 further atoms."""
    k = rng.randint(0, min(max_atoms - 1, len(DEFAULT_ATOMS)))
    return AtomTable(DEFAULT_ATOMS[:k])


def random_class(rng: random.Random, table: AtomTable, nonzero_chi: bool = False) -> GClass:
    """A small non-zero class: 1 plus a few monomials with coefficients in 1..2."""
    while True:
        cls = table.one() if rng.random() < 0.5 else table.zero()
        for _ in range(rng.randint(0, 2)):
            powers = {name: rng.randint(0, 2) for name in rng.sample(table.names, rng.randint(1, len(table.names)))}
            cls = cls + table.monomial(powers, rng.randint(1, 2))
        if cls.is_zero():
            continue
        if nonzero_chi and cls.euler() == 0:
            continue
        return cls


def random_model(rng: random.Random, table: AtomTable, name: str = "X",
                 max_strata: int = MAX_STRATA, nonzero_chi: bool = False) -> VarietyModel:
    n = rng.randint(1, max_strata)
    return VarietyModel(name, [(f"s{i}", random_class(rng, table, nonzero_chi)) for i in range(n)], table)


def random_function(rng: random.Random, model: VarietyModel, lo: int = -3, hi: int = 3) -> ConstructibleFunction:
    return ConstructibleFunction(model, {sid: rng.randint(lo, hi) for sid in model.ids})


def random_strict_morphism(rng: random.Random, target: VarietyModel, name: str = "f",
                           max_strata: int = MAX_STRATA, surjective: bool = True) -> MorphismModel:
    """A strict morphism onto `target`: each source stratum is a target stratum times a random fiber."""
    table = target.table
    budget = max(max_strata, len(target))
    counts = {t: (1 if surjective else rng.randint(0, 1)) for t in target.ids}
    for _ in range(rng.randint(0, budget - sum(counts.values()))):
        counts[rng.choice(target.ids)] += 1

    strata: List[Tuple[str, GClass]] = []
    stratum_map: Dict[str, str] = {}
    fiber: Dict[str, GClass] = {}
    for t in target.ids:
        for j in range(counts[t]):
            sid = f"{t}_{j}"
            F = random_class(rng, table)
            strata.append((sid, target.cls(t) * F))
            stratum_map[sid] = t
            fiber[sid] = F
    source = VarietyModel(f"{name}_src", strata, table)
    return MorphismModel(name, source, target, stratum_map, fiber, strict=True)


def random_morphism(rng: random.Random, target: VarietyModel, name: str = "f",
                    max_strata: int = MAX_STRATA) -> MorphismModel:
    """An arbitrary, usually non-strict, morphism into `target`."""
    source = random_model(rng, target.table, f"{name}_src", max_strata)
    stratum_map = {sid: rng.choice(target.ids) for sid in source.ids}
    fiber = {sid: random_class(rng, target.table) for sid in source.ids}
    return MorphismModel(name, source, target, stratum_map, fiber)


def random_square(rng: random.Random, table: Optional[AtomTable] = None, strict_f: bool = True,
                  max_strata: int = 4) -> FiberSquare:
    """The fiber product of a random f: Y -> X along a random strict pi: X' -> X."""
    table = table or random_table(rng)
    X = random_model(rng, table, "X", max_strata)
    if strict_f:
        f = random_strict_morphism(rng, X, "f", max_strata, surjective=rng.random() < 0.7)
    else:
        f = random_morphism(rng, X, "f", max_strata)
    pi = random_strict_morphism(rng, X, "pi", max_strata, surjective=rng.random() < 0.7)
    return fiber_product(f, pi)


def random_pullback_promorphism(rng: random.Random, table: Optional[AtomTable] = None,
                                max_strata: int = 3) -> ProMorphism:
    """A fiber-square promorphism: a product tower pulled back along a random strict map."""
    table = table or random_table(rng, max_atoms=2)
    X = random_model(rng, table, "X", max_strata)
    tower = ProductTower("T", X)
    f = random_strict_morphism(rng, tower.level(tower.base), "f", max_strata)
    return pullback_promorphism("Y", tower, f)


def corrupt_fiber(f: MorphismModel, sid: str, delta: int) -> Optional[MorphismModel]:
    """f with the fiber over `sid` shifted by delta, or None when that makes it zero."""
    fiber = dict(f.fiber)
    fiber[sid] = fiber[sid] + delta
    if fiber[sid].is_zero():
        return None
    return MorphismModel(f"{f.name}~", f.source, f.target, f.stratum_map, fiber)


def mutate_promorphism(rng: random.Random, phi: ProMorphism, depth: int) -> Tuple[ProMorphism, int, int]:
    """
    Corrupt one fiber datum of one level map. Returns the mutant, the level
    whose map changed and the delta; delta 0 leaves the promorphism intact.
    """
    base = phi.target.base
    while True:
        n = rng.randint(base, base + depth)
        f = phi.at(n)
        if not f.source.ids:
            continue
        sid = rng.choice(f.source.ids)
        delta = rng.choice([-2, -1, 0, 1, 2])
        mutant = corrupt_fiber(f, sid, delta)
        if mutant is None:
            continue
        return phi.with_override(n, mutant), n, delta
