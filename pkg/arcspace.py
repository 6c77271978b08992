"""
Arc-space towers of smooth variety models and their motivic measure.

Level n of the arc tower of a smooth d-dimensional X has the strata of X
with classes cls(s) * L^(nd); every truncation step is a strict bundle with
fiber L^d. Levels start at 0, where the model is X itself.
"""

from typing import Tuple

from errors import ProchernError, TowerMismatchError, UnsupportedInputError
from geom import MorphismModel, VarietyModel
from prosys import CylinderSet, Tower, gamma_pro
from rings import GClass, LocClass


class ArcTower(Tower):
    base = 0
    kind = "arcs"

    def __init__(self, name: str, X: VarietyModel, d: int):
        super().__init__(name, X.table)
        self.X = X
        self.d = d

    def fiber(self) -> GClass:
        return self.table.tate() ** self.d

    def _build_base(self) -> VarietyModel:
        return self.X.renamed(self.level_name(0))

    def _build_step(self, n: int, lower: VarietyModel) -> Tuple[VarietyModel, MorphismModel]:
        F = self.fiber()
        upper = VarietyModel(self.level_name(n + 1), [(s.id, s.cls * F) for s in lower.strata], self.table)
        step = MorphismModel(
            f"{self.name}.t{n}", upper, lower,
            {sid: sid for sid in lower.ids}, {sid: F for sid in lower.ids}, strict=True,
        )
        return upper, step

    def periodicity(self):
        return (self.base, 1)


def arc_tower(X: VarietyModel, d: int, smooth: bool = True, name: str = "") -> ArcTower:
    """
    The arc tower of X, taken on the caller's word that X is smooth of
    dimension d. Singular bases are refused: their truncations are not
    locally trivial bundles and no measure is defined for them here.
    """
    if d <= 0:
        raise ProchernError(f"arc towers need a positive dimension, got {d}")
    if not smooth:
        raise UnsupportedInputError(f"'{X.name}' is declared singular; arc measures need a smooth base")
    return ArcTower(name or f"L({X.name})", X, d)


def motivic_measure(c: CylinderSet, w: int = 0) -> LocClass:
    """Gamma of the cylinder's level-n set over L^(nd), shifted by L^(-wd)."""
    if not isinstance(c.tower, ArcTower):
        raise TowerMismatchError(f"'{c.tower.name}' is not an arc tower")
    return gamma_pro(c.indicator(), w)


def is_stable_set(c: CylinderSet) -> bool:
    """Every cylinder of a smooth arc tower is stable: its truncations are bundles by construction."""
    if not isinstance(c.tower, ArcTower):
        raise TowerMismatchError(f"'{c.tower.name}' is not an arc tower")
    return True
