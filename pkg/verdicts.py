"""
Verdicts and check reports shared by the engine modules.

Some questions (equality in a non-surjective tower, stability without a
periodic description) can only be settled up to a horizon; verdicts say so.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional


class Verdict(str, Enum):
    """Answer to a yes/no question about a pro-object."""
    YES = "yes"
    NO = "no"
    YES_TO_HORIZON = "yes-to-horizon"
    NO_TO_HORIZON = "no-to-horizon"

    @property
    def definitive(self) -> bool:
        return self in (Verdict.YES, Verdict.NO)

    @property
    def positive(self) -> bool:
        return self in (Verdict.YES, Verdict.YES_TO_HORIZON)


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    level: Optional[int] = None  # witness level, or the horizon reached
    reason: str = ""

    def __bool__(self) -> bool:
        return self.verdict.positive

    def render(self) -> str:
        out = self.verdict.value
        if self.level is not None:
            out += f" (level {self.level})"
        return out


class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    PASS_TO_HORIZON = "pass-to-horizon"


@dataclass(frozen=True)
class CheckReport:
    name: str
    status: CheckStatus
    witness: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.status != CheckStatus.FAIL

    @classmethod
    def ok(cls, name: str, to_horizon: bool = False) -> "CheckReport":
        return cls(name, CheckStatus.PASS_TO_HORIZON if to_horizon else CheckStatus.PASS)

    @classmethod
    def failed(cls, name: str, witness: str) -> "CheckReport":
        return cls(name, CheckStatus.FAIL, witness)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"name": self.name, "status": self.status.value}
        if self.witness is not None:
            out["witness"] = self.witness
        return out
