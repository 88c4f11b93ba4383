"""Verification records shared by the kinematics module and the CLI."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass
class VerificationReport:
    identity: str
    lhs: list
    rhs: list
    abs_err: float
    rel_err: float
    tolerance: float
    abs_floor: float
    stderr: float = 0.0
    samples: int = 0
    seed: int | None = None
    n: int | None = None
    j: int | None = None
    notes: str = ""
    advisory: bool = False  # a failing advisory report is flagged but not fatal
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.rel_err <= self.tolerance or self.abs_err <= self.abs_floor)

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.identity}: lhs={_fmt(self.lhs)} rhs={_fmt(self.rhs)} "
                f"abs_err={self.abs_err:.3e} rel_err={self.rel_err:.3e}")


def _fmt(v):
    return "[" + ", ".join(f"{x:.6g}" for x in v) + "]"


def make_report(identity: str, lhs, rhs, tolerance: float, abs_floor: float = 0.0,
                **meta) -> VerificationReport:
    """Compare lhs and rhs (scalars or vectors) with Euclidean norms."""
    a = np.atleast_1d(np.asarray(lhs, dtype=float))
    b = np.atleast_1d(np.asarray(rhs, dtype=float))
    abs_err = float(np.linalg.norm(a - b))
    scale = float(np.linalg.norm(b))
    rel_err = abs_err / scale if scale > 0 else (0.0 if abs_err == 0 else math.inf)
    return VerificationReport(identity, a.tolist(), b.tolist(), abs_err, rel_err, tolerance,
                              abs_floor, **meta)
