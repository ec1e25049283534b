"""Rows comparing an estimate with an oracle value."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

FIELDS = ("name", "estimate", "oracle", "method", "tol", "pass")


@dataclass
class EstimandReport:
    name: str
    estimate: float
    oracle: float
    method: str
    tol: float
    passed: bool

    def row(self) -> dict:
        return {"name": self.name, "estimate": repr(float(self.estimate)),
                "oracle": repr(float(self.oracle)), "method": self.method,
                "tol": repr(float(self.tol)), "pass": "true" if self.passed else "false"}

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return (f"{mark} {self.name}: estimate={self.estimate:.6g} oracle={self.oracle:.6g} "
                f"tol={self.tol:.3g} ({self.method})")


def within(name, estimate, oracle, tol, method) -> EstimandReport:
    """Pass when ``|estimate - oracle| <= tol``."""
    ok = bool(math.isfinite(estimate) and abs(estimate - oracle) <= tol)
    return EstimandReport(name, float(estimate), float(oracle), method, float(tol), ok)


def check(name, estimate, oracle, ok, method, tol=float("nan")) -> EstimandReport:
    """Report with an externally decided pass flag (one-sided or exact checks)."""
    return EstimandReport(name, float(estimate), float(oracle), method, float(tol), bool(ok))


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()
