"""Pass / inconclusive / fail records shared by the verifier suites."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

from src.utils.heston_csv import write_csv

STATUS_PASS = "pass"
STATUS_INCONCLUSIVE = "inconclusive"
STATUS_FAIL = "fail"

VERDICT_CSV_HEADER = ("suite", "check", "family", "params", "status", "worst_margin", "worst_location", "empirical_constant")


def status_severity(status: str) -> int:
    if status == STATUS_PASS:
        return 0
    if status == STATUS_INCONCLUSIVE:
        return 1
    return 2


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    status: str
    worst_margin: float
    location: str = ""
    family: str = ""
    params: str = ""
    constant: Optional[float] = None
    node: Optional[Tuple[int, ...]] = None

    @property
    def passed(self) -> bool:
        return self.status == STATUS_PASS


@dataclass
class VerdictReport:
    suite: str
    outcomes: List[CheckOutcome] = field(default_factory=list)
    domain: str = ""

    def add(self, outcome: CheckOutcome) -> CheckOutcome:
        self.outcomes.append(outcome)
        return outcome

    def extend(self, other: "VerdictReport") -> "VerdictReport":
        self.outcomes.extend(other.outcomes)
        return self

    @property
    def status(self) -> str:
        if not self.outcomes:
            return STATUS_PASS
        return max((o.status for o in self.outcomes), key=status_severity)

    @property
    def ok(self) -> bool:
        """Inconclusive outcomes count as passing."""
        return self.status != STATUS_FAIL

    def failures(self) -> List[CheckOutcome]:
        return [o for o in self.outcomes if o.status == STATUS_FAIL]

    def inconclusive(self) -> List[CheckOutcome]:
        return [o for o in self.outcomes if o.status == STATUS_INCONCLUSIVE]

    def worst(self) -> Optional[CheckOutcome]:
        if not self.outcomes:
            return None
        return min(self.outcomes, key=lambda o: (-status_severity(o.status), o.worst_margin))

    def summary_line(self) -> str:
        counts = {s: sum(1 for o in self.outcomes if o.status == s) for s in (STATUS_PASS, STATUS_INCONCLUSIVE, STATUS_FAIL)}
        line = f"{self.suite}: {self.status.upper()} ({counts[STATUS_PASS]} pass, {counts[STATUS_INCONCLUSIVE]} inconclusive, {counts[STATUS_FAIL]} fail)"
        worst = self.worst()
        if worst is not None and worst.status != STATUS_PASS:
            line += f"; worst {worst.name} margin={worst.worst_margin!r} at {worst.location}"
        return line

    def csv_rows(self) -> Iterable[tuple]:
        for o in self.outcomes:
            yield (self.suite, o.name, o.family, o.params, o.status, float(o.worst_margin), o.location, "" if o.constant is None else float(o.constant))

    def write(self, path: Path) -> Path:
        return write_csv(path, VERDICT_CSV_HEADER, self.csv_rows())


def write_reports(path: Path, reports: Iterable[VerdictReport]) -> Path:
    rows = [row for report in reports for row in report.csv_rows()]
    return write_csv(path, VERDICT_CSV_HEADER, rows)
