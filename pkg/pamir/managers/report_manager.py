from dataclasses import asdict, dataclass, field
from threading import Lock
from typing import Dict, Generic, List, Tuple, TypeVar

R = TypeVar("R")


@dataclass
class ReportProgress:
    status: str = "queued"
    total: int = 0
    done: int = 0
    failed: int = 0
    errors: List[str] = field(default_factory=list)


class ReportAccumulator(Generic[R]):
    """Collects replication records from concurrent workers.

    Records are keyed by (cell, replication) and always read back in key order,
    so the emitted report does not depend on completion order.
    """

    def __init__(self, total: int = 0):
        self._records: Dict[Tuple[str, int, int], R] = {}
        self._progress = ReportProgress(total=total)
        self._lock = Lock()

    def start(self, total: int) -> None:
        with self._lock:
            self._progress.status = "running"
            self._progress.total = total

    def add(self, cell: str, rep: int, record: R, ok: bool = True, error: str = None, sub: int = 0) -> None:
        with self._lock:
            self._records[(cell, rep, sub)] = record
            if sub == 0:
                self._progress.done += 1
                if not ok:
                    self._progress.failed += 1
                    if error:
                        self._progress.errors.append(f"{cell} rep {rep}: {error}")

    def finish(self) -> None:
        with self._lock:
            self._progress.status = "done"

    def records(self) -> List[R]:
        with self._lock:
            return [self._records[key] for key in sorted(self._records)]

    def for_cell(self, cell: str) -> List[R]:
        with self._lock:
            return [self._records[key] for key in sorted(self._records) if key[0] == cell]

    def progress(self) -> Dict:
        with self._lock:
            return asdict(self._progress)

    @property
    def success_fraction(self) -> float:
        with self._lock:
            if self._progress.done == 0:
                return 0.0
            return 1.0 - self._progress.failed / self._progress.done
