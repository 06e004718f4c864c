"""Simulated-teacher test-then-train protocol and evaluation metrics.

Open-ended metrics: QCI (question/correction iterations), TLC (learned
categories), AIC (stored instances per category), GCA (accuracy over all
asks) and APA (mean per-phase accuracy). Offline metrics: AIA (instance
accuracy) and ACA (mean per-class accuracy).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .config import Config
from .embedding import ObjectDescriptor
from .errors import DataError
from .learner import CategoryStore
from .pointcloud_io import make_rng

UNKNOWN = "<unknown>"
TEACH, ASK, CORRECT = "teach", "ask", "correct"
LACK_OF_DATA, BREAKPOINT = "lack_of_data", "breakpoint_reached"


@dataclass(frozen=True)
class Instance:
    key: str
    descriptor: ObjectDescriptor


@dataclass
class LabeledDataset:
    """Ordered label -> instances mapping."""

    categories: dict[str, list[Instance]]

    def __post_init__(self):
        for label, items in self.categories.items():
            if not items:
                raise DataError(f"category {label!r} has no instances")

    @property
    def labels(self) -> list[str]:
        return list(self.categories)

    def __len__(self) -> int:
        return sum(len(v) for v in self.categories.values())


class Learner(Protocol):
    def teach(self, label: str, instance: Instance) -> None: ...

    def predict(self, instance: Instance) -> str | None: ...


class StoreLearner:
    """Adapts a :class:`CategoryStore` to the protocol's learner interface."""

    def __init__(self, store: CategoryStore | None = None, distance: str = "chi2"):
        self.store = store if store is not None else CategoryStore(distance=distance)

    def teach(self, label: str, instance: Instance) -> None:
        self.store.teach(label, instance.descriptor)

    def predict(self, instance: Instance) -> str | None:
        return self.store.classify(instance.descriptor).label


# -------------------------------------------------------------------- the log

@dataclass(frozen=True)
class LogEntry:
    index: int
    action: str
    true_label: str
    predicted: str | None
    correct: bool | None
    known: int
    instance: str

    def to_line(self) -> str:
        flag = "-" if self.correct is None else ("1" if self.correct else "0")
        pred = UNKNOWN if self.predicted is None else self.predicted
        return f"{self.index}\t{self.action}\t{self.true_label}\t{pred}\t{flag}\t{self.known}\t{self.instance}\n"

    @classmethod
    def from_line(cls, line: str) -> "LogEntry":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 7:
            raise DataError(f"malformed log line: {line!r}")
        idx, action, true, pred, flag, known, inst = parts
        if action not in (TEACH, ASK, CORRECT) or flag not in ("-", "0", "1"):
            raise DataError(f"malformed log line: {line!r}")
        try:
            return cls(int(idx), action, true, None if pred == UNKNOWN else pred,
                       None if flag == "-" else flag == "1", int(known), inst)
        except ValueError:
            raise DataError(f"malformed log line: {line!r}") from None


@dataclass
class ExperimentLog:
    entries: list[LogEntry] = field(default_factory=list)
    stop: str | None = None
    seed: int | None = None

    def to_text(self) -> str:
        head = "# index\taction\ttrue\tpredicted\tcorrect\tknown\tinstance\n"
        body = "".join(e.to_line() for e in self.entries)
        asks = [e for e in self.entries if e.action == ASK]
        footer = (f"# stop={self.stop} seed={self.seed} iterations={len(self.entries)} "
                  f"asks={len(asks)} known={self.entries[-1].known if self.entries else 0}\n")
        return head + body + footer

    @classmethod
    def from_text(cls, text: str) -> "ExperimentLog":
        log = cls()
        for line in text.splitlines():
            if line.startswith("# stop="):
                for item in line[2:].split():
                    key, _, value = item.partition("=")
                    if key == "stop":
                        log.stop = value
                    elif key == "seed" and value != "None":
                        log.seed = int(value)
            elif line and not line.startswith("#"):
                log.entries.append(LogEntry.from_line(line))
        return log


# -------------------------------------------------------------- the protocol

def run_simulated_teacher(data: LabeledDataset, config: Config = Config(), seed: int = 0,
                          learner: Learner | None = None) -> ExperimentLog:
    """Run one test-then-train experiment.

    Each new category is introduced by teaching ``config.initial_teach``
    instances. The teacher then repeatedly asks about a random unseen
    instance of a random known category and corrects wrong answers (which
    stores the instance). Once at least max(window_multiplier * k,
    window_min) asks were made in the current phase, with k known categories,
    and accuracy over that many most recent asks exceeds ``tau``, the next
    category is introduced. The run stops with ``breakpoint_reached`` after
    ``breakpoint`` asks without an introduction, or ``lack_of_data`` when
    categories or unseen instances run out.
    """
    if learner is None:
        learner = StoreLearner(distance=config.distance)
    k1 = config.initial_teach
    if not any(len(items) > k1 for items in data.categories.values()):
        raise DataError(f"dataset too small: no category has more than {k1} instances")

    rng = make_rng(seed)
    labels = list(data.labels)
    if config.shuffle_categories:
        labels = [labels[i] for i in rng.permutation(len(labels))]
    # first introduced category must leave something to ask about
    first = next(i for i, lab in enumerate(labels) if len(data.categories[lab]) > k1)
    labels.insert(0, labels.pop(first))
    pools = {lab: deque(data.categories[lab][i] for i in rng.permutation(len(data.categories[lab])))
             for lab in data.labels}

    log = ExperimentLog(seed=seed)
    known: list[str] = []
    pending = deque(labels)

    def record(action, true, pred, ok, inst):
        log.entries.append(LogEntry(len(log.entries) + 1, action, true, pred, ok, len(known), inst.key))

    def introduce() -> bool:
        while pending:
            label = pending.popleft()
            if len(pools[label]) < k1:
                continue
            known.append(label)
            for _ in range(k1):
                inst = pools[label].popleft()
                learner.teach(label, inst)
                record(TEACH, label, None, None, inst)
            return True
        return False

    introduce()
    phase: list[bool] = []
    while True:
        candidates = [lab for lab in known if pools[lab]]
        if not candidates:
            log.stop = LACK_OF_DATA
            break
        label = candidates[int(rng.integers(len(candidates)))]
        inst = pools[label].popleft()
        pred = learner.predict(inst)
        ok = pred == label
        record(ASK, label, pred, ok, inst)
        if not ok:
            learner.teach(label, inst)
            record(CORRECT, label, pred, None, inst)
        phase.append(ok)
        window = max(config.window_multiplier * len(known), config.window_min)
        if len(phase) >= window and sum(phase[-window:]) / window > config.tau:
            if not introduce():
                log.stop = LACK_OF_DATA
                break
            phase = []
        elif len(phase) >= config.breakpoint:
            log.stop = BREAKPOINT
            break
    return log


# ------------------------------------------------------------------- metrics

@dataclass(frozen=True)
class Metrics:
    qci: int
    tlc: int
    aic: float
    gca: float
    apa: float
    stop: str | None = None

    def report(self) -> str:
        return (f"QCI={self.qci}\nTLC={self.tlc}\nAIC={self.aic:.6f}\n"
                f"GCA={self.gca:.6f}\nAPA={self.apa:.6f}\nstop={self.stop}\n")


def compute_metrics(log: ExperimentLog, store: CategoryStore | None = None) -> Metrics:
    """Metrics of one run; without a store, stored instances are counted from the log."""
    if not log.entries:
        raise DataError("empty experiment log")
    asks = [e for e in log.entries if e.action == ASK]
    if not asks:
        raise DataError("experiment log has no ask iterations")
    corrections = sum(e.action == CORRECT for e in log.entries)
    tlc = max(e.known for e in log.entries)
    stored = len(store) if store is not None else sum(e.action in (TEACH, CORRECT) for e in log.entries)
    phases: dict[int, list[bool]] = {}
    for e in asks:
        phases.setdefault(e.known, []).append(bool(e.correct))
    apa = float(np.mean([np.mean(v) for v in phases.values()]))
    gca = sum(bool(e.correct) for e in asks) / len(asks)
    return Metrics(len(asks) + corrections, tlc, stored / tlc, gca, apa, log.stop)


TABLE_COLUMNS = ("seed", "QCI", "TLC", "AIC", "GCA", "APA", "stop")


def metrics_table(rows: list[tuple[int, Metrics]]) -> str:
    """Tab-separated per-seed table with a final mean row (TLC mean is ALC)."""
    out = ["\t".join(TABLE_COLUMNS) + "\n"]
    for seed, m in rows:
        out.append(f"{seed}\t{m.qci}\t{m.tlc}\t{m.aic:.4f}\t{m.gca:.4f}\t{m.apa:.4f}\t{m.stop}\n")
    if rows:
        agg = aggregate_metrics([m for _, m in rows])
        out.append(f"mean\t{agg['QCI']:.2f}\t{agg['ALC']:.2f}\t{agg['AIC']:.4f}\t"
                   f"{agg['GCA']:.4f}\t{agg['APA']:.4f}\t{agg['stops']}\n")
    return "".join(out)


def aggregate_metrics(metrics: list[Metrics]) -> dict:
    """Means over runs, reported in the shape of one table row."""
    if not metrics:
        raise DataError("no runs to aggregate")
    stops: dict[str, int] = {}
    for m in metrics:
        stops[str(m.stop)] = stops.get(str(m.stop), 0) + 1
    return {
        "QCI": float(np.mean([m.qci for m in metrics])),
        "ALC": float(np.mean([m.tlc for m in metrics])),
        "AIC": float(np.mean([m.aic for m in metrics])),
        "GCA": float(np.mean([m.gca for m in metrics])),
        "APA": float(np.mean([m.apa for m in metrics])),
        "stops": ",".join(f"{k}:{v}" for k, v in sorted(stops.items())),
    }


# ---------------------------------------------------------- offline evaluation

@dataclass(frozen=True, eq=False)
class OfflineReport:
    aia: float
    aca: float
    labels: list[str]
    confusion: np.ndarray  # counts, rows = true label, columns = predicted

    @property
    def confusion_normalized(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1, keepdims=True)
        return np.divide(self.confusion, rows, out=np.zeros(self.confusion.shape), where=rows > 0)

    def per_class_accuracy(self) -> dict[str, float]:
        rows = self.confusion.sum(axis=1)
        return {lab: self.confusion[i, i] / rows[i] for i, lab in enumerate(self.labels) if rows[i] > 0}

    def report(self) -> str:
        out = [f"AIA={self.aia:.6f}\n", f"ACA={self.aca:.6f}\n",
               "confusion\t" + "\t".join(self.labels) + "\n"]
        for lab, row in zip(self.labels, self.confusion):
            out.append(lab + "\t" + "\t".join(str(int(c)) for c in row) + "\n")
        return "".join(out)


def offline_eval(train: LabeledDataset, test: LabeledDataset, config: Config = Config()) -> OfflineReport:
    """Teach every training instance, classify every test instance."""
    missing = [lab for lab in test.labels if lab not in train.categories]
    if missing:
        raise DataError(f"test labels absent from training set: {', '.join(missing)}")
    store = CategoryStore(distance=config.distance)
    for label, items in train.categories.items():
        for inst in items:
            store.teach(label, inst.descriptor)
    labels = sorted(train.labels)
    pos = {lab: i for i, lab in enumerate(labels)}
    confusion = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for label, items in test.categories.items():
        for inst in items:
            confusion[pos[label], pos[store.classify(inst.descriptor).label]] += 1
    total = confusion.sum()
    rows = confusion.sum(axis=1)
    present = rows > 0
    aia = float(np.trace(confusion) / total)
    aca = float(np.mean(np.diag(confusion)[present] / rows[present]))
    return OfflineReport(aia, aca, labels, confusion)
