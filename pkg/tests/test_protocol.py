import numpy as np
import pytest

from orthonet.config import Config
from orthonet.embedding import ObjectDescriptor
from orthonet.errors import DataError
from orthonet.learner import CategoryStore
from orthonet.pointcloud_io import make_rng
from orthonet.protocol import (ASK, BREAKPOINT, CORRECT, LACK_OF_DATA, TEACH, ExperimentLog, Instance,
                               LabeledDataset, LogEntry, StoreLearner, compute_metrics, metrics_table,
                               offline_eval, run_simulated_teacher)


def clusters(n_cat, per, seed=0, dim=8, spread=0.02):
    """Well separated non-negative clusters, one per category."""
    rng = make_rng(seed)
    cats = {}
    for c in range(n_cat):
        centre = np.full(dim, 0.05)
        centre[c % dim] = 1.0
        cats[f"c{c}"] = [Instance(f"c{c}/{i}", ObjectDescriptor(
            np.abs(centre + spread * rng.normal(size=dim)), "avg", "t")) for i in range(per)]
    return LabeledDataset(cats)


def constant(n_cat, per):
    f = np.full(4, 0.25)
    return LabeledDataset({f"c{c}": [Instance(f"c{c}/{i}", ObjectDescriptor(f, "avg", "t"))
                                     for i in range(per)] for c in range(n_cat)})


class Oracle:
    """Perfect classifier stub: knows the label encoded in the instance key."""

    def __init__(self):
        self.known = set()

    def teach(self, label, instance):
        self.known.add(label)

    def predict(self, instance):
        label = instance.key.split("/")[0]
        return label if label in self.known else None


def test_separable_lack_of_data():
    log = run_simulated_teacher(clusters(2, 30), Config(), seed=1)
    assert log.stop == LACK_OF_DATA
    assert compute_metrics(log).tlc == 2


def test_constant_breakpoint():
    log = run_simulated_teacher(constant(4, 200), Config(), seed=2)
    assert log.stop == BREAKPOINT
    assert compute_metrics(log).tlc < 4


def test_determinism():
    data = clusters(4, 25, seed=3, spread=0.4)
    a = run_simulated_teacher(data, Config(), seed=5).to_text()
    b = run_simulated_teacher(data, Config(), seed=5).to_text()
    c = run_simulated_teacher(data, Config(), seed=6).to_text()
    assert a == b and a != c


@pytest.mark.parametrize("seed", range(5))
def test_oracle_learns_everything(seed):
    data = clusters(5, 20)
    log = run_simulated_teacher(data, Config(shuffle_categories=True), seed, Oracle())
    assert log.stop == LACK_OF_DATA and compute_metrics(log).tlc == 5


def test_log_invariants():
    data = clusters(4, 25, seed=3, spread=0.4)
    log = run_simulated_teacher(data, Config(), seed=9)
    idx = [e.index for e in log.entries]
    assert idx == sorted(set(idx))
    known = [e.known for e in log.entries]
    assert all(b - a in (0, 1) for a, b in zip(known, known[1:]))
    introduced, consumed = [], set()
    for e in log.entries:
        if e.action == TEACH:
            introduced.append(e.true_label)
        if e.action == ASK:
            assert e.true_label in introduced
        if e.action in (TEACH, ASK):
            assert e.instance not in consumed
            consumed.add(e.instance)
        if e.action == CORRECT:
            assert e.instance in consumed


def test_log_text_round_trip():
    log = run_simulated_teacher(clusters(3, 20, spread=0.4), Config(), seed=4)
    back = ExperimentLog.from_text(log.to_text())
    assert back.entries == log.entries and back.stop == log.stop and back.seed == 4
    with pytest.raises(DataError):
        LogEntry.from_line("1\tjump\ta\tb\t1\t1\tx")


def test_too_small():
    with pytest.raises(DataError):
        run_simulated_teacher(clusters(3, 1), Config(), seed=0)


def _log(asks, known=1):
    entries = [LogEntry(1, TEACH, "a", None, None, known, "t")]
    for ok in asks:
        entries.append(LogEntry(len(entries) + 1, ASK, "a", "a" if ok else "b", ok, known, "x"))
        if not ok:
            entries.append(LogEntry(len(entries) + 1, CORRECT, "a", "b", None, known, "x"))
    return ExperimentLog(entries, LACK_OF_DATA, 0)


def test_metrics_examples():
    m = compute_metrics(_log([True] * 7 + [False] * 3))
    assert m.gca == pytest.approx(0.7) and m.apa == m.gca
    assert m.qci == 13 and m.aic == 4.0
    store = CategoryStore()
    for i in range(45):
        store.teach(f"k{i % 5}", ObjectDescriptor(np.ones(2), "avg", "t"))
    log = _log([True])
    log.entries[0] = LogEntry(1, TEACH, "a", None, None, 5, "t")
    assert compute_metrics(log, store).aic == 9.0
    with pytest.raises(DataError):
        compute_metrics(ExperimentLog())


def test_metrics_phases():
    entries = [LogEntry(1, TEACH, "a", None, None, 1, "t0"),
               LogEntry(2, ASK, "a", "a", True, 1, "t1"),
               LogEntry(3, TEACH, "b", None, None, 2, "t2"),
               LogEntry(4, ASK, "b", "a", False, 2, "t3"),
               LogEntry(5, CORRECT, "b", "a", None, 2, "t3"),
               LogEntry(6, ASK, "b", "b", True, 2, "t4")]
    m = compute_metrics(ExperimentLog(entries, LACK_OF_DATA))
    assert m.apa == pytest.approx((1.0 + 0.5) / 2) and m.gca == pytest.approx(2 / 3)
    table = metrics_table([(1, m), (2, m)])
    assert table.splitlines()[-1].startswith("mean\t")


def test_offline_examples():
    data = clusters(3, 10)
    rep = offline_eval(data, data)
    assert rep.aia == rep.aca == 1.0
    wrong = LabeledDataset({"c0": data.categories["c0"], "c1": data.categories["c0"]})
    rep = offline_eval(clusters(2, 5), wrong)
    assert rep.aia == rep.aca == 0.5
    assert np.allclose(rep.confusion_normalized.sum(axis=1), 1.0)
    with pytest.raises(DataError):
        offline_eval(clusters(2, 5), clusters(3, 5))


def test_offline_aia_weighted():
    train = clusters(3, 10, seed=1, spread=0.6)
    test = LabeledDataset({k: v[:n] for (k, v), n in zip(clusters(3, 20, seed=2, spread=0.6).categories.items(),
                                                       (4, 9, 20))})
    rep = offline_eval(train, test)
    rows = rep.confusion.sum(axis=1)
    per = np.diag(rep.confusion) / rows
    assert rep.aia == pytest.approx(float((per * rows).sum() / rows.sum()), abs=1e-15)
    assert rep.aca == pytest.approx(float(per.mean()), abs=1e-15)


def test_store_learner_matches_store():
    data = clusters(3, 10, spread=0.4)
    learner = StoreLearner()
    log = run_simulated_teacher(data, Config(), seed=3, learner=learner)
    stored = sum(e.action in (TEACH, CORRECT) for e in log.entries)
    assert len(learner.store) == stored
    assert compute_metrics(log, learner.store) == compute_metrics(log)
