"""Instance-based open-ended category learner.

A category is the list of descriptors taught for it. A query is assigned to
the category with the smallest object-category distance (OCD), the minimum
distance to any of the category's stored instances.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import ObjectDescriptor, check_feature, read_records_binary, write_records_binary
from .errors import DataError


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p, q = check_feature(p), check_feature(q)
    if p.shape != q.shape:
        raise DataError(f"dimension mismatch: {len(p)} vs {len(q)}")
    return p, q


def chi2(p, q) -> float:
    """Half the sum of (p_i - q_i)^2 / (p_i + q_i); bins where both are zero add nothing."""
    p, q = _pair(p, q)
    return float(_chi2_rows(p[None, :], q)[0])


def js_distance(p, q) -> float:
    """Jensen-Shannon divergence in bits of the sum-normalised vectors, in [0, 1]."""
    p, q = _pair(p, q)
    return float(_js_rows(p[None, :], q)[0])


def _chi2_rows(m: np.ndarray, q: np.ndarray) -> np.ndarray:
    s = m + q
    d = m - q
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(s > 0, d * d / s, 0.0)
    return 0.5 * terms.sum(axis=1)


def _kl_to_mid(a: np.ndarray, mid: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > 0, a * np.log2(a / mid), 0.0).sum(axis=1)


def _js_rows(m: np.ndarray, q: np.ndarray) -> np.ndarray:
    ms = m.sum(axis=1, keepdims=True)
    qs = q.sum()
    if (ms <= 0).any() or qs <= 0:
        raise DataError("Jensen-Shannon distance needs vectors with positive sum")
    a = m / ms
    b = np.broadcast_to(q / qs, a.shape)
    mid = (a + b) / 2
    js = 0.5 * _kl_to_mid(a, mid) + 0.5 * _kl_to_mid(b, mid)
    return np.clip(js, 0.0, 1.0)


DISTANCES = {"chi2": chi2, "js": js_distance}
_ROW_DISTANCES = {"chi2": _chi2_rows, "js": _js_rows}


@dataclass(frozen=True)
class Classification:
    """``label`` is None (unknown) only when the store is empty."""

    label: str | None
    distance: float
    table: dict[str, float]

    @property
    def unknown(self) -> bool:
        return self.label is None


def _check_label(label: str) -> str:
    if not isinstance(label, str) or not label or any(c in label for c in "\t\n\r"):
        raise DataError(f"invalid category label {label!r}")
    return label


class CategoryStore:
    """Label -> stored instance descriptors.

    Writers are serialised by an internal lock. Each write publishes a new
    category mapping, so a concurrent reader sees the whole store either
    before or after the write.
    """

    def __init__(self, embedder_id: str | None = None, dim: int | None = None,
                 pooling: str | None = None, distance: str = "chi2"):
        if distance not in DISTANCES:
            raise ValueError(f"unknown distance {distance!r}")
        self.embedder_id = embedder_id
        self.dim = dim
        self.pooling = pooling
        self.distance = distance
        self._categories: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def labels(self) -> list[str]:
        return list(self._categories)

    def __len__(self) -> int:
        return sum(len(m) for m in self._categories.values())

    def __contains__(self, label: str) -> bool:
        return label in self._categories

    def size(self, label: str) -> int:
        return len(self._categories.get(label, ()))

    def instances(self, label: str) -> np.ndarray:
        return self._categories[label]

    def _check(self, d: ObjectDescriptor) -> None:
        if self.embedder_id is not None and d.embedder_id != self.embedder_id:
            raise DataError(f"descriptor from embedder {d.embedder_id!r}, store holds {self.embedder_id!r}")
        if self.pooling is not None and d.pooling != self.pooling:
            raise DataError(f"descriptor pooled with {d.pooling!r}, store holds {self.pooling!r}")
        if self.dim is not None and d.dim != self.dim:
            raise DataError(f"descriptor dimension {d.dim}, store holds {self.dim}")

    def teach(self, label: str, descriptor: ObjectDescriptor) -> None:
        """Store one instance; a new label creates its category."""
        _check_label(label)
        with self._lock:
            self._check(descriptor)
            if self.embedder_id is None:
                self.embedder_id = descriptor.embedder_id
            if self.pooling is None:
                self.pooling = descriptor.pooling
            if self.dim is None:
                self.dim = descriptor.dim
            cats = dict(self._categories)
            row = descriptor.feature[None, :]
            cats[label] = np.vstack([cats[label], row]) if label in cats else row.copy()
            cats[label].setflags(write=False)
            self._categories = cats

    def object_category_distance(self, label: str, descriptor: ObjectDescriptor) -> float:
        cats = self._categories
        if label not in cats:
            raise KeyError(f"unknown category {label!r}")
        self._check(descriptor)
        return float(_ROW_DISTANCES[self.distance](cats[label], descriptor.feature).min())

    def classify(self, descriptor: ObjectDescriptor) -> Classification:
        """Minimum-OCD label; ties go to the lexicographically smallest label."""
        cats = self._categories
        if not cats:
            return Classification(None, float("inf"), {})
        self._check(descriptor)
        rows = _ROW_DISTANCES[self.distance]
        table = {label: float(rows(cats[label], descriptor.feature).min()) for label in sorted(cats)}
        best = min(table, key=lambda k: (table[k], k))
        return Classification(best, table[best], table)

    # ------------------------------------------------------------ persistence

    _MAGIC = b"ORTHONET-STORE 1\n"

    def save(self, path: str | Path) -> None:
        """Text header, blank line, then one binary record per instance keyed by label."""
        cats = self._categories
        header = (f"embedder={self.embedder_id or ''}\ndim={self.dim or 0}\n"
                  f"distance={self.distance}\npooling={self.pooling or ''}\n"
                  f"categories={len(cats)}\ninstances={sum(len(m) for m in cats.values())}\n\n")
        records = [(label, row) for label, m in cats.items() for row in m]
        Path(path).write_bytes(self._MAGIC + header.encode("utf-8") + write_records_binary(records))

    @classmethod
    def load(cls, path: str | Path) -> "CategoryStore":
        """Read a saved store, checking every invariant.

        Vectors are stored as float32, so loaded values are rounded to float32.
        """
        data = Path(path).read_bytes()
        where = str(path)
        if not data.startswith(cls._MAGIC):
            raise DataError(f"{where}: not an orthonet store file")
        end = data.find(b"\n\n", len(cls._MAGIC) - 1)
        if end < 0:
            raise DataError(f"{where}: store header is not terminated")
        try:
            lines = data[len(cls._MAGIC):end].decode("utf-8").splitlines()
            header = dict(line.split("=", 1) for line in lines)
            dim, n_cat, n_inst = int(header["dim"]), int(header["categories"]), int(header["instances"])
            embedder, pooling, distance = header["embedder"], header["pooling"], header["distance"]
        except (UnicodeDecodeError, ValueError, KeyError):
            raise DataError(f"{where}: malformed store header") from None
        store = cls(embedder or None, dim or None, pooling or None, distance)
        records = read_records_binary(data[end + 2:], where)
        if len(records) != n_inst:
            raise DataError(f"{where}: header declares {n_inst} instances, found {len(records)}")
        seen_done: set[str] = set()
        prev = None
        for label, vec in records:
            if label != prev and label in seen_done:
                raise DataError(f"{where}: category {label!r} is split into several blocks")
            if prev is not None and label != prev:
                seen_done.add(prev)
            prev = label
            if dim and len(vec) != dim:
                raise DataError(f"{where}: instance of {label!r} has dimension {len(vec)}, expected {dim}")
            store.teach(label, ObjectDescriptor(vec, store.pooling or "avg", store.embedder_id or ""))
        if len(store.labels) != n_cat:
            raise DataError(f"{where}: header declares {n_cat} categories, found {len(store.labels)}")
        return store
