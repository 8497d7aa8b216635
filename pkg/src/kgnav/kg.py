"""Co-visibility knowledge graph over the object vocabulary."""

from __future__ import annotations

import contextlib
from pathlib import Path

import numpy as np


class KnowledgeGraph:
    """Symmetric co-visibility counts; ``adjacency`` is their support.

    ``edge_counts`` may be a view over shared memory, in which case pass the
    matching ``lock`` so that each R application is atomic across workers.
    """

    def __init__(self, size: int, edge_counts: np.ndarray | None = None, lock=None):
        if size < 1:
            raise ValueError("graph size must be >= 1")
        self.size = size
        if edge_counts is None:
            edge_counts = np.zeros((size, size), dtype=np.int64)
        if edge_counts.shape != (size, size):
            raise ValueError(f"edge_counts shape {edge_counts.shape} != ({size}, {size})")
        self.edge_counts = edge_counts
        self._lock = lock

    def _guard(self):
        return self._lock if self._lock is not None else contextlib.nullcontext()

    @property
    def adjacency(self) -> np.ndarray:
        return (self.edge_counts > 0).astype(np.float64)

    def update(self, visible) -> "KnowledgeGraph":
        r = np.asarray(visible)
        if r.shape != (self.size,):
            raise ValueError(f"visible vector has shape {r.shape}, expected ({self.size},)")
        idx = np.flatnonzero(r)
        if idx.size < 2:
            return self
        with self._guard():
            self.edge_counts[np.ix_(idx, idx)] += 1
            self.edge_counts[idx, idx] -= 1
        return self

    def snapshot(self) -> "KnowledgeGraph":
        with self._guard():
            return KnowledgeGraph(self.size, np.array(self.edge_counts, dtype=np.int64))

    def copy_from(self, other: "KnowledgeGraph") -> None:
        with self._guard():
            self.edge_counts[...] = other.edge_counts

    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.edge_counts, 1)))

    # -- text edge list ------------------------------------------------------

    def dumps(self) -> str:
        lines = [f"size {self.size}"]
        counts = self.snapshot().edge_counts
        for i, j in zip(*np.nonzero(np.triu(counts, 1))):
            lines.append(f"{i} {j} {counts[i, j]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "KnowledgeGraph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not rows or rows[0][0] != "size":
            raise ValueError("graph dump must start with 'size <n>'")
        g = cls(int(rows[0][1]))
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 'i j count'")
            i, j, c = (int(v) for v in row)
            if i == j or c <= 0:
                raise ValueError(f"line {lineno}: bad edge {i} {j} {c}")
            g.edge_counts[i, j] = g.edge_counts[j, i] = c
        return g

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "KnowledgeGraph":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def update_graph(graph: KnowledgeGraph, visible) -> KnowledgeGraph:
    return graph.update(visible)


def normalized_adjacency(graph) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    a = graph.adjacency if isinstance(graph, KnowledgeGraph) else np.asarray(graph, dtype=np.float64)
    a_tilde = a + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return a_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]


def node_feature_init(size: int) -> np.ndarray:
    if size < 1:
        raise ValueError("size must be >= 1")
    return np.eye(size)
