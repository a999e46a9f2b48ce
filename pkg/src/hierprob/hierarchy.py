"""Aggregation trees, the summing matrix and coherency checks."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class StructureError(ValueError):
    """Raised for malformed trees (cycles, several roots, orphans)."""

    def __init__(self, message: str, node: str | None = None):
        super().__init__(message if node is None else f"{message}: {node!r}")
        self.node = node


@dataclass(frozen=True)
class HierarchySpec:
    """A validated aggregation tree in canonical node order.

    Canonical order is internal nodes first, sorted by level and then by
    first appearance in the input, followed by the bottom (leaf) nodes in
    the same fashion. For balanced trees this is plain level order.
    """

    nodes: tuple[str, ...]
    parent: dict[str, str | None]
    level_of: dict[str, int]
    _children: dict[str, tuple[str, ...]] = field(repr=False, compare=False, default_factory=dict)

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str | None]]) -> "HierarchySpec":
        order: list[str] = []
        parent: dict[str, str | None] = {}
        for child, par in edges:
            child = str(child).strip()
            par = None if par is None or str(par).strip() == "" else str(par).strip()
            if not child:
                raise StructureError("empty node id")
            if child in parent:
                raise StructureError("node declared twice", child)
            parent[child] = par
            order.append(child)
        if not order:
            raise StructureError("hierarchy has no nodes")
        # parents that are only mentioned on the right-hand side are orphans
        for child, par in parent.items():
            if par is not None and par not in parent:
                raise StructureError("parent is never declared", par)
        roots = [v for v in order if parent[v] is None]
        if len(roots) != 1:
            raise StructureError(
                "expected exactly one root, found " + str(len(roots)),
                roots[1] if len(roots) > 1 else None,
            )

        children: dict[str, list[str]] = {v: [] for v in order}
        for v in order:
            if parent[v] is not None:
                children[parent[v]].append(v)

        level_of: dict[str, int] = {roots[0]: 1}
        stack = [roots[0]]
        while stack:
            v = stack.pop()
            for c in children[v]:
                level_of[c] = level_of[v] + 1
                stack.append(c)
        unreached = [v for v in order if v not in level_of]
        if unreached:
            raise StructureError("cycle or disconnected node", unreached[0])

        rank = {v: i for i, v in enumerate(order)}
        internal = sorted((v for v in order if children[v]), key=lambda v: (level_of[v], rank[v]))
        leaves = sorted((v for v in order if not children[v]), key=lambda v: (level_of[v], rank[v]))
        nodes = tuple(internal + leaves)
        kids = {v: tuple(sorted(children[v], key=nodes.index)) for v in nodes}
        return cls(nodes=nodes, parent=dict(parent), level_of=level_of, _children=kids)

    @classmethod
    def from_file(cls, path: str | Path) -> "HierarchySpec":
        """Read a ``child,parent`` edge list; the root has an empty parent."""
        edges = []
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or all(not c.strip() for c in row):
                    continue
                if i == 0 and [c.strip().lower() for c in row[:2]] == ["child", "parent"]:
                    continue
                edges.append((row[0], row[1] if len(row) > 1 else ""))
        return cls.from_edges(edges)

    def to_file(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["child", "parent"])
            for v in self.nodes:
                w.writerow([v, self.parent[v] or ""])

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> str:
        return self.nodes[0]

    @property
    def bottom_nodes(self) -> tuple[str, ...]:
        return tuple(v for v in self.nodes if not self._children[v])

    @property
    def internal_nodes(self) -> tuple[str, ...]:
        return tuple(v for v in self.nodes if self._children[v])

    @property
    def m(self) -> int:
        return len(self.bottom_nodes)

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(self.level_of[v] for v in self.nodes)

    def children(self, node: str) -> tuple[str, ...]:
        return self._children[node]

    def index(self, node: str) -> int:
        return self.nodes.index(node)


def fig1_hierarchy() -> HierarchySpec:
    """Two categories over five SKUs: Total -> A, B -> AA, AB, AC, BA, BB."""
    return HierarchySpec.from_edges(
        [("Total", None), ("A", "Total"), ("B", "Total"),
         ("AA", "A"), ("AB", "A"), ("AC", "A"), ("BA", "B"), ("BB", "B")]
    )


def random_hierarchy(rng: np.random.Generator, max_depth: int = 4, max_bottom: int = 64,
                     max_children: int = 4) -> HierarchySpec:
    """Draw a random tree with depth <= ``max_depth`` and <= ``max_bottom`` leaves."""
    edges: list[tuple[str, str | None]] = [("n0", None)]
    frontier = ["n0"]
    leaves = 1
    counter = 1
    for _ in range(max_depth - 1):
        nxt = []
        for v in frontier:
            k = int(rng.integers(0, max_children + 1))
            # a split turns one leaf into k leaves
            if k < 1 or leaves - 1 + k > max_bottom:
                continue
            leaves += k - 1
            for _ in range(k):
                name = f"n{counter}"
                counter += 1
                edges.append((name, v))
                nxt.append(name)
        frontier = nxt
        if not frontier:
            break
    return HierarchySpec.from_edges(edges)


@dataclass(frozen=True)
class SummingMatrix:
    entries: np.ndarray
    node_ids: tuple[str, ...] = ()
    bottom_ids: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return self.entries.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def build_summing_matrix(spec: HierarchySpec) -> SummingMatrix:
    bottom = spec.bottom_nodes
    col = {b: j for j, b in enumerate(bottom)}
    S = np.zeros((spec.n, len(bottom)), dtype=np.int64)
    row = {v: i for i, v in enumerate(spec.nodes)}
    for b in bottom:
        v: str | None = b
        while v is not None:
            S[row[v], col[b]] = 1
            v = spec.parent[v]
    S.setflags(write=False)
    return SummingMatrix(S, spec.nodes, bottom)


def _as_matrix(S) -> np.ndarray:
    return np.asarray(S)


def aggregate_bottom(S, b: Sequence[float] | np.ndarray) -> np.ndarray:
    S = _as_matrix(S)
    b = np.asarray(b)
    if b.shape[0] != S.shape[1]:
        raise ValueError(f"bottom vector has length {b.shape[0]}, expected {S.shape[1]}")
    return S @ b


def coherency_residual(S, y: Sequence[float] | np.ndarray) -> float:
    """Largest absolute gap between ``y`` and the aggregate of its bottom slice.

    ``y`` may also be an ``n x k`` matrix, in which case the maximum over all
    columns is returned.
    """
    S = _as_matrix(S)
    y = np.asarray(y, dtype=float)
    n, m = S.shape
    if y.shape[0] != n:
        raise ValueError(f"vector has length {y.shape[0]}, expected {n}")
    if y.size == 0:
        return 0.0
    return float(np.max(np.abs(y - S @ y[n - m:])))
