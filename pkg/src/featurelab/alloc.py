"""Feature allocations, set partitions, and their file formats.

A feature allocation is the observed sample: one set of integer feature ids
per customer.  Ids are dense (exactly ``0..k-1``); the canonical
"left-ordered" form numbers features by first appearance, scanning customers
in order and ids in increasing order within a customer.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "FeatureAllocation",
    "SuffStats",
    "Partition",
    "AllocationFormatError",
    "suff_stats",
    "permute_customers",
    "read_jsonl",
    "write_jsonl",
    "write_csv",
]


class AllocationFormatError(ValueError):
    """Malformed allocation input; ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


@dataclass(frozen=True)
class FeatureAllocation:
    customers: tuple

    def __init__(self, customers: Iterable[Iterable[int]] = ()):
        cust = tuple(frozenset(int(i) for i in c) for c in customers)
        seen = set().union(*cust) if cust else set()
        if any(i < 0 for i in seen):
            raise AllocationFormatError("feature ids must be non-negative")
        if seen != set(range(len(seen))):
            raise AllocationFormatError(
                f"feature ids must be dense in 0..k-1, got {sorted(seen)}")
        object.__setattr__(self, "customers", cust)

    @property
    def n(self):
        return len(self.customers)

    @property
    def k(self):
        return len(set().union(*self.customers)) if self.customers else 0

    def __len__(self):
        return self.n

    def __iter__(self):
        return iter(self.customers)

    def canonical(self):
        """Relabel features in left-ordered form.

        Features are numbered by first appearance; features first seen at
        the same customer are ordered by their later membership.
        """
        return FeatureAllocation(_relabel(self.customers))

    def append(self, features):
        return FeatureAllocation(self.customers + (frozenset(features),))

    def to_lists(self):
        return [sorted(c) for c in self.customers]

    def matrix(self):
        """Left-ordered binary matrix, shape ``(n, k)``."""
        canon = self.canonical()
        out = np.zeros((self.n, self.k), dtype=np.int8)
        for j, c in enumerate(canon.customers):
            out[j, sorted(c)] = 1
        return out

    def __repr__(self):
        return f"FeatureAllocation({self.to_lists()})"


def _relabel(customers):
    # left-ordered form: columns sorted as binary numbers read from the first
    # customer down, so ties in first appearance are broken by later history
    ids = set().union(*map(set, customers)) if customers else set()
    history = {i: tuple(i in c for c in customers) for i in ids}
    order = sorted(ids, key=lambda i: history[i], reverse=True)
    mapping = {i: j for j, i in enumerate(order)}
    return [frozenset(mapping[i] for i in c) for c in customers]


@dataclass(frozen=True)
class SuffStats:
    """Sample size ``n``, feature count ``k`` and frequencies ``m``."""

    n: int
    m: tuple = ()

    def __post_init__(self):
        m = tuple(int(v) for v in self.m)
        object.__setattr__(self, "m", m)
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if any(v < 1 or v > self.n for v in m):
            raise ValueError(f"frequencies must lie in 1..n={self.n}, got {list(m)}")

    @property
    def k(self):
        return len(self.m)

    def sorted(self):
        return SuffStats(self.n, tuple(sorted(self.m, reverse=True)))

    def to_dict(self):
        return {"n": self.n, "m": list(self.m)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n"]), tuple(d.get("m", ())))


@dataclass(frozen=True)
class Partition:
    """Block sizes of a set partition of ``n`` items."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(int(b) for b in self.blocks)
        if any(b < 1 for b in blocks):
            raise ValueError("block sizes must be positive")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n(self):
        return sum(self.blocks)

    @property
    def k(self):
        return len(self.blocks)

    @classmethod
    def from_labels(cls, labels: Sequence[int]):
        counts = {}
        for lab in labels:
            counts[lab] = counts.get(lab, 0) + 1
        return cls(tuple(counts.values()))

    def to_dict(self):
        return {"n": self.n, "blocks": list(self.blocks)}

    @classmethod
    def from_dict(cls, d):
        part = cls(tuple(d["blocks"]))
        if "n" in d and int(d["n"]) != part.n:
            raise ValueError(f"block sizes sum to {part.n}, not n={d['n']}")
        return part


def suff_stats(Z: FeatureAllocation) -> SuffStats:
    m = [0] * Z.k
    for c in Z.customers:
        for i in c:
            m[i] += 1
    return SuffStats(Z.n, tuple(m))


def permute_customers(Z: FeatureAllocation, perm: Sequence[int]) -> FeatureAllocation:
    """Reorder customers (``new[j] = old[perm[j]]``), then canonicalise."""
    perm = list(perm)
    if sorted(perm) != list(range(Z.n)):
        raise ValueError(f"not a permutation of 0..{Z.n - 1}: {perm}")
    return FeatureAllocation(Z.customers[p] for p in perm).canonical()


def write_jsonl(Z: FeatureAllocation, path):
    with open(path, "w") as fh:
        for row in Z.to_lists():
            fh.write(json.dumps(row) + "\n")


def read_jsonl(path) -> FeatureAllocation:
    """Read one sorted id array per line.

    Ids that are not dense are re-canonicalised with a warning.
    """
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AllocationFormatError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(row, list) or not all(
                    isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in row):
                raise AllocationFormatError("expected an array of non-negative integers", lineno)
            if len(set(row)) != len(row):
                raise AllocationFormatError("repeated feature id", lineno)
            rows.append(row)
    seen = set().union(*map(set, rows)) if rows else set()
    if seen != set(range(len(seen))):
        warnings.warn(f"{path}: feature ids not dense; relabelled by first appearance",
                      stacklevel=2)
        rows = _relabel(rows)
    return FeatureAllocation(rows)


def write_csv(Z: FeatureAllocation, path_or_buf):
    """Left-ordered binary matrix with header ``f0..f{k-1}``."""
    own = not hasattr(path_or_buf, "write")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(Z.k)])
        w.writerows(Z.matrix().tolist())
    finally:
        if own:
            fh.close()
