"""Part trees and poses.

A topology is a list of part names plus a parent index per part.  Poses are
stored as ``(n_parts, 2)`` float arrays of ``(u, v)`` pixel coordinates,
``u`` running along columns and ``v`` along rows.  A part that is not
annotated in a frame is a row of NaNs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CycleDetected, DuplicateName, MultipleRoots, NoRoot, TopologyError

ABSENT = np.nan


@dataclass(frozen=True)
class SkeletonTopology:
    parts: tuple[str, ...]
    parent: tuple[int | None, ...]
    _order: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "parent", tuple(self.parent))
        validate(self)
        object.__setattr__(self, "_order", tuple(_walk(self)))

    @classmethod
    def from_names(cls, parts: Sequence[str], parents: Sequence[str | None]) -> "SkeletonTopology":
        """Build from parent *names*; an empty string or None marks the root."""
        parts = list(parts)
        if len(parents) != len(parts):
            raise TopologyError(f"{len(parts)} parts but {len(parents)} parent entries")
        index = {}
        for i, name in enumerate(parts):
            index.setdefault(name, i)
        parent_idx: list[int | None] = []
        for name, par in zip(parts, parents):
            if par is None or par == "":
                parent_idx.append(None)
            elif par not in index:
                raise TopologyError(f"part {name!r} names unknown parent {par!r}")
            else:
                parent_idx.append(index[par])
        return cls(tuple(parts), tuple(parent_idx))

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    @property
    def root_index(self) -> int:
        return self.parent.index(None)

    @property
    def root(self) -> str:
        return self.parts[self.root_index]

    def index(self, name: str) -> int:
        try:
            return self.parts.index(name)
        except ValueError:
            raise KeyError(f"unknown part {name!r}") from None

    def children(self, i: int) -> list[int]:
        return [j for j, p in enumerate(self.parent) if p == i]

    def edges(self) -> list[tuple[int, int]]:
        """(child, parent) pairs in declaration order."""
        return [(i, p) for i, p in enumerate(self.parent) if p is not None]

    def to_dict(self) -> dict:
        return {
            "parts": list(self.parts),
            "parents": ["" if p is None else self.parts[p] for p in self.parent],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SkeletonTopology":
        return cls.from_names(d["parts"], d["parents"])


def validate(topology: SkeletonTopology) -> None:
    """Raise a :class:`TopologyError` subclass unless the parent links form a tree."""
    parts, parent = topology.parts, topology.parent
    if len(parts) != len(parent):
        raise TopologyError(f"{len(parts)} parts but {len(parent)} parent links")
    if not parts:
        raise NoRoot("topology has no parts")

    seen: dict[str, int] = {}
    for i, name in enumerate(parts):
        if not isinstance(name, str) or not name:
            raise TopologyError(f"part {i} has an empty name")
        if name in seen:
            raise DuplicateName(f"part name {name!r} used by parts {seen[name]} and {i}")
        seen[name] = i

    n = len(parts)
    for i, p in enumerate(parent):
        if p is not None and not (0 <= p < n):
            raise TopologyError(f"part {parts[i]!r} has out-of-range parent index {p}")
        if p == i:
            raise CycleDetected(f"part {parts[i]!r} is its own parent")

    roots = [i for i, p in enumerate(parent) if p is None]
    if len(roots) > 1:
        raise MultipleRoots("parts without parent: " + ", ".join(parts[i] for i in roots))

    # Follow parent chains; a chain longer than n revisits a part.
    for start in range(n):
        path = [start]
        cur = parent[start]
        while cur is not None:
            if cur in path:
                cyc = path[path.index(cur):] + [cur]
                raise CycleDetected("cycle: " + " -> ".join(parts[j] for j in cyc))
            path.append(cur)
            cur = parent[cur]

    if not roots:
        # unreachable in practice: n links without a root always contain a cycle
        raise NoRoot("every part has a parent")


def _walk(topology: SkeletonTopology) -> list[int]:
    order = []
    stack = [topology.root_index]
    while stack:
        i = stack.pop()
        order.append(i)
        stack.extend(reversed(topology.children(i)))
    return order


def traversal_order(topology: SkeletonTopology) -> list[int]:
    """Root first, each part after its parent, children in declaration order.

    The walk is depth-first; for a chain or star this coincides with the
    declaration order.
    """
    validate(topology)
    return list(topology._order)


@dataclass
class Pose:
    positions: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")

    @property
    def present(self) -> np.ndarray:
        return np.isfinite(self.positions).all(axis=1)

    def check(self, topology: SkeletonTopology) -> None:
        if len(self.positions) != topology.n_parts:
            raise TopologyError(
                f"pose has {len(self.positions)} parts, topology has {topology.n_parts}"
            )


def full_body_14() -> SkeletonTopology:
    """Head-rooted 14-joint body used by the full-body datasets."""
    parts = [
        "head", "neck",
        "l_shoulder", "l_elbow", "l_wrist",
        "r_shoulder", "r_elbow", "r_wrist",
        "l_hip", "l_knee", "l_foot",
        "r_hip", "r_knee", "r_foot",
    ]
    parents = [
        "", "head",
        "neck", "l_shoulder", "l_elbow",
        "neck", "r_shoulder", "r_elbow",
        "neck", "l_hip", "l_knee",
        "neck", "r_hip", "r_knee",
    ]
    return SkeletonTopology.from_names(parts, parents)
