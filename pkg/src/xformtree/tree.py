"""Transformation trees.

A `Workspace` is a forest of nodes.  Each root is one model.  Transformations
are nodes in their own right (`Transform`, `Motion`); `Object` and `Group`
nodes contribute identity.  The cumulative transform of a node is the product
of the matrices on its root path with the root side on the left, so a node's
matrix is applied to everything below it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator, Union

import numpy as np

from . import geom
from .errors import (
    CycleWouldForm,
    DifferentModels,
    MalformedTransform,
    NoGeometry,
    NotSiblings,
    SingularMatrix,
    UnknownCamera,
    UnknownNode,
    UnknownParent,
)
from .pointset import PointSet, apply, concat
from .track import MotionTrack


@dataclass(frozen=True, eq=False)
class Transform:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (4, 4) or not np.all(np.isfinite(m)):
            raise MalformedTransform("transform matrix must be a finite 4x4 array")
        if not geom.is_affine(m):
            raise MalformedTransform("transform matrix bottom row must be (0, 0, 0, 1)")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True, eq=False)
class Object:
    """Image or model data.  `geometry` is None for opaque payloads."""

    geometry: PointSet | None = None
    file: str | None = None
    source: str | None = None  # resolved absolute path of `file`
    kind: str = "shell"


@dataclass(frozen=True, eq=False)
class Group:
    kind: str = "group"


@dataclass(frozen=True, eq=False)
class Motion:
    track: MotionTrack | None = None
    file: str | None = None
    source: str | None = None


Payload = Union[Transform, Object, Group, Motion]


@dataclass(eq=False)
class Node:
    id: int
    label: str
    payload: Payload
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return type(self.payload).__name__.lower()


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    node: int | None
    message: str

    def __str__(self) -> str:
        where = "-" if self.node is None else f"#{self.node}"
        return f"{where}: {self.kind}: {self.message}"


class Workspace:
    """Forest of models plus camera transforms.

    Single writer: mutating methods must not run concurrently with anything
    else.  Read-only queries may run concurrently with each other.
    """

    def __init__(self):
        self.nodes: dict[int, Node] = {}
        self.models: list[int] = []
        self.cameras: list[tuple[str, np.ndarray]] = []
        self.eval_time: float | None = None
        self._next_id = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, n: int) -> bool:
        return n in self.nodes

    def __repr__(self) -> str:
        return f"Workspace(nodes={len(self.nodes)}, models={len(self.models)}, cameras={len(self.cameras)})"

    # --- construction --------------------------------------------------------

    def add(self, payload: Payload, parent: int | None = None, label: str = "",
            metadata: dict[str, Any] | None = None, index: int | None = None) -> int:
        """Insert a node under `parent` (a new model root when None)."""
        if parent is not None and parent not in self.nodes:
            raise UnknownParent(f"no node #{parent}")
        nid = self._next_id
        self._next_id += 1
        self.nodes[nid] = Node(nid, label, payload, None, [], dict(metadata or {}))
        self._attach(nid, parent, index)
        return nid

    def add_transform(self, matrix, parent: int | None = None, label: str = "", **kw) -> int:
        return self.add(Transform(matrix), parent, label, **kw)

    def add_object(self, geometry: PointSet | None = None, parent: int | None = None,
                   label: str = "", file: str | None = None, kind: str = "shell", **kw) -> int:
        return self.add(Object(geometry, file, kind=kind), parent, label, **kw)

    def add_group(self, parent: int | None = None, label: str = "", **kw) -> int:
        return self.add(Group(), parent, label, **kw)

    def add_motion(self, track: MotionTrack | None, parent: int | None = None,
                   label: str = "", file: str | None = None, **kw) -> int:
        return self.add(Motion(track, file), parent, label, **kw)

    def add_camera(self, matrix, label: str = "") -> int:
        self.cameras.append((label, geom.as_mat4(matrix)))
        return len(self.cameras) - 1

    def _attach(self, n: int, parent: int | None, index: int | None = None) -> None:
        siblings = self.models if parent is None else self.nodes[parent].children
        siblings.insert(len(siblings) if index is None else index, n)
        self.nodes[n].parent = parent

    def _detach(self, n: int) -> int:
        node = self.nodes[n]
        siblings = self.models if node.parent is None else self.nodes[node.parent].children
        pos = siblings.index(n)
        del siblings[pos]
        node.parent = None
        return pos

    def copy(self) -> "Workspace":
        """Structural copy; payloads are immutable and shared."""
        ws = Workspace()
        ws.nodes = {
            k: Node(n.id, n.label, n.payload, n.parent, list(n.children), dict(n.metadata))
            for k, n in self.nodes.items()
        }
        ws.models = list(self.models)
        ws.cameras = list(self.cameras)
        ws.eval_time = self.eval_time
        ws._next_id = self._next_id
        return ws

    # --- navigation ----------------------------------------------------------

    def node(self, n: int) -> Node:
        try:
            return self.nodes[n]
        except KeyError:
            raise UnknownNode(f"no node #{n}") from None

    def path(self, n: int) -> list[int]:
        """Node ids from the model root down to `n` (inclusive)."""
        out = [n]
        node = self.node(n)
        while node.parent is not None:
            out.append(node.parent)
            node = self.nodes[node.parent]
        out.reverse()
        return out

    def root_of(self, n: int) -> int:
        return self.path(n)[0]

    def depth(self, n: int) -> int:
        return len(self.path(n)) - 1

    def walk(self, root: int | None = None) -> Iterator[int]:
        """Depth-first pre-order over a subtree, or over every model."""
        stack = list(reversed(self.models if root is None else [root]))
        if root is not None:
            self.node(root)
        while stack:
            n = stack.pop()
            yield n
            stack.extend(reversed(self.nodes[n].children))

    def is_ancestor(self, a: int, b: int) -> bool:
        """True when `a` lies on the root path of `b` (a node is its own ancestor)."""
        return a in self.path(b)

    # --- transforms ----------------------------------------------------------

    def local_matrix(self, n: int, t: float | None = None) -> np.ndarray | None:
        """Matrix contributed by node `n`, or None for identity contributors."""
        p = self.node(n).payload
        if isinstance(p, Transform):
            return p.matrix
        if isinstance(p, Motion) and p.track is not None:
            if t is None:
                t = self.eval_time
            return p.track.sample(p.track.times[0] if t is None else t)
        return None

    def _chain(self, m: np.ndarray, n: int, t: float | None) -> np.ndarray:
        local = self.local_matrix(n, t)
        return m if local is None else m @ local

    def cumulative_transform(self, n: int, t: float | None = None) -> np.ndarray:
        """Product of the matrices on the root path of `n`, root side leftmost.

        Motion nodes are evaluated at `t` (default: the workspace's
        ``eval_time``, else each track's first sample).
        """
        m = np.eye(4)
        for k in self.path(n):
            m = self._chain(m, k, t)
        return m

    def world_points(self, n: int, t: float | None = None) -> PointSet:
        geometry = self._geometry(n)
        return apply(self.cumulative_transform(n, t), geometry).with_tag(n)

    def _geometry(self, n: int) -> PointSet:
        p = self.node(n).payload
        if not isinstance(p, Object) or p.geometry is None:
            raise NoGeometry(f"node #{n} has no loaded geometry")
        return p.geometry

    def flatten(self, root: int | None = None, t: float | None = None) -> PointSet:
        """World points of every object below `root` (or in every model), tagged by node id."""
        parts = []
        start = self.models if root is None else [root]
        if root is not None:
            base = self.cumulative_transform(self.nodes[root].parent, t) \
                if self.node(root).parent is not None else np.eye(4)
        else:
            base = np.eye(4)
        stack = [(r, base) for r in reversed(start)]
        while stack:
            n, above = stack.pop()
            m = self._chain(above, n, t)
            node = self.nodes[n]
            p = node.payload
            if isinstance(p, Object) and p.geometry is not None:
                parts.append(apply(m, p.geometry).with_tag(n))
            stack.extend((c, m) for c in reversed(node.children))
        return concat(parts)

    def transform_between(self, a: int, b: int, t: float | None = None) -> np.ndarray:
        """Matrix mapping `a`-local coordinates into `b`-local coordinates."""
        if self.root_of(a) != self.root_of(b):
            raise DifferentModels(f"#{a} and #{b} belong to different models")
        if a == b:
            return np.eye(4)
        return geom.invert(self.cumulative_transform(b, t)) @ self.cumulative_transform(a, t)

    # --- restructuring -------------------------------------------------------

    def reparent(self, n: int, new_parent: int, label: str | None = None,
                 metadata: dict[str, Any] | None = None) -> np.ndarray:
        """Move `n` under `new_parent` without changing any world pose.

        A fresh Transform node carrying the compensation matrix is inserted
        between `new_parent` and `n`; the matrix is returned.
        """
        node = self.node(n)
        self.node(new_parent)
        if self.is_ancestor(n, new_parent):
            raise CycleWouldForm(f"#{n} is an ancestor of #{new_parent}")
        above_old = np.eye(4) if node.parent is None else self.cumulative_transform(node.parent)
        comp = geom.invert(self.cumulative_transform(new_parent)) @ above_old
        self._detach(n)
        meta = {"role": "compensation"}
        meta.update(metadata or {})
        c = self.add(Transform(comp), new_parent,
                     label if label is not None else f"reparent {node.label or '#%d' % n}",
                     metadata=meta)
        self._attach(n, c)
        return comp

    def make_group(self, members: list[int], shared, label: str = "group",
                   metadata: dict[str, Any] | None = None) -> int:
        """Insert Transform(shared) above sibling `members`, keeping world poses."""
        if not members:
            raise NotSiblings("no members given")
        parents = {self.node(m).parent for m in members}
        if len(parents) != 1 or len(set(members)) != len(members):
            raise NotSiblings("members must be distinct children of one parent")
        shared = geom.as_mat4(shared)
        if geom.is_singular(shared):
            raise SingularMatrix("shared matrix is singular")
        (parent,) = parents
        siblings = self.models if parent is None else self.nodes[parent].children
        pos = min(siblings.index(m) for m in members)
        g = self.add(Transform(shared), parent, label, metadata=metadata, index=pos)
        for m in members:
            self.reparent(m, g)
        return g

    def express_in(self, frame: int, label: str | None = None) -> "Workspace":
        """Copy of the workspace with `frame`'s model re-expressed in `frame` coordinates."""
        inv = geom.invert(self.cumulative_transform(frame))
        ws = self.copy()
        root = ws.root_of(frame)
        pos = ws._detach(root)
        top = ws.add(Transform(inv), None,
                     label if label is not None else f"frame of {self.nodes[frame].label or '#%d' % frame}",
                     metadata={"role": "frame", "frame": f"#{frame}"}, index=pos)
        ws._attach(root, top)
        return ws

    # --- cameras -------------------------------------------------------------

    def view_points(self, camera: int, n: int, t: float | None = None) -> PointSet:
        if not 0 <= camera < len(self.cameras):
            raise UnknownCamera(f"no camera {camera}")
        geometry = self._geometry(n)
        m = self.cameras[camera][1] @ self.cumulative_transform(n, t)
        return apply(m, geometry).with_tag(n)

    # --- checks --------------------------------------------------------------

    def validate(self) -> list[Diagnostic]:
        out: list[Diagnostic] = []
        id_counts: dict[int, int] = {}
        for node in self.nodes.values():
            id_counts[node.id] = id_counts.get(node.id, 0) + 1
        for key, node in self.nodes.items():
            if node.id != key:
                kind = "DuplicateId" if id_counts[node.id] > 1 or node.id in self.nodes else "IdMismatch"
                out.append(Diagnostic(kind, key, f"stored under #{key} but claims id #{node.id}"))

        claims: dict[int, list[int | None]] = {k: [] for k in self.nodes}
        for r in self.models:
            if r in claims:
                claims[r].append(None)
            else:
                out.append(Diagnostic("DanglingReference", r, f"model root #{r} does not exist"))
        for key, node in self.nodes.items():
            for c in node.children:
                if c in claims:
                    claims[c].append(key)
                else:
                    out.append(Diagnostic("DanglingReference", key, f"child #{c} does not exist"))
        for key, node in self.nodes.items():
            owners = claims[key]
            if node.parent is not None and node.parent not in self.nodes:
                out.append(Diagnostic("Orphan", key, f"parent #{node.parent} does not exist"))
            elif not owners:
                out.append(Diagnostic("Orphan", key, "not listed as a child or model root"))
            elif owners != [node.parent]:
                listed = ", ".join("root" if o is None else f"#{o}" for o in owners)
                out.append(Diagnostic("LinkMismatch", key,
                                      f"parent field is {node.parent!r} but listed under {listed}"))

        reported: set[frozenset[int]] = set()
        for key in self.nodes:
            chain: list[int] = []
            k = key
            while k is not None and k in self.nodes and k not in chain:
                chain.append(k)
                k = self.nodes[k].parent
            if k is not None and k in chain:
                loop = frozenset(chain[chain.index(k):])
                if loop not in reported:
                    reported.add(loop)
                    members = ", ".join(f"#{m}" for m in sorted(loop))
                    out.append(Diagnostic("Cycle", min(loop), f"parent links loop through {members}"))

        for key, node in self.nodes.items():
            p = node.payload
            if isinstance(p, Transform):
                if not geom.is_affine(p.matrix):
                    out.append(Diagnostic("NotAffine", key, "bottom row is not (0, 0, 0, 1)"))
                elif geom.is_singular(p.matrix):
                    det = np.linalg.det(p.matrix[:3, :3])
                    out.append(Diagnostic("SingularMatrix", key,
                                          f"transform '{node.label}' has determinant {det:.3g}"))
        for i, (label, m) in enumerate(self.cameras):
            if geom.is_singular(m):
                out.append(Diagnostic("SingularMatrix", None, f"camera {i} '{label}' is singular"))
        return out
