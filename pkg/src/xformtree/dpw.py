"""The ``.dpw`` scene format: parser, canonical serializer and tree mapping.

Grammar::

    document := object*
    object   := IDENT '{' (property | object)* '}'
    property := IDENT (STRING | NUMBER | '[' NUMBER* ']')

Identifiers match ``[A-Za-z_][A-Za-z0-9_]*``; strings are double-quoted with
the escapes ``\\"``, ``\\\\``, ``\\n`` and ``\\t``; ``#`` starts a comment
running to the end of the line.  Matrices are 16 numbers in row-major order.
"""

from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Union

import numpy as np

from . import geom
from .errors import (
    DpwSyntaxError,
    MalformedMatrix,
    MalformedString,
    MalformedTransform,
    MissingFile,
    UnbalancedBraces,
    UnexportableGeometry,
)
from .pointset import PointSet, is_supported, load_geometry, write_xyz
from .track import HOLD, read_mot, write_mot
from .tree import Group, Motion, Object, Transform, Workspace

log = logging.getLogger(__name__)

Value = Union[str, float, tuple]

KNOWN_TYPES = ("shell", "volume", "trans", "group", "motion", "camera")
OBJECT_TYPES = ("shell", "volume")
DATA_DIR_ENV = "XFORMTREE_DATA_DIR"

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}
_UNESCAPES = {v: "\\" + k for k, v in _ESCAPES.items()}


@dataclass
class DpwObject:
    type: str
    properties: list[tuple[str, Value]] = field(default_factory=list)
    children: list["DpwObject"] = field(default_factory=list)
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)

    def get(self, key: str, default=None):
        for k, v in self.properties:
            if k == key:
                return v
        return default

    def walk(self) -> Iterator["DpwObject"]:
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass
class DpwDocument:
    roots: list[DpwObject] = field(default_factory=list)

    def walk(self) -> Iterator[DpwObject]:
        for r in self.roots:
            yield from r.walk()


# --- lexer -------------------------------------------------------------------

@dataclass
class _Tok:
    kind: str   # ident, string, number, { } [ ] eof
    text: str
    value: object
    line: int
    col: int


def _tokens(text: str) -> Iterator[_Tok]:
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if c in " \t\r":
            i, col = i + 1, col + 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c in "{}[]":
            yield _Tok(c, c, None, line, col)
            i, col = i + 1, col + 1
            continue
        if c == '"':
            start_line, start_col = line, col
            out = []
            i, col = i + 1, col + 1
            while True:
                if i >= n:
                    raise MalformedString("unterminated string", start_line, start_col)
                c = text[i]
                if c == '"':
                    i, col = i + 1, col + 1
                    break
                if c == "\\":
                    nxt = text[i + 1] if i + 1 < n else ""
                    if nxt not in _ESCAPES:
                        raise MalformedString(f"unknown escape '\\{nxt}'", line, col)
                    out.append(_ESCAPES[nxt])
                    i, col = i + 2, col + 2
                    continue
                out.append(c)
                if c == "\n":
                    line, col = line + 1, 1
                else:
                    col += 1
                i += 1
            yield _Tok("string", "", "".join(out), start_line, start_col)
            continue
        m = _NUMBER.match(text, i)
        if m and (c.isdigit() or c in "+-."):
            s = m.group()
            if m.end() < n and (text[m.end()].isalnum() or text[m.end()] in "_."):
                raise DpwSyntaxError(f"malformed number starting {s!r}", line, col)
            yield _Tok("number", s, float(s), line, col)
            i, col = m.end(), col + len(s)
            continue
        m = _IDENT.match(text, i)
        if m:
            s = m.group()
            yield _Tok("ident", s, s, line, col)
            i, col = m.end(), col + len(s)
            continue
        raise DpwSyntaxError(f"unexpected character {c!r}", line, col)
    yield _Tok("eof", "", None, line, col)


def _describe(tok: _Tok) -> str:
    if tok.kind == "eof":
        return "end of input"
    if tok.kind == "string":
        return "a string"
    return f"'{tok.text}'"


# --- parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.toks = list(_tokens(text))
        self.pos = 0

    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def next(self) -> _Tok:
        tok = self.peek()
        self.pos += 1
        return tok

    def document(self) -> DpwDocument:
        roots = []
        while self.peek().kind != "eof":
            tok = self.peek()
            if tok.kind == "}":
                raise UnbalancedBraces("'}' without matching '{'", tok.line, tok.col)
            if tok.kind != "ident":
                raise DpwSyntaxError(f"expected object type, found {_describe(tok)}", tok.line, tok.col)
            roots.append(self.obj())
        return DpwDocument(roots)

    def obj(self) -> DpwObject:
        head = self.next()
        brace = self.next()
        if brace.kind != "{":
            raise DpwSyntaxError(f"expected '{{' after object type '{head.text}', found {_describe(brace)}",
                                 brace.line, brace.col)
        o = DpwObject(head.text, line=head.line, column=head.col)
        while True:
            tok = self.peek()
            if tok.kind == "}":
                self.next()
                break
            if tok.kind == "eof":
                raise UnbalancedBraces(f"'{{' of '{head.text}' opened here is never closed",
                                       head.line, head.col)
            if tok.kind != "ident":
                raise DpwSyntaxError(f"expected property name, object type or '}}', found {_describe(tok)}",
                                     tok.line, tok.col)
            if self.peek(1).kind == "{":
                o.children.append(self.obj())
            else:
                self.next()
                value = self.value(tok)
                _check(o, tok, value)
                o.properties.append((tok.text, value))
        return o

    def value(self, key: _Tok) -> Value:
        tok = self.next()
        if tok.kind in ("string", "number"):
            return tok.value
        if tok.kind == "[":
            items = []
            while True:
                t = self.next()
                if t.kind == "]":
                    return tuple(items)
                if t.kind != "number":
                    if t.kind == "eof":
                        raise UnbalancedBraces(f"'[' of '{key.text}' is never closed", key.line, key.col)
                    raise DpwSyntaxError(f"expected number or ']' in '{key.text}', found {_describe(t)}",
                                         t.line, t.col)
                items.append(t.value)
        raise DpwSyntaxError(f"expected value or '{{' after '{key.text}', found {_describe(tok)}",
                             tok.line, tok.col)


def _check(o: DpwObject, key: _Tok, v: Value) -> None:
    # called before `v` is appended, so `o.properties` holds the earlier ones
    seen = {k for k, _ in o.properties}
    if key.text == "matrix":
        if not isinstance(v, tuple) or len(v) != 16:
            count = len(v) if isinstance(v, tuple) else 1
            raise MalformedMatrix(f"'{o.type}' matrix has {count} numbers, expected 16", key.line, key.col)
        if o.type == "trans" and "matrix" in seen:
            raise MalformedMatrix("'trans' has more than one matrix", key.line, key.col)
    if key.text == "file" and o.type in OBJECT_TYPES and "file" in seen:
        raise DpwSyntaxError(f"'{o.type}' has more than one file", key.line, key.col)


def parse(text: str) -> DpwDocument:
    return _Parser(text).document()


# --- serializer --------------------------------------------------------------

def _num(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot write non-finite number {x}")
    return f"{x:.17g}"


def _quote(s: str) -> str:
    return '"' + "".join(_UNESCAPES.get(c, c) for c in s) + '"'


def _value(key: str, v: Value, indent: str) -> str:
    if isinstance(v, str):
        return _quote(v)
    if isinstance(v, (tuple, list)):
        nums = [_num(x) for x in v]
        if not nums:
            return "[ ]"
        if key == "matrix" and len(nums) == 16:
            pad = "\n" + indent + " " * len("matrix [ ")
            rows = [" ".join(nums[r * 4:r * 4 + 4]) for r in range(4)]
            return "[ " + pad.join(rows) + " ]"
        return "[ " + " ".join(nums) + " ]"
    return _num(v)


def _emit(o: DpwObject, depth: int, out: list[str]) -> None:
    if not _IDENT.fullmatch(o.type):
        raise ValueError(f"invalid object type {o.type!r}")
    pad = "  " * depth
    out.append(f"{pad}{o.type} {{")
    inner = pad + "  "
    for k, v in o.properties:
        if not _IDENT.fullmatch(k):
            raise ValueError(f"invalid property name {k!r}")
        out.append(f"{inner}{k} {_value(k, v, inner)}")
    for c in o.children:
        _emit(c, depth + 1, out)
    out.append(f"{pad}}}")


def serialize(doc: DpwDocument) -> str:
    """Canonical text: two-space indent, properties before children."""
    out: list[str] = []
    for r in doc.roots:
        _emit(r, 0, out)
    return "\n".join(out) + "\n" if out else ""


# --- files -------------------------------------------------------------------

class FileResolver:
    """Maps ``file`` references to paths.

    Relative references resolve against `base_dir`, then against the
    fallback `data_dir` (default: ``$XFORMTREE_DATA_DIR``).  In strict mode an
    unresolvable reference raises `MissingFile`; otherwise it yields None.
    """

    def __init__(self, base_dir=".", strict: bool = False, data_dir=None):
        self.base_dir = Path(base_dir)
        self.strict = strict
        if data_dir is None:
            data_dir = os.environ.get(DATA_DIR_ENV) or None
        self.data_dir = None if data_dir is None else Path(data_dir)

    def resolve(self, ref: str, line: int = 0, column: int = 0) -> Path | None:
        p = Path(ref)
        candidates = [p] if p.is_absolute() else [self.base_dir / p]
        if not p.is_absolute() and self.data_dir is not None:
            candidates.append(self.data_dir / p)
        for c in candidates:
            if c.is_file():
                return c.resolve()
        if self.strict:
            raise MissingFile(f"cannot find '{ref}'", line or None, column or None)
        return None


_COMPONENTS = ("translation", "rotation", "scale")


def _trans_matrix(o: DpwObject) -> np.ndarray:
    m = o.get("matrix")
    comps = {k: o.get(k) for k in _COMPONENTS if o.get(k) is not None}
    if m is not None and comps:
        raise MalformedTransform(f"line {o.line}: 'trans' gives both a matrix and components")
    if m is not None:
        return np.array(m, dtype=np.float64).reshape(4, 4)
    if not comps:
        raise MalformedTransform(f"line {o.line}: 'trans' has neither matrix nor components")
    try:
        t = np.array(comps.get("translation", (0.0, 0.0, 0.0)), dtype=float).reshape(3)
        rot = comps.get("rotation", (0.0, 0.0, 1.0, 0.0))
        rot = np.array(rot, dtype=float).reshape(4)
        s = comps.get("scale", 1.0)
        s = np.broadcast_to(np.array(s, dtype=float).reshape(-1), (3,))
    except ValueError:
        raise MalformedTransform(f"line {o.line}: malformed transform components") from None
    R = geom.rotation_matrix(rot[:3], math.radians(rot[3])) if rot[3] else np.eye(3)
    return geom.from_trs(geom.Trs.make(t, R, s))


_RESERVED = {
    "trans": {"label", "matrix", *_COMPONENTS},
    "shell": {"label", "file"},
    "volume": {"label", "file"},
    "motion": {"label", "file", "interpolation"},
    "camera": {"label", "matrix"},
}


def _metadata(o: DpwObject) -> dict:
    reserved = _RESERVED.get(o.type, {"label"})
    return {k: v for k, v in o.properties if k not in reserved}


def to_workspace(doc: DpwDocument, resolver: FileResolver | None = None) -> Workspace:
    """Build a workspace; node ids follow document pre-order."""
    resolver = resolver or FileResolver()
    ws = Workspace()

    def build(o: DpwObject, parent: int | None) -> None:
        label = o.get("label", "")
        if not isinstance(label, str):
            label = _value("label", label, "")
        meta = _metadata(o)
        if o.type == "trans":
            payload = Transform(_trans_matrix(o))
        elif o.type in OBJECT_TYPES:
            ref = o.get("file")
            geometry, source = None, None
            if ref is not None:
                path = resolver.resolve(str(ref), o.line, o.column)
                if path is not None:
                    source = str(path)
                    if is_supported(path):
                        geometry = load_geometry(path)
            payload = Object(geometry, None if ref is None else str(ref), source, o.type)
        elif o.type == "group":
            payload = Group()
        elif o.type == "motion":
            ref = o.get("file")
            interp = o.get("interpolation", HOLD)
            track, source = None, None
            if ref is not None:
                path = resolver.resolve(str(ref), o.line, o.column)
                if path is not None:
                    source = str(path)
                    track = read_mot(path, str(interp))
            payload = Motion(track, None if ref is None else str(ref), source)
            if track is None and "interpolation" in {k for k, _ in o.properties}:
                meta["interpolation"] = interp
        else:
            log.warning("line %d: unknown object type '%s' kept as a group", o.line, o.type)
            payload = Group(kind=o.type)
        n = ws.add(payload, parent, label, metadata=meta)
        for c in o.children:
            if c.type == "camera":
                raise MalformedTransform(f"line {c.line}: 'camera' is only allowed at top level")
            build(c, n)

    for r in doc.roots:
        if r.type == "camera":
            m = r.get("matrix")
            if m is None:
                raise MalformedTransform(f"line {r.line}: 'camera' needs a matrix")
            ws.add_camera(np.array(m, dtype=float).reshape(4, 4), str(r.get("label", "")))
        else:
            build(r, None)
    return ws


def _meta_value(v) -> Value:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float, np.floating, np.integer)):
        return float(v)
    if isinstance(v, (tuple, list, np.ndarray)):
        return tuple(float(x) for x in np.asarray(v, dtype=float).reshape(-1))
    return str(v)


def _slug(label: str) -> str:
    s = re.sub(r"[^A-Za-z0-9]+", "_", label).strip("_").lower()
    return s or "node"


def from_workspace(ws: Workspace, base_dir=None, payloads: dict | None = None) -> DpwDocument:
    """Document describing `ws`.

    File references are kept (re-expressed relative to `base_dir` when the
    resolved source is known).  In-memory geometry and tracks get a generated
    file name and are put into `payloads` (name -> PointSet or MotionTrack);
    a payload shared by several nodes is named and stored once.
    """
    names: dict[int, str] = {}
    used: set[str] = set()

    def ref_for(payload, n: int, suffix: str, data) -> str:
        if payload.file is not None:
            if payload.source is not None and base_dir is not None:
                return Path(os.path.relpath(payload.source, base_dir)).as_posix()
            return payload.file
        if data is None:
            raise UnexportableGeometry(f"node #{n} has neither a file reference nor data")
        if payloads is None:
            raise UnexportableGeometry(f"node #{n} holds in-memory data and no payload store was given")
        key = id(data)
        if key not in names:
            name = f"{_slug(ws.nodes[n].label)}_{n}{suffix}"
            while name in used:
                name = "_" + name
            used.add(name)
            names[key] = name
            payloads[name] = data
        return names[key]

    def build(n: int) -> DpwObject:
        node = ws.nodes[n]
        p = node.payload
        props: list[tuple[str, Value]] = []
        if node.label:
            props.append(("label", node.label))
        if isinstance(p, Transform):
            otype = "trans"
            props.append(("matrix", geom.flat(p.matrix)))
        elif isinstance(p, Object):
            otype = p.kind
            props.append(("file", ref_for(p, n, ".xyz", p.geometry)))
        elif isinstance(p, Motion):
            otype = "motion"
            if p.track is not None or p.file is not None:
                props.append(("file", ref_for(p, n, ".mot", p.track)))
            if p.track is not None and p.track.interpolation != HOLD:
                props.append(("interpolation", p.track.interpolation))
        else:
            otype = p.kind
        reserved = _RESERVED.get(otype, {"label"})
        for k, v in node.metadata.items():
            if otype == "motion" and k == "interpolation" and p.track is None:
                props.append((k, _meta_value(v)))
                continue
            if k in reserved:
                raise ValueError(f"node #{n}: metadata key '{k}' clashes with a format property")
            if not _IDENT.fullmatch(k):
                raise ValueError(f"node #{n}: metadata key {k!r} is not an identifier")
            props.append((k, _meta_value(v)))
        return DpwObject(otype, props, [build(c) for c in node.children])

    roots = [build(r) for r in ws.models]
    for label, m in ws.cameras:
        props = [("label", label)] if label else []
        roots.append(DpwObject("camera", props + [("matrix", geom.flat(m))]))
    return DpwDocument(roots)


def lint(doc: DpwDocument) -> list[str]:
    """Portability warnings that do not stop loading."""
    out = []
    for o in doc.walk():
        ref = o.get("file")
        if isinstance(ref, str) and (Path(ref).is_absolute() or re.match(r"^[A-Za-z]:[\\/]", ref)):
            out.append(f"line {o.line}: absolute file path '{ref}' will not travel with the archive")
        if o.type not in KNOWN_TYPES:
            out.append(f"line {o.line}: unknown object type '{o.type}'")
    return out


def read_dpw(path) -> DpwDocument:
    return parse(Path(path).read_text())


def load_dpw(path, strict: bool = False, data_dir=None) -> Workspace:
    path = Path(path)
    return to_workspace(read_dpw(path), FileResolver(path.parent, strict, data_dir))


def save_workspace(ws: Workspace, path) -> list[Path]:
    """Write `ws` to `path` with in-memory payloads beside it; returns files written."""
    path = Path(path)
    base = path.parent
    base.mkdir(parents=True, exist_ok=True)
    payloads: dict = {}
    text = serialize(from_workspace(ws, base, payloads))
    written = []
    for name, data in payloads.items():
        target = base / name
        if isinstance(data, PointSet):
            write_xyz(target, data)
        else:
            write_mot(target, data)
        written.append(target)
    path.write_text(text)
    written.append(path)
    return written
