"""``xformtree`` command line.

Exit codes: 0 success, 1 domain or usage error, 2 parse or I/O error.
Mutating commands never overwrite their input and stamp every node they
insert with provenance metadata (time, tool version, command line).  Set
``SOURCE_DATE_EPOCH`` for reproducible timestamps.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import shlex
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import geom
from .dpw import FileResolver, lint, read_dpw, save_workspace, to_workspace
from .errors import (
    AmbiguousSelector,
    BadTimesSpec,
    CycleWouldForm,
    FormatError,
    NoGeometry,
    UnknownNode,
    XformTreeError,
)
from .motion import export_animation, static_objects, write_animation
from .pointset import apply, load_geometry, write_xyz
from .registration import IcpParams, chain_register, coarse_then_fine, icp, least_squares_rigid
from .tree import Motion, Object, Transform, Workspace

VERSION = "0.1.0"


class UsageError(XformTreeError):
    pass


@dataclass
class CliConfig:
    strict_resolve: bool = False
    tol: float = 1e-7
    max_iter: int = 100
    gate: float = 10.0
    trim: float = 1.0
    out: str | None = None
    format: str = "dpw"

    def __post_init__(self):
        if not (self.tol > 0 and self.gate > 0 and self.max_iter >= 1):
            raise UsageError("--tol and --gate must be positive and --max-iter at least 1")
        if not 0 < self.trim <= 1:
            raise UsageError("--trim must be in (0, 1]")

    def icp_params(self) -> IcpParams:
        return IcpParams(self.max_iter, self.tol, self.gate, trim_fraction=self.trim)


# --- helpers -----------------------------------------------------------------

def _now() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
            else _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0))
    return when.isoformat()


def _provenance(argv: list[str]) -> dict:
    return {"tool": f"xformtree {VERSION}", "timestamp": _now(),
            "command": shlex.join(["xformtree", *argv])}


def select(ws: Workspace, selector: str) -> int:
    """``#<id>`` or an exact label that must be unique."""
    if selector.startswith("#") and selector[1:].isdigit():
        n = int(selector[1:])
        ws.node(n)
        return n
    hits = [n for n in ws.walk() if ws.nodes[n].label == selector]
    if not hits:
        raise UnknownNode(f"no node labelled {selector!r}")
    if len(hits) > 1:
        raise AmbiguousSelector(f"label {selector!r} matches nodes "
                                + ", ".join(f"#{h}" for h in hits) + "; select by #id")
    return hits[0]


def _load(path: str, strict: bool) -> Workspace:
    p = Path(path)
    doc = read_dpw(p)
    for w in lint(doc):
        print(f"warning: {p}: {w}", file=sys.stderr)
    return to_workspace(doc, FileResolver(p.parent, strict))


def _out_path(cfg: CliConfig, inputs: list[str]) -> Path:
    if not cfg.out:
        raise UsageError("--out is required")
    out = Path(cfg.out)
    for i in inputs:
        if out.exists() and Path(i).exists() and out.resolve() == Path(i).resolve():
            raise UsageError(f"refusing to overwrite input {i}; choose another --out")
    return out


def _write(ws: Workspace, cfg: CliConfig, inputs: list[str], report: dict | None = None) -> Path:
    out = _out_path(cfg, inputs)
    out.parent.mkdir(parents=True, exist_ok=True)
    if cfg.format == "xyz":
        write_xyz(out, ws.flatten())
    elif cfg.format == "json-report":
        out.write_text(json.dumps(report or {"nodes": len(ws)}, indent=2) + "\n")
    else:
        save_workspace(ws, out)
        if report is not None:
            out.with_suffix(".json").write_text(json.dumps(report, indent=2) + "\n")
    return out


def _det(ws: Workspace, n: int) -> float:
    return float(np.linalg.det(ws.cumulative_transform(n)))


def node_type(ws: Workspace, n: int) -> str:
    p = ws.nodes[n].payload
    if isinstance(p, Transform):
        return "trans"
    if isinstance(p, Motion):
        return "motion"
    return p.kind


def parse_times(spec: str) -> list[float]:
    """``start:step:end`` (inclusive) or a comma separated list."""
    try:
        if ":" in spec:
            parts = [float(x) for x in spec.split(":")]
            if len(parts) != 3:
                raise BadTimesSpec(f"expected start:step:end, got {spec!r}")
            start, step, end = parts
            if not all(map(math.isfinite, parts)) or step <= 0 or end < start:
                raise BadTimesSpec(f"need finite start <= end and step > 0 in {spec!r}")
            count = int(math.floor((end - start) / step + 1e-9)) + 1
            return [round(start + k * step, 12) for k in range(count)]
        times = [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise BadTimesSpec(f"cannot read times {spec!r}") from None
    if not times or not all(map(math.isfinite, times)):
        raise BadTimesSpec(f"no usable times in {spec!r}")
    return times


# --- commands ----------------------------------------------------------------

def cmd_info(args, cfg: CliConfig) -> int:
    ws = _load(args.file, cfg.strict_resolve)
    rows = []
    for n in ws.walk():
        node = ws.nodes[n]
        rows.append({"id": n, "type": node_type(ws, n), "label": node.label, "depth": ws.depth(n),
                     "det": _det(ws, n), "children": len(node.children)})
    models = []
    for r in ws.models:
        sub = list(ws.walk(r))
        objs = [k for k in sub if isinstance(ws.nodes[k].payload, Object)]
        pts = sum(len(ws.nodes[k].payload.geometry) for k in objs
                  if ws.nodes[k].payload.geometry is not None)
        models.append({"root": r, "label": ws.nodes[r].label, "nodes": len(sub),
                       "objects": len(objs), "points": pts})
    if cfg.format == "json-report":
        print(json.dumps({"nodes": rows, "models": models,
                          "cameras": [c[0] for c in ws.cameras]}, indent=2))
        return 0
    print(f"{'id':>5}  {'type':<8} {'depth':>5} {'det':>12} {'children':>8}  label")
    for r in rows:
        print(f"{r['id']:>5}  {r['type']:<8} {r['depth']:>5} {r['det']:>12.6g} {r['children']:>8}  {r['label']}")
    for m in models:
        print(f"model #{m['root']} {m['label']!r}: {m['nodes']} nodes, {m['objects']} objects, "
              f"{m['points']} points")
    for k, (label, _) in enumerate(ws.cameras):
        print(f"camera {k} {label!r}")
    return 0


def cmd_validate(args, cfg: CliConfig) -> int:
    ws = _load(args.file, cfg.strict_resolve)
    diags = ws.validate()
    if cfg.format == "json-report":
        print(json.dumps([{"node": d.node, "kind": d.kind, "message": d.message} for d in diags], indent=2))
    else:
        for d in diags:
            print(d)
        if not diags:
            print(f"{args.file}: ok ({len(ws)} nodes)")
    return 1 if diags else 0


def cmd_express(args, cfg: CliConfig) -> int:
    ws = _load(args.file, cfg.strict_resolve)
    frame = select(ws, args.node)
    out_ws = ws.express_in(frame)
    top = out_ws.root_of(frame)
    out_ws.nodes[top].metadata.update(_provenance(args.argv))
    print(f"wrote {_write(out_ws, cfg, [args.file])}")
    return 0


def cmd_reparent(args, cfg: CliConfig) -> int:
    ws = _load(args.file, cfg.strict_resolve)
    n = select(ws, args.node)
    parent = select(ws, args.new_parent)
    comp = ws.reparent(n, parent, metadata=_provenance(args.argv))
    print("compensation:\n" + np.array2string(comp, precision=6, suppress_small=True))
    print(f"wrote {_write(ws, cfg, [args.file])}")
    return 0


def _rough(text: str | None) -> np.ndarray | None:
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError("--rough needs 16 numbers") from None
    if len(vals) != 16:
        raise UsageError(f"--rough needs 16 numbers, got {len(vals)}")
    return geom.as_mat4(vals)


def register_nodes(ws: Workspace, src: int, dst: int, method: str, params: IcpParams,
                   rough: np.ndarray | None = None, move: int | None = None,
                   metadata: dict | None = None) -> dict:
    """Register `src` onto `dst` and hang the moved group under `dst`.

    The moved node `g` defaults to the parent of `src` (its group), so every
    node in that group follows.  The new matrices are recorded as Transform
    nodes between `dst` and `g`; coarse-fine records the fine node above the
    rough one.
    """
    for n in (src, dst):
        p = ws.node(n).payload
        if not isinstance(p, Object) or p.geometry is None:
            raise NoGeometry(f"node #{n} carries no loaded geometry")
    if move is None:
        parent = ws.nodes[src].parent
        move = src if parent is None or ws.is_ancestor(parent, dst) else parent
    elif not ws.is_ancestor(move, src):
        raise UsageError(f"#{move} is not an ancestor of #{src}")
    if ws.is_ancestor(move, dst) and not (move == src == dst):
        raise CycleWouldForm(f"#{dst} lies inside the moved subtree #{move}")
    g_parent = ws.nodes[move].parent
    above = np.eye(4) if g_parent is None else ws.cumulative_transform(g_parent)
    # src in the frame `move` hangs from: locals from `move` down, no inversion
    K = np.eye(4)
    path = ws.path(src)
    for k in path[path.index(move):]:
        local = ws.local_matrix(k)
        if local is not None:
            K = K @ local
    src_pts = apply(K, ws.nodes[src].payload.geometry)
    dst_pts = ws.nodes[dst].payload.geometry
    current = geom.invert(ws.cumulative_transform(dst)) @ above

    if method == "lsq":
        res = least_squares_rigid(src_pts, dst_pts)
        mats = [("registration", res.transform)]
    elif method == "icp":
        res = icp(src_pts, dst_pts, current if rough is None else rough, params)
        mats = [("registration", res.transform)]
    else:
        cf = coarse_then_fine(src_pts, dst_pts, current if rough is None else rough, params)
        res = cf.result
        mats = [("fine", cf.fine), ("rough", cf.rough)]

    meta = {"method": method, "residual_rms": repr(res.residual_rms),
            "iterations": str(res.iterations), "converged": str(res.converged).lower(),
            "src": f"#{src}", "dst": f"#{dst}"}
    meta.update(metadata or {})
    src_label = ws.nodes[src].label or f"#{src}"
    dst_label = ws.nodes[dst].label or f"#{dst}"
    if move == src == dst:
        parent, index = g_parent, None
        siblings = ws.models if parent is None else ws.nodes[parent].children
        index = siblings.index(move)
    else:
        parent, index = dst, None
    ws._detach(move)
    inserted = []
    for k, (role, m) in enumerate(mats):
        n = ws.add(Transform(m), parent, f"{role} {src_label} -> {dst_label}",
                   metadata={"role": role, **meta}, index=index if k == 0 else None)
        inserted.append(n)
        parent = n
    ws._attach(move, parent)
    report = {
        "method": method,
        "src": src, "dst": dst, "moved": move, "inserted": inserted,
        "params": asdict(params) if method != "lsq" else {},
        "residual_rms": res.residual_rms, "iterations": res.iterations,
        "converged": res.converged, "pairs": res.pairs,
        "transform": list(geom.flat(res.transform)),
    }
    if method == "coarse-fine":
        report["rough"] = list(geom.flat(mats[1][1]))
        report["fine"] = list(geom.flat(mats[0][1]))
    return report


def cmd_register(args, cfg: CliConfig) -> int:
    ws = _load(args.file, cfg.strict_resolve)
    src = select(ws, args.src)
    dst = select(ws, args.dst)
    move = None if args.move is None else select(ws, args.move)
    report = register_nodes(ws, src, dst, args.method, cfg.icp_params(), _rough(args.rough),
                            move, _provenance(args.argv))
    report["input"] = args.file
    out = _write(ws, cfg, [args.file], report)
    print(f"residual_rms {report['residual_rms']:.6g} mm after {report['iterations']} iteration(s)")
    print(f"wrote {out}")
    return 0


def cmd_animate(args, cfg: CliConfig) -> int:
    ws = _load(args.file, cfg.strict_resolve)
    n = select(ws, args.node)
    if not isinstance(ws.nodes[n].payload, Motion):
        raise UsageError(f"#{n} is not a motion node")
    times = parse_times(args.times)
    root = n if args.subtree_only else ws.root_of(n)
    frames = export_animation(ws, root, times)
    if not cfg.out:
        raise UsageError("--out is required")
    manifest = write_animation(frames, cfg.out, {
        "source": args.file, "motion_node": n, "root": root,
        "static_nodes": [k for k in static_objects(ws) if ws.is_ancestor(root, k)],
        **_provenance(args.argv)})
    print(f"wrote {len(frames)} frames and {manifest}")
    return 0


def cmd_chain(args, cfg: CliConfig) -> int:
    if len(args.scans) < 2:
        raise UsageError("chain needs at least two scan files")
    scans = [load_geometry(s) for s in args.scans]
    labels = [Path(s).stem for s in args.scans]
    ws = chain_register(scans, cfg.icp_params(), labels=labels)
    prov = _provenance(args.argv)
    objects = [n for n in ws.walk() if isinstance(ws.nodes[n].payload, Object)]
    for n, scan in zip(objects, args.scans):
        p = ws.nodes[n].payload
        path = str(Path(scan).resolve())
        ws.nodes[n].payload = Object(p.geometry, path, path, p.kind)
    for n in ws.walk():
        if isinstance(ws.nodes[n].payload, Transform):
            ws.nodes[n].metadata.update(prov)
    pairs = []
    for n in ws.walk():
        meta = ws.nodes[n].metadata
        if meta.get("role") == "registration":
            pairs.append({"pair": meta["pair"], "residual_rms": float(meta["residual_rms"]),
                          "iterations": int(meta["iterations"]), "converged": meta["converged"] == "true"})
    report = {"scans": list(args.scans), "params": asdict(cfg.icp_params()), "pairs": pairs}
    out = _write(ws, cfg, list(args.scans), report)
    for p in report["pairs"]:
        print(f"pair {p['pair']}: residual_rms {p['residual_rms']:.6g} mm")
    print(f"wrote {out}")
    return 0


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=None,
                      help="fail on missing referenced files")
    mode.add_argument("--lenient", dest="strict", action="store_false",
                      help="load structure even when files are missing")
    common.add_argument("--tol", type=float, default=1e-7, help="ICP convergence RMS delta (mm)")
    common.add_argument("--max-iter", type=int, default=100)
    common.add_argument("--gate", type=float, default=10.0, help="ICP correspondence distance (mm)")
    common.add_argument("--trim", type=float, default=1.0, help="fraction of best ICP pairs kept")
    common.add_argument("--out", help="output file (directory for animate)")
    common.add_argument("--format", choices=("dpw", "xyz", "json-report"), default="dpw")

    ap = argparse.ArgumentParser(prog="xformtree", description="Inspect and edit transformation trees.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", parents=[common], help="print the node table")
    p.add_argument("file")
    p.set_defaults(func=cmd_info, strict_default=False)

    p = sub.add_parser("validate", parents=[common], help="check tree consistency")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate, strict_default=False)

    p = sub.add_parser("express", parents=[common], help="re-express a model in a node's frame")
    p.add_argument("file")
    p.add_argument("node")
    p.set_defaults(func=cmd_express, strict_default=False)

    p = sub.add_parser("reparent", parents=[common], help="move a node keeping world poses")
    p.add_argument("file")
    p.add_argument("node")
    p.add_argument("new_parent")
    p.set_defaults(func=cmd_reparent, strict_default=False)

    p = sub.add_parser("register", parents=[common], help="register one object onto another")
    p.add_argument("file")
    p.add_argument("src")
    p.add_argument("dst")
    p.add_argument("--method", choices=("lsq", "icp", "coarse-fine"), default="icp")
    p.add_argument("--rough", help="initial matrix, 16 numbers row-major")
    p.add_argument("--move", help="node moved with the registration (default: parent of src)")
    p.set_defaults(func=cmd_register, strict_default=True)

    p = sub.add_parser("animate", parents=[common], help="export motion frames")
    p.add_argument("file")
    p.add_argument("node")
    p.add_argument("--times", required=True, help="start:step:end or t1,t2,...")
    p.add_argument("--subtree-only", action="store_true")
    p.set_defaults(func=cmd_animate, strict_default=True)

    p = sub.add_parser("chain", parents=[common], help="register scans pairwise into a nested tree")
    p.add_argument("scans", nargs="*")
    p.set_defaults(func=cmd_chain, strict_default=True)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        strict = args.strict_default if args.strict is None else args.strict
        cfg = CliConfig(strict, args.tol, args.max_iter, args.gate, args.trim, args.out, args.format)
        return args.func(args, cfg)
    except FormatError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except XformTreeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
