"""Reassemble a ring of overlapping surface crops by chained pairwise ICP.

Sweeps the error of the rough pairwise estimates and reports, per level,
how many random rings reassemble below the tolerance.

    python3 scripts/ring_chain.py --trials 10 --rough 0.5 1 2
"""

import argparse
import math
from dataclasses import dataclass, field

import numpy as np

from xformtree import synthetic
from xformtree.errors import XformTreeError
from xformtree.registration import IcpParams, chain_register


@dataclass
class Config:
    trials: int = 10
    n_crops: int = 6
    width_deg: float = 100.0
    trim: float = 0.35
    tol_mm: float = 1e-3
    rough_levels: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])  # degrees, and mm


def reassembly_error(rf, params) -> float:
    ws = chain_register(rf.scans, params, inits=rf.rough)
    d = ws.flatten().xyz - np.vstack([w.xyz for w in rf.world])
    return math.sqrt(np.mean(np.sum(d * d, axis=1)))


def run(cfg: Config) -> None:
    params = IcpParams(max_iterations=300, trim_fraction=cfg.trim)
    print(f"{cfg.n_crops} crops of {cfg.width_deg:g} deg, trim {cfg.trim}, {cfg.trials} rings per level")
    print(f"{'rough':>8} {'ok':>4} {'median RMS':>12} {'worst RMS':>12}")
    for level in cfg.rough_levels:
        errs = []
        for seed in range(cfg.trials):
            rng = np.random.default_rng(seed)
            rf = synthetic.ring_fixture(rng, cfg.n_crops, cfg.width_deg, math.radians(level), level)
            try:
                errs.append(reassembly_error(rf, params))
            except XformTreeError:
                errs.append(math.inf)
        errs = np.array(errs)
        ok = int(np.sum(errs < cfg.tol_mm))
        print(f"{level:>8g} {ok:>4} {np.median(errs):>12.2e} {np.max(errs):>12.2e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=Config.trials)
    ap.add_argument("--crops", type=int, default=Config.n_crops)
    ap.add_argument("--width", type=float, default=Config.width_deg)
    ap.add_argument("--trim", type=float, default=Config.trim)
    ap.add_argument("--rough", type=float, nargs="+", default=None,
                    help="rough estimate errors to try (degrees and mm)")
    a = ap.parse_args()
    cfg = Config(a.trials, a.crops, a.width, a.trim)
    if a.rough:
        cfg.rough_levels = a.rough
    run(cfg)
