#!/usr/bin/env python3
"""Regenerate the frozen sparse-coding oracle table used by the acceptance gate.

Runs an independent fixed-step (1e-4) projected-gradient descent for 1e6
iterations on each of the 100 seeded instances, batched across instances by
zero-padding to a common shape (padding stays exactly zero from the H = 0
start).  A trailing block of extra iterations verifies convergence before the
objectives are written to tests/data/sparse_code_oracle.json.

Usage: python3 scripts/gen_sparse_coding_oracle.py
"""

import json
import pathlib
import sys
import time

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "tests"))
from helpers import sparse_coding_instances  # noqa: E402

STEP = 1e-4
ITERS = 1_000_000
CHECK_ITERS = 200_000
OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data" / "sparse_code_oracle.json"


def batched_objectives(instances, iters):
    count = len(instances)
    dmax = max(X.shape[0] for X, _, _ in instances)
    nmax = max(X.shape[1] for X, _, _ in instances)
    rmax = max(W.shape[1] for _, W, _ in instances)
    Xb = np.zeros((count, dmax, nmax))
    Wb = np.zeros((count, dmax, rmax))
    lams = np.zeros((count, 1, 1))
    for i, (X, W, lam) in enumerate(instances):
        Xb[i, :X.shape[0], :X.shape[1]] = X
        Wb[i, :W.shape[0], :W.shape[1]] = W
        lams[i, 0, 0] = lam
    gram = np.einsum("idr,ids->irs", Wb, Wb)
    wx = np.einsum("idr,idn->irn", Wb, Xb)
    H = np.zeros((count, rmax, nmax))
    for _ in range(iters):
        grad = 2.0 * (np.einsum("irs,isn->irn", gram, H) - wx) + lams
        H = np.maximum(H - STEP * grad, 0.0)
    objectives = []
    for i, (X, W, lam) in enumerate(instances):
        h = H[i, :W.shape[1], :X.shape[1]]
        resid = X - W @ h
        objectives.append(float(np.sum(resid * resid)) + lam * float(np.abs(h).sum()))
    return H, np.array(objectives)


def main():
    instances = sparse_coding_instances()
    t0 = time.time()
    H, objectives = batched_objectives(instances, ITERS)
    # convergence check: extra iterations must not move any objective much
    count = len(instances)
    dmax = max(X.shape[0] for X, _, _ in instances)
    nmax = max(X.shape[1] for X, _, _ in instances)
    rmax = max(W.shape[1] for _, W, _ in instances)
    Xb = np.zeros((count, dmax, nmax))
    Wb = np.zeros((count, dmax, rmax))
    lams = np.zeros((count, 1, 1))
    for i, (X, W, lam) in enumerate(instances):
        Xb[i, :X.shape[0], :X.shape[1]] = X
        Wb[i, :W.shape[0], :W.shape[1]] = W
        lams[i, 0, 0] = lam
    gram = np.einsum("idr,ids->irs", Wb, Wb)
    wx = np.einsum("idr,idn->irn", Wb, Xb)
    for _ in range(CHECK_ITERS):
        grad = 2.0 * (np.einsum("irs,isn->irn", gram, H) - wx) + lams
        H = np.maximum(H - STEP * grad, 0.0)
    drift = []
    for i, (X, W, lam) in enumerate(instances):
        h = H[i, :W.shape[1], :X.shape[1]]
        resid = X - W @ h
        drift.append(abs(float(np.sum(resid * resid))
                         + lam * float(np.abs(h).sum()) - objectives[i]))
    print(f"elapsed {time.time() - t0:.0f}s; max objective drift over "
          f"{CHECK_ITERS} extra iterations: {max(drift):.3g}")
    if max(drift) > 2e-5:
        raise SystemExit("oracle has not converged; raise ITERS")
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({
        "step": STEP,
        "iterations": ITERS,
        "objectives": [repr(float(v)) for v in objectives],
    }, indent=1))
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
