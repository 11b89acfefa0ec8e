#!/usr/bin/env python3
"""Convert a Planetoid dataset (Cora, CiteSeer, PubMed) to the canonical layout.

Reads the raw `ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index}` pickles and
writes meta.json, edges.csv, features.csv and labels.csv into OUT_DIR.
Needs numpy and scipy.

    python3 planetoid_to_canonical.py RAW_DIR cora OUT_DIR/cora
"""

import argparse
import json
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load_part(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as f:
        return pickle.load(f, encoding="latin1")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("raw_dir", type=Path)
    ap.add_argument("name", choices=["cora", "citeseer", "pubmed"])
    ap.add_argument("out_dir", type=Path)
    args = ap.parse_args()
    name = args.name

    x, y, tx, ty, allx, ally, graph = (load_part(args.raw_dir, name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_idx = [int(l) for l in (args.raw_dir / f"ind.{name}.test.index").read_text().split()]
    test_sorted = np.sort(test_idx)

    if name == "citeseer":
        # Isolated test nodes are missing from tx/ty; pad with zero rows (class 0).
        full = range(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        tx = tx_ext
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        ty = ty_ext

    features = sp.vstack((allx, tx)).tolil()
    features[test_idx, :] = features[test_sorted, :]
    onehot = np.vstack((ally, ty))
    onehot[test_idx, :] = onehot[test_sorted, :]
    labels = onehot.argmax(axis=1)
    n = features.shape[0]

    edges = set()
    for i, nbrs in graph.items():
        for j in nbrs:
            if i != j and i < n and j < n:
                edges.add((min(i, j), max(i, j)))

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    meta = {"name": name, "num_nodes": n, "feature_dim": features.shape[1], "num_classes": onehot.shape[1]}
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    with open(out / "edges.csv", "w") as f:
        for i, j in sorted(edges):
            f.write(f"{i},{j}\n")
    dense = features.toarray()
    with open(out / "features.csv", "w") as f:
        for row in dense:
            f.write(",".join(repr(float(v)) if v % 1 else str(int(v)) for v in row) + "\n")
    with open(out / "labels.csv", "w") as f:
        f.writelines(f"{int(l)}\n" for l in labels)
    print(f"{name}: {n} nodes, {len(edges)} edges, {meta['feature_dim']} features, {meta['num_classes']} classes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
