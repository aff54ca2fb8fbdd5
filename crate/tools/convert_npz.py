#!/usr/bin/env python3
"""Convert a graph dataset stored as .npz into a graphvq data bundle.

The bundle format consumed by the `graphvq` CLI is a directory with:

  edges.tsv     one undirected edge per line: "<u>\t<v>" (node ids, 0-based)
  features.bin  8-byte header (N, D as little-endian uint32), then N*D
                little-endian float32 values, row-major
  labels.tsv    one class id per line, node order
  meta.json     {"dataset": <name>, "num_classes": <K>}

Optional split files (passed to the CLI via the config) are JSON arrays of
node ids.

Two .npz layouts are recognized:

  * gnn-benchmark / CPF style: adj_matrix stored as CSR parts
    (adj_data, adj_indices, adj_indptr, adj_shape) plus either a dense
    attr_matrix or CSR attr_* parts, and a labels vector.
  * generic: edges (E x 2 int array), features (N x D float array),
    labels (N int array).

Usage:
  python tools/convert_npz.py cora.npz data/cora --name cora
"""

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np


def csr_from_parts(data, indices, indptr, shape):
    from scipy.sparse import csr_matrix

    return csr_matrix((data, indices, indptr), shape=tuple(shape))


def load_npz(path):
    f = np.load(path, allow_pickle=True)
    keys = set(f.keys())

    if {"adj_data", "adj_indices", "adj_indptr", "adj_shape"} <= keys:
        adj = csr_from_parts(f["adj_data"], f["adj_indices"], f["adj_indptr"], f["adj_shape"])
        coo = adj.tocoo()
        edges = np.stack([coo.row, coo.col], axis=1)
        if {"attr_data", "attr_indices", "attr_indptr", "attr_shape"} <= keys:
            feats = csr_from_parts(
                f["attr_data"], f["attr_indices"], f["attr_indptr"], f["attr_shape"]
            ).toarray()
        elif "attr_matrix" in keys:
            feats = np.asarray(f["attr_matrix"])
        else:
            sys.exit("error: no attr_matrix or attr_* CSR parts in the archive")
        labels = np.asarray(f["labels"]).reshape(-1)
        return edges, feats, labels

    if {"edges", "features", "labels"} <= keys:
        return (
            np.asarray(f["edges"]).reshape(-1, 2),
            np.asarray(f["features"]),
            np.asarray(f["labels"]).reshape(-1),
        )

    sys.exit(f"error: unrecognized .npz layout; keys present: {sorted(keys)}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("input", help="path to the .npz archive")
    ap.add_argument("output", help="bundle directory to create")
    ap.add_argument("--name", default=None, help="dataset name for meta.json (default: input stem)")
    args = ap.parse_args()

    edges, feats, labels = load_npz(args.input)
    n, d = feats.shape
    if labels.shape[0] != n:
        sys.exit(f"error: {labels.shape[0]} labels for {n} nodes")
    if labels.min() < 0:
        sys.exit("error: negative class ids")
    num_classes = int(labels.max()) + 1

    # undirected, deduplicated, no self-loops
    pairs = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            continue
        if not (0 <= u < n and 0 <= v < n):
            sys.exit(f"error: edge ({u},{v}) out of range for {n} nodes")
        pairs.add((min(u, v), max(u, v)))

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "edges.tsv", "w") as fh:
        for u, v in sorted(pairs):
            fh.write(f"{u}\t{v}\n")
    with open(out / "features.bin", "wb") as fh:
        fh.write(struct.pack("<II", n, d))
        fh.write(np.ascontiguousarray(feats, dtype="<f4").tobytes())
    with open(out / "labels.tsv", "w") as fh:
        for c in labels:
            fh.write(f"{int(c)}\n")
    name = args.name or Path(args.input).stem
    with open(out / "meta.json", "w") as fh:
        json.dump({"dataset": name, "num_classes": num_classes}, fh)
        fh.write("\n")

    print(f"wrote {out}: {n} nodes, {len(pairs)} edges, {d} features, {num_classes} classes")


if __name__ == "__main__":
    main()
