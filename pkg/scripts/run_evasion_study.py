#!/usr/bin/env python3
"""Evasion study: measure how rename, split, and combine transformations
change classification of a forest trained on the untouched corpus.

Usage: python scripts/run_evasion_study.py --sites 60
"""

import argparse
import re
import sys

import numpy as np

from linkscrub import evasion, forest
from linkscrub.features import (FEATURE_NAMES, REQUEST_LEVEL_FEATURES,
                                features_for_graph, vector_to_array)
from linkscrub.graph import build_full_graph
from linkscrub.synthetic import SyntheticConfig, generate_synthetic
from linkscrub.urls import DecorationId

SUFFIX = re.compile(r"^(.*)_(\d+)$")


def matrix(traces, planted, min_len):
    X, y, meta = [], [], []
    for t in traces:
        g = build_full_graph(t, min_len=min_len)
        for node_id, fv in features_for_graph(g):
            node = g.nodes[node_id]
            dec_id = node.attrs["decoration"].id
            lab = planted.get(dec_id)
            if lab is None:
                # split evasion appends _<i> to the key; inherit the label
                m = SUFFIX.match(dec_id.key)
                if m:
                    lab = planted.get(
                        DecorationId(dec_id.site, dec_id.fqdn, m.group(1)))
            if lab not in ("ATS", "NonATS"):
                continue
            X.append(vector_to_array(fv))
            y.append(int(lab == "ATS"))
            meta.append((dec_id, node.attrs["kind"], node.attrs["request"]))
    return np.array(X), np.array(y), meta


def accuracy(model, X, y, idx):
    got = (forest.predict_scores(model, X[idx]) >= 0.5).astype(int)
    return float(np.mean(got == y[idx]))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sites", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trees", type=int, default=100)
    args = ap.parse_args(argv)

    cfg = SyntheticConfig(sites=args.sites, seed=args.seed,
                          encodings=("plain", "base64", "sha256"))
    traces, planted = generate_synthetic(cfg)
    fc = forest.ForestConfig(tree_count=args.trees, seed=args.seed)

    # rename: positions shuffle, values stay; full-feature model
    X, y, meta = matrix(traces, planted, min_len=8)
    keep = forest.balance(y, seed=args.seed)
    model = forest.train(X[keep], y[keep], fc, FEATURE_NAMES)
    all_idx = np.arange(len(y))
    Xr, yr, _ = matrix(evasion.evade_rename(traces, seed=args.seed + 1),
                       planted, min_len=8)
    print(f"baseline accuracy        {accuracy(model, X, y, all_idx):.4f} "
          f"(n={len(y)})")
    print(f"after rename             "
          f"{accuracy(model, Xr, yr, np.arange(len(yr))):.4f} (n={len(yr)})")

    # split: value-length pre-processing disabled so chunks stay visible
    X0, y0, meta0 = matrix(traces, planted, min_len=0)
    keep0 = forest.balance(y0, seed=args.seed)
    model0 = forest.train(X0[keep0], y0[keep0], fc, FEATURE_NAMES)
    qf = np.array([i for i, (_d, kind, _r) in enumerate(meta0)
                   if kind in ("query", "fragment")])
    Xs, ys, metas = matrix(evasion.evade_split(traces), planted, min_len=0)
    qfs = np.array([i for i, (_d, kind, _r) in enumerate(metas)
                    if kind in ("query", "fragment")])
    base = accuracy(model0, X0, y0, qf)
    after = accuracy(model0, Xs, ys, qfs)
    print(f"split: query/fragment    {base:.4f} -> {after:.4f} "
          f"(drop {100 * (base - after):.1f}pt)")

    # combine: fall back to request-level features only
    ridx = [FEATURE_NAMES.index(n) for n in REQUEST_LEVEL_FEATURES]
    rmodel = forest.train(X[keep][:, ridx], y[keep], fc,
                          REQUEST_LEVEL_FEATURES)
    ats_requests = {req for (dec_id, _k, req), lab
                    in zip(meta, (y == 1)) if lab}
    detected = total = 0
    for t in evasion.evade_combine(traces):
        g = build_full_graph(t)
        for node_id, fv in features_for_graph(g):
            node = g.nodes[node_id]
            if node.attrs["request"] not in ats_requests:
                continue
            x = np.array([fv[n] for n in REQUEST_LEVEL_FEATURES])
            label, _ = forest.predict(rmodel, x)
            total += 1
            detected += int(label == forest.ATS_CLASS)
    print(f"combine: request-level detection {detected}/{total} "
          f"({100 * detected / max(1, total):.1f}%)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
