#!/usr/bin/env python3
"""End-to-end pipeline on a synthetic corpus: generate traces, build graphs,
extract features, cross-validate, train, emit a filter list, and sanitize a
few sample request URLs.

Usage: python scripts/run_pipeline.py --sites 60 --out /tmp/linkscrub-run
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from linkscrub import filters, forest
from linkscrub.features import FEATURE_NAMES, features_for_graph, vector_to_array
from linkscrub.graph import build_full_graph
from linkscrub.synthetic import SyntheticConfig, generate_synthetic, write_corpus
from linkscrub.urls import sanitize


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sites", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--encodings", default="plain,base64,sha256")
    ap.add_argument("--out", type=Path, default=None,
                    help="also write the corpus files here")
    args = ap.parse_args(argv)

    cfg = SyntheticConfig(sites=args.sites, seed=args.seed,
                          encodings=tuple(args.encodings.split(",")))
    t0 = time.perf_counter()
    traces, planted = generate_synthetic(cfg)
    if args.out is not None:
        write_corpus(cfg, args.out)
        print(f"corpus written to {args.out}")

    X, y, meta = [], [], []
    for t in traces:
        g = build_full_graph(t)
        for node_id, fv in features_for_graph(g):
            node = g.nodes[node_id]
            lab = planted.get(node.attrs["decoration"].id)
            if lab not in ("ATS", "NonATS"):
                continue
            X.append(vector_to_array(fv))
            y.append(int(lab == "ATS"))
            meta.append((node.attrs["decoration"].id, node.attrs["kind"]))
    X = np.array(X)
    y = np.array(y)
    print(f"{len(traces)} traces, {len(y)} labeled decorations "
          f"({int(y.sum())} ATS) in {time.perf_counter() - t0:.1f}s")

    fc = forest.ForestConfig(tree_count=args.trees, seed=args.seed)
    report = forest.cross_validate(X, y, fc, FEATURE_NAMES, k=args.folds,
                                   seed=args.seed,
                                   kinds=[k for _d, k in meta])
    print(report.to_text())

    keep = forest.balance(y, seed=args.seed)
    model = forest.train(X[keep], y[keep], fc, FEATURE_NAMES)
    for name, pct in forest.feature_importance(model, X[:2000])[:10]:
        print(f"importance {name:<28} {pct:6.2f}%")

    scores = forest.predict_scores(model, X)
    preds = [filters.Prediction(dec_id, kind, float(s))
             for (dec_id, kind), s in zip(meta, scores)]
    rules = filters.emit_filter_list(preds, threshold=0.5)
    print(f"{len(rules)} filter rules")

    shown = 0
    for t in traces:
        for ev in t.events:
            if ev.kind != "request" or shown >= 3:
                continue
            url = ev.payload["url"]
            out = sanitize(url, t.site, rules, seed=args.seed)
            if out != url:
                print(f"  {url}\n  -> {out}")
                shown += 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
