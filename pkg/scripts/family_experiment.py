"""Can nearest-dataset retrieval tell the synthetic families apart?

Builds a store with one meta-trained dataset per family, then queries it
with fresh samples of every family and prints the confusion counts.

    python scripts/family_experiment.py --n 800 --d 3 --queries 5
"""

import argparse
import tempfile
import time

import numpy as np

from lotus.data import FAMILIES, generate_synthetic
from lotus.meta_store import add_entry, load_store
from lotus.meta_trainer import SearchBudget, search
from lotus.ot import SolverConfig
from lotus.selector import lotus_select


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=800)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--contamination", type=float, default=0.05)
    p.add_argument("--queries", type=int, default=5, help="queries per family")
    p.add_argument("--max-evals", type=int, default=60)
    p.add_argument("--store-seed", type=int, default=1000)
    p.add_argument("--query-seed", type=int, default=7000)
    p.add_argument("--rank", type=int, default=6)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--store", default=None, help="keep the store here (default: temp dir)")
    args = p.parse_args()

    root = args.store or tempfile.mkdtemp(prefix="lotus-families-")
    t0 = time.perf_counter()
    for i, fam in enumerate(FAMILIES):
        ds = generate_synthetic(fam, args.n, args.d, args.contamination, args.store_seed + i)
        res = search(ds.features, ds.labels, SearchBudget(args.max_evals, seed=i),
                     threads=args.threads)
        add_entry(root, ds, res.best, res.best_auc, fam)
        print(f"{fam:18s} {res.best.detector:8s} meta AUC {res.best_auc:.3f}")
    print(f"meta-training {time.perf_counter() - t0:.0f}s, store at {root}")

    store = load_store(root)
    scfg = SolverConfig(rank=args.rank)
    cache = {}
    confusion = np.zeros((len(FAMILIES), len(FAMILIES)), dtype=int)
    for trial in range(args.queries):
        for i, fam in enumerate(FAMILIES):
            q = generate_synthetic(fam, args.n, args.d, args.contamination,
                                   args.query_seed + 10 * trial + i)
            rep = lotus_select(q, store, scfg=scfg, threads=args.threads,
                               measure_cache=cache)
            confusion[i, FAMILIES.index(rep.chosen_id)] += 1
    hits = int(np.trace(confusion))
    print(f"\n{hits}/{confusion.sum()} queries matched their own family "
          f"({time.perf_counter() - t0:.0f}s total)\n")
    short = [f[:8] for f in FAMILIES]
    print("query \\ chosen     " + " ".join(f"{s:>8s}" for s in short))
    for fam, row in zip(FAMILIES, confusion):
        print(f"{fam:18s} " + " ".join(f"{v:8d}" for v in row))


if __name__ == "__main__":
    main()
