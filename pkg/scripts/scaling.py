"""Time constraint-tree extraction and clustering across corpus sizes."""
import argparse
import time

from hiersteer.brt import BrtConfig, cluster
from hiersteer.extract import ExtractConfig, extract_constraint_tree
from hiersteer.metrics import SynthConfig, synth


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="500,1000,2000,5000")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--skip-clustering", action="store_true")
    args = ap.parse_args()

    for n in (int(s) for s in args.sizes.split(",")):
        dpl = max(1, round(n / 9))
        data = synth(SynthConfig(branching=(3, 3), docs_per_leaf=dpl,
                                 vocab=800, seed=args.seed))
        t0 = time.perf_counter()
        extract_constraint_tree(data.corpus, data.kb,
                                ExtractConfig(seed=args.seed))
        t_ext = time.perf_counter() - t0
        line = f"n={len(data.corpus.docs):<6d} extract={t_ext:7.2f}s"
        if not args.skip_clustering:
            t0 = time.perf_counter()
            cluster(data.corpus, lam=0.0,
                    config=BrtConfig(approx=True, approx_neighbors=20,
                                     approx_refresh=200))
            line += f" cluster={time.perf_counter() - t0:7.2f}s"
        print(line, flush=True)


if __name__ == "__main__":
    main()
