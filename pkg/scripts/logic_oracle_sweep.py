"""Sweep random premise sets: soundness against the truth table, round-trip
coherence, and how much of the oracle-entailed atom set bounded deduction reaches."""

import argparse
import time

import numpy as np

from reasonlab import logic


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sets", type=int, default=200)
    ap.add_argument("--atoms", type=int, default=4)
    ap.add_argument("--premises", type=int, default=5)
    ap.add_argument("--depths", type=int, nargs="+", default=[1, 2, 3, 6])
    ap.add_argument("--seed", type=int, default=20240601)
    args = ap.parse_args(argv)

    gen = np.random.default_rng(args.seed)
    sets = [logic.random_premise_set(gen, args.atoms, args.premises, 2) for _ in range(args.sets)]
    print(f"{'depth':>5} {'theorems':>9} {'unsound':>8} {'lost':>5} {'atom recall':>12} {'secs':>6}")
    for depth in args.depths:
        t0 = time.perf_counter()
        n_thm = unsound = lost = reached = entailed = 0
        for ps in sets:
            d = logic.deduce(ps, depth)
            n_thm += len(d.theorems)
            unsound += sum(not logic.entails_bruteforce(ps, t.formula) for t in d.theorems)
            again = logic.deduce(logic.reconstruct_premises(d.theorems, ps), depth)
            lost += len(d.formulas - again.formulas)
            if not logic.satisfiable(list(ps)):
                continue
            for name in sorted(set().union(*(logic.atoms(f) for f in ps))):
                if logic.entails_bruteforce(ps, logic.Atom(name)):
                    entailed += 1
                    reached += logic.Atom(name) in d
        recall = reached / entailed if entailed else float("nan")
        print(f"{depth:>5} {n_thm:>9} {unsound:>8} {lost:>5} {recall:>12.3f} {time.perf_counter() - t0:>6.2f}")


if __name__ == "__main__":
    main()
