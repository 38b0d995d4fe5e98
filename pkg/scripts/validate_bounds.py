"""Compare Monte Carlo attack frequencies with exact binomial tails and Hoeffding bounds."""
import argparse

from qds import adversary
from qds.rng import derive
from qds.security import forge_bound, honest_abort_bound, repudiation_bound, thresholds


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--e", type=float, default=0.0108)
    parser.add_argument("--p-e", type=float, default=0.262)
    parser.add_argument("--lengths", default="100,200,500,1000")
    parser.add_argument("--trials", type=int, default=10**6)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=4)
    args = parser.parse_args()

    th = thresholds(args.e, args.p_e)
    print(f"s_a = {th.s_a:.4f}  s_v = {th.s_v:.4f}")
    print(f"{'attack':<12} {'L':>5} {'MC':>10} {'exact':>10} {'Hoeffding':>10}")
    for L in (int(x) for x in args.lengths.split(",")):
        seed = derive(args.seed, L)
        honest = adversary.simulate_honest_abort(args.e, L, th.s_a, args.trials, seed, args.workers)
        forge = adversary.simulate_forge(args.p_e, L, th.s_v, args.trials, seed, args.workers)
        grid = adversary.repudiation_grid()
        exact_rep = [adversary.exact_repudiation_probability(L, *g.combined_rates(args.e), th.s_a, th.s_v)
                     for g in grid]
        strongest = grid[max(range(len(grid)), key=exact_rep.__getitem__)]
        rep = adversary.simulate_repudiation(args.e, L, th.s_a, th.s_v, strongest, args.trials, seed,
                                             workers=args.workers)
        rows = [
            ("honest", honest.frequency, adversary.exact_rejection_probability(L, args.e, L * th.s_a),
             honest_abort_bound(L, th.s_a, args.e)),
            ("forge", forge.frequency, adversary.exact_acceptance_probability(L, args.p_e, L * th.s_v),
             forge_bound(L, th.s_v, args.p_e)),
            ("repudiation", rep.frequency, max(exact_rep), repudiation_bound(L, th.s_a, th.s_v)),
        ]
        for name, mc, exact, bound in rows:
            print(f"{name:<12} {L:>5} {mc:>10.3e} {exact:>10.3e} {bound:>10.3e}")


if __name__ == "__main__":
    main()
