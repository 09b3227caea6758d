"""Projected-gradient QP sweep: oracle error, KKT residuals, reconstruction error
and iteration counts per constraint family, plus the step-size stability edge."""

import argparse

import numpy as np
from scipy.optimize import minimize

from reasonlab import opt
from reasonlab.core import is_undefined


def scipy_reference(p):
    bounds = list(zip(p.lo, p.hi)) if p.has_box else None
    cons = [{"type": "ineq", "fun": lambda x: p.b - p.A @ x}] if p.m else []
    res = minimize(lambda x: 0.5 * x @ p.Q @ x + p.c @ x, np.zeros(p.n), jac=lambda x: p.Q @ x + p.c,
                   bounds=bounds, constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 1000})
    return res.x


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--seed", type=int, default=31337)
    args = ap.parse_args(argv)
    gen = np.random.default_rng(args.seed)

    print(f"{'kind':<14} {'max |x-ref|':>12} {'max stat':>10} {'max comp':>10} {'max resolve':>12} {'mean iters':>11}")
    for kind in ("unconstrained", "box", "mixed"):
        err = stat = comp = resolve = 0.0
        iters = []
        for _ in range(args.count):
            p = opt.random_problem(gen, int(gen.integers(1, 9)), kind)
            sol = opt.solve_projected_gradient(p)
            ref = -np.linalg.solve(p.Q, p.c) if kind == "unconstrained" else scipy_reference(p)
            err = max(err, float(np.max(np.abs(sol.x - ref))))
            s, _, c = opt.kkt_residual(p, sol)
            stat, comp = max(stat, s), max(comp, c)
            again = opt.solve_projected_gradient(opt.reconstruct_problem(sol))
            resolve = max(resolve, float(np.linalg.norm(again.x - sol.x)))
            iters.append(sol.iterations)
        print(f"{kind:<14} {err:>12.2e} {stat:>10.2e} {comp:>10.2e} {resolve:>12.2e} {np.mean(iters):>11.1f}")

    print("\nstep scale vs outcome on Q=I, c=(-2, 0):")
    p = opt.QpProblem(np.eye(2), np.array([-2.0, 0.0]))
    for scale in (0.5, 1.0, 1.5, 1.9, 1.99, 2.0, 2.01, 2.2, 3.0):
        out = opt.solve_projected_gradient(p, step=scale, max_iter=200)
        desc = out.reason if is_undefined(out) else f"x={np.round(out.x, 6)} converged={out.converged} iters={out.iterations}"
        print(f"  {scale:>5}: {desc}")


if __name__ == "__main__":
    main()
