"""Generalized Heron problem: a point in the unit ball closest (in sum of
distances) to a handful of boxes.

Compares the inertial and classical primal-dual runs with a diminishing-step
subgradient baseline.
"""
from inertial_dr.experiments import (build_heron_problem, heron_instance, heron_objective,
                                     reference_solution, run_primal_dual, run_subgradient)


def main(n=2, m=5, eps=1e-5):
    inst = heron_instance(n, m, seed=0)
    prob = build_heron_problem(inst)
    ref = reference_solution(prob, key=inst.content_hash())
    print(f"n={n}, m={m}: reference objective {heron_objective(inst, ref):.10f}")

    runs = [run_primal_dual(prob, ref, eps, alpha=0.2, tag="inertial"),
            run_primal_dual(prob, ref, eps, alpha=0.0, tag="classical"),
            run_subgradient(inst, ref, eps, c=2.0, time_limit=30.0)]
    for rep in runs:
        print(f"{rep.algorithm_tag:>12}: {rep.iterations:6d} iterations, {rep.wall_time:.2f} s, "
              f"objective {rep.objective_final:.10f}")


if __name__ == "__main__":
    main()
