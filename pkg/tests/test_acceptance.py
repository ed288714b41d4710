"""Acceptance criteria, one test each.

Every test prints a single ``AC<k> PASS|FAIL ...`` line (visible even under
output capture) and then asserts the same condition.
"""
import time

import numpy as np
import pytest

from inertial_dr.checks import (alpha_zero_suite, dr_oracle_suite, hand_sweep_suite,
                                km_embedding_suite, lyapunov_suite, metric_suite, prox_suite,
                                schedule_region_suite)
from inertial_dr.experiments import (build_clustering_problem, build_heron_problem, cluster_labels,
                                     clustering_instance, gen_half_moons, heron_instance,
                                     heron_subgradient,
                                     heron_objective, reference_solution, rmse, run_primal_dual,
                                     run_subgradient)
from inertial_dr.fixpoint import StopRule, constant_schedule
from inertial_dr.primal_dual import pd_solve

from oracles import clustering_oracle


@pytest.fixture
def verdict(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n{tag} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_ac01_parameter_region(verdict):
    res, dt = timed(schedule_region_suite, 0, 200)
    verdict("AC1", res.passed and dt < 1.0,
            f"{res.checked} triples, worst proof-inequality excess {res.worst:.2e}, {dt:.3f} s"
            + ("" if res.passed else f"; {res.failures[0]}"))


def test_ac02_mu_descent_and_summability(verdict):
    res, dt = timed(lyapunov_suite, (0.0, 0.1, 0.3))
    verdict("AC2", res.passed and dt < 1.0,
            f"{res.checked} steps, worst descent gap {res.worst:.2e}, {dt:.3f} s"
            + ("" if res.passed else f"; {res.failures[0]}"))


def test_ac03_dr_oracle_and_km_embedding(verdict):
    t0 = time.perf_counter()
    oracle = dr_oracle_suite((0.5, 1.0, 2.0), (0.0, 0.2), 1e-8)
    embed = km_embedding_suite(100, seed=0, alpha=0.2, tol=1e-14)
    dt = time.perf_counter() - t0
    verdict("AC3", oracle.passed and embed.passed and dt < 1.0,
            f"max |y*-1| = {oracle.worst:.2e}, max embedding gap {embed.worst:.2e}, {dt:.3f} s"
            + "".join(f"; {m}" for m in oracle.failures[:1] + embed.failures[:1]))


def test_ac04_prox_properties(verdict):
    res, dt = timed(prox_suite, 1000, 0)
    verdict("AC4", res.passed and dt < 5.0,
            f"{res.checked} checks, worst Moreau residual {res.worst:.2e}, {dt:.2f} s"
            + ("" if res.passed else f"; {res.failures[0]}"))


def test_ac05_metric(verdict):
    res, dt = timed(metric_suite, 20, 1000, 0)
    verdict("AC5", res.passed and dt < 5.0,
            f"{res.checked} checks, worst symmetry residual {res.worst:.2e}, {dt:.2f} s"
            + ("" if res.passed else f"; {res.failures[0]}"))


def test_ac06_hand_sweep(verdict):
    res, dt = timed(hand_sweep_suite)
    verdict("AC6", res.passed and dt < 0.1, f"{res.checked} values exact, {dt * 1e3:.1f} ms"
            + ("" if res.passed else f"; {res.failures[0]}"))


HERON_CELLS = [(2, 5), (2, 10), (3, 5), (3, 10)]


@pytest.mark.parametrize("n,m", HERON_CELLS)
def test_ac07_heron_desk_scale(verdict, n, m):
    inst = heron_instance(n, m, seed=0)
    prob = build_heron_problem(inst)
    ref = reference_solution(prob, key=inst.content_hash())
    eps, budget = 1e-5, 100_000
    runs = {"inertial": run_primal_dual(prob, ref, eps, alpha=0.2, max_iter=budget),
            "classical": run_primal_dual(prob, ref, eps, alpha=0.0, max_iter=budget),
            "subgradient": run_subgradient(inst, ref, eps, c=2.0, max_iter=budget)}
    reach = {k: r.converged and r.rmse_trace[-1] <= eps and r.iterations < budget and r.wall_time < 5.0
             for k, r in runs.items()}
    # minimizer agreement, Euclidean norm: each method's best estimate within the same
    # 1e5-iteration budget (primal-dual runs to a 1e-13 step, subgradient for the full budget)
    est = {a: pd_solve(prob, None, constant_schedule(a, relaxation=2.0), StopRule.step(1e-13, budget)).x
           for a in (0.2, 0.0)}
    est["subgradient"] = heron_subgradient(inst, c=2.0, stop=StopRule.iterations(budget)).x
    pts = [ref, *est.values()]
    gap = max(np.linalg.norm(u - v) for u in pts for v in pts)
    ok = all(reach.values()) and gap <= 1e-6
    cells = ", ".join(f"{k} {r.iterations} it/{r.wall_time:.2f} s" for k, r in runs.items())
    verdict(f"AC7[n={n},m={m}]", ok,
            f"{cells}; largest pairwise minimizer distance {gap:.1e} (inertial-classical "
            f"{np.linalg.norm(est[0.2] - est[0.0]):.1e}, subgradient-reference "
            f"{np.linalg.norm(est['subgradient'] - ref):.1e}), "
            f"subgradient objective gap {abs(runs['subgradient'].objective_final - heron_objective(inst, ref)):.1e}")

def test_ac08_clustering_desk_scale(verdict):
    t0 = time.perf_counter()
    pts, truth = gen_half_moons(0, 100, 0.05)
    inst = clustering_instance(pts, p=2, gamma=5.2, K=10, phi=0.5)
    prob = build_clustering_problem(inst)
    ref = reference_solution(prob, key=inst.content_hash())
    eps = 1e-4
    runs = {a: run_primal_dual(prob, ref, eps, alpha=a) for a in (0.0, 0.1, 0.2, 0.3)}
    labels = {a: cluster_labels(r.x, 200, 2) for a, r in runs.items()}
    ref_labels = cluster_labels(ref, 200, 2)
    same = all(np.array_equal(lab, ref_labels) for lab in labels.values())
    two_moons = np.array_equal(ref_labels, truth) or np.array_equal(ref_labels, 1 - truth)
    reached = all(r.converged and r.rmse_trace[-1] <= eps for r in runs.values())
    best = min((0.1, 0.2, 0.3), key=lambda a: runs[a].iterations)
    faster = runs[best].iterations <= runs[0.0].iterations
    dt = time.perf_counter() - t0
    verdict("AC8", reached and same and two_moons and faster and dt < 60.0,
            f"classical {runs[0.0].iterations} it, inertial " +
            ", ".join(f"a={a}: {runs[a].iterations} it" for a in (0.1, 0.2, 0.3)) +
            f"; best a={best}; identical assignments={same}; two-moon partition={two_moons}; {dt:.1f} s")


def test_ac09_alpha_zero_bitwise(verdict):
    res, dt = timed(alpha_zero_suite)
    verdict("AC9", res.passed and dt < 1.0, f"{res.checked} traces bitwise equal, {dt:.3f} s"
            + ("" if res.passed else f"; {res.failures[0]}"))


def test_ac10_micro_instance_oracle(verdict):
    t0 = time.perf_counter()
    pts = np.array([[0.0, 0.0], [1.0, 0.2], [0.1, 2.0]])
    inst = clustering_instance(pts, p=2, gamma=0.4, K=2, phi=0.5)
    x = reference_solution(build_clustering_problem(inst))
    xo, _ = clustering_oracle(pts, inst.edges, inst.weights, inst.gamma, 2)
    gap = float(np.max(np.abs(x - xo)))
    dt = time.perf_counter() - t0
    verdict("AC10", gap <= 1e-5 and dt < 5.0, f"max deviation from conic oracle {gap:.1e}, {dt:.2f} s")
