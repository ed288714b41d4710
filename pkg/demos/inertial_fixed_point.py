"""Inertial Krasnoselskii-Mann on a plane rotation.

A rotation is nonexpansive with the origin as its only fixed point; plain
iteration of it never converges, relaxed iteration does. The run also prints
how the step bound shrinks as the inertial weight grows.
"""
import numpy as np

from inertial_dr.fixpoint import StopRule, best_delta, constant_schedule, km_solve, validate_schedule


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return lambda x: R @ x


def main():
    T = rotation(1.0)
    for alpha in (0.0, 0.1, 0.2, 0.3):
        delta = best_delta(alpha, 1e-6)
        lam_max = validate_schedule(alpha, 1e-6, delta)
        lam = min(0.5, lam_max)
        res = km_solve(T, [1.0, 0.0], sched=constant_schedule(alpha, lam=lam),
                       stop=StopRule.step(1e-10, 100_000))
        print(f"alpha={alpha:.1f}: lambda_max={lam_max:.4f}, "
              f"lambda={lam:.3f}, {res.iterations} iterations, |x|={np.linalg.norm(res.x):.1e}")


if __name__ == "__main__":
    main()
