"""Time the numpy and compiled kernels on the same inputs.

    python benchmarks/bench_kernels.py [--repeat N] [--duration SECONDS]
"""

import argparse
import timeit

import numpy as np

from legged_inekf._kernels import available_backends
from legged_inekf.kinematics import biped_legs
from legged_inekf.lie import exp_so3
from legged_inekf.simulator import ScenarioConfig, build_events, generate_truth, synthesize_sensors
from legged_inekf.state import GRAVITY, NoiseConfig, RobotState, default_initial_covariance


def kernel_cases(kb):
    rng = np.random.default_rng(0)
    s = RobotState(R=exp_so3(rng.normal(size=3)), v=rng.normal(size=3), p=rng.normal(size=3),
                   R_c=exp_so3([0.1, -0.2, 0.3]), p_c=[0.15, 0.02, 0.1])
    x0 = s.to_flat()
    P0 = default_initial_covariance()
    q = np.ascontiguousarray(NoiseConfig().process_blocks())
    w, a = rng.normal(size=3), rng.normal(size=3)
    y = s.R.T @ s.v
    Nf = 1e-3 * np.eye(3)
    Cv, Cw = 1e-3 * np.eye(3), 4e-4 * np.eye(3)
    buf, meta = np.zeros((5, 6)), np.zeros(2, dtype=np.int64)
    smp = rng.normal(size=6)

    def propagate():
        kb.propagate(x0.copy(), P0.copy(), w, a, 1.25e-3, GRAVITY, q)

    def kinematic():
        kb.kinematic_update(x0.copy(), P0.copy(), y, Nf, 30.1, True)

    def camera():
        kb.camera_update(x0.copy(), P0.copy(), y, w, Cv, Cw, False, 30.1, False)

    def tuner():
        kb.tuner_push(buf, meta, smp, 1e-8)

    return {"propagate": propagate, "kinematic_update": kinematic, "camera_update": camera, "tuner_push": tuner}


def full_run(kb, events, noise):
    times, kinds, data, active, _ = events
    n = times.size
    x = RobotState(R_c=exp_so3([0.1, -0.2, 0.3]), p_c=[0.15, 0.02, 0.1]).to_flat()
    P = default_initial_covariance()
    n_rec = int(np.count_nonzero((kinds == 2) | ((kinds == 1) & (active != 0))))
    out = (np.empty(n, np.int8), np.empty(n), np.empty((n, 3)), np.empty((n_rec, 33)), np.empty((n_rec, 21)))
    kb.run_events(
        x, P, np.array([times[0], 0.0]), np.zeros(6), times, kinds, data, active,
        np.ascontiguousarray(noise.process_blocks()), GRAVITY, noise.cov_n_f, noise.cov_n_vc, noise.cov_n_omega_c,
        30.1, True, True, False, np.zeros((5, 6)), np.zeros(2, dtype=np.int64), 1e-8, 0.05, 1e6, *out,
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000, help="calls per micro-benchmark")
    ap.add_argument("--duration", type=float, default=10.0, help="simulated seconds for the full-run benchmark")
    args = ap.parse_args()

    backends = available_backends()
    cfg = ScenarioConfig(duration=args.duration)
    legs = biped_legs()
    events = build_events(synthesize_sensors(generate_truth(cfg, legs), cfg, legs), legs)
    noise = cfg.filter_noise()

    rows = {}
    for name, kb in backends.items():
        for case, fn in kernel_cases(kb).items():
            rows.setdefault(case, {})[name] = min(timeit.repeat(fn, number=args.repeat, repeat=3)) / args.repeat
        rows.setdefault(f"run_events ({events[0].size} events)", {})[name] = min(
            timeit.repeat(lambda: full_run(kb, events, noise), number=1, repeat=3)
        )

    names = list(backends)
    print(f"{'kernel':<34}" + "".join(f"{n:>14}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for case, t in rows.items():
        line = f"{case:<34}" + "".join(f"{t[n] * 1e6:>12.1f}us" for n in names)
        if len(names) > 1:
            line += f"{t['python'] / t['cython']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
