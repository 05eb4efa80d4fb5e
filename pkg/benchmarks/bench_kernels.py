"""Time the compiled-loop kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py --repeat 5 --scale 2

The loop variants are numba-compiled when numba is importable; the first call
of each is made before timing so compilation is not counted.
"""

import argparse
import timeit

import numpy as np

from trex import _accel, envs, kernels


def cases(scale: int, rng: np.random.Generator):
    n = 400 * scale
    X, C = rng.normal(size=(n, 10)), rng.normal(size=(8, 10))
    yield "nearest", (X, C), kernels.nearest_loops, kernels.nearest_numpy

    Xs = rng.normal(size=(150 * scale, 10))
    lab = np.concatenate([np.arange(6), rng.integers(6, size=Xs.shape[0] - 6)]).astype(np.int64)
    yield "silhouette", (Xs, lab, 6), kernels.silhouette_loops, kernels.silhouette_numpy

    S, A, m = 2000, 3, 20_000 * scale
    q, sup = rng.normal(size=(S, A)), rng.random((S, A)) < 0.7
    args = (rng.integers(S, size=m), rng.integers(A, size=m), rng.normal(size=m),
            rng.integers(S, size=m), rng.random(m) < 0.05, q, sup, 1.0)
    yield "fqi_targets", args, kernels.fqi_targets_loops, kernels.fqi_targets_numpy

    e = envs.make("mo-corridor")
    ns, rw, term = e.transition_table()
    r = np.ascontiguousarray(rw @ np.array([0.5, 0.5]))
    yield "backward_induction", (ns, r, term, e.spec.max_steps), \
        kernels.backward_induction_loops, kernels.backward_induction_numpy

    keys, ts = e.start_states()
    k = 50_000 * scale

    def qargs():
        g = np.random.default_rng(0)
        return (np.zeros((e.n_states, 3)), np.zeros((e.n_states, 3), bool), ns, r, term, e.initial_key,
                e.spec.max_steps, 0.99, 1.0, e.initial_key, 0, g.random(k), np.full(k, 0.2),
                g.integers(3, size=k), np.ascontiguousarray(keys), np.ascontiguousarray(ts),
                g.random(k), g.integers(len(keys), size=k), 0.5)

    # the kernel mutates q in place, so fresh arrays are built per call (for both variants)
    yield "q_learning_chunk", qargs, kernels.q_learning_chunk_loops, kernels.q_learning_chunk_python


def best_time(fn, args, repeat: int) -> float:
    make = args if callable(args) else (lambda: args)
    fn(*make())  # compile / warm caches
    timer = timeit.Timer(lambda: fn(*make()))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=int, default=1, help="multiplies problem sizes")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    compiled = "numba" if _accel.NUMBA_AVAILABLE else "python (numba missing)"
    print(f"loops: {compiled}; dispatched backend: {kernels.BACKEND}")
    print(f"{'kernel':<20}{'loops ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, a, loops, vec in cases(args.scale, np.random.default_rng(args.seed)):
        tl, tv = best_time(loops, a, args.repeat), best_time(vec, a, args.repeat)
        print(f"{name:<20}{tl * 1e3:>12.3f}{tv * 1e3:>12.3f}{tv / tl:>9.1f}x")


if __name__ == "__main__":
    main()
