"""Compare the numba and numpy kernel backends on detector-sized workloads.

Run:  python benchmarks/bench_backends.py [--repeats N] [--full]

Default shapes are the desk-experiment sizes; --full uses the full-size
network geometry (T=500, 128 channels), which is what the shape audit
exercises. Each kernel is checked for cross-backend agreement before
timing.
"""

import argparse
import time

import numpy as np

from scenesed import kernels


def desk_cases(rng):
    t = 50
    return {
        "conv2d fwd (16ch, T=50)": (
            "conv2d_forward",
            (rng.normal(size=(16, t, 8)), rng.normal(size=(16, 16, 3, 3)), 1, 1)),
        "conv2d bwd-input": (
            "conv2d_backward_input",
            (rng.normal(size=(16, t, 8)), rng.normal(size=(16, 16, 3, 3)), t, 8, 1, 1)),
        "conv2d bwd-weight": (
            "conv2d_backward_weight",
            (rng.normal(size=(16, t, 8)), rng.normal(size=(16, t, 8)), 3, 3, 1, 1)),
        "maxpool fwd": ("maxpool2d_forward", (rng.normal(size=(16, t, 8)), 1, 2)),
        "tconv fwd": (
            "tconv2d_forward",
            (rng.normal(size=(8, 12, 17)), rng.normal(size=(8, 8, 4, 3)), 2, 2)),
        "gru fwd (T=50, D=32, H=8)": (
            "gru_forward",
            (rng.normal(size=(t, 32)), np.zeros(8),
             *[rng.normal(size=s) * 0.3 for s in
               [(8, 32), (8, 8), (8,), (8, 32), (8, 8), (8,), (8, 32), (8, 8), (8,)]])),
    }


def full_cases(rng):
    t = 500
    return {
        "conv2d fwd (128ch, T=500)": (
            "conv2d_forward",
            (rng.normal(size=(128, t, 8)), rng.normal(size=(128, 128, 3, 3)), 1, 1)),
        "conv2d bwd-input (128ch)": (
            "conv2d_backward_input",
            (rng.normal(size=(128, t, 8)), rng.normal(size=(128, 128, 3, 3)), t, 8, 1, 1)),
        "gru fwd (T=500, D=256, H=32)": (
            "gru_forward",
            (rng.normal(size=(t, 256)), np.zeros(32),
             *[rng.normal(size=s) * 0.3 for s in
               [(32, 256), (32, 32), (32,), (32, 256), (32, 32), (32,),
                (32, 256), (32, 32), (32,)]])),
    }


def first_array(result):
    return result[0] if isinstance(result, tuple) else result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--full", action="store_true", help="full-size network geometry")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = full_cases(rng) if args.full else desk_cases(rng)

    print(f"{'kernel':34s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}  agree")
    for label, (fn_name, fn_args) in cases.items():
        times = {}
        outputs = {}
        for backend in ("numpy", "numba"):
            kernels.use_backend(backend)
            fn = getattr(kernels, fn_name)
            outputs[backend] = first_array(fn(*fn_args))  # also warms the JIT
            start = time.perf_counter()
            for _ in range(args.repeats):
                fn(*fn_args)
            times[backend] = (time.perf_counter() - start) / args.repeats
        agree = np.allclose(outputs["numpy"], outputs["numba"], rtol=1e-10, atol=1e-12)
        speedup = times["numpy"] / times["numba"]
        print(f"{label:34s} {times['numpy'] * 1e3:9.3f}ms {times['numba'] * 1e3:9.3f}ms "
              f"{speedup:7.2f}x  {agree}")
        if not agree:
            raise SystemExit(f"backend mismatch in {label}")


if __name__ == "__main__":
    main()
