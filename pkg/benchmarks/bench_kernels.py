"""Compare the compiled conv/pool kernels with the numpy fallback.

Runs each kernel on classifier-sized inputs (first and last conv stage of an
80x3000 spectrogram, and a full forward+backward of the network), checks the
two backends agree, and prints median wall time per call.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""
import argparse
import json
import statistics
import time

import numpy as np

from accentmask import classifier
from accentmask.autodiff import _kernels_py, kernels

NAMES = ("conv3x3_forward", "conv3x3_backward", "maxpool2_forward", "maxpool2_backward")


def timed(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def kernel_cases(rng):
    cases = {}
    for label, (c_in, c_out, h, w) in {"conv1 (1->32, 80x3000)": (1, 32, 80, 3000),
                                       "conv4 (128->256, 10x375)": (128, 256, 10, 375)}.items():
        x = rng.normal(size=(1, c_in, h, w))
        wt = rng.normal(size=(c_out, c_in, 3, 3))
        b = rng.normal(size=c_out)
        gy = rng.normal(size=(1, c_out, h, w))
        cases[f"{label} fwd"] = lambda mod, x=x, wt=wt, b=b: mod.conv3x3_forward(x, wt, b)
        cases[f"{label} bwd"] = lambda mod, x=x, wt=wt, gy=gy: mod.conv3x3_backward(x, wt, gy)
    x = rng.normal(size=(1, 32, 80, 3000))
    y, arg = _kernels_py.maxpool2_forward(x)
    cases["maxpool (32, 80x3000) fwd"] = lambda mod: mod.maxpool2_forward(x)
    cases["maxpool (32, 80x3000) bwd"] = lambda mod: mod.maxpool2_backward(y, arg, x.shape)
    return cases


def use_backend(name, compiled):
    source = compiled if name == "cython" else _kernels_py
    for fn in NAMES:
        setattr(kernels, fn, getattr(source, fn))


def network_step(model, x):
    logits, _ = model.forward(x, training=False)
    model.backward(0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None, help="write results here")
    args = ap.parse_args(argv)

    if kernels.BACKEND != "cython":
        print("compiled kernels not available; only the numpy fallback can be timed")
        compiled = None
    else:
        from accentmask.autodiff import _kernels as compiled

    rng = np.random.default_rng(0)
    backends = ["python"] + (["cython"] if compiled else [])
    results = {}
    for label, case in kernel_cases(rng).items():
        outs = {b: case(compiled if b == "cython" else _kernels_py) for b in backends}
        if compiled:
            a, c = outs["python"], outs["cython"]
            a, c = (a if isinstance(a, tuple) else (a,)), (c if isinstance(c, tuple) else (c,))
            assert all(np.allclose(p, q, atol=1e-9) for p, q in zip(a, c)), label
        results[label] = {b: timed(lambda b=b: case(compiled if b == "cython" else _kernels_py), args.repeat)
                          for b in backends}

    model = classifier.build(classifier.ClassifierConfig(n_classes=6), seed=0)
    x = rng.normal(size=(1, 1, 80, 3000))
    label = "network fwd+bwd (80x3000)"
    results[label] = {}
    for b in backends:
        use_backend(b, compiled)
        results[label][b] = timed(lambda: network_step(model, x), max(1, args.repeat // 2))
    if compiled:
        use_backend("cython", compiled)

    width = max(map(len, results))
    print(f"{'kernel':<{width}}  {'numpy s':>9}  {'cython s':>9}  {'speedup':>7}")
    for label, t in results.items():
        cy = t.get("cython")
        print(f"{label:<{width}}  {t['python']:>9.4f}  "
              + (f"{cy:>9.4f}  {t['python'] / cy:>6.2f}x" if cy else f"{'-':>9}  {'-':>7}"))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
