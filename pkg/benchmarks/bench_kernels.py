"""Compare the compiled im2col/col2im kernels with the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Kernel timings call both implementations directly. The training-step
timing runs one desk encoder step in a subprocess per backend, because
the backend is fixed at import time by ``STUM_PURE_PYTHON``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from stum.numerics import _fallback

try:
    from stum.numerics import _kernels
except ImportError:  # the extension was not built
    _kernels = None

# (batch, channels, height, width, kernel, stride, pad) seen in the desk encoders
SHAPES = [
    (200, 3, 32, 32, 3, 1, 1),
    (200, 16, 32, 32, 4, 2, 1),
    (200, 1, 64, 64, 4, 2, 1),
    (200, 32, 16, 16, 4, 2, 1),
]

STEP = """
import time, numpy as np
from stum.numerics import Tensor, kernels
from stum.model.config import encoder_presets
cfg = encoder_presets("desk", 32, 64)["image"]
net = cfg.build(np.random.default_rng(0)); net.train()
x = np.random.default_rng(1).random((200, 3, 32, 32)).astype(np.float32)
net(Tensor(x)).sum().backward()
t = time.perf_counter()
for _ in range({n}):
    net.zero_grad(); net(Tensor(x)).sum().backward()
print(kernels.BACKEND, (time.perf_counter() - t) / {n})
"""


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--steps", type=int, default=5)
    args = parser.parse_args(argv)
    if _kernels is None:
        sys.exit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")

    print(f"{'shape (N,C,H,W,k,s,p)':<32}{'op':<8}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for n, c, h, w, k, s, p in SHAPES:
        x = np.random.default_rng(0).random((n, c, h, w)).astype(np.float32)
        cols = _fallback.im2col(x, k, s, p)
        np.testing.assert_array_equal(cols, _kernels.im2col(x, k, s, p))
        for op, slow, fast in (
            ("im2col", lambda: _fallback.im2col(x, k, s, p), lambda: _kernels.im2col(x, k, s, p)),
            ("col2im", lambda: _fallback.col2im(cols, n, c, h, w, k, s, p),
             lambda: _kernels.col2im(cols, n, c, h, w, k, s, p)),
        ):
            a, b = bench(slow, args.repeat), bench(fast, args.repeat)
            print(f"{str((n, c, h, w, k, s, p)):<32}{op:<8}{a * 1e3:>10.2f}{b * 1e3:>11.2f}{a / b:>8.1f}x")

    print("\nfull desk image-encoder training step (forward + backward, batch 200):")
    for pure in ("1", "0"):
        env = dict(os.environ, STUM_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", STEP.format(n=args.steps)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  {out[0]:<8}{float(out[1]) * 1e3:8.1f} ms/step")


if __name__ == "__main__":
    main()
