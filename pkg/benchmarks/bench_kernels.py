"""Time the GRU cell kernels under each available backend.

Runs the fused forward cell, the backward cell, and the scatter-add used
by embedding gradients over a grid of (batch, hidden) shapes, then prints
per-call times and the Cython-over-numpy speedup. A full micro training
step is also timed end to end, since the kernels only matter inside the
surrounding graph machinery.

    python3 benchmarks/bench_kernels.py [--repeats 200] [--sizes 30x256,64x512]
"""

import argparse
import time

import numpy as np

from latact import corpus, kernels, networks, objectives
from latact.latent import LatentSpec


def parse_sizes(text):
    out = []
    for part in text.split(","):
        b, h = part.lower().split("x")
        out.append((int(b), int(h)))
    return out


def time_call(fn, repeats):
    # one warm-up call, then a best-of-three median loop
    fn()
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def bench_cells(backend, B, H, repeats, rng):
    kernels.use_backend(backend)
    gi = rng.standard_normal((B, 3 * H))
    gh = rng.standard_normal((B, 3 * H))
    h_prev = rng.standard_normal((B, H))
    fwd = time_call(lambda: kernels.gru_cell_fwd(gi, gh, h_prev), repeats)

    _, r, z, n = kernels.gru_cell_fwd(gi, gh, h_prev)
    dh = rng.standard_normal((B, H))
    bwd = time_call(lambda: kernels.gru_cell_bwd(dh, h_prev, gh, r, z, n),
                    repeats)

    out = np.zeros((1000, H))
    idx = rng.integers(0, 1000, size=4 * B).astype(np.intp)
    vals = rng.standard_normal((4 * B, H))
    scat = time_call(lambda: kernels.rows_add(out, idx, vals), repeats)
    return fwd, bwd, scat


def bench_step(backend, rng, repeats=5):
    """One di-vae loss + backward on a small batch, full graph included."""
    kernels.use_backend(backend)
    spec = LatentSpec(M=2, K=10, tau=1.0)
    model = networks.AutoEncodingModel(np.random.default_rng(0), 200, spec,
                                       emb_dim=64, enc_hidden=128,
                                       dec_hidden=128)
    seqs = [list(rng.integers(4, 200, size=rng.integers(5, 15)))
            for _ in range(30)]
    batch = {"tokens": None, "mask": None}
    batch["tokens"], batch["mask"] = corpus.pad_block(seqs)
    (batch["dec_in"], batch["dec_tgt"],
     batch["dec_mask"]) = corpus.decoder_block(seqs)

    def step():
        noise = np.random.default_rng(1)
        lb = objectives.di_vae_loss(model, batch, noise)
        model.zero_grad()
        lb.total.backward()

    return time_call(step, repeats)


def fmt(seconds):
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f} us"
    return f"{seconds * 1e3:8.2f} ms"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--sizes", type=parse_sizes,
                    default=parse_sizes("30x64,30x256,64x512"))
    args = ap.parse_args()

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    if "cython" not in backends:
        print("compiled extension not importable; timing numpy only")
    rng = np.random.default_rng(7)

    header = f"{'shape':>10}  {'kernel':>12}"
    for b in backends:
        header += f"  {b:>12}"
    if len(backends) > 1:
        header += f"  {'speedup':>8}"
    print(header)

    for B, H in args.sizes:
        rows = {b: bench_cells(b, B, H, args.repeats, rng) for b in backends}
        for i, name in enumerate(("gru_cell_fwd", "gru_cell_bwd", "rows_add")):
            line = f"{f'{B}x{H}':>10}  {name:>12}"
            for b in backends:
                line += f"  {fmt(rows[b][i]):>12}"
            if "cython" in rows and "numpy" in rows:
                line += f"  {rows['numpy'][i] / rows['cython'][i]:>7.2f}x"
            print(line)

    print()
    times = {}
    for b in backends:
        times[b] = bench_step(b, rng)
        print(f"full di-vae step ({b:>6}): {fmt(times[b])}")
    if "cython" in times and "numpy" in times:
        print(f"full-step speedup: {times['numpy'] / times['cython']:.2f}x")


if __name__ == "__main__":
    main()
