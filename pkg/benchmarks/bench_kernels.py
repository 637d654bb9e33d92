"""Benchmark: compiled Lanczos kernel vs the pure-numpy fallback.

Times the hot propagation step on a representative rotating-frame
spin-phonon generator (three ions, Fock cutoff 4, dimension 512) and on a
larger truncation, then reports per-step cost and total throughput for both
backends.  Run as ``python benchmarks/bench_kernels.py``.
"""
import time

import numpy as np

from ionflux import _kernels_py
from ionflux.chain import chain_modes, reference_trap, spin_spin_couplings
from ionflux.dicke import FockSpec, dicke_generator, initial_full_state
from ionflux.protocols import make_flux_protocol

try:
    from ionflux import _kernels
    BACKENDS = (("compiled", _kernels), ("fallback", _kernels_py))
except ImportError:
    BACKENDS = (("fallback", _kernels_py),)


def bench(n_max, n_steps=400):
    spec = reference_trap()
    modes = chain_modes(spec)
    J = spin_spin_couplings(modes, spec)
    jr = J.j_rms
    mu0 = 20 * jr
    proto = make_flux_protocol(0.25 * np.pi / mu0, np.pi / mu0, mu0, jr)
    fock = FockSpec(n_max=n_max)
    gen = dicke_generator(modes, spec, fock, "rwa")
    dim = gen.dim
    b = proto.b0 + proto.mu0 * np.asarray(proto.segments[0].multipliers, float)
    data = gen.data_at((1.0, 1.0) + tuple(b))
    delta_max = float(np.max(np.abs(spec.beat_note - modes.mode_freqs)))
    dt = 2 * np.pi / (20 * delta_max)

    psi0 = initial_full_state(3, fock)

    print(f"\ndimension {dim} (n_max = {n_max}), nnz = {gen.nnz}, "
          f"dt = {dt:.2e} s, {n_steps} steps")
    results = {}
    for name, impl in BACKENDS:
        psi = psi0.copy()
        hint = 2
        t0 = time.perf_counter()
        for _ in range(n_steps):
            psi, m, err, conv = impl.lanczos_expmv(
                gen.indptr, gen.indices, data, psi, dt, 1e-9, 30, hint
            )
            hint = max(2, m - 2)
        elapsed = time.perf_counter() - t0
        results[name] = (elapsed, psi)
        print(f"  {name:9s}: {elapsed:6.2f} s total, "
              f"{elapsed / n_steps * 1e6:7.1f} us/step, final m = {m}")
    if len(results) == 2:
        gap = np.max(np.abs(results["compiled"][1] - results["fallback"][1]))
        speedup = results["fallback"][0] / results["compiled"][0]
        print(f"  speedup {speedup:.2f}x, state agreement {gap:.2e}")


if __name__ == "__main__":
    for n_max in (4, 6):
        bench(n_max)
