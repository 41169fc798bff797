"""Compare the numba and pure-numpy kernel paths.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--samples 20000] [--ions 3 7 15]

Both paths are called directly, so the ``IONQUENCH_NUMBA`` flag does not
matter here.  Each row also reports the largest deviation between the two
paths, which should sit at rounding level.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ionquench import _kernels
from ionquench.crystal import linear_chain_positions
from ionquench.params import TrapScenario
from ionquench.visibility import EPS_COLD, ThermalSpec, prepare


def best_of(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _max_dev(a, b) -> float:
    if isinstance(a, tuple):
        return max(_max_dev(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def bench_coulomb(n_ions: int, repeat: int) -> dict:
    x = linear_chain_positions(n_ions)
    rng = np.random.default_rng(n_ions)
    pos = np.concatenate([x, 0.05 * rng.standard_normal(n_ions)])
    _kernels.coulomb_terms_numba(pos)  # compile outside the timing
    loops = 200
    t_np = best_of(lambda: [_kernels.coulomb_terms_numpy(pos) for _ in range(loops)], repeat) / loops
    t_nb = best_of(lambda: [_kernels.coulomb_terms_numba(pos) for _ in range(loops)], repeat) / loops
    dev = _max_dev(_kernels.coulomb_terms_numpy(pos), _kernels.coulomb_terms_numba(pos))
    return {"kernel": f"coulomb N={n_ions}", "numpy_s": t_np, "numba_s": t_nb, "max_dev": dev}


def bench_overlap(samples: int, repeat: int, temperature_uk: float) -> dict:
    setup = prepare(TrapScenario.from_dimensionless(-0.005, 0.025))
    bmap = setup.bmap
    occ = ThermalSpec.from_temperature(setup.omega_g_si, temperature_uk * 1e-6).mode_occupations
    sq = np.where(occ >= EPS_COLD, np.sqrt(occ), 0.0)
    ts = np.linspace(0.0, 60.0 * 2 * np.pi, samples)
    args = (bmap.omega_g, bmap.omega_e, bmap.u, bmap.v, bmap.A, bmap.beta_g, bmap.beta_e, setup.kappa,
            setup.kappa_p, sq, 2.0 * np.log(bmap.Z), bmap.energy_offset)
    args = tuple(np.ascontiguousarray(a) if isinstance(a, np.ndarray) else float(a) for a in args)
    _kernels.overlap_series_numba(ts[:4], *args)
    t_np = best_of(lambda: _kernels.overlap_series_numpy(ts, *args), repeat)
    t_nb = best_of(lambda: _kernels.overlap_series_numba(ts, *args), repeat)
    dev = _max_dev(_kernels.overlap_series_numpy(ts, *args)[0], _kernels.overlap_series_numba(ts, *args)[0])
    return {"kernel": f"overlap {samples} samples T={temperature_uk:g}uK", "numpy_s": t_np, "numba_s": t_nb,
            "max_dev": dev}


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--samples", type=int, default=20000)
    ap.add_argument("--ions", type=int, nargs="+", default=[3, 7, 15])
    args = ap.parse_args(argv)

    rows = [bench_coulomb(n, args.repeat) for n in args.ions]
    rows += [bench_overlap(args.samples, args.repeat, T) for T in (0.0, 50.0)]
    print(f"{'kernel':36s} {'numpy [s]':>12s} {'numba [s]':>12s} {'speedup':>8s} {'max |diff|':>11s}")
    for r in rows:
        print(f"{r['kernel']:36s} {r['numpy_s']:12.3e} {r['numba_s']:12.3e} "
              f"{r['numpy_s'] / r['numba_s']:8.1f} {r['max_dev']:11.2e}")


if __name__ == "__main__":
    main()
