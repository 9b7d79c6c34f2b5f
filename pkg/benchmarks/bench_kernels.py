"""Time the compiled kernels against the pure-Python fallback and check they agree.

Usage: python3 benchmarks/bench_kernels.py [--steps N] [--games N] [--repeat N]
"""

import argparse
import time

import numpy as np

from mdpgn import _fallback
from mdpgn.envs.synthetic import regenerative_mdp
from mdpgn.envs.tetris import PIECE_CELLS, num_features

try:
    from mdpgn import _kernels
except ImportError:
    _kernels = None


def _best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def chain_inputs(seed=0):
    rng = np.random.default_rng(seed)
    mdp, policy = regenerative_mdp(rng)
    w = rng.normal(size=policy.dim)
    pi = policy.probs(w)
    S = mdp.num_states
    hess = np.ascontiguousarray(np.broadcast_to(policy.log_hessians(w)[:, None], (S, mdp.num_actions, policy.dim, policy.dim)))
    return (np.cumsum(mdp.transition, axis=2), np.ascontiguousarray(mdp.reward), np.cumsum(pi, axis=1),
            np.ascontiguousarray(policy.scores(w)), hess, 0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--games", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
        return

    P_cum, R, pi_cum, scores, hess, sstar = chain_inputs()
    cases = {
        f"recurrent_chain ({args.steps} steps)": lambda m: m.recurrent_chain(
            P_cum, R, pi_cum, scores, hess, sstar, args.steps, 0, 12345),
    }
    w = np.zeros(num_features(6))
    w[-1] = -1.0
    cases[f"tetris_playouts 6x6 ({args.games} games)"] = lambda m: m.tetris_playouts(
        6, 6, w, args.games, 99, 1000, True, PIECE_CELLS)

    print(f"{'kernel':40s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}  agree")
    for name, run in cases.items():
        t_py, out_py = _best_time(lambda: run(_fallback), args.repeat)
        t_cy, out_cy = _best_time(lambda: run(_kernels), args.repeat)
        agree = all(np.allclose(np.asarray(a), np.asarray(b), rtol=1e-10, atol=1e-12) for a, b in zip(out_py, out_cy))
        print(f"{name:40s} {t_py:10.4f} {t_cy:10.4f} {t_py / t_cy:8.1f}  {agree}")


if __name__ == "__main__":
    main()
