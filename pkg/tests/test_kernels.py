import os
import subprocess
import sys

import numpy as np
import pytest

from mdpgn import _fallback, kernels
from mdpgn.envs.synthetic import regenerative_mdp
from mdpgn.envs.tetris import PIECE_CELLS

compiled = pytest.importorskip("mdpgn._kernels")


def chain_args(seed=0):
    r = np.random.default_rng(seed)
    mdp, pol = regenerative_mdp(r, num_states=4, num_actions=3, num_params=2)
    w = r.normal(size=2)
    sc = np.ascontiguousarray(pol.scores(w))
    hs = np.ascontiguousarray(np.broadcast_to(pol.log_hessians(w)[:, None], sc.shape + (2,)))
    return (np.cumsum(mdp.transition, axis=2), np.ascontiguousarray(mdp.reward), np.cumsum(pol.probs(w), axis=1),
            sc, hs, 0)


class TestParity:
    def test_recurrent_chain(self):
        args = chain_args()
        a = _fallback.recurrent_chain(*args, 3000, 0, 77)
        b = compiled.recurrent_chain(*args, 3000, 0, 77)
        for x, y in zip(a, b):
            np.testing.assert_allclose(np.asarray(x), np.asarray(y), rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("accumulate", [True, False])
    def test_tetris(self, accumulate):
        w = np.linspace(-1, 0.2, 13)
        a = _fallback.tetris_playouts(6, 6, w, 5, 2024, 300, accumulate, PIECE_CELLS)
        b = compiled.tetris_playouts(6, 6, w, 5, 2024, 300, accumulate, PIECE_CELLS)
        for x, y in zip(a, b):
            np.testing.assert_allclose(np.asarray(x), np.asarray(y), rtol=1e-12, atol=1e-12)

    def test_splitmix_reference(self):
        # published splitmix64 output for seed 1234567
        rng = _fallback.SplitMix64(1234567)
        assert rng.next_u64() == 6457827717110365317

    def test_default_backend(self):
        assert kernels.BACKEND == "cython"

    def test_env_forces_fallback(self):
        env = dict(os.environ, MDPGN_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", "from mdpgn import kernels; print(kernels.BACKEND)"],
                             capture_output=True, text=True, env=env, check=True)
        assert out.stdout.strip() == "python"
