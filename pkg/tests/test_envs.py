import numpy as np
import pytest

from mdpgn.envs.cartpole import (
    CartPoleParams, CartPoleProblem, RbfFeatures, angular_acceleration, cartpole_policy, cartpole_step,
    discounted_return, monte_carlo_targets, wrap_angle,
)
from mdpgn.envs.gridworlds import (
    build_hallway, build_mccallum, gridworld_mdp, hallway_spec, mccallum_spec, optimal_tabular_actions,
)
from mdpgn.envs.navigation import NavigationParams, NavigationProblem, navigation_policy, navigation_step
from mdpgn.envs.tetris import (
    PIECE_CELLS, TetrisBoard, TetrisProblem, legal_placements, num_features, play_games, tetris_features,
    tetris_place,
)


class TestGridworlds:
    def test_hallway_aliasing(self):
        spec = hallway_spec()
        f = [spec.wall_features(s) for s in range(1, 6)]
        np.testing.assert_array_equal(f[1], f[2])
        np.testing.assert_array_equal(f[2], f[3])
        assert not np.array_equal(f[0], f[1])

    def test_mccallum_aliasing(self):
        spec = mccallum_spec()
        f = [spec.wall_features(s) for s in (4, 5, 6)]
        np.testing.assert_array_equal(f[0], f[1])
        np.testing.assert_array_equal(f[1], f[2])

    def test_hallway_optimal_moves_right(self):
        assert all(acts == ("right",) for acts in optimal_tabular_actions(hallway_spec()).values())

    def test_mccallum_aliased_states_disagree(self):
        opt = optimal_tabular_actions(mccallum_spec())
        assert len({opt[4], opt[5], opt[6]}) > 1

    def test_goal_resets_with_reward(self):
        mdp, _ = build_mccallum()
        np.testing.assert_allclose(mdp.transition[7, 0], mdp.start)
        np.testing.assert_allclose(mdp.start[[6, 8]], 0.5)
        assert mdp.reward[7].tolist() == [1.0] * 4 and mdp.reward.sum() == 4.0

    def test_successor_features(self):
        mdp, pol = build_hallway()
        spec = hallway_spec()
        # moving left from state 2 reaches state 1
        np.testing.assert_array_equal(pol.features[1, 2], spec.wall_features(1))


class TestCartPole:
    def test_horizontal_pole_acceleration(self):
        # sin = 1, cos = 0: theta_ddot = g / (4l/3) = 9.8 / (2/3)
        assert angular_acceleration(np.pi / 2, 0.0, 0.0) == pytest.approx(14.7, rel=1e-12)

    def test_euler_step_values(self):
        p = CartPoleParams()
        s, r = cartpole_step([np.pi / 2, 1.0], 0.0)
        a = p.alpha
        acc = (9.8 - 0.0 - 0.0) / (4 * 0.5 / 3 - a * 2 * 0.5 * 0.0)
        assert s[0] == pytest.approx(np.pi / 2 + 0.1)
        # theta_dot^2 sin(2 theta) vanishes at pi/2
        assert s[1] == pytest.approx(1.0 + 0.1 * acc)
        assert r == pytest.approx(0.5)

    def test_force_clipped_after_noise(self):
        s1, _ = cartpole_step([0.3, 0.0], 1e6)
        s2, _ = cartpole_step([0.3, 0.0], 50.0)
        np.testing.assert_allclose(s1, s2)

    def test_wrap(self):
        x = wrap_angle(np.array([np.pi, -np.pi, 3 * np.pi, 0.5]))
        np.testing.assert_allclose(x, [np.pi, np.pi, np.pi, 0.5])

    def test_rbf_peak_and_bounds(self, rng):
        f = RbfFeatures.random(rng, 10)
        assert f(f.centers[3])[3] == pytest.approx(1.0)
        v = f(rng.normal(size=(5, 2)))
        assert v.shape == (5, 10) and np.all((v > 0) & (v <= 1))

    def test_returns(self):
        r = np.ones((2, 6))
        np.testing.assert_allclose(discounted_return(r, 0.5, 3), 1.75)
        np.testing.assert_allclose(monte_carlo_targets(r, 0.5, 3), np.full((2, 4), 1.75))

    def test_problem_shapes_and_determinism(self):
        r = np.random.default_rng(0)
        pol = cartpole_policy(r, num_centers=8)
        prob = CartPoleProblem(pol, CartPoleParams(horizon=10), episodes=4, critic_episodes=2)
        w = np.zeros(8)
        c1 = prob.curvature(w, np.random.default_rng(1))
        c2 = prob.curvature(w, np.random.default_rng(1))
        np.testing.assert_array_equal(c1.grad, c2.grad)
        assert np.linalg.eigvalsh(-c1.H2).min() >= -1e-10
        for kind in ("steepest", "natural", "gauss_newton_2"):
            from mdpgn.optimizers import UpdateRule

            assert prob.direction(UpdateRule(kind), c1, w) @ c1.grad > 0

    def test_bad_problem_args(self, rng):
        with pytest.raises(ValueError):
            CartPoleProblem(cartpole_policy(rng, num_centers=2), episodes=4, critic_episodes=4)


class TestNavigation:
    def test_deterministic_step(self):
        s, r = navigation_step([0.0, 1.0], 1.0)
        s1 = 1.0 / (1.0 + np.exp(-1.0)) - 0.5
        assert s[0] == pytest.approx(0.231058578630005, abs=1e-15)
        assert s[0] == s1
        assert s[1] == pytest.approx(1.0 - 0.1 * s1, abs=1e-15)
        assert r == pytest.approx(np.exp(-0.5))

    def test_extreme_controls(self):
        s, _ = navigation_step([0.0, 0.0], np.array([-800.0, 800.0]))
        assert np.all(np.isfinite(s))

    def test_problem_runs(self):
        prob = NavigationProblem(navigation_policy(), NavigationParams(horizon=5), episodes=6)
        c = prob.curvature(np.array([0.1, -0.2]), np.random.default_rng(0))
        assert c.H2.shape == (2, 2) and np.linalg.eigvalsh(c.H2).max() <= 1e-12


# ---- independent Tetris rules oracle on a numpy grid --------------------

def rotations_by_rot90(shape_rows):
    grid = np.array([[ch == "#" for ch in row] for row in shape_rows])
    out = set()
    for k in range(4):
        g = np.rot90(grid, k)
        ys, xs = np.nonzero(g[::-1])  # row 0 = bottom
        out.add(tuple(sorted(zip((xs - xs.min()).tolist(), (ys - ys.min()).tolist()))))
    return out


SHAPES = [
    ["####"], ["##", "##"], [".#.", "###"], [".##", "##."], ["##.", ".##"], ["#..", "###"], ["..#", "###"],
]


def oracle_drop(grid, cells, col):
    h = grid.shape[0]
    y = h - 4
    while True:
        if any(y - 1 + dy < 0 or grid[y - 1 + dy, col + dx] for dx, dy in cells):
            break
        y -= 1
    g = grid.copy()
    for dx, dy in cells:
        g[y + dy, col + dx] = True
    full = g.all(axis=1)
    kept = g[~full]
    g = np.vstack([kept, np.zeros((int(full.sum()), g.shape[1]), bool)])
    return g, int(full.sum())


def oracle_features(grid):
    W = grid.shape[1]
    heights = [int(np.max(np.nonzero(grid[:, x])[0]) + 1) if grid[:, x].any() else 0 for x in range(W)]
    holes = sum(int((~grid[:heights[x], x]).sum()) for x in range(W))
    return heights + [abs(heights[i] - heights[i + 1]) for i in range(W - 1)] + [max(heights), holes]


def grid_of(board):
    rows = board.rows
    return np.array([[(r >> x) & 1 for x in range(board.width)] for r in rows], dtype=bool)


class TestTetris:
    def test_rotation_sets(self):
        for k, shape in enumerate(SHAPES):
            assert set(PIECE_CELLS[k]) == rotations_by_rot90(shape)

    def test_feature_fixtures(self):
        assert not tetris_features(TetrisBoard(6, 6)).any()
        b = TetrisBoard.from_text(["......"] * 5 + ["####.#"], piece=0)
        # vertical I in column 4 completes the bottom row
        rot = [r for r, cells in enumerate(PIECE_CELLS[0]) if max(dx for dx, _ in cells) == 0][0]
        nxt, cleared, over = tetris_place(b, rot, 4)
        assert cleared == 1 and not over
        f = tetris_features(nxt)
        assert f.tolist() == [0, 0, 0, 0, 3, 0] + [0, 0, 0, 3, 3] + [3, 0]
        cav = TetrisBoard.from_text(["....", "....", "##..", "#...", "##.."])
        feats = tetris_features(cav)
        assert feats[-1] == 1
        assert feats[:4].tolist() == [3, 3, 0, 0]
        assert len(feats) == num_features(4)

    def test_hundred_games_against_grid_oracle(self):
        for seed in range(100):
            r = np.random.default_rng(seed)
            board = TetrisBoard(6, 6, piece=int(r.integers(7)))
            grid = grid_of(board)
            lines = 0
            for _ in range(200):
                places = legal_placements(board)
                rot, col = places[int(r.integers(len(places)))]
                grid, cleared = oracle_drop(grid, PIECE_CELLS[board.piece][rot], col)
                lines += cleared
                board, c2, over = tetris_place(board, rot, col, r)
                assert c2 == cleared and board.lines == lines
                np.testing.assert_array_equal(grid_of(board), grid)
                assert not grid[:6].all(axis=1).any()
                assert tetris_features(board).tolist() == oracle_features(grid)
                if over:
                    assert grid[6:].any()
                    break
                assert not grid[6:].any()

    def test_text_round_trip(self):
        rows = ["#..#", ".##.", "####"[:3] + "."]
        assert TetrisBoard.from_text(rows).to_text() == "\n".join(rows)

    def test_illegal_moves(self):
        b = TetrisBoard(6, 6, piece=1)
        with pytest.raises(ValueError):
            tetris_place(b, 0, 5)
        with pytest.raises(ValueError):
            tetris_place(b, 3, 0)

    def test_playouts_reproducible(self):
        w = np.zeros(13)
        w[-1] = -1.0
        a = play_games(6, 6, w, 10, 42)
        b = play_games(6, 6, w, 10, 42)
        np.testing.assert_array_equal(a.lines, b.lines)
        np.testing.assert_array_equal(a.delta2, b.delta2)
        assert np.linalg.eigvalsh(0.5 * (a.fisher + a.fisher.T)).min() >= -1e-9

    def test_problem_directions(self):
        prob = TetrisProblem(games=20)
        from mdpgn.optimizers import UpdateRule

        w = np.zeros(13)
        w[-1] = -0.5
        c = prob.curvature(w, np.random.default_rng(0))
        for kind in ("steepest", "natural", "gauss_newton_2", "diag_gn_2"):
            d = prob.direction(UpdateRule(kind), c, w)
            assert d.shape == (13,) and np.all(np.isfinite(d))
