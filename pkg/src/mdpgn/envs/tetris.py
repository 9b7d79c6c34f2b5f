"""Simplified Tetris: pieces drop straight down at a chosen rotation and column.

Boards are lists of row bitmasks, bottom row first, with a few headroom
rows above the visible height so an overflowing placement can be detected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _fallback as fb

PIECE_NAMES = ("I", "O", "T", "S", "Z", "J", "L")
_BASE_SHAPES = {
    "I": [(0, 0), (1, 0), (2, 0), (3, 0)],
    "O": [(0, 0), (1, 0), (0, 1), (1, 1)],
    "T": [(0, 0), (1, 0), (2, 0), (1, 1)],
    "S": [(0, 0), (1, 0), (1, 1), (2, 1)],
    "Z": [(1, 0), (2, 0), (0, 1), (1, 1)],
    "J": [(0, 0), (1, 0), (2, 0), (0, 1)],
    "L": [(0, 0), (1, 0), (2, 0), (2, 1)],
}


def _normalize(cells):
    mx = min(x for x, _ in cells)
    my = min(y for _, y in cells)
    return tuple(sorted((x - mx, y - my) for x, y in cells))


def _rotations(cells):
    out = []
    cur = _normalize(cells)
    for _ in range(4):
        if cur not in out:
            out.append(cur)
        cur = _normalize([(y, -x) for x, y in cur])
    return out


PIECE_CELLS = [_rotations(_BASE_SHAPES[name]) for name in PIECE_NAMES]


def num_features(width):
    return 2 * width + 1


@dataclass
class TetrisBoard:
    width: int
    height: int
    rows: list = field(default=None)
    piece: int = 0
    lines: int = 0

    def __post_init__(self):
        if self.width < 4 or self.width > 30:
            raise ValueError("width must be between 4 and 30")
        if self.rows is None:
            self.rows = [0] * (self.height + fb.EXTRA_ROWS)
        if len(self.rows) != self.height + fb.EXTRA_ROWS:
            raise ValueError("rows must include the headroom rows")

    @classmethod
    def from_text(cls, lines, piece=0):
        """Build from text rows, top row first; '#' is filled."""
        height = len(lines)
        width = len(lines[0])
        rows = [0] * (height + fb.EXTRA_ROWS)
        for i, text in enumerate(lines):
            y = height - 1 - i
            for x, ch in enumerate(text):
                if ch == "#":
                    rows[y] |= 1 << x
        return cls(width, height, rows, piece)

    def to_text(self):
        out = []
        for y in range(self.height - 1, -1, -1):
            out.append("".join("#" if (self.rows[y] >> x) & 1 else "." for x in range(self.width)))
        return "\n".join(out)

    def __str__(self):
        return self.to_text()

    @property
    def empty(self):
        return not any(self.rows)

    def heights(self):
        return fb.column_heights(self.rows, self.width)


def legal_placements(board, piece=None):
    """(rotation, column) pairs that fit horizontally for the piece."""
    piece = board.piece if piece is None else piece
    out = []
    for r, cells in enumerate(PIECE_CELLS[piece]):
        span = max(dx for dx, _ in cells) + 1
        out.extend((r, c) for c in range(board.width - span + 1))
    return out


def tetris_place(board, rotation, column, rng=None):
    """Drop the current piece; returns ``(next_board, lines_cleared, terminal)``.

    The next piece is drawn uniformly when ``rng`` is given.
    """
    rots = PIECE_CELLS[board.piece]
    if not 0 <= rotation < len(rots):
        raise ValueError(f"illegal rotation {rotation} for piece {PIECE_NAMES[board.piece]}")
    res = fb.place_and_settle(board.rows, board.width, board.height, rots[rotation], column)
    if res is None:
        raise ValueError(f"illegal column {column} for rotation {rotation}")
    rows, cleared, overflow = res
    nxt = board.piece if rng is None else int(rng.integers(7))
    return TetrisBoard(board.width, board.height, rows, nxt, board.lines + cleared), cleared, overflow


def tetris_features(board, rotation=None, column=None):
    """Afterstate features of a placement, or of the board itself."""
    if rotation is None:
        return np.array(fb.board_features(board.rows, board.width), dtype=float)
    nxt, _, _ = tetris_place(board, rotation, column)
    return np.array(fb.board_features(nxt.rows, board.width), dtype=float)


@dataclass
class PlayoutStats:
    lines: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    fisher: np.ndarray
    steps: int

    @property
    def mean_lines(self):
        return float(self.lines.mean())


def play_games(width, height, w, num_games, seed, max_steps=1000, accumulate=True):
    """Play games with the Gibbs placement policy ``w`` using the fast kernel.

    With ``accumulate`` the recurrent-state trace sums are returned: the
    empty board is the recurrent state (the current piece is ignored).
    """
    from .. import kernels

    w = np.ascontiguousarray(w, dtype=float)
    if w.shape != (num_features(width),):
        raise ValueError(f"expected {num_features(width)} weights, got {w.shape}")
    lines, d1, d2, fis, steps = kernels.tetris_playouts(
        int(width), int(height), w, int(num_games), int(seed) & 0xFFFFFFFFFFFFFFFF,
        int(max_steps), bool(accumulate), PIECE_CELLS,
    )
    return PlayoutStats(np.asarray(lines), np.asarray(d1), np.asarray(d2), np.asarray(fis), int(steps))


@dataclass
class TetrisCurvature:
    grad: np.ndarray
    H2: np.ndarray
    fisher: np.ndarray
    value: float


class TetrisProblem:
    """Sampled Tetris problem driven by the recurrent-state estimator.

    Directions: steepest uses the trace gradient sum, GN2 solves with the
    negated trace H2 sum, natural uses summed score outer products. Each
    batch draws its kernel seed from the supplied generator, so a shared
    generator state gives common random numbers across line-search steps.
    """

    exact = False

    def __init__(self, width=6, height=6, games=200, max_steps=1000):
        self.width = width
        self.height = height
        self.games = games
        self.max_steps = max_steps
        self.dim = num_features(width)

    def _seed(self, rng):
        return int(rng.integers(0, 2**63))

    def value(self, w, rng):
        st = play_games(self.width, self.height, w, self.games, self._seed(rng), self.max_steps, accumulate=False)
        return st.mean_lines

    def curvature(self, w, rng):
        st = play_games(self.width, self.height, w, self.games, self._seed(rng), self.max_steps, accumulate=True)
        H2 = 0.5 * (st.delta2 + st.delta2.T)
        F = 0.5 * (st.fisher + st.fisher.T)
        return TetrisCurvature(st.delta1, H2, F, st.mean_lines)

    def direction(self, rule, curv, w):
        from ..linalg import solve_symmetric

        g = curv.grad
        if not np.any(g):
            return np.zeros_like(g)
        if rule.kind == "steepest":
            return g.copy()
        if rule.kind == "natural":
            M = curv.fisher
        elif rule.kind == "gauss_newton_2":
            M = -curv.H2
        elif rule.kind == "diag_gn_2":
            diag = -np.diag(curv.H2)
            floor = rule.diag_floor * max(np.max(np.abs(diag)), 1e-300)
            return g / np.maximum(diag, floor)
        else:
            raise ValueError(f"rule {rule.kind!r} is not supported on Tetris")
        return solve_symmetric(M, g, rule.ridge)
