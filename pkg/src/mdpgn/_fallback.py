"""Pure-Python kernels. Same algorithms and random streams as ``_kernels.pyx``."""

from __future__ import annotations

import math

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
EXTRA_ROWS = 4


class SplitMix64:
    """splitmix64 generator; uniforms use the top 53 bits."""

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)


def _draw(cum, u):
    n = len(cum)
    for j in range(n):
        if u < cum[j]:
            return j
    return n - 1


def recurrent_chain(P_cum, R, pi_cum, scores, hess, sstar, num_steps, s0, seed):
    """Eligibility-trace sums along one simulated chain.

    Per step: sample a; update traces (or reset them at ``sstar``);
    accumulate ``R * trace``; transition.
    """
    n = scores.shape[2]
    rng = SplitMix64(seed)
    P_cum = P_cum.tolist()
    pi_cum = pi_cum.tolist()
    R = R.tolist()
    sc = scores.tolist()
    hs = hess.tolist()
    phi1 = [0.0] * n
    phi2 = [[0.0] * n for _ in range(n)]
    d1 = [0.0] * n
    d2 = [[0.0] * n for _ in range(n)]
    s = int(s0)
    visits = 0
    for _ in range(int(num_steps)):
        a = _draw(pi_cum[s], rng.uniform())
        if s != sstar:
            g = sc[s][a]
            h = hs[s][a]
            for i in range(n):
                phi1[i] += g[i]
                row = phi2[i]
                hrow = h[i]
                for j in range(n):
                    row[j] += hrow[j]
        else:
            visits += 1
            for i in range(n):
                phi1[i] = 0.0
                row = phi2[i]
                for j in range(n):
                    row[j] = 0.0
        r = R[s][a]
        for i in range(n):
            d1[i] += r * phi1[i]
            row = d2[i]
            prow = phi2[i]
            for j in range(n):
                row[j] += r * prow[j]
        s = _draw(P_cum[s][a], rng.uniform())
    return np.array(d1), np.array(d2), visits


# ---- Tetris ---------------------------------------------------------------

def column_heights(rows, width):
    heights = [0] * width
    for y in range(len(rows) - 1, -1, -1):
        bits = rows[y]
        if bits:
            for x in range(width):
                if heights[x] == 0 and (bits >> x) & 1:
                    heights[x] = y + 1
    return heights


def drop_piece(rows, width, cells, column):
    """Rest ``cells`` (list of (dx, dy)) at ``column``; returns the new rows.

    ``rows`` must already carry the extra headroom rows. Returns ``None`` if
    the piece does not fit horizontally.
    """
    for dx, _ in cells:
        if not 0 <= column + dx < width:
            return None
    heights = column_heights(rows, width)
    base = 0
    for dx, dy in cells:
        # lowest dy in that column decides the contact
        low = min(ddy for ddx, ddy in cells if ddx == dx)
        if dy == low:
            base = max(base, heights[column + dx] - low)
    out = list(rows)
    for dx, dy in cells:
        out[base + dy] |= 1 << (column + dx)
    return out


def clear_rows(rows, width):
    full = (1 << width) - 1
    kept = [r for r in rows if r != full]
    cleared = len(rows) - len(kept)
    return kept + [0] * cleared, cleared


def board_features(rows, width):
    """Heights, |adjacent height differences|, max height, holes."""
    heights = column_heights(rows, width)
    diffs = [abs(heights[i] - heights[i + 1]) for i in range(width - 1)]
    holes = 0
    for x in range(width):
        for y in range(heights[x]):
            if not (rows[y] >> x) & 1:
                holes += 1
    return heights + diffs + [max(heights), holes]


def place_and_settle(rows, width, height, cells, column):
    """Drop, clear full rows, report overflow. Returns (rows, cleared, overflow)."""
    placed = drop_piece(rows, width, cells, column)
    if placed is None:
        return None
    placed, cleared = clear_rows(placed, width)
    overflow = any(placed[y] for y in range(height, len(placed)))
    return placed, cleared, overflow


def _placements(piece_cells, piece, width):
    out = []
    for cells in piece_cells[piece]:
        span = max(dx for dx, _ in cells) + 1
        for c in range(width - span + 1):
            out.append((cells, c))
    return out


def tetris_playouts(width, height, w, num_games, seed, max_steps, accumulate, piece_cells):
    """Play ``num_games`` games with the Gibbs placement policy ``w``.

    Returns per-game lines and, if ``accumulate``, trace sums for the
    recurrent-state estimator (recurrent state: empty board), plus score
    outer-product sums and the number of policy steps.
    """
    rng = SplitMix64(seed)
    n = 2 * width + 1
    w = [float(v) for v in w]
    lines = np.zeros(num_games, dtype=np.int64)
    d1 = [0.0] * n
    d2 = [[0.0] * n for _ in range(n)]
    fis = [[0.0] * n for _ in range(n)]
    phi1 = [0.0] * n
    phi2 = [[0.0] * n for _ in range(n)]
    steps_total = 0
    total_rows = height + EXTRA_ROWS
    for game in range(num_games):
        rows = [0] * total_rows
        piece = min(int(rng.uniform() * 7), 6)
        for _ in range(max_steps):
            options = []
            for cells, c in _placements(piece_cells, piece, width):
                res = place_and_settle(rows, width, height, cells, c)
                options.append((res, board_features(res[0], width)))
            logits = [sum(wi * fi for wi, fi in zip(w, f)) for _, f in options]
            top = max(logits)
            ex = [math.exp(v - top) for v in logits]
            z = 0.0
            for v in ex:
                z += v
            probs = [v / z for v in ex]
            cum = []
            acc = 0.0
            for p in probs:
                acc += p
                cum.append(acc)
            k = _draw(cum, rng.uniform())
            (new_rows, cleared, overflow), _ = options[k]
            if accumulate:
                mean = [0.0] * n
                for p, (_, f) in zip(probs, options):
                    for i in range(n):
                        mean[i] += p * f[i]
                cov = [[0.0] * n for _ in range(n)]
                for p, (_, f) in zip(probs, options):
                    for i in range(n):
                        ci = f[i] - mean[i]
                        for j in range(n):
                            cov[i][j] += p * ci * (f[j] - mean[j])
                score = [options[k][1][i] - mean[i] for i in range(n)]
                if any(rows):
                    for i in range(n):
                        phi1[i] += score[i]
                        for j in range(n):
                            phi2[i][j] -= cov[i][j]
                else:
                    for i in range(n):
                        phi1[i] = 0.0
                        for j in range(n):
                            phi2[i][j] = 0.0
                for i in range(n):
                    d1[i] += cleared * phi1[i]
                    for j in range(n):
                        d2[i][j] += cleared * phi2[i][j]
                        fis[i][j] += score[i] * score[j]
            steps_total += 1
            lines[game] += cleared
            if overflow:
                break
            rows = new_rows
            piece = min(int(rng.uniform() * 7), 6)
    return lines, np.array(d1), np.array(d2), np.array(fis), steps_total
