# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Must stay step-for-step identical to ``_fallback.py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from libc.stdint cimport uint64_t, uint32_t, int64_t
from libc.string cimport memset, memcpy

cnp.import_array()

cdef enum:
    MAXROWS = 72
    MAXOPT = 128
    MAXN = 64
    EXTRA_ROWS = 4


cdef struct SplitMix:
    uint64_t state


cdef inline uint64_t sm_next(SplitMix* g) noexcept nogil:
    cdef uint64_t z
    g.state += <uint64_t>0x9E3779B97F4A7C15ULL
    z = g.state
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double sm_uniform(SplitMix* g) noexcept nogil:
    return <double>(sm_next(g) >> 11) * (1.0 / 9007199254740992.0)


cdef inline Py_ssize_t draw(const double* cum, Py_ssize_t n, double u) noexcept nogil:
    cdef Py_ssize_t j
    for j in range(n):
        if u < cum[j]:
            return j
    return n - 1


def recurrent_chain(const double[:, :, ::1] P_cum, const double[:, ::1] R, const double[:, ::1] pi_cum,
                    const double[:, :, ::1] scores, const double[:, :, :, ::1] hess,
                    Py_ssize_t sstar, Py_ssize_t num_steps, Py_ssize_t s0, uint64_t seed):
    cdef Py_ssize_t S = P_cum.shape[0], A = P_cum.shape[1], n = scores.shape[2]
    cdef cnp.ndarray[double, ndim=1] d1_arr = np.zeros(n)
    cdef cnp.ndarray[double, ndim=2] d2_arr = np.zeros((n, n))
    cdef double[::1] d1 = d1_arr
    cdef double[:, ::1] d2 = d2_arr
    cdef double[::1] phi1 = np.zeros(n)
    cdef double[:, ::1] phi2 = np.zeros((n, n))
    cdef SplitMix g
    cdef Py_ssize_t t, i, j, s = s0, a
    cdef long visits = 0
    cdef double r
    g.state = seed
    with nogil:
        for t in range(num_steps):
            a = draw(&pi_cum[s, 0], A, sm_uniform(&g))
            if s != sstar:
                for i in range(n):
                    phi1[i] += scores[s, a, i]
                    for j in range(n):
                        phi2[i, j] += hess[s, a, i, j]
            else:
                visits += 1
                for i in range(n):
                    phi1[i] = 0.0
                    for j in range(n):
                        phi2[i, j] = 0.0
            r = R[s, a]
            for i in range(n):
                d1[i] += r * phi1[i]
                for j in range(n):
                    d2[i, j] += r * phi2[i, j]
            s = draw(&P_cum[s, a, 0], S, sm_uniform(&g))
    return d1_arr, d2_arr, visits


# ---- Tetris ---------------------------------------------------------------

cdef struct Pieces:
    int nrot[7]
    int cells[7][4][4][2]
    int span[7][4]


cdef void column_heights(const uint32_t* rows, int total, int width, int* h) noexcept nogil:
    cdef int x, y
    for x in range(width):
        h[x] = 0
    for y in range(total - 1, -1, -1):
        if rows[y]:
            for x in range(width):
                if h[x] == 0 and (rows[y] >> x) & 1:
                    h[x] = y + 1


cdef int place_settle(const uint32_t* rows, uint32_t* out, int total, int width, int height,
                      int (*cells)[2], int column, int* cleared) noexcept nogil:
    """Drop, clear and report overflow (1) for a horizontally legal placement."""
    cdef int h[32]
    cdef int k, m, low, base = 0, dx, dy, y, kept
    cdef uint32_t full = ((<uint32_t>1) << width) - 1
    cdef uint32_t tmp[MAXROWS]
    column_heights(rows, total, width, h)
    for k in range(4):
        dx = cells[k][0]
        dy = cells[k][1]
        low = dy
        for m in range(4):
            if cells[m][0] == dx and cells[m][1] < low:
                low = cells[m][1]
        if dy == low and h[column + dx] - low > base:
            base = h[column + dx] - low
    memcpy(tmp, rows, total * sizeof(uint32_t))
    for k in range(4):
        tmp[base + cells[k][1]] |= (<uint32_t>1) << (column + cells[k][0])
    kept = 0
    for y in range(total):
        if tmp[y] != full:
            out[kept] = tmp[y]
            kept += 1
    cleared[0] = total - kept
    for y in range(kept, total):
        out[y] = 0
    for y in range(height, total):
        if out[y]:
            return 1
    return 0


cdef void board_features(const uint32_t* rows, int total, int width, double* f) noexcept nogil:
    cdef int h[32]
    cdef int x, y, d, mx = 0, holes = 0
    column_heights(rows, total, width, h)
    for x in range(width):
        f[x] = h[x]
        if h[x] > mx:
            mx = h[x]
        for y in range(h[x]):
            if not (rows[y] >> x) & 1:
                holes += 1
    for x in range(width - 1):
        d = h[x] - h[x + 1]
        f[width + x] = d if d >= 0 else -d
    f[2 * width - 1] = mx
    f[2 * width] = holes


def tetris_playouts(int width, int height, w_in, Py_ssize_t num_games, uint64_t seed,
                    Py_ssize_t max_steps, bint accumulate, piece_cells):
    cdef int n = 2 * width + 1
    cdef int total = height + EXTRA_ROWS
    if width > 30 or total > MAXROWS or n > MAXN:
        raise ValueError("board too large for the compiled kernel")
    cdef Pieces pc
    cdef int p, r, k, s
    for p in range(7):
        pc.nrot[p] = len(piece_cells[p])
        for r in range(pc.nrot[p]):
            s = 0
            for k in range(4):
                pc.cells[p][r][k][0] = piece_cells[p][r][k][0]
                pc.cells[p][r][k][1] = piece_cells[p][r][k][1]
                if pc.cells[p][r][k][0] > s:
                    s = pc.cells[p][r][k][0]
            pc.span[p][r] = s + 1
    cdef double[::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef cnp.ndarray[int64_t, ndim=1] lines_arr = np.zeros(num_games, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] d1_arr = np.zeros(n)
    cdef cnp.ndarray[double, ndim=2] d2_arr = np.zeros((n, n))
    cdef cnp.ndarray[double, ndim=2] fis_arr = np.zeros((n, n))
    cdef int64_t[::1] lines = lines_arr
    cdef double[::1] d1 = d1_arr
    cdef double[:, ::1] d2 = d2_arr
    cdef double[:, ::1] fis = fis_arr
    cdef double phi1[MAXN]
    cdef double phi2[MAXN][MAXN]
    cdef double feats[MAXOPT][MAXN]
    cdef uint32_t opt_rows[MAXOPT][MAXROWS]
    cdef int opt_cleared[MAXOPT]
    cdef int opt_over[MAXOPT]
    cdef double logits[MAXOPT]
    cdef double probs[MAXOPT]
    cdef double cum[MAXOPT]
    cdef double mean[MAXN]
    cdef double cov[MAXN][MAXN]
    cdef double score[MAXN]
    cdef uint32_t rows[MAXROWS]
    cdef SplitMix g
    cdef Py_ssize_t game, step, steps_total = 0
    cdef int piece, nopt, c, i, j, kk, y, empty
    cdef double top, z, acc, ci, u
    g.state = seed
    memset(phi1, 0, sizeof(phi1))
    memset(phi2, 0, sizeof(phi2))
    with nogil:
        for game in range(num_games):
            memset(rows, 0, sizeof(rows))
            u = sm_uniform(&g)
            piece = <int>(u * 7)
            if piece > 6:
                piece = 6
            for step in range(max_steps):
                nopt = 0
                for r in range(pc.nrot[piece]):
                    for c in range(width - pc.span[piece][r] + 1):
                        opt_over[nopt] = place_settle(rows, opt_rows[nopt], total, width, height,
                                                      pc.cells[piece][r], c, &opt_cleared[nopt])
                        board_features(opt_rows[nopt], total, width, feats[nopt])
                        nopt += 1
                for kk in range(nopt):
                    acc = 0.0
                    for i in range(n):
                        acc = acc + w[i] * feats[kk][i]
                    logits[kk] = acc
                top = logits[0]
                for kk in range(1, nopt):
                    if logits[kk] > top:
                        top = logits[kk]
                z = 0.0
                for kk in range(nopt):
                    probs[kk] = exp(logits[kk] - top)
                    z += probs[kk]
                acc = 0.0
                for kk in range(nopt):
                    probs[kk] = probs[kk] / z
                    acc += probs[kk]
                    cum[kk] = acc
                k = <int>draw(cum, nopt, sm_uniform(&g))
                if accumulate:
                    for i in range(n):
                        mean[i] = 0.0
                        for j in range(n):
                            cov[i][j] = 0.0
                    for kk in range(nopt):
                        for i in range(n):
                            mean[i] += probs[kk] * feats[kk][i]
                    for kk in range(nopt):
                        for i in range(n):
                            ci = feats[kk][i] - mean[i]
                            for j in range(n):
                                cov[i][j] += probs[kk] * ci * (feats[kk][j] - mean[j])
                    for i in range(n):
                        score[i] = feats[k][i] - mean[i]
                    empty = 1
                    for y in range(total):
                        if rows[y]:
                            empty = 0
                            break
                    if not empty:
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
                        d1[i] += opt_cleared[k] * phi1[i]
                        for j in range(n):
                            d2[i, j] += opt_cleared[k] * phi2[i][j]
                            fis[i, j] += score[i] * score[j]
                steps_total += 1
                lines[game] += opt_cleared[k]
                if opt_over[k]:
                    break
                memcpy(rows, opt_rows[k], total * sizeof(uint32_t))
                u = sm_uniform(&g)
                piece = <int>(u * 7)
                if piece > 6:
                    piece = 6
    return lines_arr, d1_arr, d2_arr, fis_arr, steps_total
