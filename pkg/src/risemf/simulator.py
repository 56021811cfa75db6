"""Monte-Carlo simulator of the full network model.

Each trial realises BSs, line-segment obstacles (a fraction carrying RISs)
and, for the uplink, interfering users, inside a disk around the typical
user. Blockage is decided geometrically, interferers use the exact ULA
pattern, and uplink interferers draw their transmit powers from their own
serving configurations. The outputs are per-trial received powers from which
SINR and exposure samples are assembled.

Randomness: every draw of trial ``k`` under master seed ``s`` is a
counter-based hash of a key derived from (s, k), so results do not depend on
how trials are split across workers. Downlink, obstacle and uplink draws use
separate sub-streams, so switching the uplink on does not change downlink
samples. Obstacles are generated lazily per grid cell from a key and the
cell coordinates, so a realisation does not depend on the window size.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numba as nb
import numpy as np
from scipy import stats

from .association import cascade_law
from .downlink import FIXED_100
from .model import (
    Conditioning,
    DistributionCurve,
    LinkGeometry,
    LinkType,
    NetworkParams,
    derive_constants,
)

WINDOW_RADIUS = 2000.0
CELL_SIZE = 75.0
CHUNK = 2000
# BS distance covered by the dense cell grid under random conditioning (exceeded w.p. ~1e-5)
RANDOM_REACH = 600.0

# indices into the configuration vector passed to the kernels
(C_LAMBDA_B, C_LAMBDA_O, C_MU, C_L_O, C_N_B, C_M_L, C_M_N, C_ALPHA_L, C_ALPHA_N, C_P_B, C_G_B,
 C_G_R, C_ZETA, C_P0, C_P_MAX, C_EPS, C_T_MAX, C_BETA, C_WINDOW, C_SUB_WINDOW, C_PATTERN, C_DELTA) = range(22)
N_CFG = 22
PATTERNS = ("ula", "discrete")

# per-trial output columns
(O_LINK, O_P, O_I, O_T_RU, O_T_BR, O_P_TX, O_P_UL, O_I_UL, O_I_SUB, O_N_BS) = range(10)
N_OUT = 10

# obstacle pool columns: centre, half-length vector, RIS flag, RIS side
(B_X, B_Y, B_HX, B_HY, B_RIS, B_SIDE) = range(6)
N_OBS_COLS = 6

# tagged-BS record: position, distance, serving fading (DL, UL), obstacle key
(T_X, T_Y, T_DIST, T_HL, T_HN, T_HL_UL, T_HN_UL) = range(7)
N_TAGGED = 7

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_CELL_OFFSET = 1 << 20


def _config(params: NetworkParams, window_radius: float, sub_window: float,
            pattern: str = "ula") -> np.ndarray:
    if pattern not in PATTERNS:
        raise ValueError(f"pattern must be one of {PATTERNS}, got {pattern!r}")
    d = derive_constants(params)
    cfg = np.zeros(N_CFG)
    cfg[C_LAMBDA_B] = params.lambda_b
    cfg[C_LAMBDA_O] = params.lambda_o
    cfg[C_MU] = params.mu if params.has_ris else 0.0
    cfg[C_L_O] = params.L_o
    cfg[C_N_B] = params.N_b
    cfg[C_M_L] = params.m_L
    cfg[C_M_N] = params.m_N
    cfg[C_ALPHA_L] = params.alpha_L
    cfg[C_ALPHA_N] = params.alpha_N
    cfg[C_P_B] = params.p_b
    cfg[C_G_B] = d.G_b
    cfg[C_G_R] = d.G_r
    cfg[C_ZETA] = d.zeta
    cfg[C_P0] = params.p0
    cfg[C_P_MAX] = params.p_max
    cfg[C_EPS] = params.epsilon
    cfg[C_T_MAX] = d.T_max
    cfg[C_BETA] = d.beta
    cfg[C_WINDOW] = window_radius
    cfg[C_SUB_WINDOW] = sub_window
    cfg[C_PATTERN] = PATTERNS.index(pattern)
    cfg[C_DELTA] = params.delta
    return cfg


# ------------------------------------------------------------------ kernels
@nb.njit(cache=True, inline="always")
def _mix64(z):
    """splitmix64 finaliser: a bijective 64-bit mixing function."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, inline="always")
def _hash_unit(key, j):
    """j-th uniform in [0, 1) of the counter-based stream ``key``."""
    z = _mix64(np.uint64(key) + np.uint64(j + 1) * _GOLDEN)
    return float(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True)
def _sub_key(key, stream):
    return _mix64(np.uint64(key) ^ (np.uint64(stream) * _GOLDEN))


@nb.njit(cache=True)
def _trial_key(seed, trial):
    return _mix64(_mix64(np.uint64(seed)) ^ _mix64(np.uint64(trial) + _GOLDEN))


@nb.njit(cache=True)
def _gamma_unit(key, j, m):
    """Unit-mean Gamma(m, 1/m) as the mean of m exponentials (uses draws j..j+m-1)."""
    acc = 0.0
    for k in range(m):
        acc -= math.log(1.0 - _hash_unit(key, j + k))
    return acc / m


@nb.njit(cache=True)
def _poisson(key, j, mean):
    """Poisson(mean) by inversion, in pieces of mean ≤ 256 (one draw per piece).

    Returns (count, next draw index).
    """
    n = 0
    left = mean
    while left > 0.0:
        piece = min(left, 256.0)
        left -= piece
        u = _hash_unit(key, j)
        j += 1
        p = math.exp(-piece)
        cum = p
        k = 0
        while u > cum and k < 100000:
            k += 1
            p *= piece / k
            cum += p
        n += k
    return n, j


@nb.njit(cache=True)
def _ula(delta, n):
    s = math.sin(math.pi * delta)
    if abs(s) < 1e-12:
        return float(n)
    v = math.sin(math.pi * n * delta)
    return v * v / (n * s * s)


@nb.njit(cache=True)
def _beam_gain(delta, cfg):
    """Interferer beam gain: exact ULA pattern, or its multi-lobe approximation."""
    n = int(cfg[C_N_B])
    if cfg[C_PATTERN] == 0.0:
        return _ula(delta, n)
    a = abs(delta)
    if a > 0.5:
        a = 1.0 - a
    idx = max(int(math.ceil(a * n - 1e-12)) - 1, 0)
    if idx > n // 2 - 1:
        return 0.0
    if idx == 0:
        return 0.5 * cfg[C_DELTA] * n
    return 0.5 * cfg[C_DELTA] * _ula((2 * idx + 1) / (2.0 * n), n)


@nb.njit(cache=True)
def _reflection_prob(t_bu, t, theta):
    den = math.sqrt(max(t_bu * t_bu + t * t - 2.0 * t_bu * t * math.cos(theta), 0.0))
    if den <= 0.0:
        return 0.25
    r = (t - t_bu * math.cos(theta)) / den
    r = min(1.0, max(-1.0, r))
    return 0.5 - math.acos(r) / (2.0 * math.pi)


@nb.njit(cache=True)
def _direct_power(t, alpha, cfg):
    cutoff = cfg[C_T_MAX] ** (cfg[C_ALPHA_L] / alpha)
    if t < cutoff:
        return cfg[C_P0] * t ** (alpha * cfg[C_EPS])
    return cfg[C_P_MAX]


@nb.njit(cache=True)
def _cascaded_power(prod, cfg):
    a = cfg[C_ALPHA_L]
    cutoff = cfg[C_T_MAX] * cfg[C_G_R] ** (1.0 / a)
    if prod < cutoff:
        return cfg[C_P0] * (prod ** a / cfg[C_G_R]) ** cfg[C_EPS]
    return cfg[C_P_MAX]


@nb.njit(cache=True)
def _interferer_power(key, cfg, tab_t, tab_acl, tab_q):
    """Transmit power of an interfering user from its own serving configuration.

    Its nearest-BS distance is Rayleigh, the link type follows the association
    probabilities at that distance, a cascaded link takes its RIS distance
    from the tabulated inverse CDF and θ₀ from the density ∝ 𝒫_R (rejection).
    All draws come from the stream ``key``.
    """
    lam = cfg[C_LAMBDA_B]
    t = math.sqrt(-math.log(1.0 - _hash_unit(key, 0)) / (math.pi * lam))
    a_dl = math.exp(-cfg[C_BETA] * t)
    a_cl = 0.0
    if cfg[C_G_R] > 0.0:
        a_cl = np.interp(t, tab_t, tab_acl)
    u = _hash_unit(key, 1)
    if u < a_dl:
        return _direct_power(t, cfg[C_ALPHA_L], cfg)
    if u < a_dl + a_cl:
        n_u = tab_q.shape[1] - 1
        v = _hash_unit(key, 2) * n_u
        j = min(int(v), n_u - 1)
        fv = v - j
        # bilinear in (log t, u)
        lt = math.log(max(t, tab_t[0]))
        x = (lt - math.log(tab_t[0])) / (math.log(tab_t[-1]) - math.log(tab_t[0])) * (tab_t.size - 1)
        i = min(max(int(x), 0), tab_t.size - 2)
        fx = min(max(x - i, 0.0), 1.0)
        q0 = tab_q[i, j] * (1 - fv) + tab_q[i, j + 1] * fv
        q1 = tab_q[i + 1, j] * (1 - fv) + tab_q[i + 1, j + 1] * fv
        t_ru = q0 * (1 - fx) + q1 * fx
        k = 3
        while True:
            theta = 2.0 * math.pi * _hash_unit(key, k) - math.pi
            accept = _hash_unit(key, k + 1) < 2.0 * _reflection_prob(t, t_ru, theta)
            k += 2
            if accept:
                break
        t_br = math.sqrt(max(t * t + t_ru * t_ru - 2.0 * t * t_ru * math.cos(theta), 1e-12))
        return _cascaded_power(t_ru * t_br, cfg)
    return _direct_power(t, cfg[C_ALPHA_N], cfg)


@nb.njit(cache=True, inline="always")
def _cell_code(cx, cy):
    return (cx + _CELL_OFFSET) * (2 * _CELL_OFFSET) + (cy + _CELL_OFFSET)


@nb.njit(cache=True)
def _cell(cx, cy, obs_key, cfg, cell, dense, table, pool, meta):
    """(first pool row, count) of the obstacles centred in grid cell (cx, cy).

    Obstacle centres form a PPP, so each cell independently holds a Poisson
    number of uniformly placed segments; they are generated on first use.
    A cell's content depends only on the trial's obstacle key and the cell
    coordinates. Cells within ``meta[3]`` cells of the origin live in a dense
    table, others in an open-addressing hash table.
    """
    half_grid = meta[3]
    if -half_grid <= cx < half_grid and -half_grid <= cy < half_grid:
        idx = (cx + half_grid) * (2 * half_grid) + (cy + half_grid)
        if dense[idx, 0] == meta[1]:
            return dense[idx, 1], dense[idx, 2]
        start, n = _generate_cell(cx, cy, obs_key, cfg, cell, pool, meta)
        dense[idx, 0] = meta[1]
        dense[idx, 1] = start
        dense[idx, 2] = n
        return start, n
    code = _cell_code(cx, cy)
    mask = meta[2]
    h = np.int64(_mix64(np.uint64(code)) & np.uint64(mask))
    while table[h, 0] == meta[1]:
        if table[h, 1] == code:
            return table[h, 2], table[h, 3]
        h = (h + 1) & mask
    start, n = _generate_cell(cx, cy, obs_key, cfg, cell, pool, meta)
    table[h, 0] = meta[1]
    table[h, 1] = code
    table[h, 2] = start
    table[h, 3] = n
    return start, n


@nb.njit(cache=True)
def _generate_cell(cx, cy, obs_key, cfg, cell, pool, meta):
    code = _cell_code(cx, cy)
    key = _mix64(np.uint64(obs_key) ^ _mix64(np.uint64(code)))
    mean = cfg[C_LAMBDA_O] * cell * cell
    u = _hash_unit(key, 0)
    n = 0
    p = math.exp(-mean)
    cum = p
    while u > cum and n < 1000:
        n += 1
        p *= mean / n
        cum += p
    start = meta[0]
    if start + n > pool.shape[0]:
        raise RuntimeError("obstacle pool exhausted")
    half = 0.5 * cfg[C_L_O]
    for k in range(n):
        j = 1 + 5 * k
        row = start + k
        phi = math.pi * _hash_unit(key, j + 2)
        pool[row, B_X] = (cx + _hash_unit(key, j)) * cell
        pool[row, B_Y] = (cy + _hash_unit(key, j + 1)) * cell
        pool[row, B_HX] = half * math.cos(phi)
        pool[row, B_HY] = half * math.sin(phi)
        pool[row, B_RIS] = 1.0 if _hash_unit(key, j + 3) < cfg[C_MU] else 0.0
        pool[row, B_SIDE] = 1.0 if _hash_unit(key, j + 4) < 0.5 else -1.0
    meta[0] = start + n
    return start, n


@nb.njit(cache=True, inline="always")
def _segments_cross(ax, ay, bx, by, cx, cy, dx, dy):
    """Proper intersection of segments AB and CD (touching does not count)."""
    d1 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    d2 = (bx - ax) * (dy - ay) - (by - ay) * (dx - ax)
    if d1 * d2 >= 0.0:
        return False
    d3 = (dx - cx) * (ay - cy) - (dy - cy) * (ax - cx)
    d4 = (dx - cx) * (by - cy) - (dy - cy) * (bx - cx)
    return d3 * d4 < 0.0


@nb.njit(cache=True)
def _blocked(x0, y0, x1, y1, exclude, obs_key, cfg, cell, dense, table, pool, meta):
    """True if any segment except pool row ``exclude`` crosses the link.

    Walks the grid cells along the link (Amanatides-Woo traversal). Segments
    are shorter than a cell, so any segment crossing a cell has its centre in
    that cell or one of its eight neighbours.
    """
    i = int(math.floor(x0 / cell))
    j = int(math.floor(y0 / cell))
    i_end = int(math.floor(x1 / cell))
    j_end = int(math.floor(y1 / cell))
    dx = x1 - x0
    dy = y1 - y0
    step_i = 1 if dx > 0 else -1
    step_j = 1 if dy > 0 else -1
    inf = 1e300
    if dx != 0.0:
        t_max_x = ((i + (1 if dx > 0 else 0)) * cell - x0) / dx
        t_dx = cell / abs(dx)
    else:
        t_max_x, t_dx = inf, inf
    if dy != 0.0:
        t_max_y = ((j + (1 if dy > 0 else 0)) * cell - y0) / dy
        t_dy = cell / abs(dy)
    else:
        t_max_y, t_dy = inf, inf
    max_steps = abs(i_end - i) + abs(j_end - j) + 2
    half_grid = meta[3]
    width = 2 * half_grid
    for _ in range(max_steps + 1):
        for di in range(-1, 2):
            for dj in range(-1, 2):
                ci = i + di
                cj = j + dj
                # dense hits are resolved inline; helper calls cost far more than the lookup
                start = -1
                n = 0
                if -half_grid <= ci < half_grid and -half_grid <= cj < half_grid:
                    idx = (ci + half_grid) * width + (cj + half_grid)
                    if dense[idx, 0] == meta[1]:
                        start = dense[idx, 1]
                        n = dense[idx, 2]
                if start < 0:
                    start, n = _cell(ci, cj, obs_key, cfg, cell, dense, table, pool, meta)
                for k in range(start, start + n):
                    if k == exclude:
                        continue
                    hx, hy = pool[k, B_HX], pool[k, B_HY]
                    if _segments_cross(x0, y0, x1, y1, pool[k, B_X] - hx, pool[k, B_Y] - hy,
                                       pool[k, B_X] + hx, pool[k, B_Y] + hy):
                        return True
        if i == i_end and j == j_end:
            break
        if t_max_x < t_max_y:
            if t_max_x > 1.0:
                break
            i += step_i
            t_max_x += t_dx
        else:
            if t_max_y > 1.0:
                break
            j += step_j
            t_max_y += t_dy
    return False


@nb.njit(cache=True)
def _draw_scenario(key, cfg, fixed_tbu, uplink, tab_t, tab_acl, tab_q):
    """Draw the random quantities of one trial from the trial key.

    Downlink, obstacle and uplink quantities use separate sub-streams, so
    switching the uplink on leaves the downlink draws unchanged. Obstacles are
    not drawn here; they are generated cell by cell from the returned obstacle
    key. Returns (tagged, obstacle_key, bss, ue) where ``bss`` rows are
    [x, y, aod_served, aod_user, hL, hN] and ``ue`` rows are
    [x, y, aoa_served, aoa_ue, hL, hN, p_tx].
    """
    R = cfg[C_WINDOW]
    lam_b = cfg[C_LAMBDA_B]
    mL = int(cfg[C_M_L])
    mN = int(cfg[C_M_N])
    kd = _sub_key(key, 1)
    obs_key = _sub_key(key, 2)
    tagged = np.zeros(N_TAGGED)
    if fixed_tbu > 0:
        t_bu = fixed_tbu
    else:
        t_bu = math.sqrt(-math.log(1.0 - _hash_unit(kd, 0)) / (math.pi * lam_b))
    psi = 2.0 * math.pi * _hash_unit(kd, 1)
    tagged[T_X] = t_bu * math.cos(psi)
    tagged[T_Y] = t_bu * math.sin(psi)
    tagged[T_DIST] = t_bu
    tagged[T_HL] = _gamma_unit(kd, 2, mL)
    tagged[T_HN] = _gamma_unit(kd, 2 + mL, mN)
    j = 2 + mL + mN
    # other BSs, no closer than the tagged one
    area = math.pi * max(R * R - t_bu * t_bu, 0.0)
    n_bs, j = _poisson(kd, j, lam_b * area)
    bss = np.zeros((n_bs, 6))
    for k in range(n_bs):
        r = math.sqrt(t_bu * t_bu + _hash_unit(kd, j) * (R * R - t_bu * t_bu))
        a = 2.0 * math.pi * _hash_unit(kd, j + 1)
        bss[k, 0] = r * math.cos(a)
        bss[k, 1] = r * math.sin(a)
        bss[k, 2] = math.pi * _hash_unit(kd, j + 2)
        bss[k, 3] = math.pi * _hash_unit(kd, j + 3)
        bss[k, 4] = _gamma_unit(kd, j + 4, mL)
        bss[k, 5] = _gamma_unit(kd, j + 4 + mL, mN)
        j += 4 + mL + mN
    if not uplink:
        return tagged, obs_key, bss, np.zeros((0, 7))
    ku = _sub_key(key, 3)
    tagged[T_HL_UL] = _gamma_unit(ku, 0, mL)
    tagged[T_HN_UL] = _gamma_unit(ku, mL, mN)
    j = mL + mN
    n_cand, j = _poisson(ku, j, lam_b * math.pi * R * R)
    ue = np.zeros((n_cand, 7))
    n_ue = 0
    for k in range(n_cand):
        r = R * math.sqrt(_hash_unit(ku, j))
        a = 2.0 * math.pi * _hash_unit(ku, j + 1)
        keep = _hash_unit(ku, j + 2) < -math.expm1(-math.pi * lam_b * r * r)
        j += 3
        if not keep:
            continue
        ue[n_ue, 0] = tagged[T_X] + r * math.cos(a)
        ue[n_ue, 1] = tagged[T_Y] + r * math.sin(a)
        ue[n_ue, 2] = math.pi * _hash_unit(ku, j)
        ue[n_ue, 3] = math.pi * _hash_unit(ku, j + 1)
        ue[n_ue, 4] = _gamma_unit(ku, j + 2, mL)
        ue[n_ue, 5] = _gamma_unit(ku, j + 2 + mL, mN)
        j += 2 + mL + mN
        # each interfering user's configuration has its own stream
        ue[n_ue, 6] = _interferer_power(_sub_key(ku, 16 + k), cfg, tab_t, tab_acl, tab_q)
        n_ue += 1
    return tagged, obs_key, bss, ue[:n_ue]


@nb.njit(cache=True)
def _classify(tagged, obs_key, cfg, cell, dense, table, pool, meta):
    """Serving link of the user at the origin: (type, t_ru, t_br, pool row of the RIS).

    RIS candidates are examined nearest first. Square rings of cells around
    the origin are expanded one at a time; after ring K every unexpanded cell
    is at least K cells away, so pending candidates within that distance can
    be tested in order.
    """
    bx, by = tagged[T_X], tagged[T_Y]
    if not _blocked(0.0, 0.0, bx, by, -1, obs_key, cfg, cell, dense, table, pool, meta):
        return 0, np.nan, np.nan, -1
    if cfg[C_MU] <= 0.0 or cfg[C_G_R] <= 0.0:
        return 2, np.nan, np.nan, -1
    R = cfg[C_WINDOW]
    cand = np.empty(256, dtype=np.int64)
    cand_d = np.empty(256)
    done = np.zeros(256, dtype=np.bool_)
    n_cand = 0
    k_max = int(math.ceil(R / cell)) + 1
    for K in range(k_max + 1):
        for a in range(-K, K + 1):
            edge = abs(a) == K
            step = 1 if edge else max(2 * K, 1)
            for b in range(-K, K + 1, step):
                start, n = _cell(a, b, obs_key, cfg, cell, dense, table, pool, meta)
                for r in range(start, start + n):
                    if pool[r, B_RIS] <= 0.0:
                        continue
                    d = math.hypot(pool[r, B_X], pool[r, B_Y])
                    if d > R:
                        continue
                    if n_cand == cand.size:
                        cand = np.concatenate((cand, np.empty(cand.size, dtype=np.int64)))
                        cand_d = np.concatenate((cand_d, np.empty(cand_d.size)))
                        done = np.concatenate((done, np.zeros(done.size, dtype=np.bool_)))
                    cand[n_cand] = r
                    cand_d[n_cand] = d
                    n_cand += 1
        safe = K * cell if K < k_max else np.inf
        while True:
            best = -1
            for c in range(n_cand):
                if not done[c] and cand_d[c] <= safe and (best < 0 or cand_d[c] < cand_d[best]):
                    best = c
            if best < 0:
                break
            done[best] = True
            r = cand[best]
            cx, cy = pool[r, B_X], pool[r, B_Y]
            # unit normal of the reflecting face
            nx = -pool[r, B_HY] * pool[r, B_SIDE]
            ny = pool[r, B_HX] * pool[r, B_SIDE]
            if (-cx) * nx + (-cy) * ny <= 0.0 or (bx - cx) * nx + (by - cy) * ny <= 0.0:
                continue
            if _blocked(cx, cy, 0.0, 0.0, r, obs_key, cfg, cell, dense, table, pool, meta):
                continue
            return 1, cand_d[best], math.hypot(bx - cx, by - cy), r
    return 2, np.nan, np.nan, -1


@nb.njit(cache=True)
def _evaluate(cfg, tagged, obs_key, bss, ue, uplink, cell, dense, table, pool, meta):
    """Per-trial received powers from a drawn scenario (no further randomness)."""
    meta[0] = 0
    meta[1] += 1
    out = np.full(N_OUT, np.nan)
    link, t_ru, t_br, _ = _classify(tagged, obs_key, cfg, cell, dense, table, pool, meta)
    aL, aN = cfg[C_ALPHA_L], cfg[C_ALPHA_N]
    t_bu = tagged[T_DIST]
    zeta = cfg[C_ZETA]
    if link == 0:
        pl, h = zeta * t_bu ** (-aL), tagged[T_HL]
    elif link == 1:
        pl, h = zeta * cfg[C_G_R] * (t_ru * t_br) ** (-aL), tagged[T_HL]
    else:
        pl, h = zeta * t_bu ** (-aN), tagged[T_HN]
    out[O_LINK] = link
    out[O_T_RU] = t_ru
    out[O_T_BR] = t_br
    out[O_P] = cfg[C_P_B] * cfg[C_G_B] * pl * h
    total = 0.0
    sub = 0.0
    for k in range(bss.shape[0]):
        x, y = bss[k, 0], bss[k, 1]
        d = math.hypot(x, y)
        gain = _beam_gain(0.5 * math.cos(bss[k, 2]) - 0.5 * math.cos(bss[k, 3]), cfg)
        if _blocked(0.0, 0.0, x, y, -1, obs_key, cfg, cell, dense, table, pool, meta):
            p = cfg[C_P_B] * gain * zeta * d ** (-aN) * bss[k, 5]
        else:
            p = cfg[C_P_B] * gain * zeta * d ** (-aL) * bss[k, 4]
        total += p
        if d <= cfg[C_SUB_WINDOW]:
            sub += p
    out[O_I] = total
    out[O_I_SUB] = sub
    out[O_N_BS] = bss.shape[0]
    if not uplink:
        return out
    if link == 0:
        p_tx = _direct_power(t_bu, aL, cfg)
        h_ul = tagged[T_HL_UL]
    elif link == 1:
        p_tx = _cascaded_power(t_ru * t_br, cfg)
        h_ul = tagged[T_HL_UL]
    else:
        p_tx = _direct_power(t_bu, aN, cfg)
        h_ul = tagged[T_HN_UL]
    out[O_P_TX] = p_tx
    out[O_P_UL] = p_tx * cfg[C_G_B] * pl * h_ul
    bx, by = tagged[T_X], tagged[T_Y]
    total = 0.0
    for k in range(ue.shape[0]):
        x, y = ue[k, 0], ue[k, 1]
        d = math.hypot(x - bx, y - by)
        gain = _beam_gain(0.5 * math.cos(ue[k, 2]) - 0.5 * math.cos(ue[k, 3]), cfg)
        if _blocked(x, y, bx, by, -1, obs_key, cfg, cell, dense, table, pool, meta):
            total += ue[k, 6] * gain * zeta * d ** (-aN) * ue[k, 5]
        else:
            total += ue[k, 6] * gain * zeta * d ** (-aL) * ue[k, 4]
    out[O_I_UL] = total
    return out


@nb.njit(cache=True)
def _materialize(obs_key, cfg, cell, radius, dense, table, pool, meta):
    """All obstacles with centres within ``radius`` of the origin."""
    meta[0] = 0
    meta[1] += 1
    k = int(math.ceil(radius / cell))
    for a in range(-k - 1, k + 1):
        for b in range(-k - 1, k + 1):
            _cell(a, b, obs_key, cfg, cell, dense, table, pool, meta)
    rows = pool[:meta[0]]
    keep = np.sqrt(rows[:, B_X] ** 2 + rows[:, B_Y] ** 2) <= radius
    return rows[keep].copy()


@nb.njit(cache=True)
def _run_trials(seed, lo, hi, cfg, fixed_tbu, uplink, tab_t, tab_acl, tab_q, cell, dense, table, pool,
                meta):
    out = np.empty((hi - lo, N_OUT))
    for k in range(lo, hi):
        tagged, obs_key, bss, ue = _draw_scenario(_trial_key(seed, k), cfg, fixed_tbu, uplink, tab_t,
                                                  tab_acl, tab_q)
        out[k - lo] = _evaluate(cfg, tagged, obs_key, bss, ue, uplink, cell, dense, table, pool, meta)
    return out


@nb.njit(cache=True)
def _interferer_powers(key, cfg, tab_t, tab_acl, tab_q, n):
    out = np.empty(n)
    for k in range(n):
        out[k] = _interferer_power(_sub_key(key, k), cfg, tab_t, tab_acl, tab_q)
    return out


# ------------------------------------------------------------ python side
def trial_key(seed: int, trial: int) -> np.uint64:
    """64-bit key of the random stream used by trial ``trial`` of master seed ``seed``."""
    return np.uint64(_trial_key(np.uint64(int(seed) & (2**64 - 1)), np.uint64(trial)))


class _Workspace:
    """Reusable cell tables and obstacle pool for the lazy obstacle field.

    Cells within ``half_grid`` cells of the origin are indexed densely, the
    rest through an open-addressing hash table. Bumping the stamp empties
    both between trials without clearing memory.
    """

    def __init__(self, half_grid: int, slots_log2: int = 15, pool_rows: int = 200_000):
        self.dense = np.zeros(((2 * half_grid) ** 2, 3), dtype=np.int64)
        self.table = np.zeros((1 << slots_log2, 4), dtype=np.int64)
        self.pool = np.zeros((pool_rows, N_OBS_COLS))
        self.meta = np.array([0, 0, (1 << slots_log2) - 1, half_grid], dtype=np.int64)

    @classmethod
    def for_window(cls, window_radius: float, reach: float, **kw) -> "_Workspace":
        """Dense grid covering links within ``window_radius`` of points up to ``reach`` away."""
        return cls(int(math.ceil((window_radius + reach) / CELL_SIZE)) + 3, **kw)

    def args(self) -> tuple:
        return (CELL_SIZE, self.dense, self.table, self.pool, self.meta)


@dataclass(frozen=True)
class InterfererTables:
    """Lookup tables for sampling an interfering user's serving configuration."""

    t: np.ndarray
    a_cl: np.ndarray
    quantile: np.ndarray

    @classmethod
    def build(cls, params: NetworkParams, n_t: int = 96, n_u: int = 512) -> "InterfererTables":
        t = np.geomspace(0.5, 3000.0, n_t)
        if not params.has_ris:
            return cls(t, np.zeros(n_t), np.zeros((n_t, 2)))
        from .association import association_split

        a_cl = np.array([association_split(float(x), params).a_cl for x in t])
        u = np.linspace(0.0, 1.0, n_u + 1)
        u[-1] = 1.0 - 1e-9
        q = np.stack([cascade_law(float(x), params).quantile(u) for x in t])
        return cls(t, a_cl, q)


@dataclass(frozen=True)
class Scenario:
    """One drawn network realisation around the typical user at the origin.

    Attributes:
        window_radius: radius of the BS/user window, m.
        tagged_bs: position of the serving BS.
        t_bu: its distance.
        bs_points: other BS positions, shape (n, 2).
        obstacle_segments: obstacles with centres inside the window, rows
            [x, y, length, phi, has_ris, side] with phi in [0, π) and side ±1
            the face carrying the RIS.
        user_points: interfering users [x, y] (uplink scenarios only).
        seed: master seed of the draw.
        trial_index: trial number within that seed.
    """

    window_radius: float
    tagged_bs: tuple[float, float]
    t_bu: float
    bs_points: np.ndarray
    obstacle_segments: np.ndarray
    user_points: np.ndarray
    seed: int
    trial_index: int
    _tagged: np.ndarray
    _key: np.uint64
    _bss: np.ndarray
    _ue: np.ndarray
    _cfg: np.ndarray
    _uplink: bool


@dataclass(frozen=True)
class TrialOutcome:
    """SINR and exposure of one trial in one direction."""

    direction: str
    sinr: float
    exposure: float
    link_type: LinkType
    geometry: LinkGeometry
    serving_power: float
    interference: float


def _tables_for(params: NetworkParams, uplink: bool) -> InterfererTables:
    if uplink:
        return InterfererTables.build(params)
    return InterfererTables(np.array([1.0, 2.0]), np.zeros(2), np.zeros((2, 2)))


def _fixed_tbu(conditioning: Conditioning) -> float:
    return float(conditioning.t_bu) if conditioning.mode == "fixed" else -1.0


def _segments(rows: np.ndarray) -> np.ndarray:
    """Internal [x, y, hx, hy, ris, side] rows as [x, y, length, phi, has_ris, side]."""
    # orientations are drawn in [0, π), so arctan2 recovers them without folding
    phi = np.arctan2(rows[:, B_HY], rows[:, B_HX])
    length = 2.0 * np.hypot(rows[:, B_HX], rows[:, B_HY])
    return np.column_stack([rows[:, B_X], rows[:, B_Y], length, phi, rows[:, B_RIS], rows[:, B_SIDE]])


def sample_scenario(params: NetworkParams, seed: int, trial: int,
                    conditioning: Conditioning = FIXED_100, window_radius: float = WINDOW_RADIUS,
                    uplink: bool = True, pattern: str = "ula") -> Scenario:
    """Draw the realisation used by trial ``trial`` of master seed ``seed``."""
    cfg = _config(params, window_radius, window_radius, pattern)
    tabs = _tables_for(params, uplink)
    tagged, key, bss, ue = _draw_scenario(trial_key(seed, trial), cfg, _fixed_tbu(conditioning),
                                          uplink, tabs.t, tabs.a_cl, tabs.quantile)
    key = np.uint64(key)
    pool_rows = int(3 * params.lambda_o * (2 * window_radius + 4 * CELL_SIZE) ** 2) + 1000
    ws = _Workspace.for_window(window_radius, 0.0, pool_rows=pool_rows)
    rows = _materialize(key, cfg, CELL_SIZE, window_radius, *ws.args()[1:])
    return Scenario(window_radius, (float(tagged[T_X]), float(tagged[T_Y])), float(tagged[T_DIST]),
                    bss[:, :2].copy(), _segments(rows), ue[:, :2].copy(), int(seed), int(trial),
                    tagged, key, bss, ue, cfg, uplink)


def _evaluate_scenario(scenario: Scenario, uplink: bool) -> np.ndarray:
    return _evaluate(scenario._cfg, scenario._tagged, scenario._key, scenario._bss, scenario._ue,
                     uplink, *_Workspace.for_window(scenario.window_radius, scenario.t_bu).args())


def classify_serving_link(scenario: Scenario, params: NetworkParams) -> LinkGeometry:
    """Serving-link geometry of a drawn scenario."""
    out = _evaluate_scenario(scenario, False)
    link = LinkType(int(out[O_LINK]))
    if link == LinkType.CL:
        return LinkGeometry(link, scenario.t_bu, float(out[O_T_RU]), float(out[O_T_BR]))
    return LinkGeometry(link, scenario.t_bu)


def realize_downlink(scenario: Scenario, params: NetworkParams) -> TrialOutcome:
    """Downlink SINR and exposure (W/m²) of a drawn scenario."""
    out = _evaluate_scenario(scenario, False)
    geo = classify_serving_link(scenario, params)
    p, i = float(out[O_P]), float(out[O_I])
    return TrialOutcome("downlink", p / (i + params.sigma2_dl), (p + i) / derive_constants(params).area_E,
                        geo.link_type, geo, p, i)


def realize_uplink(scenario: Scenario, params: NetworkParams) -> TrialOutcome:
    """Uplink SINR and SAR exposure (W/kg) of a drawn uplink scenario."""
    if not scenario._uplink:
        raise ValueError("scenario was drawn without uplink users")
    out = _evaluate_scenario(scenario, True)
    geo = classify_serving_link(scenario, params)
    p, i = float(out[O_P_UL]), float(out[O_I_UL])
    return TrialOutcome("uplink", p / (i + params.sigma2_ul), params.SAR_ref * float(out[O_P_TX]),
                        geo.link_type, geo, p, i)


def _run_chunk(args) -> np.ndarray:
    seed, lo, hi, cfg, fixed_tbu, uplink, tabs = args
    reach = fixed_tbu if fixed_tbu > 0 else RANDOM_REACH
    ws = _Workspace.for_window(cfg[C_WINDOW], reach)
    return _run_trials(np.uint64(int(seed) & (2**64 - 1)), lo, hi, cfg, fixed_tbu, uplink, tabs.t,
                       tabs.a_cl, tabs.quantile, *ws.args())


@dataclass
class SimulationResult:
    """Per-trial samples.

    Attributes:
        params: the simulated parameters.
        link: serving-link type per trial.
        p_dl, i_dl: downlink serving power and interference, W.
        i_dl_sub: interference from BSs within ``sub_window`` only.
        t_ru, t_br: cascaded distances (NaN for direct links).
        p_tx, p_ul, i_ul: uplink transmit power, received power and interference
            (NaN without uplink).
    """

    params: NetworkParams
    link: np.ndarray
    p_dl: np.ndarray
    i_dl: np.ndarray
    i_dl_sub: np.ndarray
    t_ru: np.ndarray
    t_br: np.ndarray
    p_tx: np.ndarray
    p_ul: np.ndarray
    i_ul: np.ndarray

    @property
    def n(self) -> int:
        return self.link.size

    @property
    def sinr_dl(self) -> np.ndarray:
        return self.p_dl / (self.i_dl + self.params.sigma2_dl)

    @property
    def emfe_dl(self) -> np.ndarray:
        """Downlink exposure (P + I)/𝓔, W/m²."""
        return (self.p_dl + self.i_dl) / derive_constants(self.params).area_E

    @property
    def sinr_ul(self) -> np.ndarray:
        return self.p_ul / (self.i_ul + self.params.sigma2_ul)

    @property
    def emfe_ul(self) -> np.ndarray:
        """Uplink SAR exposure, W/kg."""
        return self.params.SAR_ref * self.p_tx


def simulate(params: NetworkParams, n_trials: int, seed: int = 0,
             conditioning: Conditioning = FIXED_100, window_radius: float = WINDOW_RADIUS,
             uplink: bool = True, workers: int = 1, sub_window: Optional[float] = None,
             chunk: int = CHUNK, pattern: str = "ula") -> SimulationResult:
    """Run ``n_trials`` independent trials.

    Args:
        params: network parameters.
        n_trials: number of trials (≥ 1).
        seed: master seed.
        conditioning: fixed BS distance or nearest-BS law.
        window_radius: radius of the simulated disk, m.
        uplink: also realise interfering users and uplink powers.
        workers: processes to use; results do not depend on it.
        sub_window: also record the interference from BSs within this radius.
        chunk: trials per work item.
        pattern: interferer beam pattern, exact ``ula`` or the multi-lobe
            ``discrete`` approximation used by the analytic model.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    cfg = _config(params, window_radius, window_radius if sub_window is None else sub_window, pattern)
    tabs = _tables_for(params, uplink)
    fixed = _fixed_tbu(conditioning)
    jobs = [(seed, lo, min(lo + chunk, n_trials), cfg, fixed, uplink, tabs)
            for lo in range(0, n_trials, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    out = np.concatenate(parts)
    return SimulationResult(params, out[:, O_LINK].astype(int), out[:, O_P], out[:, O_I], out[:, O_I_SUB],
                            out[:, O_T_RU], out[:, O_T_BR], out[:, O_P_TX], out[:, O_P_UL], out[:, O_I_UL])


def sample_interferer_powers(params: NetworkParams, n: int, seed: int = 0) -> np.ndarray:
    """Transmit powers of ``n`` independent interfering users, drawn as in the simulator."""
    tabs = InterfererTables.build(params)
    cfg = _config(params, WINDOW_RADIUS, WINDOW_RADIUS)
    key = np.uint64(_sub_key(np.uint64(int(seed) & (2**64 - 1)), 2**40))
    return _interferer_powers(key, cfg, tabs.t, tabs.a_cl, tabs.quantile, n)


# --------------------------------------------------------------- curves
def wilson_interval(successes: np.ndarray, n: int, confidence: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Wilson score intervals for binomial proportions."""
    lo, hi = [], []
    for k in np.atleast_1d(successes):
        ci = stats.binomtest(int(k), n).proportion_ci(confidence, method="wilson")
        lo.append(ci.low)
        hi.append(ci.high)
    return np.array(lo), np.array(hi)


def empirical_curve(samples: np.ndarray, grid: Sequence[float], metric: str, direction: str,
                    confidence: float = 0.95) -> DistributionCurve:
    """Empirical CCDF (coverage) or CDF (compliance) of ``samples`` on ``grid``."""
    x = np.asarray(samples)
    g = np.asarray(grid, dtype=float)
    if metric == "coverage":
        hits = (x[None, :] > g[:, None]).sum(axis=1)
    elif metric == "compliance":
        hits = (x[None, :] <= g[:, None]).sum(axis=1)
    else:
        raise ValueError(f"unknown marginal metric {metric!r}")
    lo, hi = wilson_interval(hits, x.size, confidence)
    return DistributionCurve(metric, tuple(g), tuple(hits / x.size), "empirical", direction,
                             (tuple(lo), tuple(hi)), {"n": x.size})


def empirical_joint(sinr: np.ndarray, exposure: np.ndarray, gamma: Sequence[float], omega: Sequence[float],
                    direction: str, confidence: float = 0.95) -> DistributionCurve:
    """Empirical P(SINR > γ, exposure ≤ ω) on the grid gamma × omega (row-major)."""
    pairs, hits = [], []
    for g in gamma:
        cov = sinr > g
        for w in omega:
            pairs.append((float(g), float(w)))
            hits.append(int(np.count_nonzero(cov & (exposure <= w))))
    hits = np.array(hits)
    lo, hi = wilson_interval(hits, sinr.size, confidence)
    return DistributionCurve("joint", tuple(pairs), tuple(hits / sinr.size), "empirical", direction,
                             (tuple(lo), tuple(hi)), {"n": sinr.size})


@dataclass(frozen=True)
class CurveGrid:
    """Threshold grids (linear units) for the empirical curves."""

    gamma_dl: tuple = tuple(10 ** (np.arange(-10, 21, 1) / 10))
    omega_dl: tuple = tuple(np.linspace(0.1e-3, 2e-3, 39))
    gamma_ul: tuple = tuple(10 ** (np.arange(-20, 11, 1) / 10))
    omega_ul: tuple = tuple(np.linspace(0.05e-3, 1.1e-3, 43))
    joint_gamma_dl: tuple = tuple(10 ** (np.array([-10, -5, 0, 5, 10, 15]) / 10))
    joint_omega_dl: tuple = tuple(np.array([0.2, 0.4, 0.6, 0.8, 1.0, 1.5]) * 1e-3)
    joint_gamma_ul: tuple = tuple(10 ** (np.array([-20, -15, -10, -5, 0, 5]) / 10))
    joint_omega_ul: tuple = tuple(np.array([0.1, 0.2, 0.3, 0.4, 0.6, 1.0]) * 1e-3)


def estimate_curves(params: NetworkParams, n_trials: int, grid: CurveGrid = CurveGrid(), seed: int = 0,
                    conditioning: Conditioning = FIXED_100, workers: int = 1,
                    result: Optional[SimulationResult] = None) -> dict[str, DistributionCurve]:
    """Empirical marginal and joint curves for both directions."""
    res = result if result is not None else simulate(params, n_trials, seed, conditioning, workers=workers)
    curves = {
        "coverage-dl": empirical_curve(res.sinr_dl, grid.gamma_dl, "coverage", "downlink"),
        "compliance-dl": empirical_curve(res.emfe_dl, grid.omega_dl, "compliance", "downlink"),
        "joint-dl": empirical_joint(res.sinr_dl, res.emfe_dl, grid.joint_gamma_dl, grid.joint_omega_dl,
                                    "downlink"),
    }
    if np.all(np.isfinite(res.p_ul)):
        curves["coverage-ul"] = empirical_curve(res.sinr_ul, grid.gamma_ul, "coverage", "uplink")
        curves["compliance-ul"] = empirical_curve(res.emfe_ul, grid.omega_ul, "compliance", "uplink")
        curves["joint-ul"] = empirical_joint(res.sinr_ul, res.emfe_ul, grid.joint_gamma_ul,
                                             grid.joint_omega_ul, "uplink")
    return curves
