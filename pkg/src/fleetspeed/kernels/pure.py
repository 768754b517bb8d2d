"""Pure-numpy round kernels (fallback backend).

The compiled backend mirrors these operations term for term: identical
evaluation order, identical prefix-sum window logic, so the two produce
bit-identical results for line/ring/complete topologies. Keep any change here
in lockstep with `_core.pyx`.

Coefficient rows follow the Laurent layout of cost_models: powers v^-1 .. v^5.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def laurent_cost(coeffs: np.ndarray, v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Cost rate per vehicle; coeffs is (n, 7), v is (n,)."""
    acc = coeffs[:, 5] + v * coeffs[:, 6]
    acc = coeffs[:, 4] + v * acc
    acc = coeffs[:, 3] + v * acc
    acc = coeffs[:, 2] + v * acc
    res = coeffs[:, 0] / v + coeffs[:, 1] + v * acc
    if out is not None:
        out[:] = res
        return out
    return res


def laurent_derivative(coeffs: np.ndarray, v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Cost-rate slope per vehicle."""
    acc = 4.0 * coeffs[:, 5] + v * (5.0 * coeffs[:, 6])
    acc = 3.0 * coeffs[:, 4] + v * acc
    acc = 2.0 * coeffs[:, 3] + v * acc
    res = -coeffs[:, 0] / (v * v) + coeffs[:, 2] + v * acc
    if out is not None:
        out[:] = res
        return out
    return res


def window_sums(pos_sorted: np.ndarray, values_sorted: np.ndarray, radius: float):
    """Neighbour sums/counts on a line: neighbours of i are the j != i with
    |pos_j - pos_i| <= radius. Arrays must be sorted by position."""
    lo = np.searchsorted(pos_sorted, pos_sorted - radius, side="left")
    hi = np.searchsorted(pos_sorted, pos_sorted + radius, side="right")
    prefix = np.empty(len(values_sorted) + 1)
    prefix[0] = 0.0
    np.cumsum(values_sorted, out=prefix[1:])
    sums = prefix[hi] - prefix[lo] - values_sorted
    counts = hi - lo - 1
    return sums, counts.astype(np.int64)


def ring_window_sums(
    pos_sorted: np.ndarray, values_sorted: np.ndarray, radius: float, ring_length: float
):
    """Neighbour sums/counts on a circular road of length `ring_length`.

    Positions must lie in [0, ring_length) and be sorted. When the radius
    covers half the ring or more, everyone hears everyone.
    """
    m = len(pos_sorted)
    if 2.0 * radius >= ring_length:
        total = sequential_sum(values_sorted)
        sums = np.full(m, total) - values_sorted
        counts = np.full(m, m - 1, dtype=np.int64)
        return sums, counts
    tri_pos = np.concatenate([pos_sorted - ring_length, pos_sorted, pos_sorted + ring_length])
    tri_val = np.concatenate([values_sorted, values_sorted, values_sorted])
    lo = np.searchsorted(tri_pos, pos_sorted - radius, side="left")
    hi = np.searchsorted(tri_pos, pos_sorted + radius, side="right")
    prefix = np.empty(3 * m + 1)
    prefix[0] = 0.0
    np.cumsum(tri_val, out=prefix[1:])
    sums = prefix[hi] - prefix[lo] - values_sorted
    counts = hi - lo - 1
    return sums, counts.astype(np.int64)


def consensus_update(
    s: np.ndarray,
    nbr_sum: np.ndarray,
    nbr_cnt: np.ndarray,
    eta: float,
    adaptive: bool,
    mu_times_aggregate: float,
    v_lo: float,
    v_hi: float,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """One recommendation update from neighbour statistics.

    q_i = w_i * (sum_{j in N_i} s_j - |N_i| s_i) with w_i = eta (fixed) or
    1/(|N_i|+1) (adaptive), then the common feedback shift and the operator
    clamp.
    """
    cnt = nbr_cnt.astype(float)
    if adaptive:
        w = 1.0 / (cnt + 1.0)
    else:
        w = eta
    q = w * (nbr_sum - cnt * s)
    res = np.clip(s + q - mu_times_aggregate, v_lo, v_hi)
    if out is not None:
        out[:] = res
        return out
    return res


def kinematic_advance(
    v_kmh: np.ndarray,
    target_kmh: np.ndarray,
    accel_kmh_s: np.ndarray,
    decel_kmh_s: np.ndarray,
    dt_s: float,
):
    """Move speeds toward targets under acceleration limits.

    Returns (new speeds km/h, distance travelled this step in metres) with the
    distance taken as the trapezoidal mean of old and new speed.
    """
    dv = target_kmh - v_kmh
    dv = np.minimum(dv, accel_kmh_s * dt_s)
    dv = np.maximum(dv, -(decel_kmh_s * dt_s))
    v_new = v_kmh + dv
    dist_factor = 0.5 * dt_s / 3.6
    dist_m = (v_kmh + v_new) * dist_factor
    return v_new, dist_m


def sequential_sum(values: np.ndarray) -> float:
    """Left-to-right sum (cumsum is sequential, unlike np.sum's pairwise)."""
    if len(values) == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


def bincount_add(idx: np.ndarray, weights: np.ndarray, out: np.ndarray) -> None:
    """out[idx[i]] += weights[i], applied in index order."""
    np.add.at(out, idx, weights)


# -- fused per-round composites ------------------------------------------------
# One call per simulation round instead of a dozen; the compiled backend turns
# each into a single C pass. Semantics are defined by these compositions.

MODE_COMPLETE = 0
MODE_RADIUS_LINE = 1
MODE_RADIUS_RING = 2


def section_lookup(bounds: np.ndarray, pos: np.ndarray, idx: np.ndarray):
    """Section index for each selected vehicle plus per-section counts.

    `bounds` holds cumulative section end positions; positions beyond the last
    boundary clamp into the final section.
    """
    k = len(bounds)
    sec = np.minimum(np.searchsorted(bounds, pos[idx], side="right"), k - 1).astype(np.int64)
    counts = np.bincount(sec, minlength=k).astype(np.int64)
    return sec, counts


def member_derivatives(coeffs: np.ndarray, rec: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Gradient reports for the consensus members (gather + evaluate)."""
    return laurent_derivative(coeffs[idx], rec[idx])


def consensus_round_update(
    rec: np.ndarray,
    pos_sorted: np.ndarray,
    order: np.ndarray,
    idx: np.ndarray,
    mode: int,
    radius: float,
    ring_length: float,
    eta: float,
    adaptive: bool,
    mu_times_aggregate: float,
    v_lo: float,
    v_hi: float,
):
    """One recommendation round for the member set.

    Returns (updated member speeds, spread, max |step|). `pos_sorted` and
    `order` are the member positions sorted ascending and the permutation that
    sorts them; both are ignored in complete-graph mode.
    """
    s = rec[idx]
    m = len(s)
    if mode == MODE_COMPLETE:
        total = sequential_sum(s)
        nbr_sum = total - s
        nbr_cnt = np.full(m, m - 1, dtype=np.int64)
    else:
        s_sorted = np.ascontiguousarray(s[order])
        if mode == MODE_RADIUS_RING:
            sums_s, cnt_s = ring_window_sums(pos_sorted, s_sorted, radius, ring_length)
        else:
            sums_s, cnt_s = window_sums(pos_sorted, s_sorted, radius)
        nbr_sum = np.empty(m)
        nbr_cnt = np.empty(m, dtype=np.int64)
        nbr_sum[order] = sums_s
        nbr_cnt[order] = cnt_s
    s_new = consensus_update(s, nbr_sum, nbr_cnt, eta, adaptive, mu_times_aggregate, v_lo, v_hi)
    spread = float(s_new.max() - s_new.min())
    delta = float(np.abs(s_new - s).max())
    max_cnt = int(nbr_cnt.max()) if m else 0
    return s_new, spread, delta, max_cnt


def drive_round(
    coeffs: np.ndarray,
    v: np.ndarray,
    rec: np.ndarray,
    free: np.ndarray,
    idx: np.ndarray,
    follow: np.ndarray,
    accel: np.ndarray,
    decel: np.ndarray,
    dt_s: float,
    sec: np.ndarray,
    n_sections: int,
):
    """Target selection, kinematics and cost accrual for the active fleet.

    Returns (new speeds, step distances m, cost rates, accrued amounts,
    per-section rate sums, per-section amount sums, fleet rate, fleet
    distance m); reductions run in ascending id order.
    """
    targets = np.where(follow, rec[idx], free[idx])
    v_new, dist = kinematic_advance(v[idx], targets, accel[idx], decel[idx], dt_s)
    rates = laurent_cost(coeffs[idx], v_new)
    amounts = rates * (dist * 0.001)
    sec_rate = np.zeros(n_sections)
    sec_amount = np.zeros(n_sections)
    bincount_add(sec, rates, sec_rate)
    bincount_add(sec, amounts, sec_amount)
    total_rate = sequential_sum(rates)
    total_dist = sequential_sum(dist)
    return v_new, dist, rates, amounts, sec_rate, sec_amount, total_rate, total_dist
