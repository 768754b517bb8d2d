# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled round kernels.

Mirrors kernels/pure.py operation for operation; see that module for the
contract. Evaluation order is kept identical so both backends produce
bit-identical results on line/ring/complete topologies.
"""

import numpy as np
cimport numpy as cnp

NAME = "compiled"


def laurent_cost(double[:, ::1] coeffs, double[::1] v, out=None):
    cdef Py_ssize_t n = v.shape[0]
    res_arr = np.empty(n) if out is None else out
    cdef double[::1] res = res_arr
    cdef Py_ssize_t i
    cdef double vi, acc
    for i in range(n):
        vi = v[i]
        acc = coeffs[i, 5] + vi * coeffs[i, 6]
        acc = coeffs[i, 4] + vi * acc
        acc = coeffs[i, 3] + vi * acc
        acc = coeffs[i, 2] + vi * acc
        res[i] = coeffs[i, 0] / vi + coeffs[i, 1] + vi * acc
    return res_arr


def laurent_derivative(double[:, ::1] coeffs, double[::1] v, out=None):
    cdef Py_ssize_t n = v.shape[0]
    res_arr = np.empty(n) if out is None else out
    cdef double[::1] res = res_arr
    cdef Py_ssize_t i
    cdef double vi, acc
    for i in range(n):
        vi = v[i]
        acc = 4.0 * coeffs[i, 5] + vi * (5.0 * coeffs[i, 6])
        acc = 3.0 * coeffs[i, 4] + vi * acc
        acc = 2.0 * coeffs[i, 3] + vi * acc
        res[i] = -coeffs[i, 0] / (vi * vi) + coeffs[i, 2] + vi * acc
    return res_arr


cdef Py_ssize_t _bisect_left(double[::1] a, double x, Py_ssize_t n) noexcept:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef Py_ssize_t _bisect_right(double[::1] a, double x, Py_ssize_t n) noexcept:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if x < a[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def window_sums(double[::1] pos_sorted, double[::1] values_sorted, double radius):
    cdef Py_ssize_t m = pos_sorted.shape[0]
    sums_arr = np.empty(m)
    counts_arr = np.empty(m, dtype=np.int64)
    cdef double[::1] sums = sums_arr
    cdef long long[::1] counts = counts_arr
    prefix_arr = np.empty(m + 1)
    cdef double[::1] prefix = prefix_arr
    cdef Py_ssize_t i, lo, hi
    prefix[0] = 0.0
    for i in range(m):
        prefix[i + 1] = prefix[i] + values_sorted[i]
    for i in range(m):
        lo = _bisect_left(pos_sorted, pos_sorted[i] - radius, m)
        hi = _bisect_right(pos_sorted, pos_sorted[i] + radius, m)
        sums[i] = prefix[hi] - prefix[lo] - values_sorted[i]
        counts[i] = hi - lo - 1
    return sums_arr, counts_arr


def ring_window_sums(double[::1] pos_sorted, double[::1] values_sorted,
                     double radius, double ring_length):
    cdef Py_ssize_t m = pos_sorted.shape[0]
    sums_arr = np.empty(m)
    counts_arr = np.empty(m, dtype=np.int64)
    cdef double[::1] sums = sums_arr
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t i, lo, hi
    cdef double total
    if 2.0 * radius >= ring_length:
        total = 0.0
        for i in range(m):
            total = total + values_sorted[i]
        for i in range(m):
            sums[i] = total - values_sorted[i]
            counts[i] = m - 1
        return sums_arr, counts_arr
    tri_pos_arr = np.empty(3 * m)
    tri_prefix_arr = np.empty(3 * m + 1)
    cdef double[::1] tri_pos = tri_pos_arr
    cdef double[::1] tri_prefix = tri_prefix_arr
    for i in range(m):
        tri_pos[i] = pos_sorted[i] - ring_length
        tri_pos[m + i] = pos_sorted[i]
        tri_pos[2 * m + i] = pos_sorted[i] + ring_length
    tri_prefix[0] = 0.0
    for i in range(3 * m):
        tri_prefix[i + 1] = tri_prefix[i] + values_sorted[i % m]
    for i in range(m):
        lo = _bisect_left(tri_pos, pos_sorted[i] - radius, 3 * m)
        hi = _bisect_right(tri_pos, pos_sorted[i] + radius, 3 * m)
        sums[i] = tri_prefix[hi] - tri_prefix[lo] - values_sorted[i]
        counts[i] = hi - lo - 1
    return sums_arr, counts_arr


def consensus_update(double[::1] s, double[::1] nbr_sum, long long[::1] nbr_cnt,
                     double eta, bint adaptive, double mu_times_aggregate,
                     double v_lo, double v_hi, out=None):
    cdef Py_ssize_t n = s.shape[0]
    res_arr = np.empty(n) if out is None else out
    cdef double[::1] res = res_arr
    cdef Py_ssize_t i
    cdef double cnt, w, q, x
    for i in range(n):
        cnt = <double> nbr_cnt[i]
        if adaptive:
            w = 1.0 / (cnt + 1.0)
        else:
            w = eta
        q = w * (nbr_sum[i] - cnt * s[i])
        x = s[i] + q - mu_times_aggregate
        if x < v_lo:
            x = v_lo
        if x > v_hi:
            x = v_hi
        res[i] = x
    return res_arr


def kinematic_advance(double[::1] v_kmh, double[::1] target_kmh,
                      double[::1] accel_kmh_s, double[::1] decel_kmh_s, double dt_s):
    cdef Py_ssize_t n = v_kmh.shape[0]
    v_new_arr = np.empty(n)
    dist_arr = np.empty(n)
    cdef double[::1] v_new = v_new_arr
    cdef double[::1] dist = dist_arr
    cdef Py_ssize_t i
    cdef double dv, cap, vn
    cdef double dist_factor = 0.5 * dt_s / 3.6
    for i in range(n):
        dv = target_kmh[i] - v_kmh[i]
        cap = accel_kmh_s[i] * dt_s
        if dv > cap:
            dv = cap
        cap = -(decel_kmh_s[i] * dt_s)
        if dv < cap:
            dv = cap
        vn = v_kmh[i] + dv
        v_new[i] = vn
        dist[i] = (v_kmh[i] + vn) * dist_factor
    return v_new_arr, dist_arr


def sequential_sum(double[::1] values):
    cdef Py_ssize_t n = values.shape[0]
    cdef double total = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        total = total + values[i]
    return total


def bincount_add(long long[::1] idx, double[::1] weights, double[::1] out):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t i
    for i in range(n):
        out[idx[i]] = out[idx[i]] + weights[i]


# -- fused per-round composites -------------------------------------------------
# Single C passes over the fleet; semantics defined by the compositions in
# pure.py, mirrored exactly.

MODE_COMPLETE = 0
MODE_RADIUS_LINE = 1
MODE_RADIUS_RING = 2


def section_lookup(double[::1] bounds, double[::1] pos, long long[::1] idx):
    cdef Py_ssize_t k = bounds.shape[0]
    cdef Py_ssize_t n = idx.shape[0]
    sec_arr = np.empty(n, dtype=np.int64)
    counts_arr = np.zeros(k, dtype=np.int64)
    cdef long long[::1] sec = sec_arr
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t i, s
    cdef double p
    for i in range(n):
        p = pos[idx[i]]
        s = _bisect_right(bounds, p, k)
        if s > k - 1:
            s = k - 1
        sec[i] = s
        counts[s] = counts[s] + 1
    return sec_arr, counts_arr


def member_derivatives(double[:, ::1] coeffs, double[::1] rec, long long[::1] idx):
    cdef Py_ssize_t m = idx.shape[0]
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double vi, acc
    for i in range(m):
        j = idx[i]
        vi = rec[j]
        acc = 4.0 * coeffs[j, 5] + vi * (5.0 * coeffs[j, 6])
        acc = 3.0 * coeffs[j, 4] + vi * acc
        acc = 2.0 * coeffs[j, 3] + vi * acc
        out[i] = -coeffs[j, 0] / (vi * vi) + coeffs[j, 2] + vi * acc
    return out_arr


def consensus_round_update(double[::1] rec, double[::1] pos_sorted, long long[::1] order,
                           long long[::1] idx, int mode, double radius, double ring_length,
                           double eta, bint adaptive, double mu_times_aggregate,
                           double v_lo, double v_hi):
    cdef Py_ssize_t m = idx.shape[0]
    s_arr = np.empty(m)
    s_new_arr = np.empty(m)
    nbr_sum_arr = np.empty(m)
    nbr_cnt_arr = np.empty(m, dtype=np.int64)
    cdef double[::1] s = s_arr
    cdef double[::1] s_new = s_new_arr
    cdef double[::1] nbr_sum = nbr_sum_arr
    cdef long long[::1] nbr_cnt = nbr_cnt_arr
    cdef Py_ssize_t i, lo, hi
    cdef double total, cnt, w, q, x, spread, delta, smin, smax, d
    cdef long long max_cnt = 0

    for i in range(m):
        s[i] = rec[idx[i]]

    if mode == 0:
        total = 0.0
        for i in range(m):
            total = total + s[i]
        for i in range(m):
            nbr_sum[i] = total - s[i]
            nbr_cnt[i] = m - 1
    else:
        s_sorted_arr = np.empty(m)
        _gather(s, order, s_sorted_arr)
        if mode == 2:
            sums_s_arr, cnt_s_arr = ring_window_sums(pos_sorted, s_sorted_arr, radius, ring_length)
        else:
            sums_s_arr, cnt_s_arr = window_sums(pos_sorted, s_sorted_arr, radius)
        _scatter(sums_s_arr, cnt_s_arr, order, nbr_sum_arr, nbr_cnt_arr)

    for i in range(m):
        cnt = <double> nbr_cnt[i]
        if nbr_cnt[i] > max_cnt:
            max_cnt = nbr_cnt[i]
        if adaptive:
            w = 1.0 / (cnt + 1.0)
        else:
            w = eta
        q = w * (nbr_sum[i] - cnt * s[i])
        x = s[i] + q - mu_times_aggregate
        if x < v_lo:
            x = v_lo
        if x > v_hi:
            x = v_hi
        s_new[i] = x

    spread = 0.0
    delta = 0.0
    if m > 0:
        smin = s_new[0]
        smax = s_new[0]
        for i in range(m):
            if s_new[i] < smin:
                smin = s_new[i]
            if s_new[i] > smax:
                smax = s_new[i]
            d = s_new[i] - s[i]
            if d < 0.0:
                d = -d
            if d > delta:
                delta = d
        spread = smax - smin
    return s_new_arr, spread, delta, int(max_cnt)


def _gather(double[::1] src, long long[::1] order, out_arr):
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    for i in range(order.shape[0]):
        out[i] = src[order[i]]


def _scatter(sums_arr, cnt_arr, long long[::1] order, nbr_sum_arr, nbr_cnt_arr):
    cdef double[::1] sums = sums_arr
    cdef long long[::1] cnts = cnt_arr
    cdef double[::1] nbr_sum = nbr_sum_arr
    cdef long long[::1] nbr_cnt = nbr_cnt_arr
    cdef Py_ssize_t i
    for i in range(order.shape[0]):
        nbr_sum[order[i]] = sums[i]
        nbr_cnt[order[i]] = cnts[i]


def drive_round(double[:, ::1] coeffs, double[::1] v, double[::1] rec, double[::1] free,
                long long[::1] idx, unsigned char[::1] follow,
                double[::1] accel, double[::1] decel, double dt_s,
                long long[::1] sec, int n_sections):
    cdef Py_ssize_t n = idx.shape[0]
    v_new_arr = np.empty(n)
    dist_arr = np.empty(n)
    rates_arr = np.empty(n)
    amounts_arr = np.empty(n)
    sec_rate_arr = np.zeros(n_sections)
    sec_amount_arr = np.zeros(n_sections)
    cdef double[::1] v_new = v_new_arr
    cdef double[::1] dist = dist_arr
    cdef double[::1] rates = rates_arr
    cdef double[::1] amounts = amounts_arr
    cdef double[::1] sec_rate = sec_rate_arr
    cdef double[::1] sec_amount = sec_amount_arr
    cdef Py_ssize_t i, j, si
    cdef double tgt, dv, cap, vi, vn, acc, rate, amount
    cdef double dist_factor = 0.5 * dt_s / 3.6
    cdef double total_rate = 0.0
    cdef double total_dist = 0.0
    for i in range(n):
        j = idx[i]
        if follow[i]:
            tgt = rec[j]
        else:
            tgt = free[j]
        vi = v[j]
        dv = tgt - vi
        cap = accel[j] * dt_s
        if dv > cap:
            dv = cap
        cap = -(decel[j] * dt_s)
        if dv < cap:
            dv = cap
        vn = vi + dv
        v_new[i] = vn
        dist[i] = (vi + vn) * dist_factor
        acc = coeffs[j, 5] + vn * coeffs[j, 6]
        acc = coeffs[j, 4] + vn * acc
        acc = coeffs[j, 3] + vn * acc
        acc = coeffs[j, 2] + vn * acc
        rate = coeffs[j, 0] / vn + coeffs[j, 1] + vn * acc
        rates[i] = rate
        amount = rate * (dist[i] * 0.001)
        amounts[i] = amount
        si = sec[i]
        sec_rate[si] = sec_rate[si] + rate
        sec_amount[si] = sec_amount[si] + amount
        total_rate = total_rate + rate
        total_dist = total_dist + dist[i]
    return (v_new_arr, dist_arr, rates_arr, amounts_arr,
            sec_rate_arr, sec_amount_arr, total_rate, total_dist)
