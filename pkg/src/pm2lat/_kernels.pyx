# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled batch-prediction kernel for grid precomputation.

One function: fill a slice of the canonical (batch, m, n, k) grid
enumeration with predicted latencies. The arithmetic — interpolation,
wave counting, reference rescaling — replicates the scalar Python path
in ``compute._rescale``/``wave_count`` with the identical operation
order, so results are bit-for-bit equal to the pure-Python backend.
Unresolved points come out as NaN.
"""

from libc.math cimport NAN, fabs, log2
from libc.stdint cimport int64_t, uint8_t, uint64_t


cdef inline Py_ssize_t _bsearch_u64(const uint64_t[::1] keys, uint64_t needle) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = keys.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if keys[mid] < needle:
            lo = mid + 1
        elif keys[mid] > needle:
            hi = mid
        else:
            return mid
    return -1


cdef inline Py_ssize_t _nearest(const double[::1] log_m, const double[::1] log_n,
                                const double[::1] log_k,
                                double qm, double qn, double qk) noexcept nogil:
    # Chebyshev distance in log2 space; candidates are pre-sorted by
    # (m, n, k, batch) and the strict '<' keeps the first (smallest) tie.
    cdef Py_ssize_t best = -1, i
    cdef double best_dist = 1e308, dist, d2, d3
    for i in range(log_m.shape[0]):
        dist = fabs(log_m[i] - qm)
        d2 = fabs(log_n[i] - qn)
        if d2 > dist:
            dist = d2
        d3 = fabs(log_k[i] - qk)
        if d3 > dist:
            dist = d3
        if dist < best_dist:
            best_dist = dist
            best = i
    return best


cdef inline double _interp(const double[::1] dims, const double[::1] thrs,
                           Py_ssize_t lo, Py_ssize_t hi, double nd) noexcept nogil:
    # Mirrors compute._interpolate_detail: clamp outside the sampled range,
    # exact at sample points, linear between neighbours.
    cdef Py_ssize_t left = lo, right = hi, mid
    cdef double k1, k3, t1, t3, t
    if nd < dims[lo]:
        return thrs[lo]
    if nd > dims[hi - 1]:
        return thrs[hi - 1]
    while left < right:
        mid = (left + right) // 2
        if dims[mid] < nd:
            left = mid + 1
        else:
            right = mid
    if dims[left] == nd:
        return thrs[left]
    k1 = dims[left - 1]
    k3 = dims[left]
    t1 = thrs[left - 1]
    t3 = thrs[left]
    t = (nd - k1) / (k3 - k1)
    return t1 + t * (t3 - t1)


def predict_grid_slice(const uint64_t[::1] batch_vals, const uint64_t[::1] m_vals,
                       const uint64_t[::1] n_vals, const uint64_t[::1] k_vals,
                       Py_ssize_t b_lo, Py_ssize_t b_hi,
                       const uint64_t[::1] exact_keys, const int64_t[::1] exact_curve,
                       const double[::1] log_m, const double[::1] log_n,
                       const double[::1] log_k, const int64_t[::1] cand_curve,
                       const int64_t[::1] sample_offsets,
                       const double[::1] sample_dims, const double[::1] sample_thrs,
                       const double[::1] ref_dim, const double[::1] ref_dur,
                       const double[::1] ref_thr, const double[::1] ref_waves,
                       const uint64_t[::1] tile_m, const uint64_t[::1] tile_n,
                       const uint64_t[::1] split_k,
                       const uint64_t[::1] blocks_per_wave,
                       const uint8_t[::1] family_rowblock,
                       double[::1] out):
    """Fill ``out`` with latencies for batch indices [b_lo, b_hi)."""
    cdef Py_ssize_t nm = m_vals.shape[0], nn = n_vals.shape[0], nk = k_vals.shape[0]
    cdef Py_ssize_t ib, im, jn, ik, pos = 0, hit, ci
    cdef uint64_t b, m, n, k, packed, blocks, waves, bpw, tm, tn, sk
    cdef double qm, qn, qk, nd, thr, base
    with nogil:
        for ib in range(b_lo, b_hi):
            b = batch_vals[ib]
            for im in range(nm):
                m = m_vals[im]
                qm = log2(<double> m)
                for jn in range(nn):
                    n = n_vals[jn]
                    qn = log2(<double> n)
                    for ik in range(nk):
                        k = k_vals[ik]
                        packed = (b << 48) | (m << 32) | (n << 16) | k
                        hit = _bsearch_u64(exact_keys, packed)
                        if hit >= 0:
                            ci = exact_curve[hit]
                        else:
                            qk = log2(<double> k)
                            hit = _nearest(log_m, log_n, log_k, qm, qn, qk)
                            ci = cand_curve[hit] if hit >= 0 else -1
                        if ci < 0:
                            out[pos] = NAN
                            pos += 1
                            continue
                        tm = tile_m[ci]
                        tn = tile_n[ci]
                        sk = split_k[ci]
                        bpw = blocks_per_wave[ci]
                        if family_rowblock[ci]:
                            blocks = (b * k + tm - 1) // tm
                        else:
                            blocks = b * ((m + tm - 1) // tm) * ((n + tn - 1) // tn) * sk
                        waves = (blocks + bpw - 1) // bpw
                        nd = <double> k
                        thr = _interp(sample_dims, sample_thrs,
                                      sample_offsets[ci], sample_offsets[ci + 1], nd)
                        base = ref_dur[ci] * (nd / ref_dim[ci]) * (ref_thr[ci] / thr)
                        out[pos] = base * ((<double> waves) / ref_waves[ci])
                        pos += 1
