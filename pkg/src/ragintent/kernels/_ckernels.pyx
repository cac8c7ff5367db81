# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled retrieval kernels.

Arithmetic order matches ``_fallback`` exactly so both backends return
bit-identical scores. Do not reorder the floating point expressions.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


cdef Py_ssize_t _nonzero(const double[::1] v, Py_ssize_t[::1] out) noexcept nogil:
    cdef Py_ssize_t j, nz = 0
    for j in range(v.shape[0]):
        if v[j] != 0.0:
            out[nz] = j
            nz += 1
    return nz


def dense_scores(const float[::1, :] matrix, const double[::1] query):
    """Row dot products over a column-major matrix.

    Zero query components are skipped (adding an exact zero never changes a
    sum); the remaining dimensions are accumulated in ascending order.
    """
    cdef Py_ssize_t n = matrix.shape[0], d = matrix.shape[1], i, jj, j, nz
    if query.shape[0] != d:
        raise ValueError("query dimension mismatch")
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    nzi_arr = np.empty(d, dtype=np.intp)
    cdef Py_ssize_t[::1] nzi = nzi_arr
    cdef double qj
    with nogil:
        nz = _nonzero(query, nzi)
        for jj in range(nz):
            j = nzi[jj]
            qj = query[j]
            for i in range(n):
                o[i] = o[i] + <double>matrix[i, j] * qj
    return out


cdef inline bint _better(double sa, long long ia, double sb, long long ib) nogil:
    # True when (sa, ia) ranks ahead of (sb, ib): higher score, then lower id.
    return sa > sb or (sa == sb and ia < ib)


cdef void _sift_down(double* hs, cnp.int64_t* hi, Py_ssize_t* hr, Py_ssize_t size, Py_ssize_t pos) noexcept nogil:
    # Min-heap on rank: the root is the worst retained entry.
    cdef Py_ssize_t child, worst
    cdef double ts
    cdef long long ti
    cdef Py_ssize_t tr
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        worst = child
        if child + 1 < size and _better(hs[child], hi[child], hs[child + 1], hi[child + 1]):
            worst = child + 1
        if _better(hs[pos], hi[pos], hs[worst], hi[worst]):
            ts = hs[pos]; hs[pos] = hs[worst]; hs[worst] = ts
            ti = hi[pos]; hi[pos] = hi[worst]; hi[worst] = ti
            tr = hr[pos]; hr[pos] = hr[worst]; hr[worst] = tr
            pos = worst
        else:
            break


def topk(const double[::1] scores, const cnp.int64_t[::1] ids, Py_ssize_t k, mask=None):
    """Row indices of the best ``k`` allowed rows, best first."""
    cdef Py_ssize_t n = scores.shape[0], i, size = 0, p, parent
    cdef const unsigned char[::1] m
    cdef bint use_mask = mask is not None
    if use_mask:
        m = mask
    if k <= 0 or n == 0:
        return np.zeros(0, dtype=np.int64)
    if k > n:
        k = n
    hs_arr = np.empty(k, dtype=np.float64)
    hi_arr = np.empty(k, dtype=np.int64)
    hr_arr = np.empty(k, dtype=np.intp)
    cdef double[::1] hs = hs_arr
    cdef cnp.int64_t[::1] hi = hi_arr
    cdef Py_ssize_t[::1] hr = hr_arr
    cdef double ts
    cdef long long ti
    cdef Py_ssize_t tr
    with nogil:
        for i in range(n):
            if use_mask and m[i] == 0:
                continue
            if size < k:
                p = size
                hs[p] = scores[i]; hi[p] = ids[i]; hr[p] = i
                size += 1
                while p > 0:
                    parent = (p - 1) // 2
                    if _better(hs[parent], hi[parent], hs[p], hi[p]):
                        ts = hs[p]; hs[p] = hs[parent]; hs[parent] = ts
                        ti = hi[p]; hi[p] = hi[parent]; hi[parent] = ti
                        tr = hr[p]; hr[p] = hr[parent]; hr[parent] = tr
                        p = parent
                    else:
                        break
            elif _better(scores[i], ids[i], hs[0], hi[0]):
                hs[0] = scores[i]; hi[0] = ids[i]; hr[0] = i
                _sift_down(&hs[0], &hi[0], &hr[0], size, 0)
    # Drain the heap worst-first, then reverse.
    out = np.empty(size, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    cdef Py_ssize_t remaining = size
    with nogil:
        while remaining > 0:
            o[remaining - 1] = hr[0]
            remaining -= 1
            hs[0] = hs[remaining]; hi[0] = hi[remaining]; hr[0] = hr[remaining]
            _sift_down(&hs[0], &hi[0], &hr[0], remaining, 0)
    return out


def bm25_scores(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] doc_idx, const double[::1] tf,
                const double[::1] doc_len, double avgdl, const cnp.int64_t[::1] term_ids,
                const double[::1] idf, double k1, double b, Py_ssize_t n_docs):
    """Okapi BM25 accumulated term by term in query order.

    ``term_ids`` holds one entry per query token (duplicates allowed, -1 skips).
    Returns ``(scores, touched)`` where ``touched`` flags docs matching any term.
    """
    scores = np.zeros(n_docs, dtype=np.float64)
    touched = np.zeros(n_docs, dtype=np.uint8)
    cdef double[::1] s = scores
    cdef unsigned char[::1] t = touched
    cdef Py_ssize_t q, p, d
    cdef long long term
    cdef double w, f, dl, norm
    with nogil:
        for q in range(term_ids.shape[0]):
            term = term_ids[q]
            if term < 0:
                continue
            w = idf[term]
            for p in range(indptr[term], indptr[term + 1]):
                d = doc_idx[p]
                f = tf[p]
                dl = doc_len[d]
                norm = k1 * (1.0 - b + b * dl / avgdl)
                s[d] = s[d] + w * (f * (k1 + 1.0)) / (f + norm)
                t[d] = 1
    return scores, touched


def maxsim_scores(const double[:, ::1] query, const float[::1, :] tokens, const cnp.int64_t[::1] offsets):
    """Sum over query tokens of the best dot product against each doc's tokens.

    ``tokens`` is column-major; zero query components are skipped.
    """
    cdef Py_ssize_t m = query.shape[0], d = query.shape[1], T = tokens.shape[0]
    cdef Py_ssize_t n_docs = offsets.shape[0] - 1
    cdef Py_ssize_t doc, a, tok, jj, j, nz
    cdef double best, qj
    if tokens.shape[1] != d:
        raise ValueError("token vector dimension mismatch")
    scores = np.zeros(n_docs, dtype=np.float64)
    cdef double[::1] s = scores
    sims_arr = np.empty(T, dtype=np.float64)
    cdef double[::1] sims = sims_arr
    nzi_arr = np.empty(d, dtype=np.intp)
    cdef Py_ssize_t[::1] nzi = nzi_arr
    with nogil:
        for a in range(m):
            nz = _nonzero(query[a], nzi)
            for tok in range(T):
                sims[tok] = 0.0
            for jj in range(nz):
                j = nzi[jj]
                qj = query[a, j]
                for tok in range(T):
                    sims[tok] = sims[tok] + qj * <double>tokens[tok, j]
            for doc in range(n_docs):
                if offsets[doc] == offsets[doc + 1]:
                    continue
                best = -INFINITY
                for tok in range(offsets[doc], offsets[doc + 1]):
                    if sims[tok] > best:
                        best = sims[tok]
                s[doc] = s[doc] + best
    return scores
