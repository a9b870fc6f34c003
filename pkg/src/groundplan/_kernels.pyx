# cython: language_level=3
"""Compiled hot loops. Must stay bit-for-bit equivalent to ``_pykernels``."""
from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free

cdef uint64_t FNV_OFFSET = 0xcbf29ce484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001b3ULL
cdef uint64_t WORD_SALT = 0x9e3779b97f4a7c15ULL
cdef uint64_t BIGRAM_SALT = 0xc2b2ae3d27d4eb4fULL


cdef inline uint64_t _fnv1a(const unsigned char[:] data, Py_ssize_t start,
                            Py_ssize_t stop, uint64_t seed) nogil:
    cdef uint64_t h = seed
    cdef Py_ssize_t i
    for i in range(start, stop):
        h ^= data[i]
        h *= FNV_PRIME
    return h


def fnv1a64(const unsigned char[:] data, uint64_t seed=FNV_OFFSET):
    return _fnv1a(data, 0, data.shape[0], seed)


def accumulate_features(const unsigned char[:] data, int n, double[:] out):
    """Add hashed byte n-gram, word and word-bigram counts of ``data`` into ``out``.

    Words are separated by single spaces; a bigram hashes the span from the
    start of one word to the end of the next.
    """
    cdef Py_ssize_t length = data.shape[0]
    cdef Py_ssize_t dim = out.shape[0]
    cdef Py_ssize_t i, start, prev_start
    cdef uint64_t h
    with nogil:
        if length >= n:
            for i in range(length - n + 1):
                h = _fnv1a(data, i, i + n, FNV_OFFSET)
                out[h % dim] += 1.0
        start = -1
        prev_start = -1
        for i in range(length + 1):
            if i == length or data[i] == 32:
                if start >= 0:
                    h = _fnv1a(data, start, i, FNV_OFFSET ^ WORD_SALT)
                    out[h % dim] += 1.0
                    if prev_start >= 0:
                        h = _fnv1a(data, prev_start, i, FNV_OFFSET ^ BIGRAM_SALT)
                        out[h % dim] += 1.0
                    prev_start = start
                    start = -1
            elif start < 0:
                start = i


def lcs_length(const long long[:] a, const long long[:] b):
    """Length of the longest common subsequence, two-row DP."""
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t i, j
    cdef long *prev
    cdef long *cur
    cdef long *tmp
    cdef long result
    if n == 0 or m == 0:
        return 0
    prev = <long *> malloc((m + 1) * sizeof(long))
    cur = <long *> malloc((m + 1) * sizeof(long))
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    with nogil:
        for j in range(m + 1):
            prev[j] = 0
        cur[0] = 0
        for i in range(n):
            for j in range(m):
                if a[i] == b[j]:
                    cur[j + 1] = prev[j] + 1
                elif prev[j + 1] >= cur[j]:
                    cur[j + 1] = prev[j + 1]
                else:
                    cur[j + 1] = cur[j]
            tmp = prev
            prev = cur
            cur = tmp
        result = prev[m]
    free(prev)
    free(cur)
    return result
