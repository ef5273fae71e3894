# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see _fallback.py for the reference semantics."""

from libc.stdlib cimport malloc, free

ctypedef unsigned long long u64


cdef inline u64 _next(u64* state) nogil:
    cdef u64 z
    state[0] += 0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def crash_trials(long n, long m, long s, long long trials, seed):
    if not (0 <= m <= n and 1 <= s <= n and trials >= 0):
        raise ValueError("need 0 <= m <= n, 1 <= s <= n, trials >= 0")
    cdef u64 state = (<u64>(seed & 0xFFFFFFFFFFFFFFFF))
    cdef long* perm = <long*>malloc(n * sizeof(long))
    cdef long* swaps = <long*>malloc(s * sizeof(long))
    cdef long i, j, k, tmp
    cdef long long t, crashes = 0
    cdef bint crashed
    if perm == NULL or swaps == NULL:
        free(perm)
        free(swaps)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                perm[i] = i
            for t in range(trials):
                k = 0
                crashed = True
                for i in range(s):
                    j = i + <long>(_next(&state) % <u64>(n - i))
                    tmp = perm[i]; perm[i] = perm[j]; perm[j] = tmp
                    swaps[k] = j
                    k += 1
                    if perm[i] >= m:
                        crashed = False
                        break
                if crashed:
                    crashes += 1
                for i in range(k - 1, -1, -1):
                    j = swaps[i]
                    tmp = perm[i]; perm[i] = perm[j]; perm[j] = tmp
    finally:
        free(perm)
        free(swaps)
    return crashes


def quicksort_steps(values, seed):
    cdef long n = len(values)
    cdef long long* a = <long long*>malloc((n if n > 0 else 1) * sizeof(long long))
    cdef long* stack = <long*>malloc(2 * (n + 2) * sizeof(long))
    cdef long top = 0, lo, hi, p, i, j
    cdef long long pivot, tmp, comparisons = 0
    cdef u64 state = (<u64>(seed & 0xFFFFFFFFFFFFFFFF))
    if a == NULL or stack == NULL:
        free(a)
        free(stack)
        raise MemoryError()
    try:
        for i in range(n):
            a[i] = values[i]
        stack[0] = 0
        stack[1] = n - 1
        top = 2
        with nogil:
            while top > 0:
                hi = stack[top - 1]
                lo = stack[top - 2]
                top -= 2
                if lo >= hi:
                    continue
                p = lo + <long>(_next(&state) % <u64>(hi - lo + 1))
                tmp = a[p]; a[p] = a[hi]; a[hi] = tmp
                pivot = a[hi]
                i = lo
                for j in range(lo, hi):
                    comparisons += 1
                    if a[j] < pivot:
                        tmp = a[i]; a[i] = a[j]; a[j] = tmp
                        i += 1
                tmp = a[i]; a[i] = a[hi]; a[hi] = tmp
                stack[top] = lo
                stack[top + 1] = i - 1
                stack[top + 2] = i + 1
                stack[top + 3] = hi
                top += 4
        return [a[i] for i in range(n)], comparisons
    finally:
        free(a)
        free(stack)
