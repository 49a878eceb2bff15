# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: tree growing, OOB permutation importance, weighted
coordinate descent and Gibbs sweeps.

``grafo._pycore`` mirrors every function here with identical arithmetic and
random streams; keep the two in lockstep.
"""
import numpy as np

from libc.stdint cimport uint64_t, int32_t, int64_t
from libc.stdlib cimport malloc, realloc, free
from libc.math cimport exp, fabs, log1p, tanh

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t next64(uint64_t* s) noexcept nogil:
    s[0] += GOLDEN
    return mix64(s[0])


cdef inline Py_ssize_t below(uint64_t* s, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t r = <Py_ssize_t>(<double>(next64(s) >> 11) * INV53 * k)
    if r >= k:
        r = k - 1
    return r


cdef inline uint64_t stream_state(uint64_t seed, uint64_t t) noexcept nogil:
    return seed + mix64((t + 1) * GOLDEN)


def stream_head(uint64_t seed, uint64_t t, Py_ssize_t k, Py_ssize_t count):
    """First ``count`` draws of ``below(k)`` on stream (seed, t); used to
    cross-check the pure-Python generator."""
    cdef uint64_t s = stream_state(seed, t)
    return [below(&s, k) for _ in range(count)]


# ---------------------------------------------------------------- sorting

cdef void sort_by_key(Py_ssize_t* idx, double* key, Py_ssize_t m,
                      Py_ssize_t* buf) noexcept nogil:
    """Stable sort of idx[0:m] by key[idx[.]] (merge sort, insertion below 24)."""
    cdef Py_ssize_t i, j, v, width, lo, mid, hi, a, b, k
    cdef double kv
    if m <= 24:
        for i in range(1, m):
            v = idx[i]
            kv = key[v]
            j = i - 1
            while j >= 0 and key[idx[j]] > kv:
                idx[j + 1] = idx[j]
                j -= 1
            idx[j + 1] = v
        return
    width = 1
    while width < m:
        lo = 0
        while lo < m:
            mid = lo + width
            if mid > m:
                mid = m
            hi = lo + 2 * width
            if hi > m:
                hi = m
            a = lo
            b = mid
            k = lo
            while a < mid and b < hi:
                if key[idx[b]] < key[idx[a]]:
                    buf[k] = idx[b]
                    b += 1
                else:
                    buf[k] = idx[a]
                    a += 1
                k += 1
            while a < mid:
                buf[k] = idx[a]
                a += 1
                k += 1
            while b < hi:
                buf[k] = idx[b]
                b += 1
                k += 1
            lo = hi
        for i in range(m):
            idx[i] = buf[i]
        width *= 2


# ---------------------------------------------------------------- trees

cdef struct NodeVec:
    Py_ssize_t size
    Py_ssize_t cap
    int32_t* feature
    double* threshold
    uint64_t* catmask
    int32_t* left
    int32_t* right
    double* value


cdef int nv_reserve(NodeVec* v, Py_ssize_t need) noexcept nogil:
    cdef Py_ssize_t cap = v.cap
    if need <= cap:
        return 0
    if cap < 64:
        cap = 64
    while cap < need:
        cap *= 2
    v.feature = <int32_t*> realloc(v.feature, cap * sizeof(int32_t))
    v.threshold = <double*> realloc(v.threshold, cap * sizeof(double))
    v.catmask = <uint64_t*> realloc(v.catmask, cap * sizeof(uint64_t))
    v.left = <int32_t*> realloc(v.left, cap * sizeof(int32_t))
    v.right = <int32_t*> realloc(v.right, cap * sizeof(int32_t))
    v.value = <double*> realloc(v.value, cap * sizeof(double))
    if (v.feature == NULL or v.threshold == NULL or v.catmask == NULL
            or v.left == NULL or v.right == NULL or v.value == NULL):
        return -1
    v.cap = cap
    return 0


cdef void nv_free(NodeVec* v) noexcept nogil:
    free(v.feature)
    free(v.threshold)
    free(v.catmask)
    free(v.left)
    free(v.right)
    free(v.value)


def build_forest(const double[:, ::1] X, const double[::1] y, int n_classes,
                 const int32_t[::1] n_levels, Py_ssize_t n_trees,
                 Py_ssize_t mtry, Py_ssize_t min_node_size, uint64_t seed):
    """Grow ``n_trees`` CART trees on bootstrap samples.

    Returns ``(feature, threshold, catmask, left, right, value, offsets, inbag)``
    with nodes of tree ``t`` stored at ``offsets[t]:offsets[t+1]`` and child
    ids local to the tree (-1 marks a leaf).
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t P = X.shape[1]
    cdef Py_ssize_t max_lv = 1
    cdef Py_ssize_t f
    for f in range(P):
        if n_levels[f] > max_lv:
            max_lv = n_levels[f]
    cdef Py_ssize_t C = n_classes if n_classes > 0 else 1

    inbag_arr = np.zeros((n_trees, n), dtype=np.int32)
    cdef int32_t[:, ::1] inbag = inbag_arr
    offsets_arr = np.zeros(n_trees + 1, dtype=np.int64)
    cdef int64_t[::1] offsets = offsets_arr

    cdef NodeVec nv
    nv.size = 0
    nv.cap = 0
    nv.feature = NULL
    nv.threshold = NULL
    nv.catmask = NULL
    nv.left = NULL
    nv.right = NULL
    nv.value = NULL

    cdef Py_ssize_t* samples = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef Py_ssize_t* tmp = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef Py_ssize_t* order = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef Py_ssize_t* sbuf = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef double* key = <double*> malloc(n * sizeof(double))
    cdef double* yv = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t* feats = <Py_ssize_t*> malloc(P * sizeof(Py_ssize_t))
    cdef Py_ssize_t* cand = <Py_ssize_t*> malloc(P * sizeof(Py_ssize_t))
    # stack entries: node id, start, end
    cdef Py_ssize_t* stack = <Py_ssize_t*> malloc(3 * (2 * n + 2) * sizeof(Py_ssize_t))
    cdef int64_t* cnt = <int64_t*> malloc(C * sizeof(int64_t))
    cdef int64_t* cntL = <int64_t*> malloc(C * sizeof(int64_t))
    cdef int64_t* cntR = <int64_t*> malloc(C * sizeof(int64_t))
    cdef int64_t* lv_n = <int64_t*> malloc(max_lv * sizeof(int64_t))
    cdef double* lv_s = <double*> malloc(max_lv * sizeof(double))
    cdef int64_t* lv_c = <int64_t*> malloc(max_lv * C * sizeof(int64_t))
    cdef Py_ssize_t* obs = <Py_ssize_t*> malloc(max_lv * sizeof(Py_ssize_t))
    cdef double* inv = <double*> malloc((n + 1) * sizeof(double))
    # dense rank of every row per continuous predictor, for counting sorts
    cdef int32_t* dense = <int32_t*> malloc(P * n * sizeof(int32_t))
    cdef int32_t* ccount = <int32_t*> malloc((n + 1) * sizeof(int32_t))
    cdef int32_t* rk
    cdef int32_t acc_r, cur_r

    cdef Py_ssize_t t, k, i, c, sp, node, start, end, m, base, nn, r, a, b, kk
    cdef Py_ssize_t n_obs, lv, best_f, nL, nR, nl_count
    cdef uint64_t rng, mask, best_mask, gmask
    cdef double s_tot, sL, sR, proxy, parent, best, best_thr, xa, xb, thr, first
    cdef int64_t sq, sqL, sqR
    cdef bint pure, is_leaf, goes_left
    cdef int yc
    cdef int32_t[::1] fv, lv_, rv
    cdef double[::1] tv, vv
    cdef uint64_t[::1] cv

    try:
        if (samples == NULL or tmp == NULL or order == NULL or sbuf == NULL
                or key == NULL or yv == NULL or feats == NULL or cand == NULL
                or stack == NULL or cnt == NULL or cntL == NULL or cntR == NULL
                or lv_n == NULL or lv_s == NULL or lv_c == NULL or obs == NULL
                or inv == NULL or dense == NULL or ccount == NULL):
            raise MemoryError()
        inv[0] = 0.0
        for k in range(1, n + 1):
            inv[k] = 1.0 / k
        for f in range(P):
            if n_levels[f] != 0:
                continue
            rk = &dense[f * n]
            for k in range(n):
                order[k] = k
                key[k] = X[k, f]
            sort_by_key(order, key, n, sbuf)
            cur_r = 0
            for k in range(n):
                if k > 0 and key[order[k]] > key[order[k - 1]]:
                    cur_r += 1
                rk[order[k]] = cur_r
        for t in range(n_trees):
            rng = stream_state(seed, <uint64_t> t)
            for k in range(n):
                i = below(&rng, n)
                samples[k] = i
                inbag[t, i] += 1
            for f in range(P):
                feats[f] = f
            base = nv.size
            offsets[t] = base
            if nv_reserve(&nv, base + 1) < 0:
                raise MemoryError()
            nn = 1
            nv.size = base + 1
            sp = 0
            stack[0] = 0
            stack[1] = 0
            stack[2] = n
            sp = 1
            while sp > 0:
                sp -= 1
                node = stack[3 * sp]
                start = stack[3 * sp + 1]
                end = stack[3 * sp + 2]
                m = end - start
                # node summary
                pure = True
                if n_classes == 0:
                    s_tot = 0.0
                    first = y[samples[start]]
                    for k in range(start, end):
                        s_tot += y[samples[k]]
                        if y[samples[k]] != first:
                            pure = False
                    nv.value[base + node] = s_tot / m
                    parent = s_tot * s_tot / m
                else:
                    for c in range(C):
                        cnt[c] = 0
                    for k in range(start, end):
                        cnt[<int> y[samples[k]]] += 1
                    a = 0
                    sq = 0
                    for c in range(C):
                        sq += cnt[c] * cnt[c]
                        if cnt[c] > cnt[a]:
                            a = c
                    pure = cnt[a] == m
                    nv.value[base + node] = <double> a
                    parent = (<double> sq) / m
                nv.feature[base + node] = -1
                nv.threshold[base + node] = 0.0
                nv.catmask[base + node] = 0
                nv.left[base + node] = -1
                nv.right[base + node] = -1
                if m < min_node_size or pure:
                    continue
                # draw candidate predictors (partial Fisher-Yates), then sort
                for k in range(mtry):
                    r = k + below(&rng, P - k)
                    a = feats[k]
                    feats[k] = feats[r]
                    feats[r] = a
                for k in range(mtry):
                    cand[k] = feats[k]
                for k in range(1, mtry):
                    a = cand[k]
                    kk = k - 1
                    while kk >= 0 and cand[kk] > a:
                        cand[kk + 1] = cand[kk]
                        kk -= 1
                    cand[kk + 1] = a
                best = parent
                best_f = -1
                best_thr = 0.0
                best_mask = 0
                for kk in range(mtry):
                    f = cand[kk]
                    if n_levels[f] == 0:
                        for k in range(m):
                            key[k] = X[samples[start + k], f]
                            yv[k] = y[samples[start + k]]
                        if n <= 4 * m:
                            # stable counting sort on the precomputed dense ranks
                            rk = &dense[f * n]
                            for k in range(n + 1):
                                ccount[k] = 0
                            for k in range(m):
                                ccount[rk[samples[start + k]] + 1] += 1
                            for k in range(1, n + 1):
                                ccount[k] += ccount[k - 1]
                            for k in range(m):
                                cur_r = rk[samples[start + k]]
                                order[ccount[cur_r]] = k
                                ccount[cur_r] += 1
                        else:
                            for k in range(m):
                                order[k] = k
                            sort_by_key(order, key, m, sbuf)
                        if n_classes == 0:
                            sL = 0.0
                            for k in range(1, m):
                                sL += yv[order[k - 1]]
                                xa = key[order[k - 1]]
                                xb = key[order[k]]
                                if xa < xb:
                                    sR = s_tot - sL
                                    proxy = sL * sL * inv[k] + sR * sR * inv[m - k]
                                    if proxy > best:
                                        thr = 0.5 * (xa + xb)
                                        if thr >= xb:
                                            thr = xa
                                        best = proxy
                                        best_f = f
                                        best_thr = thr
                                        best_mask = 0
                        else:
                            for c in range(C):
                                cntL[c] = 0
                                cntR[c] = cnt[c]
                            sqL = 0
                            sqR = sq
                            for k in range(1, m):
                                yc = <int> yv[order[k - 1]]
                                sqL += 2 * cntL[yc] + 1
                                cntL[yc] += 1
                                sqR -= 2 * cntR[yc] - 1
                                cntR[yc] -= 1
                                xa = key[order[k - 1]]
                                xb = key[order[k]]
                                if xa < xb:
                                    proxy = (<double> sqL) * inv[k] + (<double> sqR) * inv[m - k]
                                    if proxy > best:
                                        thr = 0.5 * (xa + xb)
                                        if thr >= xb:
                                            thr = xa
                                        best = proxy
                                        best_f = f
                                        best_thr = thr
                                        best_mask = 0
                    else:
                        for lv in range(n_levels[f]):
                            lv_n[lv] = 0
                            lv_s[lv] = 0.0
                            for c in range(C):
                                lv_c[lv * C + c] = 0
                        for k in range(start, end):
                            lv = <Py_ssize_t> X[samples[k], f]
                            lv_n[lv] += 1
                            if n_classes == 0:
                                lv_s[lv] += y[samples[k]]
                            else:
                                lv_c[lv * C + <int> y[samples[k]]] += 1
                        n_obs = 0
                        for lv in range(n_levels[f]):
                            if lv_n[lv] > 0:
                                obs[n_obs] = lv
                                n_obs += 1
                        if n_obs < 2:
                            continue
                        for mask in range(1, (<uint64_t> 1) << (n_obs - 1)):
                            nL = 0
                            gmask = 0
                            if n_classes == 0:
                                sL = 0.0
                                for b in range(n_obs):
                                    if (mask >> b) & 1:
                                        nL += lv_n[obs[b]]
                                        sL += lv_s[obs[b]]
                                        gmask |= (<uint64_t> 1) << obs[b]
                                sR = s_tot - sL
                                proxy = sL * sL * inv[nL] + sR * sR * inv[m - nL]
                            else:
                                for b in range(n_obs):
                                    if (mask >> b) & 1:
                                        nL += lv_n[obs[b]]
                                        gmask |= (<uint64_t> 1) << obs[b]
                                sqL = 0
                                sqR = 0
                                for c in range(C):
                                    nl_count = 0
                                    for b in range(n_obs):
                                        if (mask >> b) & 1:
                                            nl_count += lv_c[obs[b] * C + c]
                                    sqL += nl_count * nl_count
                                    sqR += (cnt[c] - nl_count) * (cnt[c] - nl_count)
                                proxy = (<double> sqL) * inv[nL] + (<double> sqR) * inv[m - nL]
                            if proxy > best:
                                best = proxy
                                best_f = f
                                best_thr = 0.0
                                best_mask = gmask
                if best_f < 0:
                    continue
                # stable partition of samples[start:end]
                a = start
                b = 0
                for k in range(start, end):
                    if n_levels[best_f] == 0:
                        goes_left = X[samples[k], best_f] <= best_thr
                    else:
                        goes_left = (best_mask >> (<Py_ssize_t> X[samples[k], best_f])) & 1
                    if goes_left:
                        samples[a] = samples[k]
                        a += 1
                    else:
                        tmp[b] = samples[k]
                        b += 1
                for k in range(b):
                    samples[a + k] = tmp[k]
                if nv_reserve(&nv, base + nn + 2) < 0:
                    raise MemoryError()
                nv.feature[base + node] = <int32_t> best_f
                nv.threshold[base + node] = best_thr
                nv.catmask[base + node] = best_mask
                nv.left[base + node] = <int32_t> nn
                nv.right[base + node] = <int32_t> (nn + 1)
                nv.size = base + nn + 2
                # push right, then left (left is grown first)
                stack[3 * sp] = nn + 1
                stack[3 * sp + 1] = a
                stack[3 * sp + 2] = end
                sp += 1
                stack[3 * sp] = nn
                stack[3 * sp + 1] = start
                stack[3 * sp + 2] = a
                sp += 1
                nn += 2
        offsets[n_trees] = nv.size
        total = nv.size
        feature = np.empty(total, dtype=np.int32)
        threshold = np.empty(total, dtype=np.float64)
        catmask = np.empty(total, dtype=np.uint64)
        left = np.empty(total, dtype=np.int32)
        right = np.empty(total, dtype=np.int32)
        value = np.empty(total, dtype=np.float64)
        fv = feature
        tv = threshold
        cv = catmask
        lv_ = left
        rv = right
        vv = value
        for k in range(total):
            fv[k] = nv.feature[k]
            tv[k] = nv.threshold[k]
            cv[k] = nv.catmask[k]
            lv_[k] = nv.left[k]
            rv[k] = nv.right[k]
            vv[k] = nv.value[k]
    finally:
        nv_free(&nv)
        free(samples)
        free(tmp)
        free(order)
        free(sbuf)
        free(key)
        free(yv)
        free(feats)
        free(cand)
        free(stack)
        free(cnt)
        free(cntL)
        free(cntR)
        free(lv_n)
        free(lv_s)
        free(lv_c)
        free(obs)
        free(inv)
        free(dense)
        free(ccount)
    return feature, threshold, catmask, left, right, value, offsets_arr, inbag_arr


cdef inline double walk(const double[:, ::1] X, Py_ssize_t row,
                        const int32_t[::1] n_levels, const int32_t* feature,
                        const double* threshold, const uint64_t* catmask,
                        const int32_t* left, const int32_t* right,
                        const double* value, Py_ssize_t swap_f,
                        double swap_v) noexcept nogil:
    cdef Py_ssize_t node = 0
    cdef Py_ssize_t f
    cdef double xv
    while left[node] >= 0:
        f = feature[node]
        if f == swap_f:
            xv = swap_v
        else:
            xv = X[row, f]
        if n_levels[f] == 0:
            if xv <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        else:
            if (catmask[node] >> (<Py_ssize_t> xv)) & 1:
                node = left[node]
            else:
                node = right[node]
    return value[node]


def apply_forest(const double[:, ::1] X, const int32_t[::1] n_levels,
                 const int32_t[::1] feature, const double[::1] threshold,
                 const uint64_t[::1] catmask, const int32_t[::1] left,
                 const int32_t[::1] right, const double[::1] value,
                 const int64_t[::1] offsets):
    """Per-tree predictions, shape (n_rows, n_trees)."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t T = offsets.shape[0] - 1
    out_arr = np.empty((n, T), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, i, o
    for t in range(T):
        o = offsets[t]
        for i in range(n):
            out[i, t] = walk(X, i, n_levels, &feature[o], &threshold[o],
                             &catmask[o], &left[o], &right[o], &value[o], -1, 0.0)
    return out_arr


def forest_importance(const double[:, ::1] X, const double[::1] y, int n_classes,
                      const int32_t[::1] n_levels,
                      const int32_t[::1] feature, const double[::1] threshold,
                      const uint64_t[::1] catmask, const int32_t[::1] left,
                      const int32_t[::1] right, const double[::1] value,
                      const int64_t[::1] offsets, const int32_t[:, ::1] inbag,
                      uint64_t seed):
    """Mean over trees of (permuted OOB error - OOB error) per predictor."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t P = X.shape[1]
    cdef Py_ssize_t T = offsets.shape[0] - 1
    imp_arr = np.zeros(P, dtype=np.float64)
    cdef double[::1] imp = imp_arr
    cdef Py_ssize_t* oob = <Py_ssize_t*> malloc((n + 1) * sizeof(Py_ssize_t))
    cdef double* vals = <double*> malloc((n + 1) * sizeof(double))
    cdef char* used = <char*> malloc((P + 1) * sizeof(char))
    cdef Py_ssize_t t, i, k, r, o, n_oob, nodes, f
    cdef uint64_t rng
    cdef double base_err, perm_err, pred, d, v
    try:
        if oob == NULL or vals == NULL or used == NULL:
            raise MemoryError()
        for t in range(T):
            o = offsets[t]
            nodes = offsets[t + 1] - o
            n_oob = 0
            for i in range(n):
                if inbag[t, i] == 0:
                    oob[n_oob] = i
                    n_oob += 1
            if n_oob == 0:
                continue
            rng = stream_state(seed, <uint64_t> t)
            base_err = 0.0
            for k in range(n_oob):
                pred = walk(X, oob[k], n_levels, &feature[o], &threshold[o],
                            &catmask[o], &left[o], &right[o], &value[o], -1, 0.0)
                if n_classes == 0:
                    d = pred - y[oob[k]]
                    base_err += d * d
                elif pred != y[oob[k]]:
                    base_err += 1.0
            base_err = base_err / n_oob
            for f in range(P):
                used[f] = 0
            for k in range(nodes):
                if left[o + k] >= 0:
                    used[feature[o + k]] = 1
            for f in range(P):
                if not used[f]:
                    continue
                for k in range(n_oob):
                    vals[k] = X[oob[k], f]
                k = n_oob - 1
                while k > 0:
                    r = below(&rng, k + 1)
                    v = vals[k]
                    vals[k] = vals[r]
                    vals[r] = v
                    k -= 1
                perm_err = 0.0
                for k in range(n_oob):
                    pred = walk(X, oob[k], n_levels, &feature[o], &threshold[o],
                                &catmask[o], &left[o], &right[o], &value[o], f, vals[k])
                    if n_classes == 0:
                        d = pred - y[oob[k]]
                        perm_err += d * d
                    elif pred != y[oob[k]]:
                        perm_err += 1.0
                perm_err = perm_err / n_oob
                imp[f] += perm_err - base_err
        for f in range(P):
            imp[f] = imp[f] / T
    finally:
        free(oob)
        free(vals)
        free(used)
    return imp_arr


# ---------------------------------------------------------------- lasso

cdef inline double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    # four partial sums keep the FP units busy without reassociation flags
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t i = 0
    while i + 4 <= n:
        s0 += a[i] * b[i]
        s1 += a[i + 1] * b[i + 1]
        s2 += a[i + 2] * b[i + 2]
        s3 += a[i + 3] * b[i + 3]
        i += 4
    while i < n:
        s0 += a[i] * b[i]
        i += 1
    return (s0 + s1) + (s2 + s3)


cdef Py_ssize_t _cd(const double* Xt, const double* wx, const double* xw2, double* r,
                    double sw, double* beta, double* b0, Py_ssize_t P, Py_ssize_t n,
                    double lam, double tol, Py_ssize_t max_iter, bint fit_intercept,
                    const double* w) noexcept nogil:
    # r must hold z - b0 - X beta on entry; wx = w * x_j, xw2 = <wx, x_j> / n
    cdef Py_ssize_t i, j, sweeps = 0
    cdef double g, old, new, diff, dmax, s
    cdef const double* xj
    cdef bint full = True
    while sweeps < max_iter:
        sweeps += 1
        dmax = 0.0
        for j in range(P):
            if not full and beta[j] == 0.0:
                continue
            if xw2[j] <= 0.0:
                continue
            old = beta[j]
            g = _dot(wx + j * n, r, n) / n + xw2[j] * old
            if g > lam:
                new = (g - lam) / xw2[j]
            elif g < -lam:
                new = (g + lam) / xw2[j]
            else:
                new = 0.0
            if new != old:
                diff = new - old
                beta[j] = new
                xj = Xt + j * n
                for i in range(n):
                    r[i] -= xj[i] * diff
                if fabs(diff) * xw2[j] > dmax:
                    dmax = fabs(diff) * xw2[j]
        if fit_intercept:
            s = 0.0
            for i in range(n):
                s += w[i] * r[i]
            diff = s / sw
            if diff != 0.0:
                b0[0] += diff
                for i in range(n):
                    r[i] -= diff
                if fabs(diff) * sw / n > dmax:
                    dmax = fabs(diff) * sw / n
        if dmax < tol:
            if full:
                break
            full = True
        else:
            full = False
    return sweeps


cdef void _weigh(const double* Xt, const double* w, double* wx, double* xw2,
                 Py_ssize_t P, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    for j in range(P):
        for i in range(n):
            wx[j * n + i] = w[i] * Xt[j * n + i]
        xw2[j] = _dot(wx + j * n, Xt + j * n, n) / n


def cd_wls(const double[:, ::1] Xt, const double[::1] z, const double[::1] w,
           double[::1] beta, double b0, double lam, double tol, Py_ssize_t max_iter,
           bint fit_intercept=True):
    """Coordinate descent for (1/2n) sum w (z - b0 - X beta)^2 + lam |beta|_1.

    ``Xt`` holds predictors column-wise (shape P x n).  ``beta`` is updated in
    place; returns ``(b0, sweeps)``.  Converged when every weighted coordinate
    change ``xw2_j * |delta_j|`` falls below ``tol`` on a full sweep.
    """
    cdef Py_ssize_t P = Xt.shape[0]
    cdef Py_ssize_t n = Xt.shape[1]
    cdef double* r = <double*> malloc(n * sizeof(double))
    cdef double* xw2 = <double*> malloc((P + 1) * sizeof(double))
    cdef double* wx = <double*> malloc((P * n + 1) * sizeof(double))
    cdef Py_ssize_t i, j, sweeps = 0
    cdef double sw = 0.0
    try:
        if r == NULL or xw2 == NULL or wx == NULL:
            raise MemoryError()
        with nogil:
            for i in range(n):
                sw += w[i]
                r[i] = z[i] - b0
            for j in range(P):
                if beta[j] != 0.0:
                    for i in range(n):
                        r[i] -= Xt[j, i] * beta[j]
            if P > 0:
                _weigh(&Xt[0, 0], &w[0], wx, xw2, P, n)
                sweeps = _cd(&Xt[0, 0], wx, xw2, r, sw, &beta[0], &b0, P, n, lam, tol,
                             max_iter, fit_intercept, &w[0])
            else:
                sweeps = _cd(NULL, wx, xw2, r, sw, NULL, &b0, 0, n, lam, tol,
                             max_iter, fit_intercept, &w[0])
    finally:
        free(r)
        free(xw2)
        free(wx)
    return b0, sweeps


cdef double _penalized_loss(const double* Xt, const double* t, const double* beta, double b0,
                            double lam, Py_ssize_t P, Py_ssize_t n, double* eta) noexcept nogil:
    # fills eta = b0 + X beta; returns mean(log(1 + e^eta) - t eta) + lam |beta|_1
    cdef Py_ssize_t i, j
    cdef double loss = 0.0, pen = 0.0, e
    for i in range(n):
        eta[i] = b0
    for j in range(P):
        if beta[j] != 0.0:
            pen += fabs(beta[j])
            for i in range(n):
                eta[i] += Xt[j * n + i] * beta[j]
    for i in range(n):
        e = eta[i]
        loss += (e if e > 0.0 else 0.0) + log1p(exp(-fabs(e))) - t[i] * e
    return loss / n + lam * pen


def logistic_irls(const double[:, ::1] Xt, const double[::1] t, double[::1] beta,
                  double b0, double lam, double tol, Py_ssize_t max_iter):
    """Penalized logistic fit at one ``lam`` by Newton steps with inner CD.

    ``t`` holds 0/1 labels.  Early inner solves run at a loose tolerance that
    tightens 100-fold per step; the loop ends once an inner solve at ``tol``
    is quiet on its first sweep.  A step that raises the objective is redone
    with the 1/4 curvature bound.  Returns ``(b0, newton_steps)``.
    """
    cdef Py_ssize_t P = Xt.shape[0]
    cdef Py_ssize_t n = Xt.shape[1]
    cdef Py_ssize_t i, it = 0, sweeps
    cdef double inner = tol if tol > 1e-3 * lam else 1e-3 * lam
    cdef double before, after, nb0, sw, pr
    cdef double* buf = <double*> malloc((5 * n + 2 * P + P * n + 2) * sizeof(double))
    cdef double *eta, *prob, *w, *r, *wx, *xw2, *nb, *e2
    cdef const double* X
    if buf == NULL:
        raise MemoryError()
    eta = buf
    prob = buf + n
    w = buf + 2 * n
    r = buf + 3 * n
    e2 = buf + 4 * n
    xw2 = buf + 5 * n
    nb = buf + 5 * n + P + 1
    wx = buf + 5 * n + 2 * P + 1
    X = &Xt[0, 0] if P > 0 else NULL
    try:
        with nogil:
            while it < max_iter:
                it += 1
                before = _penalized_loss(X, &t[0], &beta[0] if P > 0 else NULL, b0, lam, P, n, eta)
                sw = 0.0
                for i in range(n):
                    pr = 0.5 * (1.0 + tanh(0.5 * eta[i]))
                    prob[i] = pr
                    w[i] = pr * (1.0 - pr)
                    if w[i] < 1e-5:
                        w[i] = 1e-5
                    sw += w[i]
                    r[i] = (t[i] - pr) / w[i]
                for i in range(P):
                    nb[i] = beta[i]
                nb0 = b0
                _weigh(X, w, wx, xw2, P, n)
                sweeps = _cd(X, wx, xw2, r, sw, nb, &nb0, P, n, lam, inner, max_iter, True, w)
                if sweeps == 1:
                    if inner == tol:
                        break
                    inner = tol if tol > inner * 1e-2 else inner * 1e-2
                    continue
                after = _penalized_loss(X, &t[0], nb, nb0, lam, P, n, e2)
                if after > before + 1e-12 * (fabs(before) if fabs(before) > 1.0 else 1.0):
                    sw = 0.25 * n
                    for i in range(n):
                        w[i] = 0.25
                        r[i] = (t[i] - prob[i]) / 0.25
                    for i in range(P):
                        nb[i] = beta[i]
                    nb0 = b0
                    _weigh(X, w, wx, xw2, P, n)
                    _cd(X, wx, xw2, r, sw, nb, &nb0, P, n, lam, inner, max_iter, True, w)
                for i in range(P):
                    beta[i] = nb[i]
                b0 = nb0
                inner = tol if tol > inner * 1e-2 else inner * 1e-2
    finally:
        free(buf)
    return b0, it


# ---------------------------------------------------------------- gibbs

def gibbs_sweeps(const double[:, ::1] theta, double[::1] x,
                 const double[:, ::1] u, Py_ssize_t thin, double[:, ::1] out):
    """Systematic-scan sweeps over x in {-1,+1}^p, one row of ``u`` per sweep.

    After every ``thin`` sweeps the state is copied to the next row of ``out``.
    """
    cdef Py_ssize_t S = u.shape[0]
    cdef Py_ssize_t p = x.shape[0]
    cdef Py_ssize_t s, i, j, row = 0
    cdef double field
    for s in range(S):
        for i in range(p):
            field = theta[i, i]
            for j in range(p):
                if j != i:
                    field += theta[i, j] * x[j]
            if u[s, i] < 1.0 / (1.0 + exp(-2.0 * field)):
                x[i] = 1.0
            else:
                x[i] = -1.0
        if (s + 1) % thin == 0 and row < out.shape[0]:
            for i in range(p):
                out[row, i] = x[i]
            row += 1
    return row
