"""Pure-Python twin of ``grafo._core``.

Same arithmetic order and same splitmix64 streams as the compiled kernels, so
forests grown here match the compiled ones node for node.  Slow; used when the
extension is unavailable or ``GRAFO_BACKEND=python`` is set.
"""
import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
INV53 = 1.0 / 9007199254740992.0


def mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class _Stream:
    __slots__ = ("s",)

    def __init__(self, seed, t):
        self.s = (seed + mix64(((t + 1) * GOLDEN) & MASK64)) & MASK64

    def below(self, k):
        self.s = (self.s + GOLDEN) & MASK64
        r = int(float(mix64(self.s) >> 11) * INV53 * k)
        return k - 1 if r >= k else r


def stream_head(seed, t, k, count):
    s = _Stream(int(seed), int(t))
    return [s.below(k) for _ in range(count)]


def build_forest(X, y, n_classes, n_levels, n_trees, mtry, min_node_size, seed):
    n, P = X.shape
    Xl = X.tolist()
    yl = [float(v) for v in y]
    lv_count = [int(v) for v in n_levels]
    C = n_classes if n_classes > 0 else 1
    seed = int(seed)
    inv = [0.0] + [1.0 / k for k in range(1, n + 1)]

    inbag = np.zeros((n_trees, n), dtype=np.int32)
    feature, threshold, catmask, left, right, value = [], [], [], [], [], []
    offsets = np.zeros(n_trees + 1, dtype=np.int64)

    for t in range(n_trees):
        rng = _Stream(seed, t)
        samples = []
        for _ in range(n):
            i = rng.below(n)
            samples.append(i)
            inbag[t, i] += 1
        feats = list(range(P))
        base = len(feature)
        offsets[t] = base
        nodes = [None]  # per node: [feature, threshold, mask, left, right, value]
        stack = [(0, 0, n)]
        while stack:
            node, start, end = stack.pop()
            m = end - start
            rows = samples[start:end]
            if n_classes == 0:
                s_tot = 0.0
                first = yl[rows[0]]
                pure = True
                for r in rows:
                    s_tot += yl[r]
                    if yl[r] != first:
                        pure = False
                val = s_tot / m
                parent = s_tot * s_tot / m
            else:
                cnt = [0] * C
                for r in rows:
                    cnt[int(yl[r])] += 1
                a = 0
                sq = 0
                for c in range(C):
                    sq += cnt[c] * cnt[c]
                    if cnt[c] > cnt[a]:
                        a = c
                pure = cnt[a] == m
                val = float(a)
                parent = sq / m
            nodes[node] = [-1, 0.0, 0, -1, -1, val]
            if m < min_node_size or pure:
                continue
            for k in range(mtry):
                r = k + rng.below(P - k)
                feats[k], feats[r] = feats[r], feats[k]
            cand = sorted(feats[:mtry])
            best, best_f, best_thr, best_mask = parent, -1, 0.0, 0
            for f in cand:
                if lv_count[f] == 0:
                    key = [Xl[r][f] for r in rows]
                    yv = [yl[r] for r in rows]
                    order = sorted(range(m), key=lambda k: key[k])
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
                                    best, best_f, best_thr, best_mask = proxy, f, thr, 0
                    else:
                        cntL = [0] * C
                        cntR = list(cnt)
                        sqL, sqR = 0, sq
                        for k in range(1, m):
                            yc = int(yv[order[k - 1]])
                            sqL += 2 * cntL[yc] + 1
                            cntL[yc] += 1
                            sqR -= 2 * cntR[yc] - 1
                            cntR[yc] -= 1
                            xa = key[order[k - 1]]
                            xb = key[order[k]]
                            if xa < xb:
                                proxy = float(sqL) * inv[k] + float(sqR) * inv[m - k]
                                if proxy > best:
                                    thr = 0.5 * (xa + xb)
                                    if thr >= xb:
                                        thr = xa
                                    best, best_f, best_thr, best_mask = proxy, f, thr, 0
                else:
                    L = lv_count[f]
                    lv_n = [0] * L
                    lv_s = [0.0] * L
                    lv_c = [[0] * C for _ in range(L)]
                    for r in rows:
                        lv = int(Xl[r][f])
                        lv_n[lv] += 1
                        if n_classes == 0:
                            lv_s[lv] += yl[r]
                        else:
                            lv_c[lv][int(yl[r])] += 1
                    obs = [lv for lv in range(L) if lv_n[lv] > 0]
                    n_obs = len(obs)
                    if n_obs < 2:
                        continue
                    for mask in range(1, 1 << (n_obs - 1)):
                        nL = 0
                        gmask = 0
                        if n_classes == 0:
                            sL = 0.0
                            for b in range(n_obs):
                                if (mask >> b) & 1:
                                    nL += lv_n[obs[b]]
                                    sL += lv_s[obs[b]]
                                    gmask |= 1 << obs[b]
                            sR = s_tot - sL
                            proxy = sL * sL * inv[nL] + sR * sR * inv[m - nL]
                        else:
                            for b in range(n_obs):
                                if (mask >> b) & 1:
                                    nL += lv_n[obs[b]]
                                    gmask |= 1 << obs[b]
                            sqL = 0
                            sqR = 0
                            for c in range(C):
                                nl = 0
                                for b in range(n_obs):
                                    if (mask >> b) & 1:
                                        nl += lv_c[obs[b]][c]
                                sqL += nl * nl
                                sqR += (cnt[c] - nl) * (cnt[c] - nl)
                            proxy = float(sqL) * inv[nL] + float(sqR) * inv[m - nL]
                        if proxy > best:
                            best, best_f, best_thr, best_mask = proxy, f, 0.0, gmask
            if best_f < 0:
                continue
            lefts, rights = [], []
            for r in rows:
                if lv_count[best_f] == 0:
                    go = Xl[r][best_f] <= best_thr
                else:
                    go = (best_mask >> int(Xl[r][best_f])) & 1
                (lefts if go else rights).append(r)
            samples[start:end] = lefts + rights
            nn = len(nodes)
            nodes[node][:5] = [best_f, best_thr, best_mask, nn, nn + 1]
            nodes.extend([None, None])
            mid = start + len(lefts)
            stack.append((nn + 1, mid, end))
            stack.append((nn, start, mid))
        for nd in nodes:
            feature.append(nd[0])
            threshold.append(nd[1])
            catmask.append(nd[2])
            left.append(nd[3])
            right.append(nd[4])
            value.append(nd[5])
    offsets[n_trees] = len(feature)
    return (np.array(feature, dtype=np.int32), np.array(threshold, dtype=np.float64),
            np.array(catmask, dtype=np.uint64), np.array(left, dtype=np.int32),
            np.array(right, dtype=np.int32), np.array(value, dtype=np.float64),
            offsets, inbag)


def _walk(xrow, n_levels, feature, threshold, catmask, left, right, value, o,
          swap_f=-1, swap_v=0.0):
    node = 0
    while left[o + node] >= 0:
        f = feature[o + node]
        xv = swap_v if f == swap_f else xrow[f]
        if n_levels[f] == 0:
            node = left[o + node] if xv <= threshold[o + node] else right[o + node]
        else:
            node = left[o + node] if (catmask[o + node] >> int(xv)) & 1 else right[o + node]
    return value[o + node]


def _lists(*arrays):
    return [a.tolist() for a in arrays]


def apply_forest(X, n_levels, feature, threshold, catmask, left, right, value, offsets):
    nl, fe, th, cm, le, ri, va = _lists(n_levels, feature, threshold, catmask,
                                        left, right, value)
    T = len(offsets) - 1
    out = np.empty((X.shape[0], T), dtype=np.float64)
    for i, xrow in enumerate(X.tolist()):
        for t in range(T):
            out[i, t] = _walk(xrow, nl, fe, th, cm, le, ri, va, int(offsets[t]))
    return out


def forest_importance(X, y, n_classes, n_levels, feature, threshold, catmask,
                      left, right, value, offsets, inbag, seed):
    n, P = X.shape
    T = len(offsets) - 1
    nl, fe, th, cm, le, ri, va = _lists(n_levels, feature, threshold, catmask,
                                        left, right, value)
    Xl = X.tolist()
    yl = [float(v) for v in y]
    imp = [0.0] * P

    def err(pred, target):
        if n_classes == 0:
            d = pred - target
            return d * d
        return 1.0 if pred != target else 0.0

    for t in range(T):
        o = int(offsets[t])
        o_end = int(offsets[t + 1])
        oob = [i for i in range(n) if inbag[t, i] == 0]
        if not oob:
            continue
        rng = _Stream(int(seed), t)
        base_err = 0.0
        for i in oob:
            base_err += err(_walk(Xl[i], nl, fe, th, cm, le, ri, va, o), yl[i])
        base_err = base_err / len(oob)
        used = sorted({fe[k] for k in range(o, o_end) if le[k] >= 0})
        for f in used:
            vals = [Xl[i][f] for i in oob]
            k = len(oob) - 1
            while k > 0:
                r = rng.below(k + 1)
                vals[k], vals[r] = vals[r], vals[k]
                k -= 1
            perm_err = 0.0
            for i, v in zip(oob, vals):
                perm_err += err(_walk(Xl[i], nl, fe, th, cm, le, ri, va, o, f, v), yl[i])
            perm_err = perm_err / len(oob)
            imp[f] += perm_err - base_err
    return np.array([v / T for v in imp], dtype=np.float64)


def cd_wls(Xt, z, w, beta, b0, lam, tol, max_iter, fit_intercept=True):
    P, n = Xt.shape
    sw = float(np.sum(w))
    wx = Xt * w
    xw2 = np.einsum("ji,ji->j", wx, Xt) / n
    r = z - b0 - Xt.T @ beta
    sweeps = 0
    full = True
    while sweeps < max_iter:
        sweeps += 1
        dmax = 0.0
        for j in range(P):
            if (not full and beta[j] == 0.0) or xw2[j] <= 0.0:
                continue
            old = beta[j]
            g = float(np.dot(wx[j], r)) / n + xw2[j] * old
            if g > lam:
                new = (g - lam) / xw2[j]
            elif g < -lam:
                new = (g + lam) / xw2[j]
            else:
                new = 0.0
            if new != old:
                diff = new - old
                beta[j] = new
                r -= Xt[j] * diff
                dmax = max(dmax, abs(diff) * xw2[j])
        if fit_intercept:
            diff = float(np.dot(w, r)) / sw
            if diff != 0.0:
                b0 += diff
                r -= diff
                dmax = max(dmax, abs(diff) * sw / n)
        if dmax < tol:
            if full:
                break
            full = True
        else:
            full = False
    return b0, sweeps


def _penalized_loss(Xt, t, beta, b0, lam):
    eta = b0 + beta @ Xt
    loss = np.mean(np.logaddexp(0.0, eta) - t * eta)
    return float(loss) + lam * float(np.abs(beta).sum()), eta


def logistic_irls(Xt, t, beta, b0, lam, tol, max_iter):
    n = Xt.shape[1]
    inner = max(tol, 1e-3 * lam)
    it = 0
    while it < max_iter:
        it += 1
        before, eta = _penalized_loss(Xt, t, beta, b0, lam)
        prob = 0.5 * (1.0 + np.tanh(0.5 * eta))
        w = np.maximum(prob * (1.0 - prob), 1e-5)
        nb = beta.copy()
        nb0, sweeps = cd_wls(Xt, eta + (t - prob) / w, w, nb, b0, lam, inner, max_iter, True)
        if sweeps == 1:
            if inner == tol:
                break
            inner = max(tol, inner * 1e-2)
            continue
        after, _ = _penalized_loss(Xt, t, nb, nb0, lam)
        if after > before + 1e-12 * max(abs(before), 1.0):
            w = np.full(n, 0.25)
            nb = beta.copy()
            nb0, _ = cd_wls(Xt, eta + (t - prob) / w, w, nb, b0, lam, inner, max_iter, True)
        beta[:] = nb
        b0 = nb0
        inner = max(tol, inner * 1e-2)
    return b0, it


def gibbs_sweeps(theta, x, u, thin, out):
    p = x.shape[0]
    th = theta.tolist()
    xs = x.tolist()
    row = 0
    for s, us in enumerate(u.tolist()):
        for i in range(p):
            field = th[i][i]
            ti = th[i]
            for j in range(p):
                if j != i:
                    field += ti[j] * xs[j]
            try:
                prob = 1.0 / (1.0 + math.exp(-2.0 * field))
            except OverflowError:
                prob = 0.0
            xs[i] = 1.0 if us[i] < prob else -1.0
        if (s + 1) % thin == 0 and row < out.shape[0]:
            out[row, :] = xs
            row += 1
    x[:] = xs
    return row
