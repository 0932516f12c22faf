"""Compiled inner loops: coordinate-descent sweeps and CART growing.

Everything here works on plain arrays; the public wrappers live in
``linear.py`` and ``trees.py``.
"""

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True, nogil=True)
def _sweep(coords, gram, rho, beta, l1, denom, diag):
    max_delta = 0.0
    for j in coords:
        old = beta[j]
        z = 2.0 * (rho[j] + diag[j] * old)
        if z > l1[j]:
            new = (z - l1[j]) / denom[j]
        elif z < -l1[j]:
            new = (z + l1[j]) / denom[j]
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            beta[j] = new
            for k in range(rho.shape[0]):
                rho[k] -= gram[k, j] * delta
            if abs(delta) > max_delta:
                max_delta = abs(delta)
    return max_delta


@njit(cache=True, nogil=True)
def _objective(gram, xty, yty, beta, lam, alpha, w):
    quad = 0.0
    p = beta.shape[0]
    for i in range(p):
        for j in range(p):
            quad += beta[i] * gram[i, j] * beta[j]
    rss = yty - 2.0 * np.dot(beta, xty) + quad
    pen = 0.0
    for j in range(p):
        pen += alpha * w[j] * abs(beta[j]) + (1.0 - alpha) * beta[j] * beta[j]
    return rss + lam * pen


@njit(cache=True, nogil=True)
def coordinate_descent(gram, xty, yty, beta, lam, alpha, w, tol, max_sweeps, record):
    """Full ascending sweeps alternating with sweeps over the nonzero set.

    Convergence is declared only after a full sweep whose largest coefficient
    change is below ``tol``. Returns (sweeps, converged, objective_path).
    """
    p = beta.shape[0]
    diag = np.empty(p)
    for j in range(p):
        diag[j] = gram[j, j]
    l1 = lam * alpha * w
    denom = 2.0 * (diag + lam * (1.0 - alpha))
    rho = xty - gram @ beta
    path = np.empty(max_sweeps if record else 0)
    all_coords = np.arange(p)
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        delta = _sweep(all_coords, gram, rho, beta, l1, denom, diag)
        if record:
            path[sweeps] = _objective(gram, xty, yty, beta, lam, alpha, w)
        sweeps += 1
        if delta < tol:
            converged = True
            break
        active = np.flatnonzero(beta)
        if active.shape[0] == p:
            continue
        while sweeps < max_sweeps:
            delta = _sweep(active, gram, rho, beta, l1, denom, diag)
            if record:
                path[sweeps] = _objective(gram, xty, yty, beta, lam, alpha, w)
            sweeps += 1
            if delta < tol:
                break
    return sweeps, converged, path[:sweeps]


@njit(cache=True, nogil=True)
def _best_split(X, y, rows, features, min_leaf):
    """Best (feature, threshold, sse, missing_left) over candidate features.

    Rows missing the split feature join the child that has more non-missing
    rows (left on ties); their targets are included in that child's SSE.
    Candidates are scanned feature-ascending then threshold-ascending and only
    a strictly smaller SSE replaces the incumbent.
    """
    best_f = -1
    best_thr = 0.0
    best_sse = np.inf
    best_mleft = True
    n = rows.shape[0]
    vals = np.empty(n)
    ys = np.empty(n)
    for f in features:
        m = 0
        miss_s = 0.0
        miss_s2 = 0.0
        n_miss = 0
        for i in range(n):
            v = X[rows[i], f]
            if np.isnan(v):
                yy = y[rows[i]]
                miss_s += yy
                miss_s2 += yy * yy
                n_miss += 1
            else:
                vals[m] = v
                ys[m] = y[rows[i]]
                m += 1
        if m < 2 * min_leaf:
            continue
        order = np.argsort(vals[:m], kind="mergesort")
        sv = vals[:m][order]
        sy = ys[:m][order]
        tot = 0.0
        tot2 = 0.0
        for i in range(m):
            tot += sy[i]
            tot2 += sy[i] * sy[i]
        cs = 0.0
        cs2 = 0.0
        for i in range(m - 1):
            cs += sy[i]
            cs2 += sy[i] * sy[i]
            nl = i + 1
            nr = m - nl
            if nl < min_leaf:
                continue
            if nr < min_leaf:
                break
            if sv[i] == sv[i + 1]:
                continue
            ls, ls2, lnn = cs, cs2, nl
            rs, rs2, rnn = tot - cs, tot2 - cs2, nr
            mleft = nl >= nr
            if n_miss > 0:
                if mleft:
                    ls += miss_s
                    ls2 += miss_s2
                    lnn += n_miss
                else:
                    rs += miss_s
                    rs2 += miss_s2
                    rnn += n_miss
            sse = (ls2 - ls * ls / lnn) + (rs2 - rs * rs / rnn)
            if sse < best_sse:
                best_sse = sse
                best_f = f
                best_thr = 0.5 * (sv[i] + sv[i + 1])
                best_mleft = mleft
    return best_f, best_thr, best_sse, best_mleft


@njit(cache=True, nogil=True)
def grow_tree(X, y, rows, mtry, min_leaf, max_depth, feature_keys):
    """Grow a CART regression tree on ``rows`` (duplicates allowed).

    ``feature_keys`` is a (max_nodes, p) array of uniforms; node ``k`` draws its
    ``mtry`` candidates as the ``mtry`` smallest keys of row ``k``. It is only
    read when ``mtry < p``. Returns node arrays
    (feature, threshold, left, right, value, n_rows, missing_left).
    """
    p = X.shape[1]
    cap = 2 * rows.shape[0] + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    mleft = np.zeros(cap, dtype=np.bool_)

    # explicit stack of (node id, row subset, depth)
    stack_rows = [rows]
    stack_node = [0]
    stack_depth = [0]
    n_nodes = 1
    all_features = np.arange(p)
    while len(stack_node) > 0:
        node = stack_node.pop()
        r = stack_rows.pop()
        depth = stack_depth.pop()
        n = r.shape[0]
        s = 0.0
        s2 = 0.0
        for i in range(n):
            s += y[r[i]]
            s2 += y[r[i]] * y[r[i]]
        value[node] = s / n
        count[node] = n
        sse_node = s2 - s * s / n
        if depth >= max_depth or n < 2 * min_leaf or sse_node <= 1e-12 * max(1.0, s2):
            continue
        if mtry < p:
            cand = np.sort(np.argsort(feature_keys[node])[:mtry])
        else:
            cand = all_features
        f, thr, sse, ml = _best_split(X, y, r, cand, min_leaf)
        if f < 0:
            continue
        go_left = np.empty(n, dtype=np.bool_)
        for i in range(n):
            v = X[r[i], f]
            go_left[i] = ml if np.isnan(v) else v < thr
        lrows = r[go_left]
        rrows = r[~go_left]
        feature[node] = f
        threshold[node] = thr
        mleft[node] = ml
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree gets the lower node ids
        stack_node.append(n_nodes + 1)
        stack_rows.append(rrows)
        stack_depth.append(depth + 1)
        stack_node.append(n_nodes)
        stack_rows.append(lrows)
        stack_depth.append(depth + 1)
        n_nodes += 2
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes], mleft[:n_nodes])


@njit(cache=True, nogil=True)
def predict_tree(X, feature, threshold, left, right, value, mleft):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            v = X[i, feature[node]]
            if np.isnan(v):
                node = left[node] if mleft[node] else right[node]
            elif v < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True, nogil=True)
def _subset_inverse(gram, act, k):
    G = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            G[a, b] = gram[act[a], act[b]]
    return np.linalg.inv(G)


@njit(cache=True, nogil=True)
def _log_ml(k, fit, yty, log1pg, shrink, shape, scale, floor):
    s = yty - shrink * fit
    if s < floor:
        s = floor
    return -0.5 * k * log1pg - shape * np.log(scale + 0.5 * s)


@njit(cache=True, nogil=True)
def gibbs_inclusion(gram, xty, yty, log1pg, shrink, shape, scale, floor, prior_logit, u, burn_in,
                    singular_tol):
    """Systematic-scan Gibbs sampler over inclusion indicators.

    Keeps the inverse Gram matrix of the included columns and scores each
    flip with a rank-one formula: adding ``j`` raises the fit by
    ``e^2/d`` (``d`` the Schur complement of ``j``), dropping it lowers the fit
    by ``b_j^2 / Ginv_jj``. Models whose Gram matrix is numerically singular
    get zero mass. The inverse is recomputed from scratch after every sweep.
    ``u`` is an (iterations, p) array of uniforms. Returns inclusion counts
    after burn-in.
    """
    n_iter, p = u.shape
    act = np.empty(p, dtype=np.int64)
    pos = np.full(p, -1, dtype=np.int64)
    k = 0
    Ginv = np.zeros((p, p))
    beta = np.zeros(p)
    fit = 0.0
    counts = np.zeros(p)
    current = _log_ml(0, 0.0, yty, log1pg, shrink, shape, scale, floor)
    v = np.empty(p)
    for it in range(n_iter):
        for j in range(p):
            q = pos[j]
            if q < 0:
                d = gram[j, j]
                e = xty[j]
                for a in range(k):
                    s = 0.0
                    for b in range(k):
                        s += Ginv[a, b] * gram[act[b], j]
                    v[a] = s
                    d -= gram[act[a], j] * s
                    e -= gram[act[a], j] * beta[a]
                if d <= singular_tol * max(gram[j, j], 1e-300):
                    flipped = -np.inf
                else:
                    flipped = _log_ml(k + 1, fit + e * e / d, yty, log1pg, shrink, shape, scale, floor)
                logit = flipped - current + prior_logit
            else:
                fit_new = fit - beta[q] * beta[q] / Ginv[q, q]
                flipped = _log_ml(k - 1, fit_new, yty, log1pg, shrink, shape, scale, floor)
                logit = current - flipped + prior_logit
            if logit > 700.0:
                p1 = 1.0
            elif logit < -700.0:
                p1 = 0.0
            else:
                p1 = 1.0 / (1.0 + np.exp(-logit))
            include = u[it, j] < p1
            if include and q < 0:
                # block-inverse update for the appended column
                for a in range(k):
                    for b in range(k):
                        Ginv[a, b] += v[a] * v[b] / d
                    Ginv[a, k] = -v[a] / d
                    Ginv[k, a] = -v[a] / d
                    beta[a] -= v[a] * e / d
                Ginv[k, k] = 1.0 / d
                beta[k] = e / d
                act[k] = j
                pos[j] = k
                k += 1
                fit = fit + e * e / d
                current = flipped
            elif not include and q >= 0:
                last = k - 1
                if q != last:
                    # swap position q with the last slot
                    jl = act[last]
                    act[q], act[last] = jl, j
                    pos[jl], pos[j] = q, last
                    for a in range(k):
                        Ginv[a, q], Ginv[a, last] = Ginv[a, last], Ginv[a, q]
                    for b in range(k):
                        Ginv[q, b], Ginv[last, b] = Ginv[last, b], Ginv[q, b]
                    beta[q], beta[last] = beta[last], beta[q]
                dq = Ginv[last, last]
                bq = beta[last]
                for a in range(last):
                    for b in range(last):
                        Ginv[a, b] -= Ginv[a, last] * Ginv[last, b] / dq
                    beta[a] -= Ginv[a, last] * bq / dq
                pos[j] = -1
                k = last
                fit = fit - bq * bq / dq
                current = flipped
        if k > 0:
            inv = _subset_inverse(gram, act, k)
            fit = 0.0
            for a in range(k):
                s = 0.0
                for b in range(k):
                    Ginv[a, b] = inv[a, b]
                    s += inv[a, b] * xty[act[b]]
                beta[a] = s
                fit += xty[act[a]] * s
            current = _log_ml(k, fit, yty, log1pg, shrink, shape, scale, floor)
        if it >= burn_in:
            for a in range(k):
                counts[act[a]] += 1.0
    return counts
