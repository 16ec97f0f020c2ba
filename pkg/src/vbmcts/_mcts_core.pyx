# cython: language_level=3
"""Compiled tree-search core for GP-backed planning.

Mirrors the pure-Python planner in ``vbmcts.planner`` operation for
operation: same selection rule, same top-k expansion with grid-order tie
breaks, same rollout accumulation order, same splitmix64 rollout streams.
The GP posterior is evaluated directly from the training inputs, mean
weights and Cholesky factor handed over by the caller, with target
standardization applied on the way out.

The only entry point is :func:`run_search`; everything else is C-level.
"""

import numpy as np

from libc.stdlib cimport free, malloc, realloc
from libc.math cimport exp, sqrt

cdef unsigned long long SM_GAMMA = <unsigned long long> 0x9E3779B97F4A7C15
cdef unsigned long long SM_MUL1 = <unsigned long long> 0xBF58476D1CE4E5B9
cdef unsigned long long SM_MUL2 = <unsigned long long> 0x94D049BB133111EB


cdef inline unsigned long long sm_next(unsigned long long* state) noexcept:
    state[0] = state[0] + SM_GAMMA
    cdef unsigned long long z = state[0]
    z = (z ^ (z >> 30)) * SM_MUL1
    z = (z ^ (z >> 27)) * SM_MUL2
    return z ^ (z >> 31)


cdef inline unsigned long long sm_stream(unsigned long long seed, long sim) noexcept:
    return seed + SM_GAMMA * (<unsigned long long> (sim + 1))


def rng_probe(unsigned long long seed, long sim, int count):
    """First ``count`` outputs of one rollout stream (for parity tests)."""
    cdef unsigned long long state = sm_stream(seed, sim)
    out = []
    cdef int i
    for i in range(count):
        out.append(sm_next(&state))
    return out


cdef inline void fill_phi(double* out, double r_prev, double p_itn, double p_irs,
                          long t, double itn, double irs) noexcept:
    out[0] = <double> t
    out[1] = <double> (t % 2)
    out[2] = <double> (t % 3)
    out[3] = r_prev
    out[4] = p_itn
    out[5] = p_irs
    out[6] = itn
    out[7] = irs
    out[8] = itn * irs
    out[9] = p_itn * p_irs
    out[10] = itn * p_itn
    out[11] = irs * p_irs
    out[12] = itn * (1.0 - p_itn)
    out[13] = irs * (1.0 - p_irs)


cdef inline void predict_raw(double* xrow, double* X, long n, long m,
                             double* w, double* L, double alpha2, double* ell2,
                             double y_shift, double y_scale,
                             double* kbuf, double* vbuf,
                             double* out_mean, double* out_var) noexcept:
    """Posterior mean/variance in raw target units at one feature row."""
    cdef long i, j
    cdef double d, diff, acc, mean_s, var_s
    mean_s = 0.0
    var_s = alpha2
    for i in range(n):
        d = 0.0
        for j in range(m):
            diff = xrow[j] - X[i * m + j]
            d += diff * diff / ell2[j]
        kbuf[i] = alpha2 * exp(-0.5 * d)
        mean_s += kbuf[i] * w[i]
    # forward substitution: L v = k, then var = alpha2 - v.v
    for i in range(n):
        acc = kbuf[i]
        for j in range(i):
            acc -= L[i * n + j] * vbuf[j]
        vbuf[i] = acc / L[i * n + i]
        var_s -= vbuf[i] * vbuf[i]
    if var_s < 0.0:
        var_s = 0.0
    if var_s > alpha2:
        var_s = alpha2
    out_mean[0] = mean_s * y_scale + y_shift
    out_var[0] = var_s * y_scale * y_scale


cdef inline double edge_reward(double mean, double var, int mode, double beta_sum,
                               double rmax_value, double sigma_thresh) noexcept:
    if mode == 0:
        return mean
    if mode == 1:
        return mean + beta_sum * var
    if var > sigma_thresh:
        return rmax_value
    return mean


def run_search(double[:, ::1] X, double[::1] weights, double[:, ::1] chol,
               double alpha2, double[::1] ell2, double omega2,
               double y_shift, double y_scale,
               double root_r, double root_itn, double root_irs, long root_t,
               long horizon, double gamma,
               double[::1] act_itn, double[::1] act_irs,
               double c_puct, int top_k, long max_iterations,
               int mode, double beta_sum, double rmax_value, double sigma_thresh,
               int rollout_greedy, int rollouts_per_leaf,
               unsigned long long rng_seed):
    """Full search; returns (best_index, root_q, root_n, root_action_indices).

    ``best_index`` indexes the action arrays, as does
    ``root_action_indices``; root arrays are ordered by grid index exactly
    like the Python planner's root edge list.
    """
    cdef long n = X.shape[0]
    cdef long m = X.shape[1] if n > 0 else ell2.shape[0]
    cdef long n_act = act_itn.shape[0]
    if m != 14:
        raise ValueError("compiled core supports only the 14-dim feature encoding")
    if n_act < 1:
        raise ValueError("empty action set")
    if top_k < 1:
        top_k = 1
    if top_k > n_act:
        top_k = <int> n_act

    cdef double* Xp = &X[0, 0] if n > 0 else NULL
    cdef double* wp = &weights[0] if n > 0 else NULL
    cdef double* Lp = &chol[0, 0] if n > 0 else NULL
    cdef double* ell2p = &ell2[0]
    cdef double* aitn = &act_itn[0]
    cdef double* airs = &act_irs[0]

    # node arrays (a node exists iff it has been expanded)
    cdef long node_cap = 1024, n_nodes = 0
    cdef double* nd_r = <double*> malloc(node_cap * sizeof(double))
    cdef double* nd_itn = <double*> malloc(node_cap * sizeof(double))
    cdef double* nd_irs = <double*> malloc(node_cap * sizeof(double))
    cdef long* nd_t = <long*> malloc(node_cap * sizeof(long))
    cdef long* nd_estart = <long*> malloc(node_cap * sizeof(long))
    cdef long* nd_ecount = <long*> malloc(node_cap * sizeof(long))

    # edge arrays
    cdef long edge_cap = 16384, n_edges = 0
    cdef long* e_act = <long*> malloc(edge_cap * sizeof(long))
    cdef double* e_q = <double*> malloc(edge_cap * sizeof(double))
    cdef long* e_n = <long*> malloc(edge_cap * sizeof(long))
    cdef double* e_reward = <double*> malloc(edge_cap * sizeof(double))
    cdef double* e_cmean = <double*> malloc(edge_cap * sizeof(double))
    cdef long* e_child = <long*> malloc(edge_cap * sizeof(long))

    # scratch
    cdef double* kbuf = <double*> malloc((n if n > 0 else 1) * sizeof(double))
    cdef double* vbuf = <double*> malloc((n if n > 0 else 1) * sizeof(double))
    cdef double* sc_mean = <double*> malloc(n_act * sizeof(double))
    cdef double* sc_var = <double*> malloc(n_act * sizeof(double))
    cdef double* sc_score = <double*> malloc(n_act * sizeof(double))
    cdef unsigned char* sc_taken = <unsigned char*> malloc(n_act)
    cdef long* sc_chosen = <long*> malloc(top_k * sizeof(long))
    cdef long path_cap = horizon - root_t + 2
    cdef long* path = <long*> malloc((path_cap if path_cap > 2 else 2) * sizeof(long))
    cdef double xrow[14]

    cdef bint alloc_ok = (
        nd_r != NULL and nd_itn != NULL and nd_irs != NULL and nd_t != NULL
        and nd_estart != NULL and nd_ecount != NULL and e_act != NULL
        and e_q != NULL and e_n != NULL and e_reward != NULL
        and e_cmean != NULL and e_child != NULL and kbuf != NULL
        and vbuf != NULL and sc_mean != NULL and sc_var != NULL
        and sc_score != NULL and sc_taken != NULL and sc_chosen != NULL
        and path != NULL
    )

    cdef long sim, node, depth, e, best_e, child_t, child, i, j, p, best_i
    cdef long total, estart, ecount, tcur, idx, rep
    cdef double scale, score, best_score, v, mean, var, r, total_r, disc
    cdef double r_prev, p_itn, p_irs
    cdef unsigned long long rng
    cdef long root_id = -1
    cdef object result = None

    try:
        if not alloc_ok:
            raise MemoryError("failed to allocate search buffers")

        # expand the root (the expansion steps below reappear for leaves in
        # the main loop; Cython closures would box every local, so the block
        # is spelled out twice rather than factored)
        root_id = 0
        n_nodes = 1
        nd_r[0] = root_r
        nd_itn[0] = root_itn
        nd_irs[0] = root_irs
        nd_t[0] = root_t
        nd_estart[0] = 0
        nd_ecount[0] = 0

        # score candidates
        for i in range(n_act):
            fill_phi(xrow, nd_r[0], nd_itn[0], nd_irs[0], nd_t[0], aitn[i], airs[i])
            predict_raw(xrow, Xp, n, m, wp, Lp, alpha2, ell2p, y_shift, y_scale,
                        kbuf, vbuf, &sc_mean[i], &sc_var[i])
            sc_score[i] = edge_reward(sc_mean[i], sc_var[i], mode, beta_sum,
                                      rmax_value, sigma_thresh)
            sc_taken[i] = 0
        # top-k by score, ties to the lower grid index
        for p in range(top_k):
            best_i = -1
            best_score = -1e308
            for i in range(n_act):
                if sc_taken[i] == 0 and sc_score[i] > best_score:
                    best_i = i
                    best_score = sc_score[i]
            sc_taken[best_i] = 1
            sc_chosen[p] = best_i
        # ascending grid order
        for p in range(1, top_k):
            i = sc_chosen[p]
            j = p - 1
            while j >= 0 and sc_chosen[j] > i:
                sc_chosen[j + 1] = sc_chosen[j]
                j -= 1
            sc_chosen[j + 1] = i
        if n_edges + top_k > edge_cap:
            while n_edges + top_k > edge_cap:
                edge_cap *= 2
            e_act = <long*> realloc(e_act, edge_cap * sizeof(long))
            e_q = <double*> realloc(e_q, edge_cap * sizeof(double))
            e_n = <long*> realloc(e_n, edge_cap * sizeof(long))
            e_reward = <double*> realloc(e_reward, edge_cap * sizeof(double))
            e_cmean = <double*> realloc(e_cmean, edge_cap * sizeof(double))
            e_child = <long*> realloc(e_child, edge_cap * sizeof(long))
            if (e_act == NULL or e_q == NULL or e_n == NULL or e_reward == NULL
                    or e_cmean == NULL or e_child == NULL):
                raise MemoryError("failed to grow edge arrays")
        nd_estart[0] = n_edges
        nd_ecount[0] = top_k
        for p in range(top_k):
            i = sc_chosen[p]
            e_act[n_edges] = i
            e_q[n_edges] = 0.0
            e_n[n_edges] = 0
            e_reward[n_edges] = sc_score[i]
            e_cmean[n_edges] = sc_mean[i]
            e_child[n_edges] = -1
            n_edges += 1

        # ------------------------------------------------------ main loop --
        for sim in range(max_iterations):
            rng = sm_stream(rng_seed, sim)
            node = root_id
            depth = 0
            v = 0.0
            while True:
                # select among the node's edges
                estart = nd_estart[node]
                ecount = nd_ecount[node]
                total = 0
                for e in range(estart, estart + ecount):
                    total += e_n[e]
                scale = (c_puct / (<double> ecount)) * sqrt(<double> total)
                best_e = estart
                best_score = -1e308
                for e in range(estart, estart + ecount):
                    score = e_q[e] + scale / (1.0 + (<double> e_n[e]))
                    if score > best_score:
                        best_e = e
                        best_score = score
                path[depth] = best_e
                depth += 1
                child_t = nd_t[node] + 1
                if e_child[best_e] >= 0:
                    node = e_child[best_e]
                    continue
                if child_t > horizon:
                    v = 0.0  # terminal leaf
                    break
                # first arrival: create + expand the child, then roll out
                if n_nodes == node_cap:
                    node_cap *= 2
                    nd_r = <double*> realloc(nd_r, node_cap * sizeof(double))
                    nd_itn = <double*> realloc(nd_itn, node_cap * sizeof(double))
                    nd_irs = <double*> realloc(nd_irs, node_cap * sizeof(double))
                    nd_t = <long*> realloc(nd_t, node_cap * sizeof(long))
                    nd_estart = <long*> realloc(nd_estart, node_cap * sizeof(long))
                    nd_ecount = <long*> realloc(nd_ecount, node_cap * sizeof(long))
                    if (nd_r == NULL or nd_itn == NULL or nd_irs == NULL
                            or nd_t == NULL or nd_estart == NULL or nd_ecount == NULL):
                        raise MemoryError("failed to grow node arrays")
                child = n_nodes
                n_nodes += 1
                nd_r[child] = e_cmean[best_e]
                nd_itn[child] = aitn[e_act[best_e]]
                nd_irs[child] = airs[e_act[best_e]]
                nd_t[child] = child_t
                e_child[best_e] = child

                # expansion (same steps as the root expansion above)
                for i in range(n_act):
                    fill_phi(xrow, nd_r[child], nd_itn[child], nd_irs[child],
                             child_t, aitn[i], airs[i])
                    predict_raw(xrow, Xp, n, m, wp, Lp, alpha2, ell2p,
                                y_shift, y_scale, kbuf, vbuf,
                                &sc_mean[i], &sc_var[i])
                    sc_score[i] = edge_reward(sc_mean[i], sc_var[i], mode,
                                              beta_sum, rmax_value, sigma_thresh)
                    sc_taken[i] = 0
                for p in range(top_k):
                    best_i = -1
                    best_score = -1e308
                    for i in range(n_act):
                        if sc_taken[i] == 0 and sc_score[i] > best_score:
                            best_i = i
                            best_score = sc_score[i]
                    sc_taken[best_i] = 1
                    sc_chosen[p] = best_i
                for p in range(1, top_k):
                    i = sc_chosen[p]
                    j = p - 1
                    while j >= 0 and sc_chosen[j] > i:
                        sc_chosen[j + 1] = sc_chosen[j]
                        j -= 1
                    sc_chosen[j + 1] = i
                if n_edges + top_k > edge_cap:
                    while n_edges + top_k > edge_cap:
                        edge_cap *= 2
                    e_act = <long*> realloc(e_act, edge_cap * sizeof(long))
                    e_q = <double*> realloc(e_q, edge_cap * sizeof(double))
                    e_n = <long*> realloc(e_n, edge_cap * sizeof(long))
                    e_reward = <double*> realloc(e_reward, edge_cap * sizeof(double))
                    e_cmean = <double*> realloc(e_cmean, edge_cap * sizeof(double))
                    e_child = <long*> realloc(e_child, edge_cap * sizeof(long))
                    if (e_act == NULL or e_q == NULL or e_n == NULL
                            or e_reward == NULL or e_cmean == NULL
                            or e_child == NULL):
                        raise MemoryError("failed to grow edge arrays")
                nd_estart[child] = n_edges
                nd_ecount[child] = top_k
                for p in range(top_k):
                    i = sc_chosen[p]
                    e_act[n_edges] = i
                    e_q[n_edges] = 0.0
                    e_n[n_edges] = 0
                    e_reward[n_edges] = sc_score[i]
                    e_cmean[n_edges] = sc_mean[i]
                    e_child[n_edges] = -1
                    n_edges += 1

                # rollout from the fresh leaf's state
                v = 0.0
                for rep in range(rollouts_per_leaf):
                    r_prev = nd_r[child]
                    p_itn = nd_itn[child]
                    p_irs = nd_irs[child]
                    tcur = child_t
                    total_r = 0.0
                    disc = 1.0
                    while tcur <= horizon:
                        if rollout_greedy == 0:
                            idx = <long> (sm_next(&rng) % (<unsigned long long> n_act))
                            fill_phi(xrow, r_prev, p_itn, p_irs, tcur,
                                     aitn[idx], airs[idx])
                            predict_raw(xrow, Xp, n, m, wp, Lp, alpha2, ell2p,
                                        y_shift, y_scale, kbuf, vbuf, &mean, &var)
                            r = edge_reward(mean, var, mode, beta_sum,
                                            rmax_value, sigma_thresh)
                        else:
                            idx = 0
                            best_score = -1e308
                            mean = 0.0
                            for i in range(n_act):
                                fill_phi(xrow, r_prev, p_itn, p_irs, tcur,
                                         aitn[i], airs[i])
                                predict_raw(xrow, Xp, n, m, wp, Lp, alpha2,
                                            ell2p, y_shift, y_scale, kbuf, vbuf,
                                            &sc_mean[i], &sc_var[i])
                                score = edge_reward(sc_mean[i], sc_var[i], mode,
                                                    beta_sum, rmax_value,
                                                    sigma_thresh)
                                if score > best_score:
                                    idx = i
                                    best_score = score
                            mean = sc_mean[idx]
                            r = best_score
                        total_r += disc * r
                        disc *= gamma
                        r_prev = mean
                        p_itn = aitn[idx]
                        p_irs = airs[idx]
                        tcur += 1
                    v += total_r
                v /= <double> rollouts_per_leaf
                break

            # backup along the followed path
            for p in range(depth - 1, -1, -1):
                e = path[p]
                v = gamma * v + e_reward[e]
                e_q[e] = ((<double> e_n[e]) * e_q[e] + v) / ((<double> e_n[e]) + 1.0)
                e_n[e] += 1

        # ------------------------------------------------------- results ---
        estart = nd_estart[root_id]
        ecount = nd_ecount[root_id]
        q_out = np.empty(ecount, dtype=np.float64)
        n_out = np.empty(ecount, dtype=np.int64)
        a_out = np.empty(ecount, dtype=np.int64)
        best_e = estart
        for e in range(estart, estart + ecount):
            q_out[e - estart] = e_q[e]
            n_out[e - estart] = e_n[e]
            a_out[e - estart] = e_act[e]
            if e_q[e] > e_q[best_e]:
                best_e = e
        result = (int(e_act[best_e]), q_out, n_out, a_out)
    finally:
        free(nd_r); free(nd_itn); free(nd_irs); free(nd_t)
        free(nd_estart); free(nd_ecount)
        free(e_act); free(e_q); free(e_n); free(e_reward)
        free(e_cmean); free(e_child)
        free(kbuf); free(vbuf)
        free(sc_mean); free(sc_var); free(sc_score)
        free(sc_taken); free(sc_chosen); free(path)
    return result
