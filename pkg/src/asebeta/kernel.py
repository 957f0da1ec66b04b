"""Jitted Gibbs-update kernels.

Every block conditional is a top-level jitted function with the uniform
signature ``f(x, st, i1, i2) -> float`` so a single generic slice step can be
reused across blocks.  ``st`` is a flat tuple of arrays built by
``model.GibbsSampler``; scalars live in the ``hyp`` array.  Positive
parameters are sampled on the log scale and (0,1) parameters on the logit
scale, with the change-of-measure term added to the evaluated log density.

Layout of ``st`` (see the ``I_*`` constants): complete data matrix and its
logs, masks, current parameter arrays, hyperparameter and prior-constant
vectors, per-sweep scratch buffers, and the allele-effect arrays used by the
structured cross-mean model (size zero for the exchangeable model).
"""

import math

import numpy as np
from numba import njit

# st tuple indices
I_Y = 0
I_LOGY = 1
I_LOG1MY = 2
I_CMASK = 3
I_IMASK = 4
I_GROUP = 5
I_VIABLE = 6
I_P = 7
I_MU = 8
I_ALPHA = 9
I_S = 10
I_LV = 11
I_RV = 12
I_ETA = 13
I_EXPETA = 14
I_HYP = 15
I_PRI = 16
I_D1 = 17
I_D2 = 18
I_ROWR = 19
I_ROWS = 20
I_JSCR = 21
I_JSCR2 = 22
I_GSCR = 23
I_A = 24
I_M = 25
I_MFREE = 26
I_DAM = 27
I_SIRE = 28
I_PDAM = 29
I_PSIRE = 30
I_STATS = 31

# hyp indices
H_MU_ALL = 0
H_ALPHA_ALL = 1
H_XI_S = 2
H_CHI_S = 3
H_U_R = 4
H_TAU2 = 5

# pri indices: shape/scale pairs and the tau^2 prior df
P_ALPHA_SHAPE = 0
P_ALPHA_SCALE = 1
P_HYPER_SHAPE = 2
P_HYPER_SCALE = 3
P_AALL_SHAPE = 4
P_AALL_SCALE = 5
P_UR_SHAPE = 6
P_UR_SCALE = 7
P_TAU2_DF = 8

# stats indices
STAT_EVALS = 0
STAT_DEGENERATE = 1
STAT_STRUCTURAL_IMPUTE = 2

_EPS = 1e-12
LOG2PI = math.log(2.0 * math.pi)


@njit(cache=True, fastmath=False)
def _lbeta1(A, B):
    # log Beta-function normalizer of Beta(A+1, B+1)
    return math.lgamma(A + 1.0) + math.lgamma(B + 1.0) - math.lgamma(A + B + 2.0)


@njit(cache=True)
def _logsig(z):
    # log(expit(z)) without overflow
    if z >= 0.0:
        return -math.log1p(math.exp(-z))
    return z - math.log1p(math.exp(z))


@njit(cache=True)
def _expit(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit
def slice_step(logf, st, i1, i2, x0, w, lo, hi, max_exp, max_shrink, rng):
    """One step-out / shrinkage slice update of the conditional ``logf``."""
    stats = st[I_STATS]
    f0 = logf(x0, st, i1, i2)
    stats[STAT_EVALS] += 1
    y = f0 + math.log(rng.random())
    u = rng.random()
    left = x0 - w * u
    right = x0 + w * (1.0 - u)
    if left < lo:
        left = lo
    if right > hi:
        right = hi
    k = 0
    while left > lo and k < max_exp:
        stats[STAT_EVALS] += 1
        if logf(left, st, i1, i2) <= y:
            break
        left -= w
        k += 1
    if left < lo:
        left = lo
    k = 0
    while right < hi and k < max_exp:
        stats[STAT_EVALS] += 1
        if logf(right, st, i1, i2) <= y:
            break
        right += w
        k += 1
    if right > hi:
        right = hi
    for _ in range(max_shrink):
        x1 = left + rng.random() * (right - left)
        stats[STAT_EVALS] += 1
        if logf(x1, st, i1, i2) > y:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
    stats[STAT_DEGENERATE] += 1
    return x0


# ---------------------------------------------------------------------------
# block conditionals


@njit
def c_P(p, st, i, _):
    # individual-level conditional; d1/d2 cache the data dot products
    cmask = st[I_CMASK]
    rowR = st[I_ROWR]
    rowS = st[I_ROWS]
    g = st[I_GROUP][i]
    mu = st[I_MU][g]
    al = st[I_ALPHA][g]
    v = mu * al * math.log(p) + (1.0 - mu) * al * math.log1p(-p)
    v += p * st[I_D1][i] + (1.0 - p) * st[I_D2][i]
    for j in range(rowR.shape[0]):
        if cmask[i, j]:
            v -= _lbeta1(p * rowR[j], (1.0 - p) * rowS[j])
    return v


@njit
def c_mu(u, st, g, _):
    hyp = st[I_HYP]
    P = st[I_P]
    group = st[I_GROUP]
    al = st[I_ALPHA][g]
    mu = _expit(u)
    lmu = _logsig(u)
    l1mu = _logsig(-u)
    aall = hyp[H_ALPHA_ALL]
    v = hyp[H_MU_ALL] * aall * lmu + (1.0 - hyp[H_MU_ALL]) * aall * l1mu
    nrm = _lbeta1(mu * al, (1.0 - mu) * al)
    for i in range(P.shape[0]):
        if group[i] == g:
            v += mu * al * math.log(P[i]) + (1.0 - mu) * al * math.log1p(-P[i]) - nrm
    return v + lmu + l1mu  # logit-scale Jacobian


@njit
def c_alpha(w, st, g, _):
    pri = st[I_PRI]
    P = st[I_P]
    group = st[I_GROUP]
    mu = st[I_MU][g]
    al = math.exp(w)
    v = -al / pri[P_ALPHA_SCALE] + (pri[P_ALPHA_SHAPE] - 1.0) * w
    nrm = _lbeta1(mu * al, (1.0 - mu) * al)
    for i in range(P.shape[0]):
        if group[i] == g:
            v += mu * al * math.log(P[i]) + (1.0 - mu) * al * math.log1p(-P[i]) - nrm
    return v + w  # log-scale change of measure


@njit
def c_mu_all(u, st, _, __):
    hyp = st[I_HYP]
    mu = st[I_MU]
    mall = _expit(u)
    aall = hyp[H_ALPHA_ALL]
    nrm = _lbeta1(mall * aall, (1.0 - mall) * aall)
    v = 0.0
    for g in range(mu.shape[0]):
        v += mall * aall * math.log(mu[g]) + (1.0 - mall) * aall * math.log1p(-mu[g]) - nrm
    return v + _logsig(u) + _logsig(-u)


@njit
def c_alpha_all(w, st, _, __):
    hyp = st[I_HYP]
    pri = st[I_PRI]
    mu = st[I_MU]
    aall = math.exp(w)
    mall = hyp[H_MU_ALL]
    v = -aall / pri[P_AALL_SCALE] + (pri[P_AALL_SHAPE] - 1.0) * w
    nrm = _lbeta1(mall * aall, (1.0 - mall) * aall)
    for g in range(mu.shape[0]):
        v += mall * aall * math.log(mu[g]) + (1.0 - mall) * aall * math.log1p(-mu[g]) - nrm
    return v + w


@njit
def c_S(w, st, j, _):
    hyp = st[I_HYP]
    cmask = st[I_CMASK]
    logY = st[I_LOGY]
    log1mY = st[I_LOG1MY]
    P = st[I_P]
    group = st[I_GROUP]
    expeta = st[I_EXPETA]
    r = st[I_RV][j]
    s = math.exp(w)
    v = -s / hyp[H_XI_S] + (hyp[H_CHI_S] - 1.0) * w
    for i in range(P.shape[0]):
        if cmask[i, j]:
            wgt = s * expeta[group[i], j]
            A = P[i] * r * wgt
            B = (1.0 - P[i]) * (1.0 - r) * wgt
            v += A * logY[i, j] + B * log1mY[i, j] - _lbeta1(A, B)
    return v + w


@njit
def c_xi(w, st, _, __):
    hyp = st[I_HYP]
    pri = st[I_PRI]
    S = st[I_S]
    xi = math.exp(w)
    chi = hyp[H_CHI_S]
    v = -xi / pri[P_HYPER_SCALE] + (pri[P_HYPER_SHAPE] - 1.0) * w
    for j in range(S.shape[0]):
        v += -S[j] / xi - chi * w
    return v + w


@njit
def c_chi(w, st, _, __):
    hyp = st[I_HYP]
    pri = st[I_PRI]
    S = st[I_S]
    chi = math.exp(w)
    lxi = math.log(hyp[H_XI_S])
    v = -chi / pri[P_HYPER_SCALE] + (pri[P_HYPER_SHAPE] - 1.0) * w
    for j in range(S.shape[0]):
        v += (chi - 1.0) * math.log(S[j]) - chi * lxi - math.lgamma(chi)
    return v + w


@njit
def c_u_r(w, st, _, __):
    pri = st[I_PRI]
    Lv = st[I_LV]
    u = math.exp(w)
    v = -u / pri[P_UR_SCALE] + (pri[P_UR_SHAPE] - 1.0) * w
    t = 0.0
    for j in range(Lv.shape[0]):
        t += _logsig(Lv[j]) + _logsig(-Lv[j])
    return v + (u - 1.0) * t + w


@njit
def c_tau2(w, st, _, __):
    pri = st[I_PRI]
    eta = st[I_ETA]
    viable = st[I_VIABLE]
    t2 = math.exp(w)
    df = pri[P_TAU2_DF]
    v = -(df / 2.0 + 1.0) * w - 1.0 / (2.0 * t2)
    G, J = eta.shape
    for j in range(J):
        gj = 0
        ss = 0.0
        for g in range(G):
            if viable[g, j]:
                gj += 1
                ss += eta[g, j] * eta[g, j]
        if gj >= 2:
            v += -0.5 * (gj - 1) * (w + LOG2PI) - ss / (2.0 * t2)
    return v + w


@njit
def c_R_delta(d, st, j, _):
    # perturb the logit-bias vector along Delta/(J-1)(J e_j - 1)
    cmask = st[I_CMASK]
    logY = st[I_LOGY]
    log1mY = st[I_LOG1MY]
    P = st[I_P]
    group = st[I_GROUP]
    expeta = st[I_EXPETA]
    S = st[I_S]
    Lv = st[I_LV]
    Lnew = st[I_JSCR]
    Rnew = st[I_JSCR2]
    u_r = st[I_HYP][H_U_R]
    J = Lv.shape[0]
    off = d / (J - 1.0)
    v = 0.0
    for k in range(J):
        Lk = Lv[k] + (d if k == j else -off)
        Lnew[k] = Lk
        Rnew[k] = _expit(Lk)
        # marginal prior (u_R - 1) plus the inverse-logit Jacobian term
        v += u_r * (_logsig(Lk) + _logsig(-Lk))
    n = P.shape[0]
    for i in range(n):
        gi = group[i]
        for k in range(J):
            if cmask[i, k]:
                wgt = S[k] * expeta[gi, k]
                A = P[i] * Rnew[k] * wgt
                B = (1.0 - P[i]) * (1.0 - Rnew[k]) * wgt
                v += A * logY[i, k] + B * log1mY[i, k] - _lbeta1(A, B)
    return v


@njit
def c_eta_delta(d, st, g, j):
    cmask = st[I_CMASK]
    logY = st[I_LOGY]
    log1mY = st[I_LOG1MY]
    P = st[I_P]
    group = st[I_GROUP]
    viable = st[I_VIABLE]
    eta = st[I_ETA]
    S = st[I_S]
    r = st[I_RV][j]
    t2 = st[I_HYP][H_TAU2]
    G = eta.shape[0]
    mv = 0
    for gg in range(G):
        if viable[gg, j]:
            mv += 1
    off = d / (mv - 1.0)
    v = 0.0
    for gg in range(G):
        if viable[gg, j]:
            e = eta[gg, j] + (d if gg == g else -off)
            v -= e * e / (2.0 * t2)
    for i in range(P.shape[0]):
        if cmask[i, j]:
            gi = group[i]
            e = eta[gi, j] + (d if gi == g else -off)
            wgt = S[j] * math.exp(e)
            A = P[i] * r * wgt
            B = (1.0 - P[i]) * (1.0 - r) * wgt
            v += A * logY[i, j] + B * log1mY[i, j] - _lbeta1(A, B)
    return v


@njit
def _effects_latent_sum(st, mu_g):
    # latent-level likelihood with per-cross means mu_g (in gscr)
    P = st[I_P]
    group = st[I_GROUP]
    alpha = st[I_ALPHA]
    v = 0.0
    for i in range(P.shape[0]):
        g = group[i]
        mu = mu_g[g]
        al = alpha[g]
        v += (mu * al * math.log(P[i]) + (1.0 - mu) * al * math.log1p(-P[i])
              - _lbeta1(mu * al, (1.0 - mu) * al))
    return v


@njit
def c_a_delta(d, st, k, _):
    a = st[I_A]
    m = st[I_M]
    dam = st[I_DAM]
    sire = st[I_SIRE]
    pdam = st[I_PDAM]
    psire = st[I_PSIRE]
    mu_g = st[I_GSCR]
    Ka = a.shape[0]
    off = d / (Ka - 1.0)
    for g in range(dam.shape[0]):
        ad = a[dam[g]] + (d if dam[g] == k else -off)
        asr = a[sire[g]] + (d if sire[g] == k else -off)
        lm = (ad + m[pdam[g]]) - (asr - m[psire[g]])
        mu_g[g] = _expit(lm)
    return _effects_latent_sum(st, mu_g)


@njit
def c_m_delta(d, st, k, _):
    a = st[I_A]
    m = st[I_M]
    mfree = st[I_MFREE]
    dam = st[I_DAM]
    sire = st[I_SIRE]
    pdam = st[I_PDAM]
    psire = st[I_PSIRE]
    mu_g = st[I_GSCR]
    nfree = 0
    for kk in range(m.shape[0]):
        if mfree[kk]:
            nfree += 1
    off = d / (nfree - 1.0)

    for g in range(dam.shape[0]):
        kd = pdam[g]
        ks = psire[g]
        md = m[kd] + ((d if kd == k else -off) if mfree[kd] else 0.0)
        ms = m[ks] + ((d if ks == k else -off) if mfree[ks] else 0.0)
        lm = (a[dam[g]] + md) - (a[sire[g]] - ms)
        mu_g[g] = _expit(lm)
    return _effects_latent_sum(st, mu_g)


# ---------------------------------------------------------------------------
# block updates


@njit
def update_mu_all(st, w, max_exp, max_shrink, rng):
    hyp = st[I_HYP]
    u0 = math.log(hyp[H_MU_ALL]) - math.log1p(-hyp[H_MU_ALL])
    u1 = slice_step(c_mu_all, st, 0, 0, u0, w, -np.inf, np.inf, max_exp, max_shrink, rng)
    hyp[H_MU_ALL] = _expit(u1)


@njit
def update_alpha_all(st, w, max_exp, max_shrink, rng):
    hyp = st[I_HYP]
    w1 = slice_step(c_alpha_all, st, 0, 0, math.log(hyp[H_ALPHA_ALL]), w,
                    -np.inf, np.inf, max_exp, max_shrink, rng)
    hyp[H_ALPHA_ALL] = math.exp(w1)


@njit
def update_mu(st, w, max_exp, max_shrink, rng):
    mu = st[I_MU]
    for g in range(mu.shape[0]):
        u0 = math.log(mu[g]) - math.log1p(-mu[g])
        u1 = slice_step(c_mu, st, g, 0, u0, w, -np.inf, np.inf, max_exp, max_shrink, rng)
        mu[g] = _expit(u1)


@njit
def update_alpha(st, w, max_exp, max_shrink, rng):
    alpha = st[I_ALPHA]
    for g in range(alpha.shape[0]):
        w1 = slice_step(c_alpha, st, g, 0, math.log(alpha[g]), w,
                        -np.inf, np.inf, max_exp, max_shrink, rng)
        alpha[g] = math.exp(w1)


@njit
def update_S(st, w, max_exp, max_shrink, rng):
    S = st[I_S]
    for j in range(S.shape[0]):
        w1 = slice_step(c_S, st, j, 0, math.log(S[j]), w,
                        -np.inf, np.inf, max_exp, max_shrink, rng)
        S[j] = math.exp(w1)


@njit
def update_hyper_S(st, w, max_exp, max_shrink, rng):
    hyp = st[I_HYP]
    w1 = slice_step(c_xi, st, 0, 0, math.log(hyp[H_XI_S]), w,
                    -np.inf, np.inf, max_exp, max_shrink, rng)
    hyp[H_XI_S] = math.exp(w1)
    w1 = slice_step(c_chi, st, 0, 0, math.log(hyp[H_CHI_S]), w,
                    -np.inf, np.inf, max_exp, max_shrink, rng)
    hyp[H_CHI_S] = math.exp(w1)


@njit
def update_u_r(st, w, max_exp, max_shrink, rng):
    hyp = st[I_HYP]
    w1 = slice_step(c_u_r, st, 0, 0, math.log(hyp[H_U_R]), w,
                    -np.inf, np.inf, max_exp, max_shrink, rng)
    hyp[H_U_R] = math.exp(w1)


@njit
def update_tau2(st, w, max_exp, max_shrink, rng):
    hyp = st[I_HYP]
    w1 = slice_step(c_tau2, st, 0, 0, math.log(hyp[H_TAU2]), w,
                    -np.inf, np.inf, max_exp, max_shrink, rng)
    hyp[H_TAU2] = math.exp(w1)


@njit
def update_R(st, w, max_exp, max_shrink, rng):
    Lv = st[I_LV]
    Rv = st[I_RV]
    J = Lv.shape[0]
    if J < 2:
        Lv[0] = 0.0
        Rv[0] = 0.5
        return
    for j in range(J):
        # keep every logit bias within +-30 so the biases cannot run away
        # when the likelihood is momentarily flat and expit never rounds to
        # an exact 0 or 1; the excluded region is vacuous for any state the
        # model can distinguish
        dlo = -60.0
        dhi = 60.0
        for k in range(J):
            if k == j:
                dhi = min(dhi, 30.0 - Lv[k])
                dlo = max(dlo, -30.0 - Lv[k])
            else:
                dhi = min(dhi, (J - 1.0) * (30.0 + Lv[k]))
                dlo = max(dlo, -(J - 1.0) * (30.0 - Lv[k]))
        if dlo >= 0.0 or dhi <= 0.0:
            continue
        d = slice_step(c_R_delta, st, j, 0, 0.0, w, dlo, dhi, max_exp, max_shrink, rng)
        off = d / (J - 1.0)
        for k in range(J):
            Lv[k] += d if k == j else -off
        mean = 0.0
        for k in range(J):
            mean += Lv[k]
        mean /= J
        for k in range(J):
            Lv[k] -= mean
            Rv[k] = _expit(Lv[k])


@njit
def update_eta(st, w, max_exp, max_shrink, rng):
    eta = st[I_ETA]
    expeta = st[I_EXPETA]
    viable = st[I_VIABLE]
    G, J = eta.shape
    for j in range(J):
        mv = 0
        for g in range(G):
            if viable[g, j]:
                mv += 1
        if mv < 2:
            continue
        for g in range(G):
            if not viable[g, j]:
                continue
            d = slice_step(c_eta_delta, st, g, j, 0.0, w, -np.inf, np.inf,
                           max_exp, max_shrink, rng)
            off = d / (mv - 1.0)
            mean = 0.0
            for gg in range(G):
                if viable[gg, j]:
                    eta[gg, j] += d if gg == g else -off
                    mean += eta[gg, j]
            mean /= mv
            for gg in range(G):
                if viable[gg, j]:
                    eta[gg, j] -= mean
                    expeta[gg, j] = math.exp(eta[gg, j])


@njit
def update_P(st, w, max_exp, max_shrink, rng):
    Y = st[I_Y]
    logY = st[I_LOGY]
    log1mY = st[I_LOG1MY]
    cmask = st[I_CMASK]
    group = st[I_GROUP]
    P = st[I_P]
    S = st[I_S]
    Rv = st[I_RV]
    expeta = st[I_EXPETA]
    d1 = st[I_D1]
    d2 = st[I_D2]
    rowR = st[I_ROWR]
    rowS = st[I_ROWS]
    n, J = Y.shape
    for i in range(n):
        g = group[i]
        s1 = 0.0
        s2 = 0.0
        for j in range(J):
            if cmask[i, j]:
                wgt = S[j] * expeta[g, j]
                rowR[j] = Rv[j] * wgt
                rowS[j] = (1.0 - Rv[j]) * wgt
                s1 += rowR[j] * logY[i, j]
                s2 += rowS[j] * log1mY[i, j]
        d1[i] = s1
        d2[i] = s2
        P[i] = slice_step(c_P, st, i, 0, P[i], w, _EPS, 1.0 - _EPS, max_exp, max_shrink, rng)


@njit
def set_mu_from_effects(st):
    a = st[I_A]
    m = st[I_M]
    mu = st[I_MU]
    dam = st[I_DAM]
    sire = st[I_SIRE]
    pdam = st[I_PDAM]
    psire = st[I_PSIRE]
    for g in range(mu.shape[0]):
        lm = (a[dam[g]] + m[pdam[g]]) - (a[sire[g]] - m[psire[g]])
        mu[g] = _expit(lm)


@njit
def update_a(st, w, max_exp, max_shrink, rng):
    a = st[I_A]
    Ka = a.shape[0]
    if Ka < 2:
        if Ka == 1:
            a[0] = 0.0
        set_mu_from_effects(st)
        return
    for k in range(Ka):
        d = slice_step(c_a_delta, st, k, 0, 0.0, w, -np.inf, np.inf, max_exp, max_shrink, rng)
        off = d / (Ka - 1.0)
        mean = 0.0
        for kk in range(Ka):
            a[kk] += d if kk == k else -off
            mean += a[kk]
        mean /= Ka
        for kk in range(Ka):
            a[kk] -= mean
    set_mu_from_effects(st)


@njit
def update_m(st, w, max_exp, max_shrink, rng):
    m = st[I_M]
    mfree = st[I_MFREE]
    nfree = 0
    for k in range(m.shape[0]):
        if mfree[k]:
            nfree += 1
        else:
            m[k] = 0.0
    if nfree < 2:
        # sum-zero over a single free effect pins it at 0
        for k in range(m.shape[0]):
            m[k] = 0.0
        set_mu_from_effects(st)
        return
    for k in range(m.shape[0]):
        if not mfree[k]:
            continue
        d = slice_step(c_m_delta, st, k, 0, 0.0, w, -np.inf, np.inf, max_exp, max_shrink, rng)
        off = d / (nfree - 1.0)
        mean = 0.0
        for kk in range(m.shape[0]):
            if mfree[kk]:
                m[kk] += d if kk == k else -off
                mean += m[kk]
        mean /= nfree
        for kk in range(m.shape[0]):
            if mfree[kk]:
                m[kk] -= mean
    set_mu_from_effects(st)


@njit
def impute_missing(st, rng):
    Y = st[I_Y]
    logY = st[I_LOGY]
    log1mY = st[I_LOG1MY]
    cmask = st[I_CMASK]
    imask = st[I_IMASK]
    group = st[I_GROUP]
    P = st[I_P]
    S = st[I_S]
    Rv = st[I_RV]
    expeta = st[I_EXPETA]
    stats = st[I_STATS]
    n, J = Y.shape
    for i in range(n):
        g = group[i]
        for j in range(J):
            if imask[i, j]:
                if not cmask[i, j]:
                    stats[STAT_STRUCTURAL_IMPUTE] += 1
                    continue
                wgt = S[j] * expeta[g, j]
                A = P[i] * Rv[j] * wgt
                B = (1.0 - P[i]) * (1.0 - Rv[j]) * wgt
                y = rng.beta(A + 1.0, B + 1.0)
                while y <= 0.0 or y >= 1.0:
                    y = rng.beta(A + 1.0, B + 1.0)
                Y[i, j] = y
                logY[i, j] = math.log(y)
                log1mY[i, j] = math.log1p(-y)
