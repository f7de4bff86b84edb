"""Hot numeric kernels.

Every kernel here has two implementations: a loop version compiled with
numba ``@njit`` and a vectorised pure-numpy version. The numba path is used
when numba imports and ``CRAN2WAY_DISABLE_NUMBA`` is unset (or ``0``).
Setting ``CRAN2WAY_DISABLE_NUMBA=1`` forces the numpy path, which is what
``benchmarks/bench_kernels.py`` compares against.

The lattice reduction loop has no useful vectorised form; without numba it
simply runs as plain Python.
"""

import os

import numpy as np

_DISABLED = os.environ.get("CRAN2WAY_DISABLE_NUMBA", "").strip().lower() in {
    "1",
    "true",
    "yes",
}

try:
    if _DISABLED:
        raise ImportError("numba disabled by CRAN2WAY_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def _identity(fn):
            return fn

        return _identity


BACKEND = "numba" if HAVE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# LLL on a Gram matrix
# --------------------------------------------------------------------------


@njit(cache=True)
def _gso(U, G, mu, bstar):
    """Gram-Schmidt data of the basis rows ``U`` under ``<x, y> = x^T G y``.

    Fills ``mu`` and ``bstar`` in place; returns False on a vanishing
    orthogonal component.
    """
    n = U.shape[0]
    Uf = U.astype(np.float64)
    Gb = Uf @ G @ Uf.T
    scale = 0.0
    for i in range(n):
        if Gb[i, i] > scale:
            scale = Gb[i, i]
    for i in range(n):
        for j in range(i):
            s = Gb[i, j]
            for t in range(j):
                s -= mu[j, t] * mu[i, t] * bstar[t]
            mu[i, j] = s / bstar[j]
        s = Gb[i, i]
        for t in range(i):
            s -= mu[i, t] * mu[i, t] * bstar[t]
        bstar[i] = s
        if not s > 1e-13 * scale:
            return False
    return True


@njit(cache=True)
def lll_gram(G, U0, delta):
    """LLL-reduce integer basis rows ``U0`` w.r.t. the Gram matrix ``G``.

    Returns ``(U, ok)``; ``ok`` is False when the basis is (numerically)
    rank deficient.
    """
    U = U0.copy()
    n = U.shape[0]
    mu = np.zeros((n, n))
    bstar = np.zeros(n)
    if not _gso(U, G, mu, bstar):
        return U, False
    k = 1
    guard = 0
    while k < n:
        guard += 1
        if guard > 100000:
            break
        for j in range(k - 1, -1, -1):
            q = np.floor(mu[k, j] + 0.5)
            if q != 0.0:
                qi = np.int64(q)
                for c in range(n):
                    U[k, c] -= qi * U[j, c]
                for t in range(j):
                    mu[k, t] -= q * mu[j, t]
                mu[k, j] -= q
        if bstar[k] >= (delta - mu[k, k - 1] ** 2) * bstar[k - 1]:
            k += 1
        else:
            for c in range(n):
                tmp = U[k, c]
                U[k, c] = U[k - 1, c]
                U[k - 1, c] = tmp
            if not _gso(U, G, mu, bstar):
                return U, False
            k = max(k - 1, 1)
    return U, True


# --------------------------------------------------------------------------
# Uplink: compression rates, effective noise, computation rates
# --------------------------------------------------------------------------


@njit(cache=True)
def _uplink_batch_nb(X, H, p, d, Ar, V, member, smooth):
    n = X.shape[0]
    L, K = H.shape
    J = V.shape[0]
    comp = np.empty((n, L))
    sig = np.empty((n, J))
    rates = np.empty((n, K))
    HB = np.empty((L, K))
    Gi = np.empty((K, K))
    w = np.empty(K)
    crate = np.empty(J)
    for t in range(n):
        for r in range(L):
            for k in range(K):
                HB[r, k] = H[r, k] * X[t, k]
        # compression: a^T (p HB HB^T + (1 + d) I) a / d
        for r in range(L):
            if d > 0.0:
                q = 0.0
                aa = 0.0
                for i in range(L):
                    aa += Ar[r, i] * Ar[r, i]
                for k in range(K):
                    u = 0.0
                    for i in range(L):
                        u += Ar[r, i] * HB[i, k]
                    q += u * u
                q = p * q + (1.0 + d) * aa
                comp[t, r] = max(0.0, 0.5 * np.log2(q / d))
            else:
                comp[t, r] = np.inf
        # effective-noise Gram is the inverse of I/p + HB^T HB / (1 + d);
        # factor that in place and use v^T Gi^-1 v = ||Lc^-1 v||^2
        for a in range(K):
            for b in range(a + 1):
                s = 0.0
                for r in range(L):
                    s += HB[r, a] * HB[r, b]
                s /= 1.0 + d
                if a == b:
                    s += 1.0 / p
                Gi[a, b] = s
        for a in range(K):
            for b in range(a + 1):
                s = Gi[a, b]
                for c in range(b):
                    s -= Gi[a, c] * Gi[b, c]
                if a == b:
                    Gi[a, a] = np.sqrt(s)
                else:
                    Gi[a, b] = s / Gi[b, b]
        for j in range(J):
            s2 = 0.0
            for a in range(K):
                s = V[j, a]
                for c in range(a):
                    s -= Gi[a, c] * w[c]
                w[a] = s / Gi[a, a]
                s2 += w[a] * w[a]
            sig[t, j] = s2
            crate[j] = 0.5 * np.log2(p / s2)
            if smooth == 0.0 and crate[j] < 0.0:
                crate[j] = 0.0
        for k in range(K):
            m = np.inf
            for j in range(J):
                if member[j, k] and crate[j] < m:
                    m = crate[j]
            if m == np.inf:
                rates[t, k] = 0.0
            elif smooth > 0.0:
                acc = 0.0
                for j in range(J):
                    if member[j, k]:
                        acc += np.exp(-(crate[j] - m) / smooth)
                rates[t, k] = m - smooth * np.log(acc)
            else:
                rates[t, k] = m
    return comp, sig, rates


def _uplink_batch_np(X, H, p, d, Ar, V, member, smooth):
    L, K = H.shape
    HB = H[None, :, :] * X[:, None, :]
    if d > 0.0:
        S = p * HB @ HB.transpose(0, 2, 1) + (1.0 + d) * np.eye(L)
        q = np.einsum("rl,nlm,rm->nr", Ar, S, Ar)
        comp = np.maximum(0.0, 0.5 * np.log2(q / d))
    else:
        comp = np.full((X.shape[0], L), np.inf)
    Ginv = HB.transpose(0, 2, 1) @ HB / (1.0 + d) + np.eye(K) / p
    G = np.linalg.inv(Ginv)
    sig = np.einsum("jk,nkl,jl->nj", V, G, V)
    crate = 0.5 * np.log2(p / sig)
    if smooth == 0.0:
        crate = np.maximum(crate, 0.0)
    masked = np.where(member.T[None, :, :], crate[:, None, :], np.inf)
    rates = masked.min(axis=-1)
    empty = np.isinf(rates)
    if smooth > 0.0:
        safe = np.where(empty, 0.0, rates)
        w = np.exp(-(masked - safe[..., None]) / smooth)
        rates = safe - smooth * np.log(w.sum(axis=-1))
    rates[empty] = 0.0
    return comp, sig, rates


def uplink_batch(X, H, p, d, Ar, V, member, smooth=0.0):
    """Evaluate the uplink at each row of ``X`` (precoder diagonals).

    Parameters
    ----------
    X : (n, K) array
        Diagonal of the uplink scaling matrix, one candidate per row.
    H : (L, K) array
    p : float
        Coarse-lattice coding power.
    d : float
        Common compression distortion; 0 means uncompressed.
    Ar : (L, L) float array
        Rows are the compression-stage integer combinations.
    V : (J, K) float array
        Decoded combinations expressed in user space (``A_psi @ W``).
    member : (J, K) bool array
        ``V != 0``, exact.
    smooth : float
        0 gives the exact rates (clipped at zero, hard minimum over each
        user's combinations). A positive value gives a smooth surrogate for
        the precoder search: rates are not clipped, so they keep a slope
        below unit SNR, and the minimum becomes a soft-min at that
        temperature (in bits).

    Returns
    -------
    comp : (n, L) compression rates
    sigma_sq : (n, J) effective noise powers
    rates : (n, K) per-user computation rates
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    H = np.ascontiguousarray(H, dtype=np.float64)
    Ar = np.ascontiguousarray(Ar, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    member = np.ascontiguousarray(member, dtype=np.bool_)
    if HAVE_NUMBA:
        return _uplink_batch_nb(X, H, float(p), float(d), Ar, V, member, float(smooth))
    return _uplink_batch_np(X, H, float(p), float(d), Ar, V, member, float(smooth))


# --------------------------------------------------------------------------
# Downlink: distortions, powers, user MMSE scalars and rates
# --------------------------------------------------------------------------


@njit(cache=True)
def _downlink_batch_nb(X, Hdl, A, Minv, finite, p, Apsi):
    n = X.shape[0]
    K, L = Hdl.shape
    M = Apsi.shape[1]
    nf = Minv.shape[0]
    dist = np.zeros((n, L))
    powers = np.empty((n, L))
    rho = np.empty((n, K))
    sig = np.empty((n, K))
    rates = np.empty((n, K))
    ok = np.ones(n, dtype=np.bool_)
    fidx = np.empty(nf, dtype=np.int64)
    c = 0
    for r in range(L):
        if finite[r]:
            fidx[c] = r
            c += 1
    A2 = A * A
    HA = Hdl @ A
    rhs = np.empty(L)
    g = np.empty(M)
    for t in range(n):
        B = X[t].reshape(L, M)
        for r in range(L):
            s = 0.0
            for m in range(M):
                s += B[r, m] * B[r, m]
            rhs[r] = p * s
        for a in range(nf):
            s = 0.0
            for b in range(nf):
                s += Minv[a, b] * rhs[fidx[b]]
            dist[t, fidx[a]] = s
            if not s > 0.0:
                ok[t] = False
        for r in range(L):
            s = rhs[r]
            for i in range(L):
                s += A2[r, i] * dist[t, i]
            powers[t, r] = s
        for k in range(K):
            q = 0.0
            for i in range(L):
                q += dist[t, i] * HA[k, i] * HA[k, i]
            gg = 0.0
            ag = 0.0
            for m in range(M):
                s = 0.0
                for r in range(L):
                    s += B[r, m] * Hdl[k, r]
                g[m] = s
                gg += s * s
                ag += Apsi[k, m] * s
            rk = p * ag / (q + p * gg + 1.0)
            e = 0.0
            for m in range(M):
                diff = rk * g[m] - Apsi[k, m]
                e += diff * diff
            s2 = p * e + rk * rk * (q + 1.0)
            rho[t, k] = rk
            sig[t, k] = s2
            rates[t, k] = max(0.0, 0.5 * np.log2(p / s2))
    return dist, powers, rho, sig, rates, ok


def _downlink_batch_np(X, Hdl, A, Minv, finite, p, Apsi):
    n = X.shape[0]
    K, L = Hdl.shape
    M = Apsi.shape[1]
    B = X.reshape(n, L, M)
    rhs = p * np.sum(B * B, axis=-1)
    dist = np.zeros((n, L))
    if Minv.shape[0]:
        dist[:, finite] = rhs[:, finite] @ Minv.T
    ok = np.all(dist[:, finite] > 0.0, axis=1)
    powers = rhs + dist @ (A * A).T
    HA = Hdl @ A
    q = dist @ (HA * HA).T
    g = np.einsum("kl,nlm->nkm", Hdl, B)
    num = p * np.einsum("km,nkm->nk", Apsi, g)
    rho = num / (q + p * np.sum(g * g, axis=-1) + 1.0)
    err = rho[..., None] * g - Apsi[None, :, :]
    sig = p * np.sum(err * err, axis=-1) + rho * rho * (q + 1.0)
    rates = np.maximum(0.0, 0.5 * np.log2(p / sig))
    return dist, powers, rho, sig, rates, ok


def downlink_batch(X, Hdl, A, Minv, finite, p, Apsi):
    """Evaluate the downlink chain at each row of ``X`` (flattened ``B_dl``).

    ``Minv`` is the inverse of the distortion system restricted to the RRHs
    with finite fronthaul (``finite`` mask); RRHs with unlimited fronthaul
    get zero distortion.

    Returns ``(dist, powers, rho, sigma_sq, rates, ok)`` with leading axis n.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Hdl = np.ascontiguousarray(Hdl, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    Minv = np.ascontiguousarray(Minv, dtype=np.float64)
    finite = np.ascontiguousarray(finite, dtype=np.bool_)
    Apsi = np.ascontiguousarray(Apsi, dtype=np.float64)
    if HAVE_NUMBA:
        return _downlink_batch_nb(X, Hdl, A, Minv, finite, float(p), Apsi)
    return _downlink_batch_np(X, Hdl, A, Minv, finite, float(p), Apsi)
