"""Uplink: lattice compression at the RRHs and pair-sum computation at the BBU.

Rates are in bits per real transmission. ``B`` arguments may be given either
as the ``K x K`` diagonal scaling matrix or as its diagonal.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InfeasibleStart, InitializationFailed
from .lattice import select_from_gram
from .numerics import barrier_newton, cholesky, integer_rank
from .system import make_adjacent_pairing

MULTIPAIR = "multipair"
INDIVIDUAL = "individual"
DELTA_CAP = 1e12


def log2_plus(x):
    return max(0.0, math.log2(x)) if x > 0 else 0.0


def _diag(B):
    B = np.asarray(B, dtype=np.float64)
    return np.diag(B).copy() if B.ndim == 2 else B.copy()


def _D(D, L):
    D = np.asarray(D, dtype=np.float64)
    if D.ndim == 0:
        return float(D) * np.eye(L)
    return np.diag(D) if D.ndim == 1 else D


# --------------------------------------------------------------------------
# Closed-form quantities
# --------------------------------------------------------------------------


def uplink_compression_rate(a, H, B, p_ul, D, d_ell):
    """Fronthaul rate for forwarding combination ``a`` at distortion ``d_ell``."""
    if not d_ell > 0:
        raise ValueError("d_ell must be positive")
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    HB = H * _diag(B)[None, :]
    L = H.shape[0]
    cov = p_ul * HB @ HB.T + np.eye(L) + _D(D, L)
    a = np.asarray(a, dtype=np.float64)
    return 0.5 * log2_plus(float(a @ cov @ a) / d_ell)


def effective_noise_gram(H, B, p_ul, D):
    """``(P^-1 + (HB)^T (I + D)^-1 (HB))^-1`` for ``P = p_ul I``."""
    if not p_ul > 0:
        raise ValueError("p_ul must be positive")
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    L, K = H.shape
    HB = H * _diag(B)[None, :]
    inner = np.linalg.solve(np.eye(L) + _D(D, L), HB)
    return np.linalg.inv(np.eye(K) / p_ul + HB.T @ inner)


def effective_noise_factor(H, B, p_ul, D):
    """Lower Cholesky factor ``F_psi`` of :func:`effective_noise_gram`."""
    return cholesky(effective_noise_gram(H, B, p_ul, D))


def mmse_equalizer_ul(a_psi_j, W, H, B, p_ul, D):
    """MMSE scaling vector for decoding combination ``a_psi_j`` of pair sums."""
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    L = H.shape[0]
    HB = H * _diag(B)[None, :]
    t = np.asarray(a_psi_j, dtype=np.float64) @ np.asarray(W, dtype=np.float64)
    cov = p_ul * HB @ HB.T + np.eye(L) + _D(D, L)
    return np.linalg.solve(cov, p_ul * HB @ t)


def effective_noise_power(rho, a_psi_j, W, H, B, p_ul, D):
    """Effective noise power for an arbitrary equalizer ``rho`` (direct form)."""
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    L = H.shape[0]
    HB = H * _diag(B)[None, :]
    rho = np.asarray(rho, dtype=np.float64)
    t = np.asarray(a_psi_j, dtype=np.float64) @ np.asarray(W, dtype=np.float64)
    err = rho @ HB - t
    return float(p_ul * err @ err + rho @ (np.eye(L) + _D(D, L)) @ rho)


def uplink_sigma_sq(a_psi_j, F_psi, W):
    """Effective noise power at the MMSE equalizer, ``a^T W F F^T W^T a``."""
    v = np.asarray(W, dtype=np.float64).T @ np.asarray(a_psi_j, dtype=np.float64)
    u = np.asarray(F_psi, dtype=np.float64).T @ v
    return float(u @ u)


def rates_from_sigma(combos, sigma_sq, p_ul):
    """Per-user rates: min over combinations involving the user.

    ``combos`` is ``(J, K)`` in user space; membership is exact (``!= 0``).
    """
    combos = np.asarray(combos)
    crate = np.array([0.5 * log2_plus(p_ul / s) for s in sigma_sq])
    out = np.zeros(combos.shape[1])
    for k in range(combos.shape[1]):
        involved = combos[:, k] != 0
        out[k] = crate[involved].min() if involved.any() else 0.0
    return out


def uplink_user_rates(A_psi, F_psi, W, p_ul):
    """Achievable computation rate of every user (pair partners share a rate)."""
    A_psi = np.asarray(A_psi, dtype=np.int64)
    W = np.asarray(W, dtype=np.int64)
    sigma = [uplink_sigma_sq(a, F_psi, W) for a in A_psi]
    return rates_from_sigma(A_psi @ W, sigma, p_ul)


def baseline_individual_rates(F_psi, p_ul):
    """Rates when the BBU decodes K combinations of individual codewords."""
    F_psi = np.asarray(F_psi, dtype=np.float64)
    G = F_psi @ F_psi.T
    A = select_from_gram(G, G.shape[0])
    sigma = np.einsum("jk,kl,jl->j", A, G, A)
    return rates_from_sigma(A, sigma, p_ul)


# --------------------------------------------------------------------------
# Solution container
# --------------------------------------------------------------------------


@dataclass
class UplinkSolution:
    B_ul: np.ndarray
    d_ul: float
    D_ul: np.ndarray
    A_r: np.ndarray
    A_psi: np.ndarray
    compression_rates: np.ndarray
    user_rates: np.ndarray
    sigma_sq: np.ndarray
    W: np.ndarray
    scheme: str = MULTIPAIR
    iterations: int = 1
    history: list = field(default_factory=list, repr=False)

    @property
    def b(self):
        return np.diag(self.B_ul).copy()

    @property
    def sum_rate(self):
        return float(np.sum(self.user_rates))

    @property
    def combinations(self):
        """Decoded combinations expressed over individual users."""
        if self.scheme == INDIVIDUAL:
            return self.A_psi
        return self.A_psi @ self.W

    def check(self, config, tol=1e-9):
        """Assert every type invariant; returns self."""
        b = self.b
        assert np.allclose(self.B_ul, np.diag(b))
        assert np.all(b**2 * config.p_ul <= config.uplink_limits * (1 + tol))
        C = config.capacities
        if np.all(np.isinf(C)):
            assert self.d_ul == 0.0
        else:
            assert self.d_ul > 0
        L = config.L
        assert integer_rank(self.A_r) == L
        for i in range(1, L + 1):
            assert integer_rank(self.A_r[:i]) == i
        n_comb = config.K if self.scheme == INDIVIDUAL else config.M
        assert integer_rank(self.A_psi) == n_comb
        assert np.all(self.compression_rates <= C)
        assert np.all(self.user_rates >= 0)
        return self


# --------------------------------------------------------------------------
# Distortion bisection with LLL re-selection
# --------------------------------------------------------------------------


def _compression_gram(H, b, p_ul, d):
    HB = H * b[None, :]
    L = H.shape[0]
    return (p_ul * HB @ HB.T + (1.0 + d) * np.eye(L)) / d


def _compression_stage(H, b, p_ul, d):
    G = _compression_gram(H, b, p_ul, d)
    A = select_from_gram(G, H.shape[0])
    q = np.einsum("ij,jk,ik->i", A, G, A)
    R = np.array([0.5 * log2_plus(v) for v in q])
    return A, R


def _tight_distortion(H, b, p_ul, A, C):
    """Smallest common distortion keeping every row of ``A`` within ``C``."""
    HB = H * b[None, :]
    S = p_ul * HB @ HB.T
    L = H.shape[0]
    best = 0.0
    for ell in range(L):
        if not np.isfinite(C[ell]):
            continue
        a = A[ell].astype(np.float64)
        aa = float(a @ a)
        room = 2.0 ** (2.0 * C[ell]) - aa
        best = max(best, (float(a @ S @ a) + aa) / room)
    d = best
    while True:
        R = np.array(
            [0.5 * log2_plus(v) for v in np.einsum("ij,jk,ik->i", A, _compression_gram(H, b, p_ul, d), A)]
        )
        if np.all(R <= C):
            return d, R
        d *= 1.0 + 1e-14


def iuo(config, H, B_ul, W=None, scheme=MULTIPAIR, max_bisect=200):
    """Iterative uplink optimisation for a fixed precoder.

    Bisects the common distortion on ``(0, delta]`` until every compression
    rate is within the fronthaul limit and the binding one is within
    ``config.eps`` of it, re-selecting ``A_r`` by LLL at each midpoint; then
    selects the pair-sum combinations and evaluates user rates.
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    L, K = H.shape
    b = _diag(B_ul)
    p = config.p_ul
    W = make_adjacent_pairing(config.M) if W is None else np.asarray(W, dtype=np.int64)
    C = config.capacities
    finite = np.isfinite(C)
    eps = config.eps

    if not finite.any():
        d = 0.0
        A_r = np.eye(L, dtype=np.int64)
        R = np.full(L, np.inf)
    else:
        delta = 1.0
        while True:
            A, R = _compression_stage(H, b, p, delta)
            if np.all(R[finite] < C[finite]):
                break
            delta *= 10.0
            if delta > DELTA_CAP:
                raise InitializationFailed(
                    f"no distortion up to {DELTA_CAP:g} meets fronthaul {C.tolist()}"
                )
        d_min, d_max = 0.0, delta
        d = delta
        feasible = (d, A, R)
        tight = False
        for _ in range(max_bisect):
            over = np.max(R[finite] - C[finite])
            slack = np.min(C[finite] - R[finite])
            if over <= 0 and slack <= eps:
                tight = True
                break
            if over > 0:
                d_min = d
            else:
                d_max = d
                feasible = (d, A, R)
            d = 0.5 * (d_min + d_max)
            A, R = _compression_stage(H, b, p, d)
        if tight:
            A_r = A
        else:
            # LLL re-selection can jump across the crossing; pin the rows of
            # the last feasible midpoint and solve for equality directly.
            _, A_r, _ = feasible
            d, R = _tight_distortion(H, b, p, A_r, C)

    G_psi = _effective_gram(H, b, p, d)
    if scheme == INDIVIDUAL:
        A_psi = select_from_gram(G_psi, K)
        combos = A_psi
    else:
        A_psi = select_from_gram(W @ G_psi @ W.T, config.M)
        combos = A_psi @ W
    sigma = np.einsum("jk,kl,jl->j", combos, G_psi, combos)
    rates = rates_from_sigma(combos, sigma, p)
    return UplinkSolution(
        B_ul=np.diag(b),
        d_ul=float(d),
        D_ul=d * np.eye(L),
        A_r=np.asarray(A_r, dtype=np.int64),
        A_psi=np.asarray(A_psi, dtype=np.int64),
        compression_rates=np.asarray(R, dtype=np.float64),
        user_rates=rates,
        sigma_sq=sigma,
        W=W,
        scheme=scheme,
    )


def _effective_gram(H, b, p, d):
    HB = H * b[None, :]
    K = H.shape[1]
    return np.linalg.inv(np.eye(K) / p + HB.T @ HB / (1.0 + d))


# --------------------------------------------------------------------------
# Barrier update of the precoder
# --------------------------------------------------------------------------


# soft-min temperature (bits) of the precoder surrogate objective
SURROGATE_TEMPERATURE = 0.02


class _PrecoderProblem:
    """Objective and constraints of the precoder step, sharing one kernel call."""

    def __init__(self, config, H, solution):
        self.H = np.ascontiguousarray(H, dtype=np.float64)
        self.p = config.p_ul
        self.d = solution.d_ul
        self.A_r = solution.A_r.astype(np.float64)
        combos = solution.combinations
        self.V = combos.astype(np.float64)
        self.member = combos != 0
        C = config.capacities
        self.finite = np.isfinite(C)
        self.C = C[self.finite]
        self.P = config.uplink_limits
        self._key = None
        self._val = None

    def evaluate(self, X):
        X = np.atleast_2d(X)
        if self._key is not None and self._key.shape == X.shape and np.array_equal(self._key, X):
            return self._val
        comp, _, rates = _kernels.uplink_batch(
            X, self.H, self.p, self.d, self.A_r, self.V, self.member, smooth=SURROGATE_TEMPERATURE
        )
        f = -rates.sum(axis=1)
        g = np.hstack([X**2 * self.p - self.P, comp[:, self.finite] - self.C])
        self._key = X.copy()
        self._val = (f, g)
        return self._val

    def objective(self, X):
        return self.evaluate(X)[0]

    def constraints(self, X):
        return self.evaluate(X)[1]


def update_precoder(config, H, solution, theta0=10.0, eta=100.0, max_inner=20):
    """New diagonal precoder maximising the sum rate for frozen integer matrices.

    Runs the barrier method over the ``K`` scalings subject to the ``K``
    power limits and the finite fronthaul limits. The starting point is the
    current precoder pulled slightly inward so the barrier is defined.
    """
    prob = _PrecoderProblem(config, H, solution)
    b0 = solution.b
    x0 = None
    for shrink in (0.999, 0.99, 0.95, 0.8, 0.5, 0.1):
        cand = b0 * shrink
        if np.all(prob.constraints(cand[None, :])[0] < 0):
            x0 = cand
            break
    if x0 is None:
        raise InfeasibleStart("no strictly feasible precoder along the current direction")
    b, report = barrier_newton(
        prob.objective,
        prob.constraints,
        x0,
        theta0=theta0,
        eta=eta,
        eps=config.eps,
        max_inner=max_inner,
        vectorized=True,
    )
    return np.diag(b)


# amplitude factor of the turned-down user in the extra first-step starts
START_DIP = 0.3


def _step(config, H, sol, W, scheme):
    """One precoder update followed by iuo; None if the update cannot start."""
    try:
        b = update_precoder(config, H, sol)
    except InfeasibleStart:
        return None
    return iuo(config, H, b, W=W, scheme=scheme)


def _first_step(config, H, sol, full, W, scheme):
    K = full.size
    first = None
    for k in range(-1, K):
        if k < 0:
            start = sol
        else:
            b = np.where(np.arange(K) == k, START_DIP, 1.0) * full
            start = iuo(config, H, b, W=W, scheme=scheme)
        for cand in (start, _step(config, H, start, W, scheme)):
            if cand is not None and (first is None or cand.sum_rate > first.sum_rate):
                first = cand
    return first


def optimize_uplink(config, H, W=None, scheme=MULTIPAIR):
    """Alternate :func:`iuo` and :func:`update_precoder` until the sum rate settles.

    Starts from full power on every user. The first precoder step mostly
    decides which weak users get turned down, and from the symmetric
    full-power point that choice is fragile, so it is also taken from ``K``
    starts with one user's amplitude cut to ``START_DIP`` and the best
    result carries on. The rate surface is piecewise smooth (integer
    matrices change between passes), so the alternation can cycle; it stops
    on a relative change below ``outer_rtol`` or after two passes that fail
    to improve the best sum rate. Returns the best solution seen; its
    ``history`` holds the sum rate after each pass.
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    full = np.sqrt(config.uplink_limits / config.p_ul)
    sol = iuo(config, H, full, W=W, scheme=scheme)
    best = sol
    history = [sol.sum_rate]
    prev = sol.sum_rate
    stall = 0
    for it in range(1, config.max_outer_iters):
        if it == 1:
            sol = _first_step(config, H, sol, full, W, scheme)
        else:
            sol = _step(config, H, sol, W, scheme)
            if sol is None:
                break
        history.append(sol.sum_rate)
        if sol.sum_rate > best.sum_rate * (1.0 + config.outer_rtol):
            best = sol
            stall = 0
        else:
            if sol.sum_rate > best.sum_rate:
                best = sol
            stall += 1
            if stall >= 2:
                break
        if abs(sol.sum_rate - prev) <= config.outer_rtol * max(abs(prev), 1e-12):
            break
        prev = sol.sum_rate
    best.iterations = len(history)
    best.history = history
    return best
