"""Downlink: the BBU forwards quantised pair-sum combinations to the RRHs.

The RRH compression matrix is the transpose of the uplink one, the
distortion levels follow from the fronthaul capacities by a linear solve,
and each user decodes its own combination with a scalar MMSE coefficient.
Rates are in bits per real transmission.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, Infeasible, NoFeasibleSolution, SingularPsi
from .numerics import OptimizerReport, Termination, bfgs_minimize, integer_rank
from .system import channel_rng
from .uplink import INDIVIDUAL, log2_plus

# stream tag separating downlink initialisations from channel draws
_DL_STREAM = 0x444C


# --------------------------------------------------------------------------
# Closed-form quantities
# --------------------------------------------------------------------------


def _distortion_system(A, C):
    A = np.asarray(A, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    return np.diag(2.0 ** (2.0 * C)) - A * A


def solve_downlink_distortions(B_dl, A_r_dl, C, p_ul):
    """Distortions at which every RRH's compression rate equals its capacity.

    Solves ``2^(2 C_l) d_l - sum_i A[l, i]^2 d_i = p_ul ||b_l||^2`` where
    ``b_l`` is row ``l`` of ``B_dl``. Raises :class:`Infeasible` when the
    system is singular or a level comes out non-positive.
    """
    B = np.atleast_2d(np.asarray(B_dl, dtype=np.float64))
    A = np.atleast_2d(np.asarray(A_r_dl, dtype=np.float64))
    C = np.atleast_1d(np.asarray(C, dtype=np.float64))
    L = A.shape[0]
    if A.shape != (L, L) or B.shape[0] != L or C.shape != (L,):
        raise DimensionMismatch(f"B {B.shape}, A {A.shape} and C {C.shape} do not conform")
    if not np.all(np.isfinite(C)):
        raise Infeasible("capacities must be finite for a distortion solve")
    rhs = p_ul * np.sum(B * B, axis=1)
    S = _distortion_system(A, C)
    try:
        d = np.linalg.solve(S, rhs)
    except np.linalg.LinAlgError:
        raise Infeasible("distortion system is singular") from None
    if np.linalg.cond(S) > 1e12:
        raise Infeasible("distortion system is singular")
    if not np.all(d > 0):
        raise Infeasible("capacities too small for the chosen combinations")
    return d


def downlink_compression_rate(b_row, a_row, p_ul, d_dl, ell):
    """Fronthaul rate of RRH ``ell`` given its beamforming row and distortions."""
    b = np.asarray(b_row, dtype=np.float64)
    a = np.asarray(a_row, dtype=np.float64)
    d = np.asarray(d_dl, dtype=np.float64)
    return 0.5 * log2_plus(downlink_power(b, a, p_ul, d) / d[ell])


def downlink_power(b_row, a_row, p_ul, d_dl):
    """Transmit power of an RRH: signal ``p ||b||^2`` plus forwarded distortion."""
    b = np.asarray(b_row, dtype=np.float64)
    a = np.asarray(a_row, dtype=np.float64)
    return float(p_ul * b @ b + (a * a) @ np.asarray(d_dl, dtype=np.float64))


def mmse_scalar_dl(k, h_k, B_dl, A_r_dl, d_dl, p_ul, A_psi_dl_row):
    """MMSE scaling of user ``k`` for its target combination ``A_psi_dl_row``.

    ``k`` only labels the user; all data comes in through ``h_k``.
    """
    h = np.asarray(h_k, dtype=np.float64)
    B = np.atleast_2d(np.asarray(B_dl, dtype=np.float64))
    A = np.atleast_2d(np.asarray(A_r_dl, dtype=np.float64))
    a = np.asarray(A_psi_dl_row, dtype=np.float64)
    g = B.T @ h
    ha = h @ A
    q = float(ha**2 @ np.asarray(d_dl, dtype=np.float64))
    return float(p_ul * (a @ g) / (q + p_ul * (g @ g) + 1.0))


def downlink_sigma_sq(rho, h_k, B_dl, A_r_dl, d_dl, p_ul, A_psi_dl_row):
    """Effective noise power of a user scaling its signal by ``rho``."""
    h = np.asarray(h_k, dtype=np.float64)
    B = np.atleast_2d(np.asarray(B_dl, dtype=np.float64))
    A = np.atleast_2d(np.asarray(A_r_dl, dtype=np.float64))
    a = np.asarray(A_psi_dl_row, dtype=np.float64)
    err = rho * (B.T @ h) - a
    q = float((h @ A) ** 2 @ np.asarray(d_dl, dtype=np.float64))
    return float(p_ul * err @ err + rho * rho * (q + 1.0))


def downlink_targets(A_psi_ul, W, scheme=None):
    """Combinations ``W^T A_psi^-1`` the users decode, as a real ``K x M`` matrix.

    Under the individual-codeword scheme the BBU recovers every codeword and
    forms the pair sums itself, so each user simply decodes its pair sum.
    """
    W = np.asarray(W, dtype=np.float64)
    if scheme == INDIVIDUAL:
        return W.T.copy()
    A = np.asarray(A_psi_ul, dtype=np.int64)
    M = W.shape[0]
    if A.shape != (M, M):
        raise DimensionMismatch(f"A_psi must be {M}x{M}, got {A.shape}")
    if integer_rank(A) < M:
        raise SingularPsi("A_psi is rank deficient")
    return W.T @ np.linalg.inv(A.astype(np.float64))


def downlink_user_rates(H_dl, B_dl, A_r_dl, d_dl, p_ul, A_psi_ul, W, scheme=None):
    """Per-user downlink computation rates at the MMSE scalings."""
    H = np.atleast_2d(np.asarray(H_dl, dtype=np.float64))
    T = downlink_targets(A_psi_ul, W, scheme)
    out = np.zeros(H.shape[0])
    for k, h in enumerate(H):
        rho = mmse_scalar_dl(k, h, B_dl, A_r_dl, d_dl, p_ul, T[k])
        s = downlink_sigma_sq(rho, h, B_dl, A_r_dl, d_dl, p_ul, T[k])
        out[k] = 0.5 * log2_plus(p_ul / s) if s > 0 else 0.0
    return out


# --------------------------------------------------------------------------
# Result containers
# --------------------------------------------------------------------------


@dataclass
class DownlinkSolution:
    B_dl: np.ndarray
    A_r_dl: np.ndarray
    d_dl: np.ndarray
    rho: np.ndarray
    user_rates: np.ndarray
    rrh_powers: np.ndarray
    report: OptimizerReport
    objective: float = 0.0
    attempts: int = 1

    @property
    def silent(self):
        """True for the all-zero beamformer used when there is nothing to send."""
        return not np.any(self.B_dl)

    def compression_rates(self, p_ul):
        L = self.A_r_dl.shape[0]
        return np.array(
            [
                downlink_compression_rate(self.B_dl[l], self.A_r_dl[l], p_ul, self.d_dl, l)
                if self.d_dl[l] > 0
                else np.inf
                for l in range(L)
            ]
        )

    def check(self, config, tol=1e-9):
        """Assert every type invariant; returns self."""
        C = config.capacities
        finite = np.isfinite(C)
        if not self.silent:
            assert np.all(self.d_dl[finite] > 0)
            R = self.compression_rates(config.p_ul)
            assert np.all(np.abs(R[finite] - C[finite]) <= tol)
        assert np.all(self.d_dl[~finite] == 0)
        assert np.all(self.rrh_powers <= config.downlink_limits + 1e-8)
        assert np.all(self.user_rates >= 0)
        return self


@dataclass
class EndToEndResult:
    per_user_rate: np.ndarray
    sum_rate: float
    uplink: object = field(repr=False)
    downlink: object = field(repr=False)


def end_to_end_rates(ul, dl):
    """Per-user end-to-end rate: the smaller of the two hops."""
    r_ul = np.asarray(ul.user_rates, dtype=np.float64)
    r_dl = np.asarray(dl.user_rates, dtype=np.float64)
    if r_ul.shape != r_dl.shape:
        raise DimensionMismatch(f"{r_ul.shape} uplink rates vs {r_dl.shape} downlink rates")
    r = np.minimum(r_ul, r_dl)
    return EndToEndResult(per_user_rate=r, sum_rate=float(r.sum()), uplink=ul, downlink=dl)


# --------------------------------------------------------------------------
# Iterative downlink optimisation
# --------------------------------------------------------------------------


class _DownlinkProblem:
    """Rate-matching objective over the flattened beamformer, batch evaluated."""

    def __init__(self, config, H_dl, ul):
        self.p = config.p_ul
        self.H = np.ascontiguousarray(np.atleast_2d(H_dl), dtype=np.float64)
        K, L = self.H.shape
        if K != config.K or L != config.L:
            raise DimensionMismatch(f"H_dl must be {config.K}x{config.L}, got {self.H.shape}")
        self.L, self.M = L, config.M
        self.A = np.asarray(ul.A_r, dtype=np.int64).T.copy()
        C = config.capacities
        self.finite = np.isfinite(C)
        S = _distortion_system(self.A[np.ix_(self.finite, self.finite)], C[self.finite])
        self.solvable = S.size == 0 or np.linalg.cond(S) < 1e12
        self.Minv = np.linalg.inv(S) if self.solvable else np.zeros_like(S)
        self.T = downlink_targets(ul.A_psi, ul.W, ul.scheme)
        self.target = np.asarray(ul.user_rates, dtype=np.float64)
        self.P = config.downlink_limits
        self.bad = config.infeasible_value

    def evaluate(self, X):
        return _kernels.downlink_batch(
            X, self.H, self.A.astype(np.float64), self.Minv, self.finite, self.p, self.T
        )

    def project(self, X):
        """Scale each row uniformly so no RRH exceeds its power limit.

        Distortions and powers are homogeneous of degree two in the
        beamformer, so the scaling keeps every compression rate at its
        capacity. Also returns the solvability flag of the raw rows.
        """
        _, powers, _, _, _, ok = self.evaluate(X)
        ratio = np.max(powers / self.P, axis=1)
        scale = 1.0 / np.sqrt(np.maximum(ratio * (1.0 + 1e-12), 1.0))
        return X * scale[:, None], ok

    def objective(self, X):
        X = np.atleast_2d(X)
        if not self.solvable:
            return np.full(X.shape[0], self.bad)
        Xp, ok = self.project(X)
        sig = self.evaluate(Xp)[3]
        with np.errstate(divide="ignore"):
            raw = 0.5 * np.log2(self.p / sig)
        # unclamped where a rate is wanted, so a silenced user still has a gradient
        rates = np.where(self.target > 0, raw, np.maximum(raw, 0.0))
        f = np.sum((rates - self.target) ** 2, axis=1)
        return np.where(ok & np.isfinite(f), f, self.bad)

    def solution(self, x, report, attempts):
        """Solution at ``x`` scaled back inside the power limits."""
        X, ok = self.project(np.atleast_2d(x))
        if not ok[0]:
            return None
        dist, powers, rho, _, rates, ok = self.evaluate(X)
        if not ok[0] or np.any(powers[0] > self.P + 1e-8):
            return None
        f = float(np.sum((rates[0] - self.target) ** 2))
        return DownlinkSolution(
            B_dl=X[0].reshape(self.L, self.M),
            A_r_dl=self.A.copy(),
            d_dl=dist[0].copy(),
            rho=rho[0].copy(),
            user_rates=rates[0].copy(),
            rrh_powers=powers[0].copy(),
            report=report,
            objective=f,
            attempts=attempts,
        )


def _silent_solution(config, ul):
    L, M, K = config.L, config.M, config.K
    report = OptimizerReport(
        iterations=0,
        converged=True,
        final_objective=0.0,
        termination_reason=Termination.TOLERANCE_MET,
        history=[0.0],
    )
    return DownlinkSolution(
        B_dl=np.zeros((L, M)),
        A_r_dl=np.asarray(ul.A_r, dtype=np.int64).T.copy(),
        d_dl=np.zeros(L),
        rho=np.zeros(K),
        user_rates=np.zeros(K),
        rrh_powers=np.zeros(L),
        report=report,
    )


def ido(config, H_dl, ul, seed, index=0):
    """Iterative downlink optimisation.

    Minimises ``sum_k (R_dl,k - R_ul,k)^2`` over the ``L x M`` beamformer
    with BFGS. Distortions are re-solved from the capacities at every
    evaluation; a failed solve scores ``config.infeasible_value``. Every
    point is scaled radially into the power limits before its rates are
    taken, so the search never leaves the feasible set. Starting points are standard
    normal draws keyed on ``(seed, index, attempt)``. After the first
    attempt up to ``config.dl_restarts`` fresh starts are made while the
    rates are not matched to ``config.rate_match_eps`` (summed absolute
    gap). Returns the best feasible solution.
    """
    target = np.asarray(ul.user_rates, dtype=np.float64)
    if not np.any(target > 0):
        return _silent_solution(config, ul)
    prob = _DownlinkProblem(config, H_dl, ul)
    best = None
    n = prob.L * prob.M
    for attempt in range(config.dl_restarts + 1):
        x0 = channel_rng(seed, index, _DL_STREAM, attempt).standard_normal(n)
        x, report = bfgs_minimize(
            prob.objective, x0, max_iter=config.dl_max_iter, vectorized=True
        )
        cand = prob.solution(x, report, attempt + 1)
        if cand is not None and (best is None or cand.objective < best.objective):
            best = cand
        if best is not None:
            best.attempts = attempt + 1
            gap = np.sum(np.abs(best.user_rates - target))
            if gap <= config.rate_match_eps:
                break
    if best is None:
        raise NoFeasibleSolution(
            f"no feasible downlink beamformer after {config.dl_restarts + 1} starts"
        )
    return best
