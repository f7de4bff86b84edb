"""Dense linear algebra and generic optimisation primitives.

Everything here is a pure function of its inputs. Objectives handed to the
optimisers may be *vectorised*: when ``vectorized=True`` they are called with
a 2-D array of points (one per row) and must return one value per row (or,
for constraints, one row of values per point). Finite-difference stencils are
then evaluated in a single call, which matters when the objective is a
compiled kernel.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    InfeasibleStart,
    LineSearchFailed,
    NoSignChange,
    NotPositiveDefinite,
)

GRAD_STEP = 1e-6
HESS_STEP = 1e-4


class Termination(str, enum.Enum):
    TOLERANCE_MET = "tolerance_met"
    MAX_ITERATIONS = "max_iterations"
    LINE_SEARCH_FAILED = "line_search_failed"


@dataclass
class OptimizerReport:
    iterations: int
    converged: bool
    final_objective: float
    termination_reason: Termination
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.converged and self.termination_reason is not Termination.TOLERANCE_MET:
            raise ValueError("converged report must terminate on tolerance")


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float array."""
    m = np.array(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or 0 in m.shape:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


# --------------------------------------------------------------------------
# Linear algebra
# --------------------------------------------------------------------------


def cholesky(A):
    """Lower-triangular ``L`` with ``L @ L.T == A``.

    The input is symmetrised as ``(A + A.T) / 2`` first; it must already be
    symmetric to 1e-10 relative.
    """
    A = as_matrix(A, "A")
    n, m = A.shape
    if n != m:
        raise DimensionMismatch(f"cholesky needs a square matrix, got {A.shape}")
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    if np.linalg.norm(A - A.T) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diag(L) > 0.0):
        raise NotPositiveDefinite("non-positive pivot")
    return L


def solve_spd(A, B):
    """Solve ``A X = B`` for symmetric positive-definite ``A``."""
    B = np.asarray(B, dtype=np.float64)
    L = cholesky(A)
    if B.shape[0] != L.shape[0]:
        raise DimensionMismatch(f"A is {L.shape}, B has {B.shape[0]} rows")
    return scipy.linalg.cho_solve((L, True), B)


def integer_rank(A):
    """Exact rank of an integer matrix (fraction-free Bareiss elimination)."""
    rows = []
    for row in np.atleast_2d(np.asarray(A, dtype=object)):
        out = []
        for v in row:
            iv = int(v)
            if iv != v:
                raise ValueError(f"non-integer entry {v!r}")
            out.append(iv)
        rows.append(out)
    if not rows or not rows[0]:
        return 0
    n_rows, n_cols = len(rows), len(rows[0])
    rank = 0
    prev = 1
    for col in range(n_cols):
        pivot = next((r for r in range(rank, n_rows) if rows[r][col] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        p = rows[rank][col]
        for r in range(rank + 1, n_rows):
            rr = rows[r]
            f = rr[col]
            for c in range(col, n_cols):
                rr[c] = (p * rr[c] - f * rows[rank][c]) // prev
        prev = p
        rank += 1
        if rank == n_rows:
            break
    return rank


# --------------------------------------------------------------------------
# Root finding
# --------------------------------------------------------------------------


def bisection(f, lo, hi, eps=1e-6, max_iter=200, callback=None):
    """Root of a monotone ``f`` on ``[lo, hi]``.

    Stops when ``|f(x)| <= eps`` or the bracket is narrower than ``eps``.
    ``callback(lo, hi)`` is invoked after every halving.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoSignChange(f"f({lo})={flo} and f({hi})={fhi} have the same sign")
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= eps or hi - lo <= eps:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
        if callback is not None:
            callback(lo, hi)
    return mid


# --------------------------------------------------------------------------
# Finite differences
# --------------------------------------------------------------------------


def _as_batch(fun, vectorized):
    if vectorized:
        return lambda X: np.asarray(fun(X), dtype=np.float64)
    return lambda X: np.array([fun(x) for x in X], dtype=np.float64)


def fd_gradient(fun, x, vectorized=False, step=GRAD_STEP):
    """Central-difference gradient with step ``step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.size
    h = step * (1.0 + np.abs(x))
    E = np.diag(h)
    vals = _as_batch(fun, vectorized)(np.vstack([x + E, x - E]))
    return (vals[:n] - vals[n:]) / (2.0 * h)


def _stencil(x):
    """Points for a value, central gradient and central Hessian at ``x``."""
    n = x.size
    hg = GRAD_STEP * (1.0 + np.abs(x))
    hh = HESS_STEP * (1.0 + np.abs(x))
    pts = [x[None, :], x + np.diag(hg), x - np.diag(hg), x + np.diag(hh), x - np.diag(hh)]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        block = np.repeat(x[None, :], len(pairs), axis=0)
        for r, (i, j) in enumerate(pairs):
            block[r, i] += si * hh[i]
            block[r, j] += sj * hh[j]
        pts.append(block)
    return np.vstack(pts), hg, hh, pairs


def _derivs(vals, n, hg, hh, pairs):
    """Value, gradient and Hessian from stencil values (last axis = outputs)."""
    f0 = vals[0]
    o = 1
    gp, gm = vals[o : o + n], vals[o + n : o + 2 * n]
    o += 2 * n
    hp, hm = vals[o : o + n], vals[o + n : o + 2 * n]
    o += 2 * n
    npair = len(pairs)
    pp, pm = vals[o : o + npair], vals[o + npair : o + 2 * npair]
    mp, mm = vals[o + 2 * npair : o + 3 * npair], vals[o + 3 * npair : o + 4 * npair]
    shape = (n,) + f0.shape
    grad = (gp - gm) / (2.0 * hg.reshape((n,) + (1,) * f0.ndim))
    hess = np.empty((n, n) + f0.shape)
    for i in range(n):
        hess[i, i] = (hp[i] - 2.0 * f0 + hm[i]) / hh[i] ** 2
    for r, (i, j) in enumerate(pairs):
        v = (pp[r] - pm[r] - mp[r] + mm[r]) / (4.0 * hh[i] * hh[j])
        hess[i, j] = v
        hess[j, i] = v
    assert grad.shape == shape
    return f0, grad, hess


# --------------------------------------------------------------------------
# BFGS with a cubic-interpolation Wolfe line search
# --------------------------------------------------------------------------


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic matching values and slopes at ``a`` and ``b``."""
    if a == b or not np.isfinite([fa, da, fb, db]).all():
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0 or not np.isfinite(rad):
        return None
    d2 = math.copysign(math.sqrt(rad), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def wolfe_line_search(phi, c1=1e-4, c2=0.9, alpha1=1.0, alpha_max=1e6, max_iter=40):
    """Step length satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns ``(value, slope, payload)`` along the search ray;
    the payload of the accepted step is returned with it. Trial steps inside
    the bracketing phase and the zoom phase come from safeguarded cubic
    interpolation.

    Raises
    ------
    LineSearchFailed
        When no acceptable step is found within ``max_iter`` evaluations.
    """
    f0, d0, _ = phi(0.0)
    if not d0 < 0:
        raise LineSearchFailed("search direction is not a descent direction")
    evals = 0

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        nonlocal evals
        while evals < max_iter:
            width = hi - lo
            a = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            left, right = min(lo, hi), max(lo, hi)
            if a is None or not (left + 0.1 * abs(width) <= a <= right - 0.1 * abs(width)):
                a = lo + 0.5 * width
            fa, da, pay = phi(a)
            evals += 1
            if not np.isfinite(fa) or fa > f0 + c1 * a * d0 or fa >= f_lo:
                hi, f_hi, d_hi = a, fa, da
            else:
                if abs(da) <= -c2 * d0:
                    return a, fa, pay
                if da * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, fa, da
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        raise LineSearchFailed("zoom phase did not find a Wolfe step")

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = alpha1
    first = True
    while evals < max_iter:
        fa, da, pay = phi(a)
        evals += 1
        if not np.isfinite(fa) or fa > f0 + c1 * a * d0 or (not first and fa >= f_prev):
            return zoom(a_prev, f_prev, d_prev, a, fa, da)
        if abs(da) <= -c2 * d0:
            return a, fa, pay
        if da >= 0:
            return zoom(a, fa, da, a_prev, f_prev, d_prev)
        nxt = _cubic_min(a_prev, f_prev, d_prev, a, fa, da)
        if nxt is None or not (a + 0.5 * (a - a_prev) <= nxt <= a + 8.0 * (a - a_prev)):
            nxt = 2.0 * a
        if a >= alpha_max:
            break
        a_prev, f_prev, d_prev = a, fa, da
        a = min(nxt, alpha_max)
        first = False
    raise LineSearchFailed("bracketing phase exceeded its evaluation budget")


def bfgs_minimize(
    fun,
    x0,
    grad=None,
    c1=1e-4,
    c2=0.9,
    tol=1e-6,
    max_iter=200,
    vectorized=False,
):
    """Minimise a smooth function with BFGS.

    Parameters
    ----------
    fun : callable
        Objective. Receives a flat vector (or a 2-D batch when
        ``vectorized``).
    x0 : array_like
        Starting point, any shape; the result has the same shape.
    grad : callable, optional
        Gradient oracle on flat vectors. Central finite differences with
        step ``1e-6 * (1 + |x_i|)`` are used when omitted.
    c1, c2 : float
        Wolfe constants, ``0 < c1 < c2 < 1``.
    tol : float
        Stop once the gradient infinity-norm is at most ``tol``.

    Returns
    -------
    x : ndarray
    report : OptimizerReport
        ``history`` holds the objective value after every iteration.
    """
    if not 0 < c1 < c2 < 1:
        raise ValueError("Wolfe constants must satisfy 0 < c1 < c2 < 1")
    shape = np.shape(x0)
    x = np.array(x0, dtype=np.float64).ravel()
    n = x.size
    batch = _as_batch(fun, vectorized)

    def f(z):
        return float(batch(z[None, :])[0])

    if grad is None:

        def g(z):
            return fd_gradient(fun, z, vectorized=vectorized)

    else:

        def g(z):
            return np.asarray(grad(z), dtype=np.float64).ravel()

    fx = f(x)
    gx = g(x)
    Hinv = np.eye(n)
    fresh = True
    history = [fx]
    it = 0
    reason = Termination.MAX_ITERATIONS
    while True:
        if np.max(np.abs(gx), initial=0.0) <= tol:
            reason = Termination.TOLERANCE_MET
            break
        if it >= max_iter:
            break
        direction = -Hinv @ gx
        if not gx @ direction < 0:
            Hinv = np.eye(n)
            fresh = True
            direction = -gx

        def phi(alpha, _x=x, _p=direction):
            z = _x + alpha * _p
            fz = f(z)
            if not np.isfinite(fz):
                return fz, np.nan, None
            gz = g(z)
            return fz, float(gz @ _p), (z, fz, gz)

        alpha1 = 1.0 if it else min(1.0, 1.0 / max(np.linalg.norm(gx), 1e-12))
        try:
            _, _, (x_new, f_new, g_new) = wolfe_line_search(phi, c1=c1, c2=c2, alpha1=alpha1)
        except LineSearchFailed:
            if fresh:
                reason = Termination.LINE_SEARCH_FAILED
                break
            # the curvature model may be stale: retry once along steepest descent
            Hinv = np.eye(n)
            fresh = True
            continue
        fresh = False
        s = x_new - x
        y = g_new - gx
        ys = float(y @ s)
        if ys > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 0:
                Hinv = np.eye(n) * (ys / float(y @ y))
            rho = 1.0 / ys
            V = np.eye(n) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        x, fx, gx = x_new, f_new, g_new
        it += 1
        history.append(fx)
    report = OptimizerReport(
        iterations=it,
        converged=reason is Termination.TOLERANCE_MET,
        final_objective=fx,
        termination_reason=reason,
        history=history,
    )
    return x.reshape(shape), report


# --------------------------------------------------------------------------
# Log-barrier interior point
# --------------------------------------------------------------------------


def _constraint_fn(constraints, vectorized):
    if callable(constraints):
        if vectorized:
            return lambda X: np.atleast_2d(np.asarray(constraints(X), dtype=np.float64))
        return lambda X: np.array(
            [np.atleast_1d(constraints(x)) for x in X], dtype=np.float64
        )
    funcs = list(constraints)
    if vectorized:
        return lambda X: np.column_stack([np.asarray(gi(X), dtype=np.float64) for gi in funcs])
    return lambda X: np.array([[gi(x) for gi in funcs] for x in X], dtype=np.float64)


def barrier_newton(
    objective,
    constraints,
    x0,
    theta0=1.0,
    eta=10.0,
    eps=1e-6,
    inner_tol=1e-6,
    max_inner=50,
    max_outer=100,
    vectorized=False,
):
    """Minimise ``objective`` subject to ``g_i(x) <= 0`` by the barrier method.

    Each centering step runs damped Newton on
    ``objective(x) - (1/theta) * sum(log(-g_i(x)))``. Derivatives of the
    objective and of each constraint come from finite differences; the
    barrier terms are assembled analytically from them, so stencil points may
    safely leave the feasible set. Newton systems are regularised with
    ``lambda * I`` (``lambda`` from 1e-8, times 10 on failure). The outer
    loop multiplies ``theta`` by ``eta`` until ``m / theta < eps``.

    ``constraints`` is either a list of scalar functions or one function
    returning all constraint values.
    """
    if theta0 <= 0:
        raise ValueError("theta0 must be positive")
    if eta <= 1:
        raise ValueError("eta must exceed 1")
    shape = np.shape(x0)
    x = np.array(x0, dtype=np.float64).ravel()
    n = x.size
    fb = _as_batch(objective, vectorized)
    gb = _constraint_fn(constraints, vectorized)

    def values(z):
        return float(fb(z[None, :])[0]), gb(z[None, :])[0]

    fx, gx = values(x)
    if not np.all(gx < 0) or not np.isfinite(fx):
        raise InfeasibleStart("x0 is not strictly feasible")
    m = gx.size

    def barrier_value(fz, gz, theta):
        if not np.isfinite(fz) or not np.all(gz < 0):
            return np.inf
        return fz - np.sum(np.log(-gz)) / theta

    theta = theta0
    total = 0
    history = [fx]
    reason = Termination.MAX_ITERATIONS
    for _ in range(max_outer):
        for _ in range(max_inner):
            pts, hg, hh, pairs = _stencil(x)
            fv = fb(pts)
            gv = gb(pts)
            f0, df, d2f = _derivs(fv, n, hg, hh, pairs)
            g0, dg, d2g = _derivs(gv, n, hg, hh, pairs)
            inv = 1.0 / (-g0)
            grad = df + (dg @ inv) / theta
            hess = d2f + (
                np.einsum("im,jm,m->ij", dg, dg, inv * inv) + np.einsum("ijm,m->ij", d2g, inv)
            ) / theta
            hess = 0.5 * (hess + hess.T)
            if np.max(np.abs(grad)) <= inner_tol:
                break
            phi0 = barrier_value(f0, g0, theta)
            lam = 1e-8
            accepted = False
            while lam <= 1e12 and not accepted:
                try:
                    Lh = np.linalg.cholesky(hess + lam * np.eye(n))
                except np.linalg.LinAlgError:
                    lam *= 10.0
                    continue
                step = -scipy.linalg.cho_solve((Lh, True), grad)
                slope = float(grad @ step)
                if -0.5 * slope <= inner_tol * inner_tol:
                    # Newton decrement below tolerance: centred
                    pz = phi0
                    break
                t = 1.0
                while t > 1e-6:
                    z = x + t * step
                    fz, gz = values(z)
                    pz = barrier_value(fz, gz, theta)
                    if pz <= phi0 + 1e-4 * t * slope:
                        accepted = True
                        break
                    t *= 0.5
                if not accepted:
                    lam *= 10.0
            if not accepted:
                break
            total += 1
            progress = phi0 - pz
            x, fx = z, fz
            history.append(fx)
            if progress <= 1e-15 * (1.0 + abs(phi0)):
                break
        if m / theta < eps:
            reason = Termination.TOLERANCE_MET
            break
        theta *= eta
    fx, _ = values(x)
    report = OptimizerReport(
        iterations=total,
        converged=reason is Termination.TOLERANCE_MET,
        final_objective=fx,
        termination_reason=reason,
        history=history,
    )
    return x.reshape(shape), report
