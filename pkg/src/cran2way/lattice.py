"""Integer coefficient selection by LLL reduction, with a brute-force oracle.

Coefficient vectors ``a`` are measured by ``||F a||`` for a generator matrix
``F`` (full column rank), i.e. by the quadratic form ``a^T (F^T F) a``.
Callers that hold a Gram matrix directly can use the ``*_gram`` variants.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import RankDeficient, SelectionFailed, TooLarge
from .numerics import as_matrix, integer_rank

DEFAULT_DELTA = 0.75


@dataclass(frozen=True)
class ReductionResult:
    reduced_basis: np.ndarray  # rows are integer coefficient vectors
    norms: np.ndarray  # ||F a_i|| per row
    delta: float

    def __post_init__(self):
        if not 0.25 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0.25, 1]")


def canonical_sign(a):
    """Flip ``a`` so its first nonzero entry is positive."""
    a = np.asarray(a, dtype=np.int64)
    nz = np.flatnonzero(a)
    if nz.size and a[nz[0]] < 0:
        return -a
    return a.copy()


def _sort_key(a, norm_sq):
    # quantise so equal norms computed through different float paths tie
    return (float(f"{norm_sq:.12g}"), tuple(int(v) for v in a))


def _gram_of(F):
    F = as_matrix(F, "F")
    return F.T @ F


def lll_reduce_gram(G, delta=DEFAULT_DELTA, basis=None):
    """LLL on integer basis rows (default: identity) under Gram matrix ``G``."""
    if not 0.25 < delta <= 1.0:
        raise ValueError("delta must lie in (0.25, 1]")
    G = np.ascontiguousarray(G, dtype=np.float64)
    n = G.shape[0]
    U0 = np.eye(n, dtype=np.int64) if basis is None else np.array(basis, dtype=np.int64)
    if U0.shape != (n, n):
        raise ValueError(f"basis must be {n}x{n}, got {U0.shape}")
    U, ok = _kernels.lll_gram(G, np.ascontiguousarray(U0), float(delta))
    if not ok:
        raise RankDeficient("generator matrix is rank deficient")
    U = np.array([canonical_sign(row) for row in U], dtype=np.int64)
    norms = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", U, G, U), 0.0))
    return ReductionResult(reduced_basis=U, norms=norms, delta=float(delta))


def lll_reduce(F, delta=DEFAULT_DELTA, basis=None):
    """LLL-reduce the lattice ``{F a : a integer}``.

    Parameters
    ----------
    F : (m, n) array, full column rank
    delta : float
        Lovasz parameter in (0.25, 1].
    basis : (n, n) integer array, optional
        Starting coefficient rows; identity when omitted.

    Returns
    -------
    ReductionResult
        Rows of ``reduced_basis`` form a unimodular matrix (when starting
        from the identity) satisfying the Lovasz condition under ``||F a||``.
    """
    G = _gram_of(F)
    if np.linalg.matrix_rank(np.asarray(F, dtype=float)) < G.shape[0]:
        raise RankDeficient("F does not have full column rank")
    return lll_reduce_gram(G, delta=delta, basis=basis)


def _greedy_full_rank(candidates, n_rows, require_fullrank_prefixes=True):
    chosen = []
    for a in candidates:
        trial = chosen + [a]
        if require_fullrank_prefixes and integer_rank(np.array(trial)) < len(trial):
            continue
        chosen = trial
        if len(chosen) == n_rows:
            break
    return chosen


def select_from_gram(G, n_rows, require_fullrank_prefixes=True, delta=DEFAULT_DELTA):
    """Greedy ``n_rows`` LLL rows ordered by increasing ``a^T G a``."""
    G = np.asarray(G, dtype=np.float64)
    if n_rows > G.shape[0]:
        raise ValueError("n_rows exceeds the lattice dimension")
    red = lll_reduce_gram(G, delta=delta)
    order = sorted(
        range(len(red.reduced_basis)),
        key=lambda i: _sort_key(red.reduced_basis[i], red.norms[i] ** 2),
    )
    cands = [red.reduced_basis[i] for i in order]
    chosen = _greedy_full_rank(cands, n_rows, require_fullrank_prefixes)
    if len(chosen) < n_rows:
        raise SelectionFailed(f"only {len(chosen)} independent rows available")
    A = np.array(chosen, dtype=np.int64)
    assert integer_rank(A) == n_rows
    return A


def select_coefficient_matrix(F, n_rows, require_fullrank_prefixes=True, delta=DEFAULT_DELTA):
    """Full-rank integer matrix of short coefficient rows for generator ``F``.

    Rows come from the LLL-reduced basis, ordered by increasing ``||F a||``
    (ties: lexicographically smallest canonical vector). With
    ``require_fullrank_prefixes`` every leading block of k rows has rank k.
    """
    G = _gram_of(F)
    if np.linalg.matrix_rank(np.asarray(F, dtype=float)) < G.shape[0]:
        raise RankDeficient("F does not have full column rank")
    return select_from_gram(G, n_rows, require_fullrank_prefixes, delta)


def brute_force_shortest(F, n_rows, coeff_bound):
    """Exhaustive greedy selection of short independent integer vectors.

    Enumerates every ``a`` with ``max|a_i| <= coeff_bound`` (one sign per
    +/- pair) and picks vectors of minimal ``||F a||`` while keeping the
    selection full rank. Exponential; limited to dimension 4 and bound 10.
    """
    G = _gram_of(F)
    n = G.shape[0]
    if n > 4 or coeff_bound > 10:
        raise TooLarge("brute force limited to dimension <= 4 and bound <= 10")
    if n_rows > n:
        raise ValueError("n_rows exceeds the lattice dimension")
    rng = range(-coeff_bound, coeff_bound + 1)
    pts = np.array(list(itertools.product(rng, repeat=n)), dtype=np.int64)
    nz = pts != 0
    first = np.argmax(nz, axis=1)
    keep = nz.any(axis=1) & (pts[np.arange(len(pts)), first] > 0)
    pts = pts[keep]
    norm_sq = np.einsum("ij,jk,ik->i", pts, G, pts)
    order = sorted(range(len(pts)), key=lambda i: _sort_key(pts[i], norm_sq[i]))
    chosen = _greedy_full_rank((pts[i] for i in order), n_rows)
    if len(chosen) < n_rows:
        raise SelectionFailed("coefficient bound too small for a full-rank selection")
    return np.array(chosen, dtype=np.int64)
