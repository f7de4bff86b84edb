"""Exact side-information cancellation over the integers modulo a prime.

The nested-lattice modulo operation is replaced by arithmetic in ``Z_q``.
That is enough to check the decoding chain at zero noise: the BBU decodes
``A_psi W S``, each user applies its row of ``W^T A_psi^-1`` to get its pair
sum, then subtracts its own codeword to obtain its partner's.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NotInvertibleModQ
from .system import check_pairing, partner


def is_prime(q):
    q = int(q)
    if q < 2:
        return False
    i = 2
    while i * i <= q:
        if q % i == 0:
            return False
        i += 1
    return True


def _check_modulus(q):
    if not is_prime(q):
        raise ValueError(f"modulus must be prime, got {q}")
    return int(q)


@dataclass(frozen=True)
class ModulusField:
    q: int

    def __post_init__(self):
        _check_modulus(self.q)

    def reduce(self, v):
        return mod_reduce(v, self.q)


def mod_reduce(v, q):
    """Coordinatewise ``v mod q`` with results in ``[0, q)``."""
    q = _check_modulus(q)
    return np.mod(np.asarray(v, dtype=np.int64), q)


def det_mod(A, q):
    """Determinant of a square integer matrix modulo ``q`` (Gaussian elimination)."""
    q = _check_modulus(q)
    A = [[int(x) % q for x in row] for row in np.asarray(A, dtype=np.int64)]
    n = len(A)
    det = 1
    for c in range(n):
        piv = next((r for r in range(c, n) if A[r][c]), None)
        if piv is None:
            return 0
        if piv != c:
            A[c], A[piv] = A[piv], A[c]
            det = -det
        det = det * A[c][c] % q
        inv = pow(A[c][c], -1, q)
        for r in range(c + 1, n):
            f = A[r][c] * inv % q
            if f:
                A[r] = [(x - f * y) % q for x, y in zip(A[r], A[c])]
    return det % q


def inverse_mod(A, q):
    """Inverse of a square integer matrix over ``Z_q``."""
    q = _check_modulus(q)
    A = np.asarray(A, dtype=np.int64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    aug = [[int(x) % q for x in row] + [int(i == j) for j in range(n)] for i, row in enumerate(A)]
    for c in range(n):
        piv = next((r for r in range(c, n) if aug[r][c]), None)
        if piv is None:
            raise NotInvertibleModQ(f"matrix is singular modulo {q}")
        aug[c], aug[piv] = aug[piv], aug[c]
        inv = pow(aug[c][c], -1, q)
        aug[c] = [x * inv % q for x in aug[c]]
        for r in range(n):
            if r != c and aug[r][c]:
                f = aug[r][c]
                aug[r] = [(x - f * y) % q for x, y in zip(aug[r], aug[c])]
    return np.array([row[n:] for row in aug], dtype=np.int64)


def verify_pair_cancellation(W, A_psi, S, k, q):
    """Codeword of user ``k``'s partner, recovered from the decoded combinations.

    ``S`` holds one codeword per user (rows; a 1-D array is read as scalar
    codewords). Raises :class:`NotInvertibleModQ` when ``A_psi`` is singular
    modulo ``q``.
    """
    q = _check_modulus(q)
    W = check_pairing(np.asarray(W, dtype=np.int64))
    A_psi = np.asarray(A_psi, dtype=np.int64)
    S = np.asarray(S, dtype=np.int64)
    scalar = S.ndim == 1
    S = mod_reduce(S.reshape(S.shape[0], -1), q)
    if S.shape[0] != W.shape[1]:
        raise ValueError(f"need {W.shape[1]} codewords, got {S.shape[0]}")
    Ainv = inverse_mod(A_psi, q)
    V = mod_reduce(A_psi @ mod_reduce(W @ S, q), q)
    pair_sum = mod_reduce((W.T @ Ainv)[k] @ V, q)
    out = mod_reduce(pair_sum - S[k], q)
    assert np.array_equal(out, S[partner(W, k)])
    return out[0] if scalar else out
