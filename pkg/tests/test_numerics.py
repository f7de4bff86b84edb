from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cran2way.errors import DimensionMismatch, InfeasibleStart, NoSignChange, NotPositiveDefinite
from cran2way.numerics import (
    OptimizerReport,
    Termination,
    barrier_newton,
    bfgs_minimize,
    bisection,
    cholesky,
    fd_gradient,
    integer_rank,
    solve_spd,
    wolfe_line_search,
)


def fraction_rank(A):
    """Rank by plain Gaussian elimination over the rationals."""
    M = [[Fraction(int(v)) for v in row] for row in A]
    rank = 0
    cols = len(M[0]) if M else 0
    for c in range(cols):
        piv = next((r for r in range(rank, len(M)) if M[r][c] != 0), None)
        if piv is None:
            continue
        M[rank], M[piv] = M[piv], M[rank]
        for r in range(len(M)):
            if r != rank and M[r][c] != 0:
                f = M[r][c] / M[rank][c]
                M[r] = [x - f * y for x, y in zip(M[r], M[rank])]
        rank += 1
    return rank


class TestCholesky:
    def test_identity(self):
        assert np.array_equal(cholesky(np.eye(3)), np.eye(3))

    def test_two_by_two(self):
        L = cholesky([[4, 2], [2, 5]])
        assert np.allclose(L, [[2, 0], [1, 2]], atol=1e-15)
        assert np.allclose(L @ L.T, [[4, 2], [2, 5]], rtol=1e-14)

    def test_scalar(self):
        assert cholesky([[9]])[0, 0] == 3.0

    def test_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky([[1, 2], [2, 1]])

    def test_zero_pivot(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky([[0.0, 0.0], [0.0, 1.0]])

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            cholesky([[2.0, 1.0], [0.0, 2.0]])

    def test_tiny_asymmetry_symmetrised(self):
        A = np.array([[4.0, 2.0], [2.0 + 1e-14, 5.0]])
        L = cholesky(A)
        assert np.allclose(L @ L.T, 0.5 * (A + A.T), rtol=1e-14)

    def test_non_square(self):
        with pytest.raises(DimensionMismatch):
            cholesky(np.ones((2, 3)))

    def test_random_spd_reconstruction(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = rng.integers(1, 7)
            G = rng.standard_normal((n, n))
            A = G.T @ G + np.eye(n)
            L = cholesky(A)
            assert np.allclose(L, np.tril(L))
            assert np.all(np.diag(L) > 0)
            assert np.linalg.norm(L @ L.T - A) / np.linalg.norm(A) <= 1e-10


class TestSolveSpd:
    def test_identity(self):
        B = np.array([[1.0, -2.0], [3.0, 0.5]])
        assert np.allclose(solve_spd(np.eye(2), B), B)

    def test_diagonal(self):
        assert np.allclose(solve_spd([[2, 0], [0, 4]], [[2], [8]]), [[1], [2]])

    def test_self_solve(self):
        A = np.array([[4.0, 2.0], [2.0, 5.0]])
        assert np.allclose(solve_spd(A, A), np.eye(2), atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            solve_spd(np.eye(2), np.ones((3, 1)))

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            solve_spd([[-1.0]], [[1.0]])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_round_trip(self, n, seed):
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((n, n))
        A = G.T @ G + np.eye(n)
        B = rng.standard_normal((n, 3))
        X = solve_spd(A, B)
        assert np.linalg.norm(A @ X - B) <= 1e-9 * np.linalg.norm(B)


class TestIntegerRank:
    def test_examples(self):
        assert integer_rank(np.eye(4, dtype=int)) == 4
        assert integer_rank([[1, 2], [2, 4]]) == 1
        assert integer_rank([[1, 0], [4, 1]]) == 2

    def test_zero_and_empty(self):
        assert integer_rank(np.zeros((3, 3), dtype=int)) == 0
        assert integer_rank(np.zeros((0, 0), dtype=int)) == 0

    def test_large_entries_exact(self):
        # floating rank would lose the difference between these rows
        big = 2**60
        assert integer_rank([[big, big + 1], [big + 1, big + 2]]) == 2

    def test_rejects_fractional(self):
        with pytest.raises(ValueError):
            integer_rank([[0.5, 1]])

    def test_agrees_with_svd_rank(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            r, c = rng.integers(1, 6, size=2)
            A = rng.integers(-5, 6, size=(r, c))
            if rng.random() < 0.3 and r > 1:
                A[-1] = A[0] * rng.integers(-2, 3)
            svd = int(np.sum(np.linalg.svd(A.astype(float), compute_uv=False) > 1e-8))
            assert integer_rank(A) == svd

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(
            st.lists(st.integers(-50, 50), min_size=4, max_size=4), min_size=1, max_size=5
        )
    )
    def test_agrees_with_rational_elimination(self, rows):
        assert integer_rank(rows) == fraction_rank(rows)


class TestBisection:
    def test_sqrt2(self):
        x = bisection(lambda x: x * x - 2, 0, 2, eps=1e-6)
        assert abs(x - np.sqrt(2)) <= 1e-6

    def test_symmetric(self):
        assert bisection(lambda x: x, -1, 1) == 0.0

    def test_power_of_two(self):
        assert abs(bisection(lambda x: 2**x - 8, 0, 10, eps=1e-9) - 3) <= 1e-6

    def test_no_sign_change(self):
        with pytest.raises(NoSignChange):
            bisection(lambda x: x * x + 1, -1, 1)

    def test_width_halves_exactly(self):
        widths = []
        bisection(lambda x: x - 0.3, 0.0, 1.0, eps=1e-12, callback=lambda lo, hi: widths.append(hi - lo))
        assert all(b == a / 2 for a, b in zip(widths, widths[1:]))

    def test_max_iter_bounds_halvings(self):
        calls = []
        bisection(lambda x: x - 0.3, 0.0, 1.0, eps=1e-15, max_iter=5, callback=lambda lo, hi: calls.append(1))
        assert len(calls) <= 5

    def test_decreasing_function(self):
        x = bisection(lambda x: 1 - x, 0, 3, eps=1e-8)
        assert abs(x - 1) <= 1e-8


def rosenbrock(x):
    return 100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2


def rosenbrock_grad(x):
    return np.array(
        [-400.0 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200.0 * (x[1] - x[0] ** 2)]
    )


class TestBFGS:
    def test_shifted_quadratic(self):
        c = np.array([1.0, -2.0, 3.0])
        x, rep = bfgs_minimize(
            lambda z: float(np.sum((z - c) ** 2)), np.zeros(3), grad=lambda z: 2 * (z - c)
        )
        assert np.allclose(x, c, atol=1e-8)
        assert rep.converged and rep.iterations <= 4

    def test_rosenbrock_analytic_gradient(self):
        x, rep = bfgs_minimize(rosenbrock, [-1.2, 1.0], grad=rosenbrock_grad, tol=1e-9)
        assert np.max(np.abs(x - 1.0)) <= 1e-6
        assert rep.iterations <= 200

    def test_rosenbrock_finite_difference(self):
        x, rep = bfgs_minimize(rosenbrock, [-1.2, 1.0], tol=1e-8)
        assert np.max(np.abs(x - 1.0)) <= 1e-6

    def test_spd_quadratic_to_origin(self):
        rng = np.random.default_rng(3)
        G = rng.standard_normal((4, 4))
        Q = G.T @ G + np.eye(4)
        x, rep = bfgs_minimize(lambda z: float(z @ Q @ z), rng.standard_normal(4), grad=lambda z: 2 * Q @ z)
        assert np.linalg.norm(x) <= 1e-6

    def test_quadratic_monotone_and_tolerance(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n = 5
            G = rng.standard_normal((n, n))
            Q = G.T @ G + 0.1 * np.eye(n)
            b = rng.standard_normal(n)
            x, rep = bfgs_minimize(
                lambda z: float(z @ Q @ z - b @ z), rng.standard_normal(n), grad=lambda z: 2 * Q @ z - b
            )
            h = rep.history
            assert all(b2 <= a + 1e-12 for a, b2 in zip(h, h[1:]))
            assert np.max(np.abs(2 * Q @ x - b)) <= 1e-6

    def test_shape_preserved(self):
        x, _ = bfgs_minimize(lambda z: float(np.sum((z - 1) ** 2)), np.zeros((2, 3)))
        assert x.shape == (2, 3)
        assert np.allclose(x, 1, atol=1e-6)

    def test_vectorized_matches_scalar(self):
        def f(z):
            return float(np.sum((z - 2) ** 2) + z[0] * z[1])

        def fv(Z):
            return np.sum((Z - 2) ** 2, axis=1) + Z[:, 0] * Z[:, 1]

        a, _ = bfgs_minimize(f, np.zeros(2))
        b, _ = bfgs_minimize(fv, np.zeros(2), vectorized=True)
        assert np.allclose(a, b, atol=1e-12)

    def test_invalid_wolfe_constants(self):
        with pytest.raises(ValueError):
            bfgs_minimize(rosenbrock, [0, 0], c1=0.9, c2=0.1)

    def test_line_search_failure_reported(self):
        # unbounded below: the slope never flattens, so no step meets the curvature condition
        x, rep = bfgs_minimize(lambda z: -float(z[0]), [0.0], grad=lambda z: np.array([-1.0]))
        assert rep.termination_reason is Termination.LINE_SEARCH_FAILED
        assert not rep.converged
        assert rep.iterations == 0


class TestFiniteDifference:
    def test_quadratic_gradient(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = 4
            G = rng.standard_normal((n, n))
            Q = G.T @ G
            b = rng.standard_normal(n)
            x = rng.standard_normal(n) * 3
            g = fd_gradient(lambda z: float(z @ Q @ z + b @ z), x)
            exact = 2 * Q @ x + b
            assert np.linalg.norm(g - exact) <= 1e-5 * max(np.linalg.norm(exact), 1.0)


class TestWolfe:
    def test_conditions_hold(self):
        def phi(a):
            return (a - 2.0) ** 2, 2 * (a - 2.0), a

        a, fa, _ = wolfe_line_search(phi, c1=1e-4, c2=0.9)
        f0, d0 = 4.0, -4.0
        assert fa <= f0 + 1e-4 * a * d0
        assert abs(2 * (a - 2.0)) <= 0.9 * abs(d0)

    def test_not_descent(self):
        from cran2way.errors import LineSearchFailed

        with pytest.raises(LineSearchFailed):
            wolfe_line_search(lambda a: (a, 1.0, None))


class TestBarrier:
    def test_active_lower_bound(self):
        x, rep = barrier_newton(lambda z: float(z[0]), [lambda z: 1.0 - z[0]], [2.0], eps=1e-8)
        assert rep.converged
        assert 1.0 < x[0] <= 1.0 + 1e-6

    def test_interior_optimum(self):
        x, rep = barrier_newton(
            lambda z: float(z @ z), [lambda z: float(z @ z) - 4.0], [1.0, 0.0]
        )
        assert np.linalg.norm(x) <= 1e-4

    def test_log_objective_to_boundary(self):
        x, rep = barrier_newton(lambda z: -float(np.log(z[0])), [lambda z: z[0] - 2.0], [1.0])
        assert abs(x[0] - 2.0) <= 1e-3

    def test_stopping_rule(self):
        _, rep = barrier_newton(
            lambda z: float(z[0] + z[1]),
            [lambda z: -z[0], lambda z: -z[1]],
            [1.0, 1.0],
            theta0=1.0,
            eta=10.0,
            eps=1e-6,
        )
        assert rep.converged and rep.termination_reason is Termination.TOLERANCE_MET

    def test_constraint_margins(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            c = rng.standard_normal(3) * 3
            cons = [lambda z: float(z @ z) - 1.0, lambda z: z[0] - 0.2]
            x, _ = barrier_newton(lambda z: float(np.sum((z - c) ** 2)), cons, np.zeros(3))
            assert min(-g(x) for g in cons) >= -1e-8

    def test_vector_constraint_function(self):
        x, _ = barrier_newton(
            lambda Z: Z[:, 0] + Z[:, 1],
            lambda Z: np.column_stack([1 - Z[:, 0], 2 - Z[:, 1]]),
            [3.0, 3.0],
            vectorized=True,
        )
        assert np.allclose(x, [1.0, 2.0], atol=1e-5)

    def test_infeasible_start(self):
        with pytest.raises(InfeasibleStart):
            barrier_newton(lambda z: float(z[0]), [lambda z: 1.0 - z[0]], [0.5])

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            barrier_newton(lambda z: 0.0, [lambda z: -1.0], [0.0], theta0=0.0)
        with pytest.raises(ValueError):
            barrier_newton(lambda z: 0.0, [lambda z: -1.0], [0.0], eta=1.0)


class TestReport:
    def test_invariants(self):
        with pytest.raises(ValueError):
            OptimizerReport(-1, False, 0.0, Termination.MAX_ITERATIONS)
        with pytest.raises(ValueError):
            OptimizerReport(1, True, 0.0, Termination.MAX_ITERATIONS)
        OptimizerReport(0, True, 0.0, Termination.TOLERANCE_MET)
