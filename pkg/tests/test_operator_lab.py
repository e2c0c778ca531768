"""Tests for the dense-matrix splitting-order bench."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsde.core import RngStream
from hsde.operator_lab import (
    GeneratorSet,
    SplitOrder,
    bch_truncated,
    error_order_slope,
    matrix_exp,
    randomized_expectation,
    run_order_trials,
    slope_band,
    splitting_product,
    spectral_norm,
)

from .oracles import expm_pade, log_of_product_exp

# the classic noncommuting 2x2 pair: a rotation generator and a shear
L_ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])
L_SHEAR = np.array([[0.0, 0.0], [1.0, 0.0]])


def small_matrices(n):
    return st.lists(
        st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False),
        min_size=n * n,
        max_size=n * n,
    ).map(lambda v: np.array(v).reshape(n, n))


class TestGeneratorSet:
    def test_basic_fields(self):
        G = GeneratorSet((L_ROT, L_SHEAR))
        assert G.n_parts == 2
        assert G.dim == 2
        np.testing.assert_array_equal(G.total, L_ROT + L_SHEAR)

    def test_rejects_mixed_dimensions(self):
        with pytest.raises(ValueError):
            GeneratorSet((L_ROT, np.eye(3)))

    def test_rejects_large_dimension(self):
        with pytest.raises(ValueError):
            GeneratorSet((np.eye(9),))

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            GeneratorSet(())
        with pytest.raises(ValueError):
            GeneratorSet((np.array([[np.nan, 0.0], [0.0, 0.0]]),))

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            GeneratorSet((np.zeros((2, 3)),))


class TestMatrixExp:
    def test_zero_matrix(self):
        np.testing.assert_array_equal(matrix_exp(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        E = matrix_exp(np.diag([1.0, -2.0]))
        np.testing.assert_allclose(E, np.diag([np.e, np.exp(-2.0)]), rtol=1e-14)

    def test_quarter_turn_rotation(self):
        E = matrix_exp((np.pi / 2) * np.array([[0.0, -1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(E, [[0.0, -1.0], [1.0, 0.0]], atol=1e-13)

    def test_against_pade_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 9))
            A = rng.normal(size=(n, n)) * rng.choice([0.01, 1.0, 10.0])
            got = matrix_exp(A)
            want = expm_pade(A)
            scale = max(float(np.abs(want).max()), 1.0)
            assert np.abs(got - want).max() / scale < 1e-12

    def test_semigroup_property(self):
        A = np.array([[0.3, -1.1], [0.7, 0.2]])
        np.testing.assert_allclose(
            matrix_exp(A) @ matrix_exp(A), matrix_exp(2 * A), rtol=1e-12
        )

    @settings(deadline=None, max_examples=30)
    @given(small_matrices(3))
    def test_inverse_is_exp_of_negation(self, A):
        P = matrix_exp(A) @ matrix_exp(-A)
        np.testing.assert_allclose(P, np.eye(3), atol=1e-10)

    def test_rejects_oversized(self):
        with pytest.raises(ValueError):
            matrix_exp(np.zeros((65, 65)))

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            matrix_exp(np.zeros((2, 3)))


class TestSplittingProduct:
    def test_single_part_all_orders(self):
        G = GeneratorSet((L_ROT,))
        want = matrix_exp(0.3 * L_ROT)
        for order in SplitOrder:
            np.testing.assert_array_equal(splitting_product(G, 0.3, order), want)

    def test_commuting_parts_are_exact(self):
        G = GeneratorSet((np.diag([0.5, -1.0]), np.diag([2.0, 0.3])))
        want = matrix_exp(0.2 * 2 * G.total)
        for order in SplitOrder:
            np.testing.assert_allclose(splitting_product(G, 0.2, order), want,
                                       rtol=1e-12)

    def test_backward_reverses_forward(self):
        G = GeneratorSet((L_ROT, L_SHEAR))
        G_rev = GeneratorSet((L_SHEAR, L_ROT))
        np.testing.assert_array_equal(
            splitting_product(G, 0.1, SplitOrder.BACKWARD),
            splitting_product(G_rev, 0.1, SplitOrder.FORWARD),
        )

    def test_forward_is_second_order_averaged_third(self):
        G = GeneratorSet((L_ROT, L_SHEAR))
        etas = [0.1, 0.05, 0.025]
        errs_f, errs_a = [], []
        for eta in etas:
            exact = matrix_exp(2 * eta * G.total)
            errs_f.append(spectral_norm(splitting_product(G, eta, "forward") - exact))
            errs_a.append(spectral_norm(splitting_product(G, eta, "averaged") - exact))
        slope_f, _ = error_order_slope(etas, errs_f)
        slope_a, _ = error_order_slope(etas, errs_a)
        assert 1.8 < slope_f < 2.2
        assert 2.7 < slope_a < 3.3

    def test_rejects_nonpositive_eta(self):
        G = GeneratorSet((L_ROT,))
        with pytest.raises(ValueError):
            splitting_product(G, 0.0, "forward")


class TestRandomizedExpectation:
    def test_single_part(self):
        G = GeneratorSet((L_SHEAR,))
        np.testing.assert_array_equal(
            randomized_expectation(G, 0.4), matrix_exp(0.4 * L_SHEAR)
        )

    def test_two_parts_equal_averaged(self):
        G = GeneratorSet((L_ROT, L_SHEAR))
        np.testing.assert_allclose(
            randomized_expectation(G, 0.07),
            splitting_product(G, 0.07, SplitOrder.AVERAGED),
            atol=1e-15,
        )

    def test_three_part_slope_is_third_order(self):
        rng = np.random.default_rng(5)
        G = GeneratorSet(tuple(rng.uniform(-1, 1, (3, 3)) for _ in range(3)))
        etas = [0.1, 0.05, 0.025, 0.0125]
        errs = [
            spectral_norm(randomized_expectation(G, e) - matrix_exp(3 * e * G.total))
            for e in etas
        ]
        slope, r2 = error_order_slope(etas, errs)
        assert 2.7 < slope < 3.3
        assert r2 > 0.99

    def test_reverse_pairing_identity(self):
        # each of the K!/2 orderings paired with its reversal averages to a
        # back-and-forth product; their mean must reproduce the full average
        rng = np.random.default_rng(9)
        for k in (2, 3, 4):
            G = GeneratorSet(tuple(rng.uniform(-1, 1, (2, 2)) for _ in range(k)))
            factors = [matrix_exp(0.11 * k * L) for L in G.mats]

            def prod(order):
                out = np.eye(2)
                for i in order:
                    out = out @ factors[i]
                return out

            seen = set()
            pair_means = []
            for perm in itertools.permutations(range(k)):
                if perm in seen:
                    continue
                seen.add(perm)
                seen.add(perm[::-1])
                pair_means.append(0.5 * (prod(perm) + prod(perm[::-1])))
            want = sum(pair_means) / len(pair_means)
            np.testing.assert_allclose(
                randomized_expectation(G, 0.11), want, atol=1e-12
            )

    def test_rejects_too_many_parts(self):
        G = GeneratorSet(tuple(np.eye(2) for _ in range(7)))
        with pytest.raises(ValueError):
            randomized_expectation(G, 0.1)


class TestBchTruncated:
    def test_commuting_matrices_all_orders(self):
        A = np.diag([1.0, 2.0])
        B = np.diag([-0.5, 3.0])
        for order in (2, 3, 4, 5):
            np.testing.assert_allclose(bch_truncated(A, B, order), A + B,
                                       atol=1e-15)

    def test_antisymmetric_difference_is_the_bracket(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 3))
        diff = bch_truncated(A, B, 2) - bch_truncated(B, A, 2)
        np.testing.assert_allclose(diff, A @ B - B @ A, rtol=1e-13, atol=1e-13)

    @pytest.mark.parametrize("order", [2, 3, 4, 5])
    def test_truncation_error_slope(self, order):
        # truncating after commutator order k leaves an O(eps^(k+1)) defect
        # against log(exp(eps A) exp(eps B)) computed by an independent route
        rng = np.random.default_rng(12)
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 3))
        eps_grid = [0.2, 0.1, 0.05, 0.025]
        errs = []
        for eps in eps_grid:
            Z = bch_truncated(eps * A, eps * B, order)
            errs.append(spectral_norm(Z - log_of_product_exp(eps * A, eps * B)))
        slope, r2 = error_order_slope(eps_grid, errs)
        assert order + 0.75 < slope < order + 1.25
        assert r2 > 0.995

    def test_order_two_exponent_scaling(self):
        # the acceptance protocol: exp(eps A) exp(eps B) vs exp(Z2) at
        # slope 3 over a small-eps grid
        rng = np.random.default_rng(4)
        A = rng.normal(size=(2, 2))
        B = rng.normal(size=(2, 2))
        eps_grid = [0.05, 0.025, 0.0125, 0.00625]
        errs = []
        for eps in eps_grid:
            lhs = matrix_exp(eps * A) @ matrix_exp(eps * B)
            rhs = matrix_exp(bch_truncated(eps * A, eps * B, 2))
            errs.append(spectral_norm(lhs - rhs))
        slope, _ = error_order_slope(eps_grid, errs)
        assert abs(slope - 3.0) < 0.1

    def test_rejects_bad_order(self):
        A = np.eye(2)
        for order in (1, 6, 0):
            with pytest.raises(ValueError):
                bch_truncated(A, A, order)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            bch_truncated(np.eye(2), np.eye(3), 2)


class TestErrorOrderSlope:
    def test_exact_square_law(self):
        etas = np.array([0.1, 0.05, 0.025, 0.0125])
        slope, r2 = error_order_slope(etas, 3.7 * etas**2)
        assert abs(slope - 2.0) < 1e-10
        assert r2 > 1 - 1e-12

    def test_exact_cube_law(self):
        etas = np.array([0.4, 0.2, 0.1])
        slope, _ = error_order_slope(etas, 0.01 * etas**3)
        assert abs(slope - 3.0) < 1e-10

    def test_constant_errors(self):
        slope, r2 = error_order_slope([0.1, 0.05, 0.025], [2.0, 2.0, 2.0])
        assert slope == pytest.approx(0.0, abs=1e-12)
        assert r2 == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            error_order_slope([0.1, 0.05], [1.0, 2.0])
        with pytest.raises(ValueError):
            error_order_slope([0.1, 0.05, 0.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            error_order_slope([0.1, 0.05, 0.025], [1.0, -2.0, 3.0])
        with pytest.raises(ValueError):
            error_order_slope([0.1, 0.1, 0.1], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            error_order_slope([0.1, 0.05, 0.025], [1.0, 2.0])


class TestSpectralNorm:
    def test_diagonal(self):
        assert spectral_norm(np.diag([3.0, -7.0, 1.0])) == pytest.approx(7.0, rel=1e-12)

    def test_zero(self):
        assert spectral_norm(np.zeros((4, 4))) == 0.0

    def test_against_svd(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            M = rng.normal(size=(4, 4))
            want = float(np.linalg.norm(M, 2))
            assert spectral_norm(M) == pytest.approx(want, rel=1e-6)

    def test_scaling_equivariance(self):
        rng = np.random.default_rng(3)
        M = rng.normal(size=(3, 3))
        assert spectral_norm(2.5 * M) == pytest.approx(2.5 * spectral_norm(M),
                                                       rel=1e-9)


class TestRunOrderTrials:
    def test_deterministic(self):
        a = run_order_trials(5, RngStream(7, 0))
        b = run_order_trials(5, RngStream(7, 0))
        assert [t.slope for t in a] == [t.slope for t in b]
        assert [t.errors for t in a] == [t.errors for t in b]

    def test_structure(self):
        trials = run_order_trials(4, RngStream(1, 0), modes=("forward",))
        assert len(trials) == 4
        for t in trials:
            assert t.mode == "forward"
            assert 2 <= t.n_parts <= 4
            assert 2 <= t.dim <= 4
            assert len(t.errors) == 4

    def test_slope_bands_hold_on_random_draws(self):
        trials = run_order_trials(20, RngStream(7, 0))
        by_mode = {}
        for t in trials:
            lo, hi = slope_band(t.mode)
            by_mode.setdefault(t.mode, []).append(lo <= t.slope <= hi)
        for mode, hits in by_mode.items():
            assert np.mean(hits) >= 0.9, mode

    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            run_order_trials(0, RngStream(0, 0))
