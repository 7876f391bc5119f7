import numpy as np
import pytest

from tnn import (
    ParameterError,
    PreconditionError,
    asarray,
    build_net,
    decomposition_sum,
    duality_gap_check,
    family_from_tensor,
    holder_norm,
    inner,
    multilinear_contract,
    nuclear_sandwich,
    outer_atom,
    restricted_norm_check,
    spectral_certified_upper,
    spectral_hopm,
    spectral_net_bounds,
    spectral_symmetric_banach,
)
from conftest import e

SQ3 = np.sqrt(3.0)


def perm_sum_tensor(t):
    """t * (e1 (x) e2 (x) e2 + e2 (x) e1 (x) e2 + e2 (x) e2 (x) e1)."""
    return t * (
        outer_atom([e(2, 0), e(2, 1), e(2, 1)])
        + outer_atom([e(2, 1), e(2, 0), e(2, 1)])
        + outer_atom([e(2, 1), e(2, 1), e(2, 0)])
    )


def diag_plus_corner(t):
    """Diagonal 3x3x3 identity plus t at the (1,2,3) corner."""
    T = sum(outer_atom([e(3, i)] * 3) for i in range(3))
    return asarray(T + t * outer_atom([e(3, 0), e(3, 1), e(3, 2)]))


class TestSpectralHopm:
    def test_rank_one_atom(self, rng):
        factors = [v / np.linalg.norm(v)
                   for v in (rng.standard_normal(3) for _ in range(3))]
        res = spectral_hopm(outer_atom(factors))
        assert res.value == pytest.approx(1.0, abs=1e-10)

    def test_perm_sum_closed_form(self):
        res = spectral_hopm(asarray(perm_sum_tensor(1.0)))
        assert res.value == pytest.approx(2.0 / SQ3, abs=1e-8)

    def test_diag_corner_half(self):
        res = spectral_hopm(diag_plus_corner(0.5))
        assert res.value == pytest.approx(1.0, abs=1e-8)

    def test_maximizer_consistency(self, rng):
        T = asarray(rng.standard_normal((2, 3, 2)))
        res = spectral_hopm(T)
        val = multilinear_contract(T, list(res.maximizers))
        assert abs(val) == pytest.approx(res.value, abs=1e-10)

    def test_zero_tensor(self):
        res = spectral_hopm(np.zeros((2, 2)))
        assert res.value == 0.0

    def test_matrix_matches_svd(self, rng):
        A = rng.standard_normal((4, 5))
        res = spectral_hopm(asarray(A))
        assert res.value == pytest.approx(np.linalg.norm(A, 2), abs=1e-10)

    def test_scale_equivariance(self, rng):
        T = rng.standard_normal((2, 2, 2))
        v1 = spectral_hopm(asarray(T)).value
        v2 = spectral_hopm(asarray(3.0 * T)).value
        assert v2 == pytest.approx(3.0 * v1, rel=1e-10)

    def test_lower_bounds_holder_inf(self, rng):
        for _ in range(10):
            T = asarray(rng.standard_normal((2, 2, 2)))
            assert spectral_hopm(T).value >= holder_norm(T, np.inf) - 1e-10


class TestSpectralCertified:
    def test_encloses_closed_form(self):
        T = asarray(perm_sum_tensor(1.0))
        lo, up = spectral_certified_upper(T, tol=1e-6)
        assert lo <= 2.0 / SQ3 + 1e-8
        assert up >= 2.0 / SQ3 - 1e-8
        assert up - lo <= 1e-6 + 1e-12

    def test_threshold_mode_feasible(self):
        lo, up = spectral_certified_upper(
            diag_plus_corner(0.5), tol=5e-4, threshold=1.001
        )
        assert up <= 1.001

    def test_threshold_mode_infeasible(self):
        lo, up = spectral_certified_upper(
            diag_plus_corner(1.5), tol=5e-4, threshold=1.001
        )
        assert lo > 1.001

    def test_refuses_large_fixed_modes(self):
        with pytest.raises(ParameterError):
            spectral_certified_upper(np.ones((5, 6, 7)), tol=1e-3)

    def test_matrix_exact(self, rng):
        A = rng.standard_normal((3, 3))
        lo, up = spectral_certified_upper(asarray(A), tol=1e-9)
        s = np.linalg.norm(A, 2)
        assert lo <= s <= up
        assert up - lo <= 1e-8


class TestNetBounds:
    def test_unit_atom_two_x_bound(self):
        T = outer_atom([e(2, 0)] * 3)
        net = build_net((2, 2, 2), 1.0 / 6.0)
        lo, up = spectral_net_bounds(T, net)
        assert lo <= 1.0 + 1e-12
        assert up <= 2.0 + 1e-12
        assert up >= 1.0 - 1e-12

    def test_zero_tensor(self):
        net = build_net((2, 2, 2), 0.05)
        lo, up = spectral_net_bounds(np.zeros((2, 2, 2)), net)
        assert (lo, up) == (0.0, 0.0)

    def test_perm_sum_interval(self):
        T = asarray(perm_sum_tensor(1.0))
        net = build_net((2, 2, 2), 0.02)
        lo, up = spectral_net_bounds(T, net)
        assert lo <= 2.0 / SQ3 <= up
        assert up - lo <= 0.075

    def test_monotone_refinement(self):
        T = asarray(perm_sum_tensor(0.7))
        widths = []
        for eps in (0.1, 0.05, 0.02):
            lo, up = spectral_net_bounds(T, build_net((2, 2, 2), eps))
            widths.append(up - lo)
        assert widths[0] >= widths[1] >= widths[2]

    def test_epsilon_range_enforced(self):
        with pytest.raises(ParameterError):
            build_net((2, 2, 2), 0.5)  # >= 1/d


class TestSymmetricBanach:
    def test_diag_identity(self):
        T = outer_atom([e(2, 0)] * 3) + outer_atom([e(2, 1)] * 3)
        assert spectral_symmetric_banach(asarray(T)) == pytest.approx(
            1.0, abs=1e-8
        )

    def test_perm_sum_plus_corner_at_boundary(self):
        Z = outer_atom([e(2, 0)] * 3)
        T = asarray(Z + perm_sum_tensor(-1.0))
        assert spectral_symmetric_banach(T) == pytest.approx(1.0, abs=1e-8)

    def test_supercritical_closed_form(self):
        t = 0.6
        Z = outer_atom([e(2, 0)] * 3)
        T = asarray(Z + perm_sum_tensor(t))
        expected = 2.0 * np.sqrt(t ** 3 / (3.0 * t - 1.0))
        assert spectral_symmetric_banach(T) == pytest.approx(expected,
                                                             abs=1e-8)

    def test_rejects_asymmetric(self, rng):
        with pytest.raises(PreconditionError):
            spectral_symmetric_banach(asarray(rng.standard_normal((2, 2, 2))))


class TestNuclearSandwich:
    def test_rank_one_atom(self, rng):
        factors = [v / np.linalg.norm(v)
                   for v in (rng.standard_normal(2) for _ in range(3))]
        sw = nuclear_sandwich(outer_atom(factors))
        assert sw.lower == pytest.approx(1.0, abs=1e-8)
        assert sw.upper == pytest.approx(1.0, abs=1e-8)

    def test_diagonal_three(self):
        T = asarray(sum(outer_atom([e(3, i)] * 3) for i in range(3)))
        sw = nuclear_sandwich(T)
        assert sw.lower - 1e-8 <= 3.0 <= sw.upper + 1e-8
        assert sw.gap <= 0.05

    def test_matrix_matches_trace_norm(self, rng):
        A = rng.standard_normal((3, 4))
        sw = nuclear_sandwich(asarray(A))
        tn = np.linalg.svd(A, compute_uv=False).sum()
        assert sw.lower - 1e-8 <= tn <= sw.upper + 1e-8
        assert sw.gap <= 1e-8

    def test_upper_at_most_l1(self, rng):
        for _ in range(5):
            T = asarray(rng.standard_normal((2, 2, 2)))
            sw = nuclear_sandwich(T)
            assert sw.upper <= holder_norm(T, 1) + 1e-10
            assert sw.lower >= holder_norm(T, 2) - 1e-10

    def test_decomposition_plus_residual_consistent(self, rng):
        T = asarray(rng.standard_normal((2, 2, 2)))
        sw = nuclear_sandwich(T)
        resid = T - decomposition_sum(sw.decomposition)
        reconstructed = sw.decomposition.weight_sum + holder_norm(resid, 1)
        assert sw.upper <= reconstructed + 1e-9

    def test_witness_ratio_supports_lower(self, rng):
        T = asarray(rng.standard_normal((2, 2, 2)))
        sw = nuclear_sandwich(T)
        ratio = inner(T, sw.dual_witness) / sw.witness_spectral_upper
        assert sw.lower >= ratio - 1e-10

    def test_scale_equivariance(self, rng):
        T = rng.standard_normal((2, 2, 2))
        s1 = nuclear_sandwich(asarray(T))
        s2 = nuclear_sandwich(asarray(2.0 * T))
        assert s2.lower == pytest.approx(2.0 * s1.lower, rel=1e-3)
        assert s2.upper == pytest.approx(2.0 * s1.upper, rel=1e-3)


class TestDualityGap:
    def test_rank_one_equality(self):
        T = outer_atom([e(2, 0)] * 3)
        report = duality_gap_check(T, T)
        assert report["holds"]
        assert report["slack"] == pytest.approx(0.0, abs=1e-4)

    def test_orthogonal_pair(self):
        T = outer_atom([e(2, 0)] * 3)
        S = outer_atom([e(2, 1)] * 3)
        assert duality_gap_check(T, S)["holds"]

    def test_random_pair(self, rng):
        T = asarray(rng.standard_normal((2, 2, 2)))
        S = asarray(rng.standard_normal((2, 2, 2)))
        report = duality_gap_check(T, S)
        assert report["holds"]
        assert report["slack"] >= -1e-10


class TestRestrictedNorm:
    def test_rank_one_span(self):
        T = outer_atom([e(2, 0)] * 3)
        report = restricted_norm_check(T, family_from_tensor(T))
        assert report["ok"]

    def test_projection_never_increases_sigma(self, rng):
        from tnn import basic, project

        for _ in range(5):
            T = asarray(rng.standard_normal((2, 2, 2)))
            family = family_from_tensor(
                outer_atom(
                    [v / np.linalg.norm(v)
                     for v in (rng.standard_normal(2) for _ in range(3))]
                )
            )
            proj = project(basic(()), family, T)
            assert (spectral_hopm(asarray(proj)).value
                    <= spectral_hopm(T).value + 1e-8)

    def test_precondition_enforced(self, rng):
        T = asarray(rng.standard_normal((2, 2, 2)))
        family = family_from_tensor(outer_atom([e(2, 0)] * 3))
        with pytest.raises(PreconditionError):
            restricted_norm_check(T, family)
