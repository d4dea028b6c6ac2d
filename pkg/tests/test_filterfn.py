import math

import numpy as np
import pytest

from noisespec import (ContinuousModulation, FrequencyGrid, GridMismatchError,
                       PulseSequence, SpectralDensity, as_sequence,
                       continuous_norm, default_grid, filter_function,
                       fo_sequence, fourier_piecewise, overlap_matrix,
                       signal_overlap, staircase_split, transform_continuous)
from noisespec.filterfn import FilterFunction


def box_filter(grid, lo, hi, height=1.0):
    values = np.where((grid.omegas >= lo) & (grid.omegas <= hi), height, 0.0)
    return FilterFunction(grid=grid, values=values, generator=None,
                          operation_time=1.0)


class TestTransform:
    def test_free_evolution_at_zero(self):
        seq = PulseSequence(np.array([]), 5.0)
        assert fourier_piecewise(seq, 0.0) == pytest.approx(5.0)

    def test_free_evolution_closed_form(self):
        # (e^{i pi} - 1) / (i pi / 5) = 10 i / pi
        seq = PulseSequence(np.array([]), 5.0)
        val = fourier_piecewise(seq, math.pi / 5)
        assert val == pytest.approx(1j * 10 / math.pi, abs=1e-12)

    def test_balanced_switch_cancels_dc(self):
        seq = PulseSequence(np.array([2.5]), 5.0)
        assert fourier_piecewise(seq, 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_series_matches_direct_form_at_crossover(self):
        from noisespec.modulation import to_step_function
        seq = fo_sequence(5, 20, 11.5, 5.0)
        omega = 0.99e-6 / seq.duration  # just below the series switch
        series = fourier_piecewise(seq, omega)
        bounds, values = to_step_function(seq)
        segments = values * (np.exp(1j * omega * bounds[1:])
                             - np.exp(1j * omega * bounds[:-1])) / (1j * omega)
        direct = complex(np.sum(segments))
        assert series == pytest.approx(direct, rel=1e-8)

    def test_modulation_set_is_sum_of_transforms(self):
        mset = staircase_split(2.0, 3, 5.0)
        omegas = np.linspace(0, 20, 101)
        total = fourier_piecewise(mset, omegas)
        parts = sum(fourier_piecewise(s, omegas) for s in mset.sequences)
        np.testing.assert_allclose(total, parts, rtol=1e-12)


class TestFilterFunction:
    def test_free_evolution_peak(self):
        # F(0) = (4 / pi) T^2 for the pulse-free filter
        grid = default_grid(11.5)
        filt = filter_function(fo_sequence(1, 20, 11.5, 5.0), grid)
        assert filt.values[0] == pytest.approx(31.83098861837907, abs=1e-12)

    def test_single_centered_switch_kills_dc(self):
        grid = default_grid(11.5)
        filt = filter_function(PulseSequence(np.array([2.5]), 5.0), grid)
        assert filt.values[0] == pytest.approx(0.0, abs=1e-20)

    def test_values_nonnegative_and_finite(self):
        grid = default_grid(11.5)
        for k in (1, 7, 20):
            filt = filter_function(fo_sequence(k, 20, 11.5, 5.0), grid)
            assert np.all(filt.values >= 0)
            assert np.all(np.isfinite(filt.values))

    def test_continuous_zero_phase_matches_free_evolution(self):
        grid = FrequencyGrid(30.0, 1501)
        pulse = filter_function(PulseSequence(np.array([]), 5.0), grid)
        cont = filter_function(ContinuousModulation(duration=5.0), grid)
        np.testing.assert_allclose(cont.values, pulse.values,
                                   rtol=1e-9, atol=1e-9)

    def test_continuous_transform_against_quadrature(self):
        from scipy.integrate import quad
        mod = ContinuousModulation(duration=3.0, linear_rate=2.0,
                                   terms=((1.7, 0.4, -0.3), (5.1, -0.2, 0.6)))
        for omega in (0.0, 1.3, 7.9):
            Y, Z = transform_continuous(mod, omega)
            for target, part in ((Y, np.cos), (Z, np.sin)):
                re, _ = quad(lambda t: part(mod.phase(t)) * math.cos(omega * t),
                             0, 3.0, limit=300)
                im, _ = quad(lambda t: part(mod.phase(t)) * math.sin(omega * t),
                             0, 3.0, limit=300)
                assert target == pytest.approx(complex(re, im), abs=1e-9)


class TestParseval:
    @pytest.mark.parametrize("gen", [
        fo_sequence(1, 20, 11.5, 5.0),
        fo_sequence(13, 20, 11.5, 5.0),
        as_sequence(7, 20, 10.0, 25.0),
        staircase_split(4.6, 4, 5.0),
    ])
    def test_energy_identity_with_exact_tail(self, gen):
        omega_from = 200.0 / gen.duration if hasattr(gen, "duration") else 40.0
        grid = FrequencyGrid(omega_from, int(omega_from / 0.005) + 1)
        filt = filter_function(gen, grid)
        main = float(np.sum(grid.trap_weights() * filt.values))
        total = main + filt.tail_integral(omega_from)
        assert total == pytest.approx(filt.energy_time_domain(), rel=5e-3)


class TestOverlapMatrix:
    def test_constant_filter_norm(self):
        grid = FrequencyGrid(20.0, 2001)
        filt = box_filter(grid, 0.0, 20.0)
        A = overlap_matrix([filt], 10.0)
        assert A[0, 0] == pytest.approx(10.0)

    def test_exactly_symmetric(self):
        grid = default_grid(11.5)
        filters = [filter_function(fo_sequence(k, 20, 11.5, 3.0), grid)
                   for k in range(1, 21)]
        A = overlap_matrix(filters, 10.0)
        assert np.max(np.abs(A - A.T)) == 0.0
        assert np.min(np.linalg.eigvalsh(A)) > -1e-9 * np.max(A)

    def test_disjoint_boxes_orthogonal(self):
        grid = FrequencyGrid(10.0, 1001)
        A = overlap_matrix([box_filter(grid, 0.0, 3.0),
                            box_filter(grid, 5.0, 8.0)], 10.0)
        assert A[0, 1] == 0.0

    def test_grid_mismatch(self):
        f1 = box_filter(FrequencyGrid(10.0, 101), 0, 5)
        f2 = box_filter(FrequencyGrid(10.0, 201), 0, 5)
        with pytest.raises(GridMismatchError):
            overlap_matrix([f1, f2], 5.0)


class TestSignalOverlap:
    def test_zero_spectrum(self):
        grid = default_grid(11.5)
        filt = filter_function(fo_sequence(3, 20, 11.5, 5.0), grid)
        zero = SpectralDensity.from_grid([0.0, 60.0], [0.0, 0.0])
        assert signal_overlap(zero, filt) == 0.0

    def test_flat_spectrum_parseval(self):
        # chi = S0 * integral F = 4 S0 T for a flat spectrum over the support
        T = 5.0
        omega_from = 2000.0 / T
        grid = FrequencyGrid(omega_from, int(omega_from / 0.01) + 1)
        filt = filter_function(fo_sequence(1, 20, 11.5, T), grid)
        flat = SpectralDensity.from_grid([0.0, omega_from], [1.0, 1.0])
        val = signal_overlap(flat, filt)
        assert val == pytest.approx(4 * T, rel=1e-3)

    def test_peak_filter_dominates_tail_filter(self):
        spec = SpectralDensity.lorentzian_mixture(
            [(1.0, 2.0, 1.0), (0.7, 6.0, 2.0)])
        grid = default_grid(11.5)
        near_peak = filter_function(fo_sequence(5, 20, 11.5, 5.0), grid)   # ~2.3
        near_tail = filter_function(fo_sequence(17, 20, 11.5, 5.0), grid)  # ~9.2
        assert signal_overlap(spec, near_peak) > 3 * signal_overlap(spec, near_tail)


class TestContinuousNorm:
    def test_constant_one(self):
        grid = FrequencyGrid(20.0, 4001)
        assert continuous_norm(box_filter(grid, 0.0, 20.0), 10.0) == pytest.approx(
            math.sqrt(10.0))

    def test_homogeneity(self):
        grid = FrequencyGrid(20.0, 801)
        rng = np.random.default_rng(5)
        vals = rng.uniform(0, 1, grid.size)
        base = continuous_norm(vals, 12.0, grid)
        assert continuous_norm(3.5 * vals, 12.0, grid) == pytest.approx(3.5 * base)

    def test_parallelogram_identity(self):
        grid = FrequencyGrid(20.0, 801)
        rng = np.random.default_rng(6)
        for _ in range(5):
            a = rng.uniform(0, 1, grid.size)
            b = rng.uniform(0, 1, grid.size)
            lhs = (continuous_norm(a + b, 15.0, grid) ** 2
                   + continuous_norm(a - b, 15.0, grid) ** 2)
            rhs = 2 * (continuous_norm(a, 15.0, grid) ** 2
                       + continuous_norm(b, 15.0, grid) ** 2)
            assert lhs == pytest.approx(rhs, rel=1e-12)


def test_grid_convergence_of_overlaps():
    spec = SpectralDensity.lorentzian_mixture([(1.0, 2.0, 1.0), (0.7, 6.0, 2.0)])
    coarse = default_grid(11.5)
    fine = FrequencyGrid(coarse.omega_max_grid, 2 * coarse.size - 1)
    for k in (2, 9, 20):
        seq = fo_sequence(k, 20, 11.5, 5.0)
        c1 = signal_overlap(spec, filter_function(seq, coarse))
        c2 = signal_overlap(spec, filter_function(seq, fine))
        assert abs(c1 - c2) / abs(c2) < 1e-3
