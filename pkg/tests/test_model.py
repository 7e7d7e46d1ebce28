import math

import numpy as np
import pytest
from scipy.integrate import quad

from qrse import (
    DensityTable,
    EmptyBinGrid,
    EvalGrid,
    GridTooNarrow,
    QrseParams,
    bin_probabilities,
    build_density,
    choice_difference,
    conditional_entropy,
    entry_probability,
    exit_probability,
    log_kernel,
    log_likelihood,
    payoff_difference,
)
from tests.conftest import REF

# Binary entropy at p = 3/4, from -(p ln p + (1-p) ln(1-p)):
#   -(0.75 * ln 0.75 + 0.25 * ln 0.25) = 0.5623351446188083
ENTROPY_AT_THREE_QUARTERS = 0.5623351446188083


def naive_log_kernel(x: float, p: QrseParams) -> float:
    """Textbook form of the kernel, written without the stable identities."""
    z = 2.0 * (x - p.mu) / p.T
    prob = 1.0 / (1.0 + math.exp(-z))
    if prob in (0.0, 1.0):
        entropy = 0.0
    else:
        entropy = -(prob * math.log(prob) + (1 - prob) * math.log(1 - prob))
    return entropy - math.tanh((x - p.mu) / p.T) * (x - p.alpha) / p.S


class TestQrseParams:
    def test_array_round_trip_order(self):
        arr = REF.as_array()
        assert arr.tolist() == [2.1, 4.9, 8.66, 17.8]
        assert QrseParams.from_array(arr) == REF

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
    def test_rejects_bad_scales(self, bad):
        with pytest.raises(ValueError):
            QrseParams(T=bad, S=1.0, mu=0.0, alpha=0.0)
        with pytest.raises(ValueError):
            QrseParams(T=1.0, S=bad, mu=0.0, alpha=0.0)

    def test_rejects_non_finite_locations(self):
        with pytest.raises(ValueError):
            QrseParams(T=1.0, S=1.0, mu=math.nan, alpha=0.0)
        with pytest.raises(ValueError):
            QrseParams(T=1.0, S=1.0, mu=0.0, alpha=math.inf)


class TestEvalGrid:
    def test_from_bounds_spacing(self):
        grid = EvalGrid.from_bounds(0.0, 10.0, 11)
        assert grid.points.tolist() == list(range(11))
        assert grid.spacing == 1.0
        assert grid.cell_edges().tolist() == [i - 0.5 for i in range(12)]

    def test_auto_span(self):
        grid = EvalGrid.auto(REF)
        scale = max(REF.T, REF.S)
        assert grid.points[0] == pytest.approx(min(REF.mu, REF.alpha) - 8 * scale)
        assert grid.points[-1] == pytest.approx(max(REF.mu, REF.alpha) + 8 * scale)
        assert grid.points.size == 4001

    def test_rejects_nonuniform(self):
        with pytest.raises(ValueError):
            EvalGrid(points=np.array([0.0, 1.0, 3.0]), spacing=1.0)

    def test_rejects_too_few_points(self):
        with pytest.raises(ValueError):
            EvalGrid(points=np.array([1.0]), spacing=1.0)


class TestChoiceProbabilities:
    def test_payoff_difference(self):
        assert payoff_difference(3.0, 1.0) == 4.0
        np.testing.assert_array_equal(
            payoff_difference(np.array([0.0, 1.0]), 1.0), [-2.0, 0.0]
        )

    def test_entry_exit_sum_to_one(self):
        x = np.linspace(-40, 60, 501)
        total = entry_probability(x, REF) + exit_probability(x, REF)
        assert np.max(np.abs(total - 1.0)) <= 1e-15

    def test_entry_half_at_tipping_point(self):
        assert entry_probability(REF.mu, REF) == 0.5

    def test_entry_three_quarters_closed_form(self):
        # expit(ln 3) = 3/4 exactly, reached at x = mu + T ln(3) / 2.
        x = REF.mu + REF.T * math.log(3.0) / 2.0
        assert entry_probability(x, REF) == pytest.approx(0.75, abs=1e-15)
        assert exit_probability(x, REF) == pytest.approx(0.25, abs=1e-15)

    def test_choice_difference_is_tanh(self):
        x = np.linspace(-30, 50, 401)
        expected = np.tanh((x - REF.mu) / REF.T)
        assert np.max(np.abs(choice_difference(x, REF) - expected)) <= 1e-12

    def test_saturation_is_finite_and_tiny(self):
        # 1000 temperature units out, the minority probability underflows
        # toward zero but must stay a well-defined float.
        far_low = REF.mu - 1000.0 * REF.T
        far_high = REF.mu + 1000.0 * REF.T
        p_low = float(entry_probability(far_low, REF))
        p_high = float(exit_probability(far_high, REF))
        for p in (p_low, p_high):
            assert math.isfinite(p)
            assert 0.0 <= p <= 1e-300


class TestConditionalEntropy:
    def test_ln2_at_tipping_point(self):
        assert float(conditional_entropy(REF.mu, REF)) == pytest.approx(
            math.log(2.0), abs=1e-15
        )

    def test_closed_form_at_three_quarters(self):
        x = REF.mu + REF.T * math.log(3.0) / 2.0
        assert float(conditional_entropy(x, REF)) == pytest.approx(
            ENTROPY_AT_THREE_QUARTERS, abs=1e-12
        )

    def test_zero_in_saturation(self):
        x = np.array([REF.mu - 1000 * REF.T, REF.mu + 1000 * REF.T])
        np.testing.assert_array_equal(conditional_entropy(x, REF), [0.0, 0.0])

    def test_range_and_symmetry(self):
        x = np.linspace(-40, 60, 1001)
        h = conditional_entropy(x, REF)
        assert np.all(h >= 0.0)
        assert np.all(h <= math.log(2.0))
        # 2 * mu - x rounds in the last ulp, so allow a few of them.
        mirrored = conditional_entropy(2 * REF.mu - x, REF)
        assert np.max(np.abs(h - mirrored)) <= 2e-14


class TestLogKernel:
    def test_matches_naive_formula(self):
        p = QrseParams(T=2.0, S=4.0, mu=1.0, alpha=3.0)
        for x in (-7.3, -1.0, 0.0, 1.0, 2.0, 5.5, 14.0):
            assert float(log_kernel(x, p)) == pytest.approx(
                naive_log_kernel(x, p), abs=1e-12
            )

    def test_finite_far_out(self):
        x = np.array([-1e4, 1e4])
        assert np.all(np.isfinite(log_kernel(x, REF)))


class TestBuildDensity:
    def test_normalizes_on_auto_grid(self):
        table = build_density(REF)
        total = float(np.sum(table.pdf) * table.grid.spacing)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_normalizes_across_parameter_shapes(self):
        cases = [
            QrseParams(T=0.5, S=0.5, mu=-3.0, alpha=-3.0),
            QrseParams(T=8.0, S=0.5, mu=0.0, alpha=20.0),
            QrseParams(T=0.1, S=8.0, mu=10.0, alpha=-10.0),
            QrseParams(T=3.0, S=3.0, mu=40.0, alpha=40.0),
        ]
        for params in cases:
            table = build_density(params)
            total = float(np.sum(table.pdf) * table.grid.spacing)
            assert total == pytest.approx(1.0, abs=1e-6), params

    def test_partition_function_grid_refinement(self):
        # Halving the spacing must not move log Z by more than 1e-6.
        coarse = build_density(REF, EvalGrid.auto(REF, 4001))
        fine = build_density(REF, EvalGrid.auto(REF, 8001))
        assert abs(coarse.log_z - fine.log_z) <= 1e-6

    def test_narrow_grid_rejected(self):
        grid = EvalGrid.from_bounds(REF.mu - 1.0, REF.mu + 1.0, 101)
        with pytest.raises(GridTooNarrow):
            build_density(REF, grid)

    def test_cell_cdf_monotone_and_complete(self):
        table = build_density(REF)
        edges, cumulative = table.cell_cdf()
        assert edges.size == table.grid.points.size + 1
        assert np.all(np.diff(cumulative) >= 0.0)
        assert cumulative[-1] == pytest.approx(1.0, abs=1e-9)

    def test_table_validates_mass(self):
        table = build_density(REF)
        with pytest.raises(ValueError):
            DensityTable(
                grid=table.grid,
                log_kernel_values=table.log_kernel_values,
                log_z=table.log_z,
                pdf=table.pdf * 2.0,  # breaks sum(pdf) * dx = 1
            )


class TestLogLikelihood:
    def test_matches_pointwise_sum(self):
        rng = np.random.default_rng(1)
        data = rng.uniform(-5.0, 30.0, size=50)
        table = build_density(REF)
        expected = sum(
            naive_log_kernel(float(x), REF) for x in data
        ) - data.size * table.log_z
        assert log_likelihood(data, REF, table.grid) == pytest.approx(
            expected, abs=1e-9
        )

    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(ValueError):
            log_likelihood(np.array([]), REF)
        with pytest.raises(ValueError):
            log_likelihood(np.array([1.0, math.nan]), REF)


class TestBinProbabilities:
    def test_partition_sums_to_one(self):
        grid = EvalGrid.auto(REF)
        edges = np.linspace(grid.points[0], grid.points[-1], 40)
        probs = bin_probabilities(edges, REF, grid)
        assert float(np.sum(probs)) == pytest.approx(1.0, abs=1e-12)
        assert np.all(probs >= 0.0)

    def test_single_wide_bin_captures_everything(self):
        probs = bin_probabilities(np.array([-1e6, 1e6]), REF)
        assert probs.shape == (1,)
        assert float(probs[0]) == pytest.approx(1.0, abs=1e-9)

    def test_matches_adaptive_quadrature(self):
        # Independent oracle: integrate the unnormalized kernel with
        # scipy.integrate.quad and normalize by a quad evaluation of Z,
        # bypassing the grid machinery entirely. The first and last bins
        # absorb the folded tails, so their oracle integrals run from the
        # far outside.
        edges = np.array([5.0, 9.0, 14.0, 21.0])
        probs = bin_probabilities(edges, REF)

        def kernel(x):
            return math.exp(naive_log_kernel(x, REF))

        # The grid carries all the model mass it can see; integrate over the
        # same span so truncation does not enter the comparison.
        grid = EvalGrid.auto(REF)
        lo, hi = float(grid.points[0]), float(grid.points[-1])
        z, _ = quad(kernel, lo, hi, limit=400, points=[8.66, 17.8])
        spans = [(lo, 9.0), (9.0, 14.0), (14.0, hi)]
        for i, (low, high) in enumerate(spans):
            mass, _ = quad(kernel, low, high, limit=400, points=[8.66, 17.8])
            assert float(probs[i]) == pytest.approx(mass / z, abs=2e-5)

    def test_empty_bin_raises(self):
        grid = EvalGrid.from_bounds(-40.0, 60.0, 101)  # spacing 1.0
        edges = np.array([8.2, 8.4, 9.6])  # first bin holds no grid point
        with pytest.raises(EmptyBinGrid):
            bin_probabilities(edges, REF, grid)

    def test_rejects_unsorted_edges(self):
        with pytest.raises(ValueError):
            bin_probabilities(np.array([1.0, 1.0, 2.0]), REF)
