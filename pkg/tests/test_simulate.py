import numpy as np
import pytest
from scipy import integrate, stats

from rejectgate.cost_core import REJECT_ALL, CostModel, deployed_value, optimal_threshold
from rejectgate.errors import EmptyDatasetError, RejectGateError
from rejectgate.metrics import BinningScheme, reliability_table, value_gap
from rejectgate.simulate import (
    TRUE_PROBABILITY,
    DistortionParams,
    SyntheticConfig,
    distort_band,
    generate_calibrated,
    generate_distorted,
    generate_gaussian_logits,
    generate_rare_high_confidence,
    run_workflow,
    top_line_accuracy,
)

from .conftest import make_dataset


def beta_gate_value(alpha, beta, k, t):
    """Per-item value of a calibrated Beta(alpha, beta) model gated at t, by quadrature."""
    pdf = stats.beta(alpha, beta).pdf
    accepted, _ = integrate.quad(lambda c: (c * (k + 1) - k) * pdf(c), t, 1)
    return accepted - stats.beta(alpha, beta).cdf(t)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(n=0), dict(n=10, alpha=0), dict(n=10, beta=-1), dict(n=10, hc=1.5), dict(n=10, seed=-1)],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(RejectGateError):
            SyntheticConfig(**kwargs)

    def test_invalid_distortion(self):
        with pytest.raises(RejectGateError):
            DistortionParams(gamma=0)


class TestCalibrated:
    def test_reliability(self):
        d = generate_calibrated(SyntheticConfig(100000, alpha=2, beta=2, seed=7))
        rows = reliability_table(d, BinningScheme("equal_mass", 20)).rows
        assert max(abs(r.accuracy - r.mean_confidence) for r in rows) <= 0.03

    def test_symmetric_mean(self):
        d = generate_calibrated(SyntheticConfig(50000, alpha=3, beta=3, seed=1))
        se = np.sqrt(stats.beta(3, 3).var() / d.n)
        assert abs(d.confidence.mean() - 0.5) <= 3 * se

    def test_deterministic(self):
        cfg = SyntheticConfig(1000, seed=42)
        assert generate_calibrated(cfg) == generate_calibrated(cfg)
        assert generate_calibrated(cfg) != generate_calibrated(SyntheticConfig(1000, seed=43))

    def test_prefix_stable(self):
        small = generate_calibrated(SyntheticConfig(100, seed=9))
        large = generate_calibrated(SyntheticConfig(1000, seed=9))
        assert np.array_equal(small.confidence, large.confidence[:100])

    def test_binned_calibration_over_seeds(self):
        good_seeds = 0
        for seed in range(20):
            d = generate_calibrated(SyntheticConfig(100000, seed=seed))
            rows = reliability_table(d, BinningScheme("equal_mass", 20)).rows
            within = sum(
                abs(r.accuracy - r.mean_confidence) <= 3 * np.sqrt(r.mean_confidence * (1 - r.mean_confidence) / r.count)
                for r in rows
            )
            good_seeds += within >= 19
        assert good_seeds >= 18


class TestDistorted:
    def test_identity(self):
        cfg = SyntheticConfig(5000, seed=2)
        d = generate_distorted(cfg, DistortionParams())
        assert np.allclose(d.confidence, d.extras[TRUE_PROBABILITY], atol=1e-12)
        assert np.array_equal(d.correct, generate_calibrated(cfg).correct)

    def test_logit_field(self):
        d = generate_distorted(SyntheticConfig(100, seed=2), DistortionParams(2.0, 0.5))
        p = np.clip(d.extras[TRUE_PROBABILITY].astype(float), 1e-9, 1 - 1e-9)
        assert np.allclose(d.logit, 2.0 * np.log(p / (1 - p)) + 0.5)

    def test_overconfidence_widens_gap(self, cost3):
        cal = [value_gap(generate_calibrated(SyntheticConfig(50000, seed=s)), cost3, 0.5) for s in range(20)]
        dis = [
            value_gap(generate_distorted(SyntheticConfig(50000, seed=s), DistortionParams(2.0)), cost3, 0.5)
            for s in range(20)
        ]
        assert np.median(dis) > np.median(cal)

    def test_positive_shift(self):
        d = generate_distorted(SyntheticConfig(20000, seed=4), DistortionParams(1.0, 2.0))
        assert np.median(d.confidence) > np.median(d.extras[TRUE_PROBABILITY].astype(float))


class TestRareHighConfidence:
    def test_requires_hc(self):
        with pytest.raises(RejectGateError):
            generate_rare_high_confidence(SyntheticConfig(10))

    def test_certain_slice_value(self, cost3):
        d = generate_rare_high_confidence(SyntheticConfig(100000, hc=0.1, high_conf=1.0, seed=3))
        assert deployed_value(d, cost3, 0.5).mean_value == pytest.approx(-(1 - 0.1) + 0.1, abs=0.01)

    def test_noisy_slice_value(self, cost3):
        d = generate_rare_high_confidence(SyntheticConfig(100000, hc=0.1, high_conf=0.99, seed=3))
        expected = 0.9 * -1 + 0.1 * (0.99 * 4 - 3)
        assert expected == pytest.approx(-0.804)
        result = run_workflow(d, cost3, 0.5, replications=20, seed=3)
        assert result.mean_item_value == pytest.approx(expected, abs=0.01)

    def test_no_slice_rejects_everything(self, cost3):
        d = generate_rare_high_confidence(SyntheticConfig(20000, hc=0.0, seed=3))
        assert d.confidence.max() < 0.5
        assert deployed_value(d, cost3, 0.5).total_value == d.n * cost3.c_d

    @pytest.mark.parametrize("hc", [0.01, 0.05, 0.1])
    def test_beats_no_model_despite_low_accuracy(self, cost3, hc):
        d = generate_rare_high_confidence(SyntheticConfig(20000, alpha=2, beta=5, hc=hc, seed=11))
        result = run_workflow(d, cost3, optimal_threshold(cost3), replications=20, seed=11)
        assert top_line_accuracy(d) < 0.3
        assert result.mean_advantage > 0


class TestWorkflow:
    def test_matches_closed_form(self, cost3):
        oracle = beta_gate_value(2, 2, 3, 0.5)
        assert oracle == pytest.approx(-0.625, abs=1e-9)
        d = generate_calibrated(SyntheticConfig(100000, seed=7))
        result = run_workflow(d, cost3, 0.5, replications=20, seed=7)
        assert result.mean_item_value == pytest.approx(oracle, abs=0.02)
        assert result.mean_advantage / d.n == pytest.approx(0.375, abs=0.02)

    def test_reject_all(self, cost3):
        d = generate_calibrated(SyntheticConfig(1000, seed=1))
        result = run_workflow(d, cost3, REJECT_ALL, replications=5, seed=1)
        assert result.mean_total_value == result.baseline_value == 1000 * cost3.c_d
        assert result.std_total_value == 0

    def test_reduces_to_deployed_value(self, d4, cost3):
        result = run_workflow(d4, cost3, 0.5, replications=1, resample=False)
        assert result.mean_total_value == deployed_value(d4, cost3, 0.5).total_value

    def test_deterministic(self, cost3):
        d = generate_calibrated(SyntheticConfig(5000, seed=1))
        assert run_workflow(d, cost3, 0.5, 10, seed=4) == run_workflow(d, cost3, 0.5, 10, seed=4)

    def test_uses_true_probability(self):
        # reported confidence 1 but true probability 0: every resampled outcome is wrong
        d = make_dataset([(1.0, True)] * 50)
        d = type(d)(ids=d.ids, confidence=d.confidence, correct=d.correct, extras={TRUE_PROBABILITY: [0.0] * 50})
        result = run_workflow(d, CostModel.normalized(3), 0.5, replications=3)
        assert result.per_replication == (-150.0,) * 3

    def test_errors(self, cost3):
        with pytest.raises(EmptyDatasetError):
            run_workflow(make_dataset([]), cost3, 0.5)
        with pytest.raises(RejectGateError):
            run_workflow(make_dataset([(0.5, True)]), cost3, 0.5, replications=0)

    def test_advantage_nonincreasing_in_distortion(self, cost3):
        t = optimal_threshold(cost3)
        medians = []
        for gamma in (1, 2, 4):
            adv = [
                run_workflow(
                    generate_distorted(SyntheticConfig(20000, seed=s), DistortionParams(gamma)), cost3, t, 5, seed=s
                ).mean_advantage
                for s in range(20)
            ]
            medians.append(np.median(adv))
        assert medians[0] >= medians[1] >= medians[2]


class TestHelpers:
    def test_distort_band_only_touches_band(self, d4):
        out = distort_band(d4, 0.55, 0.75, lambda c: 1 - c)
        assert out.confidence.tolist() == pytest.approx([0.9, 0.4, 0.3, 0.2])
        assert np.array_equal(out.correct, d4.correct)

    def test_gaussian_logits(self):
        d = generate_gaussian_logits(1000, std=2.0, overconfidence=2.0, seed=1)
        assert np.allclose(d.logit, 2 * np.log(d.extras[TRUE_PROBABILITY] / (1 - d.extras[TRUE_PROBABILITY])))
