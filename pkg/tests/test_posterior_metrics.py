import numpy as np
import pytest

from helpers_synth import random_corpus
from topiceval.posterior_metrics import (
    TopicScoreVector,
    mu_variability,
    sigma_variability,
    stability,
    variability,
)
from topiceval.sampler import (
    LdaConfig,
    MomentAccumulator,
    PhiSampleStore,
    PosteriorSummary,
    run_chain,
)


def summary_from_cv(cv):
    cv = np.asarray(cv, dtype=np.float64)
    mean = np.ones_like(cv)
    return PosteriorSummary(count_samples=2, mean=mean, std=cv * mean, cv=cv)


def write_store(path, samples):
    samples = np.asarray(samples, dtype=np.float64)
    writer = PhiSampleStore.create(path, *samples.shape)
    for s in samples:
        writer.append(s)
    return writer.close()


class TestVariability:
    def test_constant_column_is_zero(self):
        summary = summary_from_cv([[0.2], [0.2], [0.2]])
        assert variability(summary).scores[0] == 0.0

    def test_hand_computed_three_documents(self):
        summary = summary_from_cv([[0.1], [0.2], [0.3]])
        assert abs(variability(summary).scores[0] - 0.1) < 1e-9

    def test_two_sample_moments_feed_cv(self):
        # theta samples {0.2, 0.4} for one (doc, topic) cell
        acc = MomentAccumulator((1, 1))
        acc.update(np.array([[0.2]]))
        acc.update(np.array([[0.4]]))
        mean = acc.mean[0, 0]
        std = acc.std()[0, 0]
        assert abs(mean - 0.3) < 1e-12
        assert abs(std - 0.1414213562373095) < 1e-9
        assert abs(std / mean - 0.4714045207910317) < 1e-9

    def test_single_document_rejected(self):
        with pytest.raises(ValueError):
            variability(summary_from_cv([[0.1]]))

    def test_permutation_invariance(self):
        rs = np.random.RandomState(0)
        cv = rs.rand(6, 3)
        base = variability(summary_from_cv(cv)).scores
        shuffled = variability(summary_from_cv(cv[rs.permutation(6)])).scores
        assert np.allclose(base, shuffled, atol=1e-12)

    def test_nonnegative_and_zero_iff_constant(self):
        cv = np.array([[0.1, 0.5], [0.1, 0.6], [0.1, 0.4]])
        scores = variability(summary_from_cv(cv)).scores
        assert scores[0] == 0.0
        assert scores[1] > 0.0


class TestMuSigmaVariability:
    def test_constant_mu_column(self):
        summary = PosteriorSummary(
            count_samples=2,
            mean=np.full((3, 1), 0.4),
            std=np.zeros((3, 1)),
            cv=np.zeros((3, 1)),
        )
        assert mu_variability(summary).scores[0] == 0.0

    def test_hand_computed_values(self):
        mean = np.array([[0.1], [0.3]])
        std = np.array([[0.0], [0.2]])
        summary = PosteriorSummary(count_samples=2, mean=mean, std=std, cv=std / mean)
        assert abs(mu_variability(summary).scores[0] - 0.1414213562373095) < 1e-9
        summary3 = PosteriorSummary(
            count_samples=2,
            mean=np.full((3, 1), 0.5),
            std=np.array([[0.0], [0.2], [0.4]]),
            cv=np.array([[0.0], [0.4], [0.8]]),
        )
        assert abs(sigma_variability(summary3).scores[0] - 0.2) < 1e-9

    def test_metric_names(self):
        summary = summary_from_cv([[0.1], [0.2]])
        assert variability(summary).metric_name == "variability"
        assert mu_variability(summary).metric_name == "mu_variability"
        assert sigma_variability(summary).metric_name == "sigma_variability"


class TestCvScaleInvariance:
    @pytest.mark.parametrize("scale", [0.5, 2.0, 7.3])
    def test_cv_unchanged_by_positive_scaling(self, scale):
        rs = np.random.RandomState(3)
        samples = rs.rand(5, 1, 1) + 0.1
        acc, acc_scaled = MomentAccumulator((1, 1)), MomentAccumulator((1, 1))
        for s in samples:
            acc.update(s)
            acc_scaled.update(scale * s)
        cv = acc.std() / acc.mean
        cv_scaled = acc_scaled.std() / acc_scaled.mean
        assert np.allclose(cv, cv_scaled, atol=1e-12)


class TestStability:
    def test_identical_samples_give_one(self, tmp_path):
        phi = np.array([[0.2, 0.3, 0.5], [0.6, 0.3, 0.1]])
        store = write_store(tmp_path / "phi.bin", [phi, phi, phi])
        assert np.allclose(stability(store).scores, 1.0, atol=1e-12)

    def test_two_orthogonal_samples(self, tmp_path):
        store = write_store(tmp_path / "phi.bin", [[[1.0, 0.0]], [[0.0, 1.0]]])
        assert abs(stability(store).scores[0] - 0.7071067811865476) < 1e-9

    def test_bounded_on_positive_stores(self, tmp_path):
        rs = np.random.RandomState(4)
        raw = rs.rand(6, 3, 5) + 0.05
        raw /= raw.sum(axis=2, keepdims=True)
        scores = stability(write_store(tmp_path / "phi.bin", raw)).scores
        assert np.all(scores > 0.0)
        assert np.all(scores <= 1.0 + 1e-12)

    def test_real_chain_stability_in_unit_interval(self, tmp_path):
        corpus = random_corpus(5, 8, seed=2)
        config = LdaConfig(num_topics=3, total_iterations=20, burn_in=8, thin=3, seed=5)
        result = run_chain(corpus, config, tmp_path / "phi.bin")
        scores = stability(result.phi_store).scores
        assert np.all((scores > 0) & (scores <= 1.0 + 1e-12))


class TestBruteForceEquivalence:
    def test_streamed_variability_matches_raw_samples(self, tmp_path):
        corpus = random_corpus(5, 8, seed=13)
        config = LdaConfig(num_topics=3, total_iterations=12, burn_in=4, thin=2, seed=21)
        result = run_chain(corpus, config, tmp_path / "phi.bin", keep_theta=True)
        thetas = result.theta_samples  # S x D x K
        assert thetas.shape == (4, 5, 3)
        cv = thetas.std(axis=0, ddof=1) / thetas.mean(axis=0)
        expected = np.std(cv, axis=0, ddof=1)
        assert np.max(np.abs(expected - variability(result.summary).scores)) < 1e-12


class TestTopicScoreVector:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            TopicScoreVector("bad", np.array([1.0, np.nan]))

    def test_rejects_matrix(self):
        with pytest.raises(ValueError):
            TopicScoreVector("bad", np.ones((2, 2)))
