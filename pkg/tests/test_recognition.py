"""Contracts of frozen-model recognition and cross-modal inference."""
import numpy as np
import pytest

from mhdp_active import (ObjectRecord, ObservationError,
                         default_config, joint_modality_likelihood,
                         modality_predictive, recognize, sample_latent,
                         sample_latents, sample_modality, train)
from mhdp_active.corpus import DimensionError

from conftest import make_tiny_model, make_separable_dataset
from test_crf_math import single_table_latent


class TestRecognize:
    def test_deterministic(self, small_model, small_dataset):
        obs = small_dataset.objects[0].observations
        a = recognize(small_model, obs, seed=42)
        b = recognize(small_model, obs, seed=42)
        np.testing.assert_array_equal(a.category_posterior, b.category_posterior)

    def test_posterior_normalized(self, small_model, small_dataset):
        for obj in small_dataset.objects[:4]:
            st = recognize(small_model, obj.observations, seed=obj.object_id)
            assert st.category_posterior.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(st.category_posterior >= 0)

    def test_empty_observations_return_prior(self, small_model):
        st = recognize(small_model, {}, seed=1)
        prior = small_model.topic_size_prior()
        np.testing.assert_allclose(st.category_posterior, prior)
        assert st.latent_samples == [] and st.n_retained == 0

    def test_unknown_modality_rejected(self, small_model):
        with pytest.raises(KeyError):
            recognize(small_model, {99: np.array([1, 2])}, seed=0)

    def test_training_object_recovers_training_category(self):
        ds = make_separable_dataset()
        model = train(ds, default_config(ds, train_sweeps=50), seed=7)
        hits = 0
        for trial in range(20):
            st = recognize(model, ds.objects[0].observations, seed=trial)
            if st.category_posterior.argmax() == \
                    model.training_posteriors[0].argmax():
                hits += 1
        assert hits >= 19

    def test_identical_objects_agree(self):
        # two identical objects appended to a separable corpus: their mean
        # recognition posteriors over reseeded runs must coincide
        ds = make_separable_dataset()
        dup = ObjectRecord(100, {1: ds.objects[0].observations[1].copy()})
        ds.objects.append(dup)
        model = train(ds, default_config(ds, train_sweeps=50), seed=9)
        mean_a = np.zeros(model.num_topics + 1)
        mean_b = np.zeros(model.num_topics + 1)
        for s in range(25):
            mean_a += recognize(model, ds.objects[0].observations,
                                seed=1000 + s).category_posterior
            mean_b += recognize(model, dup.observations,
                                seed=2000 + s).category_posterior
        tv = 0.5 * np.abs(mean_a / 25 - mean_b / 25).sum()
        assert tv <= 0.02


class TestSampleLatent:
    def test_zero_tokens_zero_tables(self, small_model):
        lat = sample_latent(small_model, {1: np.zeros(6, dtype=np.int64)}, seed=0)
        assert lat.num_tables == 0

    def test_latent_consistency(self, small_model, small_dataset):
        obs = small_dataset.objects[1].observations
        lat = sample_latent(small_model, obs, seed=3)
        assert lat.token_tables.max() < lat.num_tables
        # each table's mass equals the weighted tokens assigned to it
        masses = np.zeros(lat.num_tables)
        for i, t in enumerate(lat.token_tables):
            masses[t] += 1.0
        np.testing.assert_allclose(masses, lat.table_masses)

    def test_chain_retention_count(self, small_model, small_dataset):
        obs = small_dataset.objects[0].observations
        lats = sample_latents(small_model, obs, 15, seed=8)
        assert len(lats) == 15


class TestSampleModality:
    def test_sum_and_determinism(self, small_model, small_dataset):
        obj = small_dataset.objects[2]
        obs = {1: obj.observations[1], 2: obj.observations[2]}
        lat = sample_latent(small_model, obs, seed=4)
        a = sample_modality(small_model, lat, 3, seed=11)
        b = sample_modality(small_model, lat, 3, seed=11)
        assert a.sum() == small_model.spec(3).token_count
        np.testing.assert_array_equal(a, b)

    def test_observed_modality_rejected(self, small_model, small_dataset):
        obj = small_dataset.objects[2]
        lat = sample_latent(small_model, {1: obj.observations[1]}, seed=4)
        with pytest.raises(ObservationError):
            sample_modality(small_model, lat, 1, seed=0)

    def test_concentrated_dish_dominates(self):
        # dish 0 concentrated on feature 3 of modality 2; heavy table mass
        # pins the mixture on that dish's predictive
        counts = np.zeros((1, 2, 4))
        counts[0, 0] = [10.0, 2.0, 0.0, 0.0]
        counts[0, 1] = [0.0, 0.0, 0.0, 100.0]
        model = make_tiny_model(n_topics=1, dims=(2, 4), tokens=(12, 1000),
                                alpha=0.01, counts=counts, tables=[1.0])
        latent = single_table_latent(model, {1: np.array([8, 4])}, dish=0)
        bof = sample_modality(model, latent, 2, seed=5)
        assert bof.sum() == 1000
        assert bof[3] >= 950


class TestJointModalityLikelihood:
    def test_empty_bof_log_one(self, small_model, small_dataset):
        obj = small_dataset.objects[0]
        lat = sample_latent(small_model, {1: obj.observations[1]}, seed=2)
        assert joint_modality_likelihood(small_model, lat, 2,
                                         np.zeros(6, dtype=int)) == 0.0

    def test_dimension_mismatch(self, small_model, small_dataset):
        obj = small_dataset.objects[0]
        lat = sample_latent(small_model, {1: obj.observations[1]}, seed=2)
        with pytest.raises(DimensionError):
            joint_modality_likelihood(small_model, lat, 2, np.zeros(3, dtype=int))

    @pytest.mark.parametrize("n_tokens", [1, 2, 3])
    def test_normalizes_over_bof_space(self, n_tokens):
        # d=2: enumerate all histograms of n tokens, probabilities sum to 1
        model = make_tiny_model(n_topics=2, dims=(3, 2), tokens=(2, n_tokens),
                                alpha=0.3)
        latent = single_table_latent(model, {1: np.array([1, 1, 0])}, dish=0)
        total = 0.0
        for c0 in range(n_tokens + 1):
            bof = np.array([c0, n_tokens - c0])
            total += np.exp(joint_modality_likelihood(model, latent, 2, bof))
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_concentrated_dish_prefers_matching_bof(self):
        counts = np.zeros((1, 2, 3))
        counts[0, 0] = [5.0, 1.0, 0.0]
        counts[0, 1] = [20.0, 1.0, 0.0]
        model = make_tiny_model(n_topics=1, dims=(3, 3), tokens=(3, 3),
                                alpha=0.2, counts=counts, tables=[2.0])
        latent = single_table_latent(model, {1: np.array([3, 0, 0])}, dish=0)
        ll_match = joint_modality_likelihood(model, latent, 2, [3, 0, 0])
        ll_perm = joint_modality_likelihood(model, latent, 2, [0, 3, 0])
        assert ll_match > ll_perm

    def test_matches_sampling_frequency(self):
        # empirical frequency of a sampled BoF approaches exp(loglik)
        model = make_tiny_model(n_topics=2, dims=(2, 2), tokens=(2, 2),
                                alpha=0.5)
        latent = single_table_latent(model, {1: np.array([2, 0])}, dish=0)
        n = 4000
        hits = {}
        for s in range(n):
            bof = tuple(sample_modality(model, latent, 2, seed=s))
            hits[bof] = hits.get(bof, 0) + 1
        for bof, cnt in hits.items():
            ll = joint_modality_likelihood(model, latent, 2, np.array(bof))
            assert cnt / n == pytest.approx(np.exp(ll), abs=0.03)


class TestModalityPredictive:
    def test_sums_to_one(self, small_model, small_dataset):
        obj = small_dataset.objects[3]
        lat = sample_latent(small_model, {1: obj.observations[1]}, seed=1)
        for mid in (2, 3, 4, 5):
            p = modality_predictive(small_model, lat, mid)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(p > 0)
