import numpy as np
import pytest

from able.attacks import AttackConfig, AttackFailed
from able.explainer import (
    ExplanationFailed,
    NeighborhoodConfig,
    attribution_weights,
    build_pair_dataset,
    calibrate_probability_scale,
    class_probability,
    explain,
    fit_binary_surrogate,
    fit_multinomial_surrogate,
    generate_pair,
    sample_neighborhood,
    surrogate_proba,
    top_k_features,
)
from able.sampling import rescale_to_ball

from conftest import linear_model


class TestSampling:
    def test_rescaling_saturates_at_radius(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((1000, 3))
        scaled = rescale_to_ball(z, 0.5)
        norms = np.linalg.norm(scaled, axis=1)
        assert np.all(norms <= 0.5 + 1e-12)

    def test_small_draws_left_unscaled(self):
        z = np.array([[0.1, 0.05], [3.0, 4.0]])
        scaled = rescale_to_ball(z, 1.0)
        assert np.array_equal(scaled[0], z[0])  # inside the ball: untouched
        assert np.linalg.norm(scaled[1]) == pytest.approx(1.0)

    def test_neighborhood_radius_bound_and_membership(self, moons_model):
        model, test = moons_model
        x = test.x[0]
        nbhd = sample_neighborhood(model, x, NeighborhoodConfig(radius=0.2, count=50, seed=3))
        dists = np.linalg.norm(nbhd.xs - x, axis=1)
        assert np.all(dists <= 0.2 + 1e-9)
        assert np.array_equal(nbhd.xs[-1], x)  # the test point is a member
        assert nbhd.includes_test
        assert len(nbhd.xs) == 51
        assert np.array_equal(np.asarray(model.predict_label(nbhd.xs)), nbhd.ys)

    def test_max_distance_concentrates_at_radius(self, moons_model):
        # in 2-D nearly every standard-normal draw exceeds 0.2, so the max
        # distance over 10k draws saturates in (0.19, 0.2]
        model, test = moons_model
        nbhd = sample_neighborhood(
            model, test.x[0], NeighborhoodConfig(radius=0.2, count=10000, seed=9)
        )
        max_dist = np.linalg.norm(nbhd.sampled_xs - test.x[0], axis=1).max()
        assert 0.19 < max_dist <= 0.2 + 1e-12

    def test_determinism(self, moons_model):
        model, test = moons_model
        cfg = NeighborhoodConfig(radius=0.2, count=25, seed=4)
        a = sample_neighborhood(model, test.x[2], cfg)
        b = sample_neighborhood(model, test.x[2], cfg)
        assert a.xs.tobytes() == b.xs.tobytes()


class TestGeneratePair:
    def test_binary_reverse_restores_original_label(self, moons_model):
        model, test = moons_model
        x = test.x[0]
        y = model.predict_label(x)
        pair = generate_pair(model, x, y, AttackConfig(kind="FGSM", seed=1), 2)
        assert pair.label_rev == y
        assert pair.label_adv != y

    def test_multiclass_reverse_is_targeted_back(self, blobs3_model):
        model, test = blobs3_model
        rng = np.random.default_rng(3)
        seen_third_class = False
        for _ in range(40):
            x = test.x[rng.integers(0, test.n_rows)]
            y = model.predict_label(x)
            try:
                pair = generate_pair(model, x, y, AttackConfig(kind="FGSM", seed=2), 3)
            except AttackFailed:
                continue
            assert pair.label_rev == y  # even when the forward flip landed elsewhere
            assert pair.label_adv != y
            seen_third_class = True
        assert seen_third_class

    def test_pair_straddles_planted_hyperplane(self):
        w = np.array([1.0, -2.0])
        model = linear_model(w, b=0.1)
        rng = np.random.default_rng(5)
        for _ in range(10):
            x = rng.standard_normal(2)
            y = model.predict_label(x)
            pair = generate_pair(model, x, y, AttackConfig(kind="FGSM", seed=3), 2)
            side_adv = np.sign(w @ pair.x_adv + 0.1)
            side_rev = np.sign(w @ pair.x_rev + 0.1)
            assert side_adv != side_rev

    def test_wrong_reference_label_rejected(self, moons_model):
        model, test = moons_model
        x = test.x[0]
        wrong = 1 - model.predict_label(x)
        with pytest.raises(ValueError, match="current label"):
            generate_pair(model, x, wrong, AttackConfig(kind="FGSM"), 2)


class TestBuildPairDataset:
    def fake_pair(self, i):
        from able.explainer import AdversarialPair

        return AdversarialPair(
            x_adv=np.array([float(i), 0.0]), label_adv=1,
            x_rev=np.array([float(i), 1.0]), label_rev=0,
            source_index=i, epsilons=(0.1, 0.1),
        )

    def test_two_points_per_pair(self):
        xs, ys = build_pair_dataset([self.fake_pair(i) for i in range(150)])
        assert xs.shape == (300, 2)
        assert len(ys) == 300

    def test_balanced_labels_for_binary_pairs(self):
        _, ys = build_pair_dataset([self.fake_pair(i) for i in range(20)])
        assert np.sum(ys == 0) == np.sum(ys == 1) == 20

    def test_empty_list_is_error(self):
        with pytest.raises(ValueError, match="no adversarial pairs"):
            build_pair_dataset([])


class TestBinarySurrogate:
    def test_separable_along_one_axis(self):
        rng = np.random.default_rng(0)
        n = 100
        x = np.column_stack([np.where(np.arange(n) % 2 == 0, -1.0, 1.0), rng.standard_normal(n)])
        y = (x[:, 0] > 0).astype(int)
        sur = fit_binary_surrogate(x, y, 1e-4)
        w = sur.weights[0]
        assert w[0] > 0
        assert abs(w[1]) < abs(w[0]) / 10

    def test_high_training_accuracy_on_linear_pairs(self):
        model = linear_model(np.array([2.0, -1.0]))
        rng = np.random.default_rng(1)
        pairs = []
        for _ in range(60):
            x = rng.standard_normal(2)
            y = model.predict_label(x)
            pairs.append(generate_pair(model, x, y, AttackConfig(kind="FGSM", seed=4), 2))
        xs, ys = build_pair_dataset(pairs)
        sur = fit_binary_surrogate(xs, ys, 1e-4)
        preds = np.array(sur.classes)[np.argmax(surrogate_proba(sur, xs), axis=1)]
        assert np.mean(preds == ys) >= 0.95

    def test_huge_regularization_shrinks_weights(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((80, 3))
        y = (x[:, 0] > 0).astype(int)
        small = fit_binary_surrogate(x, y, 1e-4)
        huge = fit_binary_surrogate(x, y, 1e6)
        assert np.linalg.norm(huge.weights) < 1e-4
        assert np.linalg.norm(huge.weights) < np.linalg.norm(small.weights) / 1e3

    def test_single_class_rejected(self):
        x = np.zeros((10, 2))
        with pytest.raises(ValueError, match="2 classes"):
            fit_binary_surrogate(x, np.zeros(10, dtype=int), 1e-4)

    def test_nonconsecutive_class_ids_preserved(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((60, 2))
        y = np.where(x[:, 0] > 0, 5, 2)
        sur = fit_binary_surrogate(x, y, 1e-4)
        assert sur.classes == (2, 5)
        probs = class_probability(sur, x, 5)
        assert np.mean((probs > 0.5) == (y == 5)) > 0.9


class TestMultinomialSurrogate:
    def test_two_class_agreement_with_binary(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((120, 3))
        y = (x @ np.array([1.0, -0.5, 0.2]) > 0).astype(int)
        binary = fit_binary_surrogate(x, y, 1e-4)
        softmax = fit_multinomial_surrogate(x, y, 1e-4)
        probes = rng.standard_normal((100, 3))
        dec_b = np.argmax(surrogate_proba(binary, probes), axis=1)
        dec_s = np.argmax(surrogate_proba(softmax, probes), axis=1)
        assert np.array_equal(dec_b, dec_s)

    def test_three_separated_clusters(self):
        rng = np.random.default_rng(5)
        centers = np.array([[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]])
        y = np.repeat([0, 1, 2], 40)
        x = centers[y] + 0.3 * rng.standard_normal((120, 2))
        sur = fit_multinomial_surrogate(x, y, 1e-4)
        preds = np.array(sur.classes)[np.argmax(surrogate_proba(sur, x), axis=1)]
        assert np.mean(preds == y) == 1.0

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((90, 4))
        y = rng.integers(0, 3, 90)
        sur = fit_multinomial_surrogate(x, y, 1e-3)
        p = surrogate_proba(sur, rng.standard_normal((50, 4)))
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="2 distinct"):
            fit_multinomial_surrogate(np.zeros((5, 2)), np.ones(5, dtype=int), 1e-4)


class TestCalibration:
    def test_direction_is_preserved(self, moons_model):
        model, test = moons_model
        rng = np.random.default_rng(7)
        x = rng.standard_normal((100, 2))
        y = np.asarray(model.predict_label(x))
        if len(np.unique(y)) < 2:
            pytest.skip("degenerate draw")
        sur = fit_binary_surrogate(x, y, 1e-4)
        cal = calibrate_probability_scale(model, sur, x)
        cos = np.dot(sur.weights[0], cal.weights[0]) / (
            np.linalg.norm(sur.weights[0]) * np.linalg.norm(cal.weights[0])
        )
        assert cos == pytest.approx(1.0, abs=1e-12)

    def test_probability_match_improves(self, moons_model):
        model, test = moons_model
        rng = np.random.default_rng(8)
        x = test.x[0] + 0.3 * rng.standard_normal((120, 2))
        y = np.asarray(model.predict_label(x))
        if len(np.unique(y)) < 2:
            pytest.skip("degenerate draw")
        sur = fit_binary_surrogate(x, y, 1e-4)
        cal = calibrate_probability_scale(model, sur, x)
        f = model.predict_proba(x)[:, sur.classes[1]]
        mse_before = np.mean((class_probability(sur, x, sur.classes[1]) - f) ** 2)
        mse_after = np.mean((class_probability(cal, x, cal.classes[1]) - f) ** 2)
        assert mse_after <= mse_before + 1e-12


class TestTopK:
    def test_sorted_by_magnitude_with_index_ties(self):
        w = np.array([0.5, -0.9, 0.5, 0.1])
        top = top_k_features(w, 3)
        assert [i for i, _, _ in top] == [1, 0, 2]  # |..| desc, tie -> lower index
        assert top[0][2] == pytest.approx(-0.9)

    def test_k_equals_d_is_permutation(self):
        w = np.array([0.3, -0.1, 0.7])
        top = top_k_features(w, 3, feature_names=["a", "b", "c"])
        assert sorted(i for i, _, _ in top) == [0, 1, 2]
        assert top[0][1] == "c"

    def test_k_out_of_range(self):
        with pytest.raises(ValueError, match="K"):
            top_k_features(np.ones(3), 4)


class TestExplain:
    def test_linear_direction_recovery(self):
        rng = np.random.default_rng(10)
        w = rng.standard_normal(2)
        w /= np.linalg.norm(w)
        model = linear_model(w)
        x = rng.standard_normal(2) * 0.4
        exp = explain(model, x, NeighborhoodConfig(seed=3, count=80),
                      AttackConfig(kind="FGSM", seed=3), k=2)
        attributed = attribution_weights(exp.surrogate, 1)
        cos = abs(np.dot(attributed, w) / (np.linalg.norm(attributed) * np.linalg.norm(w)))
        assert cos >= 0.99

    def test_k_equals_d_permutes_features(self, moons_model):
        model, test = moons_model
        exp = explain(model, test.x[0], NeighborhoodConfig(seed=5, count=40),
                      AttackConfig(kind="FGSM", seed=5), k=2)
        assert sorted(i for i, _, _ in exp.top_features) == [0, 1]

    def test_deterministic_modulo_runtime(self, moons_model):
        model, test = moons_model
        args = (model, test.x[1], NeighborhoodConfig(seed=11, count=40),
                AttackConfig(kind="FGSM", seed=11))
        a = explain(*args, k=2)
        b = explain(*args, k=2)
        da, db = a.to_dict(), b.to_dict()
        da.pop("runtime_ms"), db.pop("runtime_ms")
        assert da == db

    def test_all_failures_raise_explanation_failed(self, moons_model):
        model, test = moons_model
        hopeless = AttackConfig(kind="FGSM", epsilon0=1e-9, epsilon_step=1e-9, epsilon_max=2e-9)
        with pytest.raises(ExplanationFailed) as err:
            explain(model, test.x[0], NeighborhoodConfig(seed=2, count=10), hopeless, k=2)
        assert err.value.failed_points == 10

    def test_query_accounting_without_retries(self):
        # on a linear target a first-try budget of 2 always crosses and the
        # reverse crossing needs strictly less, so escalation never retries:
        # exactly 2 labeling queries per pair feed the surrogate
        model = linear_model(np.array([1.5, -0.8]))
        x = np.array([0.3, 0.2])
        cfg = AttackConfig(kind="FGSM", seed=13, epsilon0=2.0)
        exp = explain(model, x, NeighborhoodConfig(seed=13, count=150), cfg, k=2)
        assert exp.failed_points == 0
        assert exp.pairs_used == 150
        assert exp.eps_forward_mean == pytest.approx(2.0)  # no retries anywhere
        assert exp.eps_reverse_mean == pytest.approx(2.0)
        assert exp.labeling_queries == 300
        assert exp.eval_queries > 0

    def test_query_accounting_with_retries_still_two_per_pair(self, moons_model):
        model, test = moons_model
        cfg = AttackConfig(kind="FGSM", seed=13)  # default grid: retries happen
        exp = explain(model, test.x[2], NeighborhoodConfig(seed=13, count=60), cfg, k=2)
        assert exp.labeling_queries == 2 * exp.pairs_used
        assert exp.attack_queries > exp.labeling_queries  # escalation cost is visible

    def test_bracketing_invariant_on_requery(self, moons_model):
        model, test = moons_model
        nbhd_cfg = NeighborhoodConfig(seed=17, count=30)
        attack_cfg = AttackConfig(kind="FGSM", seed=17)
        nbhd = sample_neighborhood(model, test.x[4], nbhd_cfg)
        for i, (xi, yi) in enumerate(zip(nbhd.sampled_xs, nbhd.sampled_ys)):
            try:
                pair = generate_pair(model, xi, int(yi), attack_cfg, 2, i)
            except AttackFailed:
                continue
            assert model.predict_label(pair.x_adv) == pair.label_adv
            assert model.predict_label(pair.x_rev) == pair.label_rev == yi
            assert pair.label_adv != pair.label_rev

    def test_multiclass_explanation(self, blobs3_model):
        model, test = blobs3_model
        exp = explain(model, test.x[0], NeighborhoodConfig(seed=19, count=60),
                      AttackConfig(kind="FGSM", seed=19), k=2)
        assert exp.surrogate.kind in ("logistic", "softmax")
        assert exp.predicted_class in exp.surrogate.classes
        assert len(exp.top_features) == 2

    def test_json_roundtrip_fields(self, moons_model):
        import json

        model, test = moons_model
        exp = explain(model, test.x[3], NeighborhoodConfig(seed=23, count=30),
                      AttackConfig(kind="FGSM", seed=23), k=2,
                      feature_names=["alpha", "beta"])
        payload = json.loads(json.dumps(exp.to_dict()))
        assert payload["predicted_class"] == exp.predicted_class
        assert payload["top_features"][0][1] in ("alpha", "beta")
        assert payload["pairs_used"] == exp.pairs_used
        assert "fidelity_r2" in payload and "runtime_ms" in payload
