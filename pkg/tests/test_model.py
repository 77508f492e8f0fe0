import json
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saltda.errors import DimensionError, SchemaError
from saltda.losses import LossWeights, grad_primary_wrt_theta
from saltda.model import (
    AdamState,
    AdaptedModel,
    SgdMomentumState,
    SoftmaxClassifier,
    accuracy,
    adam_step,
    init_classifier,
    load_model,
    model_from_dict,
    model_to_dict,
    predict_probs,
    save_model,
    sgd_momentum_step,
)
from saltda.subspace import AlignmentMap, Subspace


def decimal_softmax(X, W, b, digits=50):
    """Softmax evaluated in 50-digit decimal arithmetic."""
    getcontext().prec = digits
    out = []
    for x in X:
        z = [
            sum(Decimal(float(x[a])) * Decimal(float(W[a][j])) for a in range(len(x)))
            + Decimal(float(b[j]))
            for j in range(len(b))
        ]
        e = [v.exp() for v in z]
        s = sum(e)
        out.append([float(v / s) for v in e])
    return np.array(out)


class TestPredictProbs:
    def test_zero_parameters_uniform(self):
        clf = SoftmaxClassifier(np.zeros((3, 4)), np.zeros(4))
        np.testing.assert_array_equal(predict_probs(clf, np.ones((2, 3))), np.full((2, 4), 0.25))

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        W, X = rng.standard_normal((3, 4)), rng.standard_normal((5, 3))
        b = rng.standard_normal(4)
        p1 = predict_probs(SoftmaxClassifier(W, b), X)
        p2 = predict_probs(SoftmaxClassifier(W, b + 7.5), X)
        assert np.max(np.abs(p1 - p2)) < 1e-12

    def test_seeded_high_precision_oracle(self):
        rng = np.random.default_rng(21)
        W, b, X = rng.standard_normal((5, 3)), rng.standard_normal(3), rng.standard_normal((6, 5))
        probs = predict_probs(SoftmaxClassifier(W, b), X)
        assert np.max(np.abs(probs - decimal_softmax(X, W, b))) < 1e-12

    def test_large_logits_stable(self):
        clf = SoftmaxClassifier(np.array([[1000.0, -1000.0]]), np.zeros(2))
        probs = predict_probs(clf, np.array([[1.0]]))
        assert np.all(np.isfinite(probs))
        np.testing.assert_allclose(probs, [[1.0, 0.0]])

    def test_wrong_columns(self):
        clf = SoftmaxClassifier(np.zeros((3, 2)), np.zeros(2))
        with pytest.raises(DimensionError):
            predict_probs(clf, np.zeros((1, 4)))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0, 50))
    def test_rows_stochastic(self, seed, scale):
        rng = np.random.default_rng(seed)
        clf = SoftmaxClassifier(scale * rng.standard_normal((4, 3)), rng.standard_normal(3))
        probs = predict_probs(clf, rng.standard_normal((7, 4)))
        assert np.all(np.abs(probs.sum(axis=1) - 1) < 1e-9)
        assert np.all((probs >= 0) & (probs <= 1))


class TestClassifierValidation:
    def test_needs_two_classes(self):
        with pytest.raises(DimensionError):
            SoftmaxClassifier(np.zeros((3, 1)), np.zeros(1))
        with pytest.raises(DimensionError):
            init_classifier(3, 1, seed=0)

    def test_bias_shape(self):
        with pytest.raises(DimensionError):
            SoftmaxClassifier(np.zeros((3, 2)), np.zeros(3))

    def test_init_bounds_and_seed(self):
        clf = init_classifier(10, 4, seed=7)
        assert np.all(np.abs(clf.weights) <= np.sqrt(6 / 14))
        assert np.array_equal(clf.bias, np.zeros(4))
        assert np.array_equal(clf.weights, init_classifier(10, 4, seed=7).weights)


class TestSgdMomentum:
    def test_zero_momentum_is_gradient_descent(self):
        p = {"w": np.array([1.0, -2.0])}
        g = {"w": np.array([0.5, 4.0])}
        new, _ = sgd_momentum_step(SgdMomentumState(0.1, 0.0), p, g)
        np.testing.assert_array_equal(new["w"], p["w"] - 0.1 * g["w"])

    def test_zero_gradient_no_change(self):
        p = {"w": np.array([3.0, 1.0])}
        new, _ = sgd_momentum_step(SgdMomentumState(), p, {"w": np.zeros(2)})
        np.testing.assert_array_equal(new["w"], p["w"])

    def test_two_steps_unrolled(self):
        lr, mu = 0.05, 0.9
        p0 = {"w": np.array([1.0, 2.0, -3.0])}
        g = {"w": np.array([0.3, -1.2, 2.0])}
        p1, s1 = sgd_momentum_step(SgdMomentumState(lr, mu), p0, g)
        p2, _ = sgd_momentum_step(s1, p1, g)
        np.testing.assert_allclose(p2["w"], p0["w"] - lr * g["w"] * (2 + mu), rtol=0, atol=1e-15)

    def test_pure(self):
        p = {"w": np.array([1.0])}
        g = {"w": np.array([2.0])}
        state = SgdMomentumState(0.1, 0.5, {"w": np.array([0.3])})
        a, sa = sgd_momentum_step(state, p, g)
        b, sb = sgd_momentum_step(state, p, g)
        assert np.array_equal(a["w"], b["w"]) and np.array_equal(sa.velocity["w"], sb.velocity["w"])
        assert p["w"][0] == 1.0 and state.velocity["w"][0] == 0.3

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            sgd_momentum_step(SgdMomentumState(), {"w": np.zeros(2)}, {"w": np.zeros(3)})

    def test_validation(self):
        with pytest.raises(ValueError):
            SgdMomentumState(learning_rate=0)
        with pytest.raises(ValueError):
            SgdMomentumState(momentum=1.0)


class TestAdam:
    def test_first_step_magnitude(self):
        p = {"w": np.array([0.0, 0.0, 0.0, 0.0])}
        g = {"w": np.array([3.0, -0.01, 250.0, 0.0])}
        new, state = adam_step(AdamState(learning_rate=1e-3), p, g)
        step = new["w"] - p["w"]
        np.testing.assert_allclose(np.abs(step[:3]), 1e-3, rtol=1e-5)
        np.testing.assert_array_equal(np.sign(step[:3]), -np.sign(g["w"][:3]))
        assert step[3] == 0.0
        assert state.step_count == 1

    def test_zero_gradient_forever(self):
        p = {"w": np.array([1.5, -2.0])}
        state = AdamState()
        for _ in range(10):
            p, state = adam_step(state, p, {"w": np.zeros(2)})
        np.testing.assert_array_equal(p["w"], [1.5, -2.0])

    def test_three_step_unroll(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        g = 0.7
        theta, m, v = 2.0, 0.0, 0.0
        for t in range(1, 4):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
        p, state = {"w": np.array([2.0])}, AdamState(learning_rate=lr)
        for _ in range(3):
            p, state = adam_step(state, p, {"w": np.array([g])})
        assert abs(p["w"][0] - theta) < 1e-12


def test_separable_problem_trains_to_perfect_accuracy():
    rng = np.random.default_rng(4)
    X = np.vstack([rng.normal(-2, 0.5, (40, 2)), rng.normal(2, 0.5, (40, 2))])
    y = np.repeat([0, 1], 40)
    clf = init_classifier(2, 2, seed=0)
    params, state = clf.params(), SgdMomentumState(learning_rate=0.05, momentum=0.9)
    w = LossWeights(0, 0, 0, 0)
    for _ in range(500):
        g = grad_primary_wrt_theta(SoftmaxClassifier.from_params(params), X, y, X[:0], w)
        params, state = sgd_momentum_step(state, params, g)
    assert accuracy(SoftmaxClassifier.from_params(params), X, y) == 1.0


def _aligned_model(rng, D=5, d=2, C=3, k=2):
    q = lambda: np.linalg.qr(rng.standard_normal((D, d)))[0]
    return AdaptedModel(
        SoftmaxClassifier(rng.standard_normal((D, C)), rng.standard_normal(C)),
        Subspace(q(), rng.standard_normal(D)),
        [(Subspace(q(), rng.standard_normal(D)), AlignmentMap(rng.standard_normal((d, d)))) for _ in range(k)],
    )


class TestSerialization:
    def test_round_trip_exact(self, tmp_path):
        model = _aligned_model(np.random.default_rng(0))
        save_model(model, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        assert np.array_equal(back.classifier.weights, model.classifier.weights)
        assert np.array_equal(back.source.basis, model.source.basis)
        for (za, pa), (zb, pb) in zip(model.members, back.members):
            assert np.array_equal(za.center, zb.center) and np.array_equal(pa.phi, pb.phi)

    def test_unaligned_round_trip(self):
        clf = init_classifier(4, 2, seed=1)
        back = model_from_dict(json.loads(json.dumps(model_to_dict(AdaptedModel(clf)))))
        assert not back.aligned
        assert np.array_equal(back.classifier.weights, clf.weights)

    def test_weights_row_major(self):
        clf = SoftmaxClassifier(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]), np.zeros(2))
        assert model_to_dict(AdaptedModel(clf))["weights"] == [1, 2, 3, 4, 5, 6]

    def test_report_wrapper_accepted(self, tmp_path):
        model = _aligned_model(np.random.default_rng(1))
        (tmp_path / "r.json").write_text(json.dumps({"mode": "x", "model": model_to_dict(model)}))
        assert load_model(tmp_path / "r.json").aligned

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.pop("weights"),
            lambda d: d.update(format_version=99),
            lambda d: d.update(weights=d["weights"][:-1]),
            lambda d: d["members"][0].update(phi=[1.0]),
            lambda d: d.update(members=[]),
            lambda d: d["source_subspace"].update(center=[0.0]),
        ],
    )
    def test_schema_errors(self, mutate):
        doc = model_to_dict(_aligned_model(np.random.default_rng(2)))
        mutate(doc)
        with pytest.raises(SchemaError):
            model_from_dict(doc)
