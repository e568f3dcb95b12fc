"""Output heads and losses: hand-computed oracles for the softmax head,
sigmoid heads, cross-entropy, squared error, the mixed loss, and score
aggregation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mkdm.tensor as T
from mkdm.errors import ConfigError, ContractError, DataError
from mkdm.gradcheck import fd_grad_check
from mkdm.heads import (
    PROB_FLOOR,
    StudentHeads,
    aggregate_prediction,
    combined_loss,
    golden_forward,
    golden_loss,
    head_param_count,
    soft_forward,
    soft_loss,
)
from mkdm.tensor import Parameter, Tensor

LN3 = math.log(3.0)


def _heads(hidden=1, n_teachers=1, dtype=np.float64, no_bias=False):
    heads = StudentHeads.create(hidden, n_teachers, seed=0, no_bias=no_bias)
    for p in heads.parameters():
        p.data = p.data.astype(dtype)
    return heads


class TestGoldenForward:
    def test_zero_weights_give_coin_flip(self):
        heads = _heads()
        heads.gold_w.data = np.zeros((1, 2))
        probs = golden_forward(heads, Tensor(np.array([7.0])))
        np.testing.assert_allclose(probs.data, [0.5, 0.5], atol=1e-6)

    def test_hand_softmax(self):
        # logits [0, ln 3] -> [1, 3]/4
        heads = _heads()
        heads.gold_w.data = np.array([[0.0, LN3]])
        probs = golden_forward(heads, Tensor(np.array([1.0])))
        np.testing.assert_allclose(probs.data, [0.25, 0.75], atol=1e-6)

    def test_shift_invariance(self):
        heads = _heads()
        heads.gold_w.data = np.array([[0.0, LN3]])
        base = golden_forward(heads, Tensor(np.array([1.0]))).data.copy()
        heads.gold_b.data = np.array([123.0, 123.0])
        shifted = golden_forward(heads, Tensor(np.array([1.0]))).data
        np.testing.assert_allclose(shifted, base, atol=1e-6)

    def test_batched_rows_sum_to_one(self):
        heads = _heads(hidden=4)
        rng = np.random.default_rng(0)
        probs = golden_forward(heads, Tensor(rng.standard_normal((6, 4))))
        assert probs.shape == (6, 2)
        np.testing.assert_allclose(probs.data.sum(axis=1), np.ones(6), atol=1e-6)


class TestSoftForward:
    def test_zero_weights_give_half(self):
        heads = _heads(hidden=3)
        heads.soft_ws[0].data = np.zeros((3, 1))
        score = soft_forward(heads, Tensor(np.array([1.0, 2.0, 3.0])), 0)
        assert score.data == pytest.approx(0.5, abs=1e-6)

    def test_hand_sigmoid(self):
        # logit ln 3 -> 3/4
        heads = _heads()
        heads.soft_ws[0].data = np.array([[LN3]])
        score = soft_forward(heads, Tensor(np.array([1.0])), 0)
        assert score.data == pytest.approx(0.75, abs=1e-6)

    def test_identical_heads_agree(self):
        heads = _heads(hidden=4, n_teachers=2)
        heads.soft_ws[1].data = heads.soft_ws[0].data.copy()
        h_1 = Tensor(np.arange(4, dtype=np.float64))
        a = soft_forward(heads, h_1, 0)
        b = soft_forward(heads, h_1, 1)
        np.testing.assert_array_equal(a.data, b.data)

    @pytest.mark.parametrize("index", [-1, 1, 5])
    def test_index_out_of_range(self, index):
        heads = _heads(n_teachers=1)
        with pytest.raises(ContractError):
            soft_forward(heads, Tensor(np.array([1.0])), index)


class TestGoldenLoss:
    def test_certain_correct_prediction_costs_nothing(self):
        loss = golden_loss(Tensor(np.array([[0.0, 1.0]])), np.array([1]))
        assert loss.data == pytest.approx(0.0, abs=1e-12)

    def test_coin_flip_costs_ln2(self):
        loss = golden_loss(Tensor(np.array([[0.5, 0.5]])), np.array([1]))
        assert loss.data == pytest.approx(math.log(2.0), abs=1e-6)

    def test_vanishing_probability_is_clamped(self):
        loss = golden_loss(Tensor(np.array([[1e-30, 1.0]])), np.array([0]))
        assert np.isfinite(loss.data)
        assert loss.data == pytest.approx(-math.log(PROB_FLOOR), rel=1e-6)

    def test_batch_mean(self):
        probs = Tensor(np.array([[0.5, 0.5], [0.25, 0.75]]))
        loss = golden_loss(probs, np.array([0, 1]))
        expected = (math.log(2.0) - math.log(0.75)) / 2.0
        assert loss.data == pytest.approx(expected, abs=1e-9)

    def test_bad_labels_rejected(self):
        probs = Tensor(np.array([[0.5, 0.5]]))
        with pytest.raises(ContractError):
            golden_loss(probs, np.array([2]))

    def test_gradient_is_probs_minus_onehot(self):
        # Softmax+CE identity, checked through the tape.
        logits = Parameter("logits", np.array([[0.2, -1.3], [2.0, 0.1]]),
                           dtype=np.float64)
        gold = np.array([1, 0])
        with T.Tape() as tape:
            probs = T.softmax_rows(logits)
            loss = golden_loss(probs, gold)
        T.backward(tape, loss, [logits])
        onehot = np.eye(2)[gold]
        expected = (probs.data - onehot) / 2.0
        np.testing.assert_allclose(logits.grad, expected, atol=1e-5)


class TestSoftLoss:
    def test_perfect_match_costs_nothing(self):
        assert soft_loss(0.3, Tensor(np.array(0.3))).data == pytest.approx(0.0)

    def test_extreme_miss_costs_one(self):
        assert soft_loss(1.0, Tensor(np.array(0.0))).data == pytest.approx(1.0)

    def test_hand_arithmetic(self):
        # (0.7 - 0.4)^2 = 0.09
        loss = soft_loss(0.7, Tensor(np.array(0.4)))
        assert loss.data == pytest.approx(0.09, abs=1e-6)

    def test_batch_mean(self):
        loss = soft_loss(np.array([0.0, 1.0]), Tensor(np.array([0.0, 0.0])))
        assert loss.data == pytest.approx(0.5, abs=1e-9)

    @pytest.mark.parametrize("z", [-0.1, 1.5])
    def test_out_of_range_teacher_score_rejected(self, z):
        with pytest.raises(DataError):
            soft_loss(z, Tensor(np.array(0.5)))


class TestCombinedLoss:
    def test_alpha_zero_returns_gold_term_itself(self):
        l_gold = Tensor(np.array(0.7))
        out = combined_loss(l_gold, [Tensor(np.array(0.1))], 0.0)
        assert out is l_gold

    def test_alpha_one_ignores_gold_entirely(self):
        softs = [Tensor(np.array(0.2)), Tensor(np.array(0.6))]
        out = combined_loss(None, softs, 1.0)
        assert out.data == pytest.approx(0.4, abs=1e-9)

    def test_hand_arithmetic(self):
        # 0.1*1.0 + 0.9*mean(0.2, 0.4, 0.6) = 0.46
        softs = [Tensor(np.array(v)) for v in (0.2, 0.4, 0.6)]
        out = combined_loss(Tensor(np.array(1.0)), softs, 0.9)
        assert out.data == pytest.approx(0.46, abs=1e-6)

    def test_positive_alpha_needs_soft_terms(self):
        with pytest.raises(ConfigError):
            combined_loss(Tensor(np.array(1.0)), [], 0.5)

    def test_alpha_zero_needs_gold_term(self):
        with pytest.raises(ConfigError):
            combined_loss(None, [Tensor(np.array(0.1))], 0.0)

    @pytest.mark.parametrize("alpha", [-0.1, 1.01])
    def test_alpha_out_of_range(self, alpha):
        with pytest.raises(ConfigError):
            combined_loss(Tensor(np.array(1.0)), [Tensor(np.array(0.1))], alpha)

    def test_single_teacher_reduces_to_two_term_form(self):
        for alpha in (0.1, 0.5, 0.9):
            out = combined_loss(Tensor(np.array(0.8)), [Tensor(np.array(0.3))], alpha)
            assert out.data == pytest.approx((1 - alpha) * 0.8 + alpha * 0.3,
                                             rel=1e-12)

    @given(
        alpha=st.floats(0.0, 1.0),
        l_gold=st.floats(0.0, 10.0),
        softs=st.lists(st.floats(0.0, 10.0), min_size=1, max_size=5),
    )
    @settings(max_examples=60, deadline=None)
    def test_stays_between_the_two_terms(self, alpha, l_gold, softs):
        out = combined_loss(
            Tensor(np.array(l_gold)), [Tensor(np.array(v)) for v in softs], alpha
        )
        soft_mean = float(np.mean(softs))
        lo, hi = min(l_gold, soft_mean), max(l_gold, soft_mean)
        assert lo - 1e-9 <= float(out.data) <= hi + 1e-9


class TestAggregate:
    def test_hand_arithmetic(self):
        out = aggregate_prediction(0.8, [0.6, 0.7])
        assert out == pytest.approx(0.7, abs=1e-6)

    @pytest.mark.parametrize("n", [0, 1, 3])
    def test_unanimous_half_stays_half(self, n):
        out = aggregate_prediction(0.5, [0.5] * n)
        assert out == pytest.approx(0.5, abs=1e-12)

    def test_no_teachers_passes_golden_through(self):
        assert aggregate_prediction(0.37, []) == 0.37

    def test_excluding_golden_averages_teachers(self):
        out = aggregate_prediction(0.9, [0.2, 0.4], include_golden=False)
        assert out == pytest.approx(0.3, abs=1e-12)

    def test_excluding_golden_with_no_teachers_rejected(self):
        with pytest.raises(ConfigError):
            aggregate_prediction(0.9, [], include_golden=False)

    def test_out_of_range_inputs_rejected(self):
        with pytest.raises(ContractError):
            aggregate_prediction(1.2, [0.5])
        with pytest.raises(ContractError):
            aggregate_prediction(0.5, [np.array([0.5, -0.1])])

    def test_vectorized_over_batch(self):
        out = aggregate_prediction(
            np.array([0.8, 0.2]), [np.array([0.6, 0.4]), np.array([0.7, 0.0])]
        )
        np.testing.assert_allclose(out, [0.7, 0.2], atol=1e-12)

    @given(
        p=st.floats(0.0, 1.0),
        scores=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=60, deadline=None)
    def test_permutation_invariant_and_bounded(self, p, scores, seed):
        out = aggregate_prediction(p, scores)
        perm = list(np.random.default_rng(seed).permutation(scores))
        assert aggregate_prediction(p, perm) == pytest.approx(float(out), rel=1e-12)
        values = [p] + scores
        assert min(values) - 1e-12 <= float(out) <= max(values) + 1e-12


class TestParamAccounting:
    @pytest.mark.parametrize("no_bias", [False, True])
    def test_formula_matches_allocation(self, no_bias):
        rng = np.random.default_rng(2)
        for _ in range(5):
            hidden = int(rng.integers(1, 64))
            n = int(rng.integers(0, 5))
            heads = StudentHeads.create(hidden, n, seed=3, no_bias=no_bias)
            assert heads.param_count() == head_param_count(hidden, n, no_bias)

    def test_formula_values(self):
        assert head_param_count(128, 3) == (2 * 128 + 2) + 3 * (128 + 1)
        assert head_param_count(128, 0) == 258

    def test_negative_teacher_count_rejected(self):
        with pytest.raises(ConfigError):
            StudentHeads.create(8, -1, seed=0)


class TestEndToEndGradient:
    def test_combined_loss_gradcheck(self):
        rng = np.random.default_rng(4)
        heads = _heads(hidden=6, n_teachers=2)
        h_1 = Parameter("h1", rng.standard_normal((3, 6)), dtype=np.float64)
        gold = np.array([1, 0, 1])
        z = [rng.uniform(0.05, 0.95, size=3) for _ in range(2)]

        def build():
            probs = golden_forward(heads, h_1)
            l_gold = golden_loss(probs, gold)
            softs = [soft_loss(z[i], soft_forward(heads, h_1, i)) for i in range(2)]
            return combined_loss(l_gold, softs, 0.35)

        worst = fd_grad_check(build, [h_1] + heads.parameters(),
                              rng=np.random.default_rng(0))
        assert worst < 1e-3
