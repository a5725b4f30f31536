import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from oracles import frobenius_distance
from uos.core import (InvalidArgumentError, OrderedSelection, SignalPair, UosInstance,
                      agreement_count, apply_selection, cost, gaussian_matrix, lift_up,
                      make_instance, parse_snr, random_selection, signal_distance, similarity)


@st.composite
def selections(draw, max_n=15):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(1, n))
    idx = sorted(draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m, unique=True)))
    return OrderedSelection(np.array(idx), n)


class TestOrderedSelection:
    def test_rejects_unsorted(self):
        with pytest.raises(InvalidArgumentError):
            OrderedSelection(np.array([2, 1]), 4)

    def test_rejects_duplicates(self):
        with pytest.raises(InvalidArgumentError):
            OrderedSelection(np.array([1, 1]), 4)

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            OrderedSelection(np.array([0, 4]), 4)
        with pytest.raises(InvalidArgumentError):
            OrderedSelection(np.array([-1, 2]), 4)

    def test_rejects_too_many(self):
        with pytest.raises(InvalidArgumentError):
            OrderedSelection(np.arange(5), 4)

    def test_immutable(self):
        s = OrderedSelection(np.array([0, 2]), 3)
        with pytest.raises(ValueError):
            s.indices[0] = 1

    def test_one_based_round_trip(self):
        s = OrderedSelection.from_one_based([1, 3, 4], 5)
        assert list(s.indices) == [0, 2, 3]
        assert s.one_based() == [1, 3, 4]

    def test_equality_and_hash(self):
        a = OrderedSelection(np.array([0, 2]), 3)
        b = OrderedSelection([0, 2], 3)
        assert a == b and hash(a) == hash(b)
        assert a != OrderedSelection(np.array([0, 2]), 4)

    @given(selections())
    def test_matrix_matches_apply(self, s):
        v = np.arange(s.n, dtype=float) * 1.5 - 2
        assert np.array_equal(s.to_matrix() @ v, apply_selection(s, v))


class TestApplyAndLift:
    def test_examples(self):
        v = np.array([10.0, 20.0, 30.0, 40.0])
        s = OrderedSelection.from_one_based([1, 3, 4], 4)
        assert list(apply_selection(s, v)) == [10.0, 30.0, 40.0]
        assert list(apply_selection(OrderedSelection.full(4), v)) == list(v)
        assert list(apply_selection(OrderedSelection.from_one_based([2], 2), [5, 7])) == [7]

    def test_lift_example(self):
        # L x = (x1, 0, x2, x3)
        s = OrderedSelection.from_one_based([1, 3, 4], 4)
        assert list(lift_up(s, [1.0, 2.0, 3.0])) == [1.0, 0.0, 2.0, 3.0]

    def test_dimension_mismatch(self):
        s = OrderedSelection.full(3)
        with pytest.raises(InvalidArgumentError):
            apply_selection(s, np.zeros(4))
        with pytest.raises(InvalidArgumentError):
            lift_up(s, np.zeros(2))

    @given(selections(), st.integers(0, 2**31))
    def test_select_after_lift_is_identity(self, s, seed):
        x = np.random.default_rng(seed).standard_normal(s.m)
        assert np.array_equal(apply_selection(s, lift_up(s, x)), x)

    @given(selections())
    def test_lift_is_transpose(self, s):
        x = np.arange(1, s.m + 1, dtype=float)
        assert np.array_equal(lift_up(s, x), s.to_matrix().T @ x)


class TestSimilarity:
    def test_examples(self):
        a = OrderedSelection.from_one_based([1, 3, 4], 5)
        b = OrderedSelection.from_one_based([1, 2, 4], 5)
        assert similarity(a, b) == pytest.approx(2 / 3)
        assert similarity(a, a) == 1.0
        c = OrderedSelection.from_one_based([1, 2], 4)
        d = OrderedSelection.from_one_based([3, 4], 4)
        assert similarity(c, d) == 0.0

    def test_trace_definition(self):
        a = OrderedSelection.from_one_based([1, 3, 4], 5)
        b = OrderedSelection.from_one_based([1, 2, 4], 5)
        assert np.trace(a.to_matrix().T @ b.to_matrix()) / 3 == similarity(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            similarity(OrderedSelection.full(3), OrderedSelection(np.arange(3), 4))

    @given(st.integers(0, 2**31), st.integers(2, 12))
    def test_symmetric(self, seed, n):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, n + 1))
        a, b = random_selection(n, m, rng), random_selection(n, m, rng)
        assert similarity(a, b) == similarity(b, a)
        assert (similarity(a, b) == 1.0) == (a == b)
        assert agreement_count(a, b) == round(similarity(a, b) * m)


class TestSignalDistance:
    def test_identical_is_zero(self):
        s = OrderedSelection.from_one_based([1, 3], 4)
        assert signal_distance(SignalPair([1.0, -2.0], s, [1.0, -2.0], s)) == 0.0

    def test_orthogonal(self):
        s = OrderedSelection.from_one_based([1, 3], 4)
        sp = OrderedSelection.from_one_based([2, 3], 4)
        d = signal_distance(SignalPair([1.0, 0.0], s, [0.0, 2.0], sp))
        assert d == pytest.approx(math.sqrt(2 * (1 + 4)))

    def test_hand_example(self):
        # m = 2, y = y' = (1, 0), nu = 1/2
        s = OrderedSelection.from_one_based([1, 2], 3)
        sp = OrderedSelection.from_one_based([1, 3], 3)
        p = SignalPair([1.0, 0.0], s, [1.0, 0.0], sp)
        assert signal_distance(p) == pytest.approx(math.sqrt(2))
        assert signal_distance(p) == pytest.approx(frobenius_distance([1, 0], [0, 1], [1, 0], [0, 2], 3))

    @settings(max_examples=60)
    @given(st.integers(0, 2**31))
    def test_matches_explicit_kronecker(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9)); m = int(rng.integers(1, n + 1)); k = int(rng.integers(1, 4))
        s, sp = random_selection(n, m, rng), random_selection(n, m, rng)
        y, yp = rng.standard_normal(k), rng.standard_normal(k)
        ref = frobenius_distance(y, s.indices, yp, sp.indices, n)
        assert signal_distance(SignalPair(y, s, yp, sp)) == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_same_selection_scales(self, rng):
        s = random_selection(10, 6, rng)
        y, yp = rng.standard_normal(3), rng.standard_normal(3)
        d = signal_distance(SignalPair(y, s, yp, s))
        assert d == pytest.approx(math.sqrt(6) * np.linalg.norm(y - yp), rel=1e-12)

    def test_pair_shape_checks(self):
        s = OrderedSelection.full(3)
        with pytest.raises(InvalidArgumentError):
            SignalPair([1.0], s, [1.0, 2.0], s)
        with pytest.raises(InvalidArgumentError):
            SignalPair([1.0], s, [1.0], OrderedSelection(np.arange(3), 4))


class TestCost:
    def test_truth_is_zero(self):
        inst = make_instance(20, 15, 3, seed=1)
        assert cost(inst.s_true, inst.y_true, inst) == pytest.approx(0.0, abs=1e-24)

    def test_zero_signal(self):
        inst = make_instance(20, 15, 3, 10, seed=1)
        assert cost(inst.s_true, np.zeros(3), inst) == pytest.approx(inst.x @ inst.x, rel=1e-15)

    def test_matches_matrix_product(self, rng):
        inst = make_instance(12, 8, 2, 5, seed=rng)
        s = random_selection(12, 8, rng)
        y = rng.standard_normal(2)
        ref = np.sum((inst.x - s.to_matrix() @ inst.B @ y) ** 2)
        assert cost(s, y, inst) == pytest.approx(ref, rel=1e-12)

    def test_noiseless_expansion(self, rng):
        inst = make_instance(30, 20, 4, seed=rng)
        y = rng.standard_normal(4)
        diff = apply_selection(inst.s_true, inst.B @ (inst.y_true - y))
        assert cost(inst.s_true, y, inst) == pytest.approx(diff @ diff, rel=1e-10)

    def test_dimension_checks(self):
        inst = make_instance(10, 6, 2, seed=0)
        with pytest.raises(InvalidArgumentError):
            cost(OrderedSelection.full(6), np.zeros(2), inst)
        with pytest.raises(InvalidArgumentError):
            cost(inst.s_true, np.zeros(3), inst)


class TestGaussianMatrix:
    def test_deterministic(self):
        assert np.array_equal(gaussian_matrix(2, 2, 9), gaussian_matrix(2, 2, 9))

    def test_moments(self):
        B = gaussian_matrix(1000, 1000, 3)
        assert abs(B.mean()) < 0.01
        assert abs(B.var() - 1) < 0.01

    def test_bad_shape(self):
        with pytest.raises(InvalidArgumentError):
            gaussian_matrix(0, 3)


class TestParseSnr:
    @pytest.mark.parametrize("text", ["noiseless", "inf", None, math.inf, "NoiseLess"])
    def test_noiseless(self, text):
        assert parse_snr(text) == math.inf

    def test_decibels(self):
        assert parse_snr(20) == pytest.approx(100.0)
        assert parse_snr("10") == pytest.approx(10.0)
        assert parse_snr(0) == 1.0

    @pytest.mark.parametrize("bad", ["loud", float("nan"), -math.inf])
    def test_invalid(self, bad):
        with pytest.raises(InvalidArgumentError):
            parse_snr(bad)


class TestMakeInstance:
    def test_noiseless(self):
        inst = make_instance(30, 20, 3, "noiseless", seed=4)
        assert np.all(inst.w == 0)
        assert np.array_equal(inst.x, apply_selection(inst.s_true, inst.B @ inst.y_true))
        assert inst.noise_norm == 0.0

    def test_exact_snr(self):
        inst = make_instance(50, 40, 5, 20, seed=4)
        ratio = (inst.clean @ inst.clean) / (inst.w @ inst.w)
        assert ratio == pytest.approx(100.0, rel=1e-12)
        assert inst.snr == pytest.approx(100.0, rel=1e-12)
        assert np.array_equal(inst.x, inst.clean + inst.w)

    def test_k_exceeds_m(self):
        with pytest.raises(InvalidArgumentError, match="k must not exceed m"):
            make_instance(20, 5, 10)

    def test_m_exceeds_n(self):
        with pytest.raises(InvalidArgumentError):
            make_instance(5, 6, 2)

    def test_custom_matrix(self):
        B = np.ones((6, 2))
        inst = make_instance(6, 4, 2, seed=0, B=B)
        assert np.array_equal(inst.B, B)
        with pytest.raises(InvalidArgumentError):
            make_instance(6, 4, 3, seed=0, B=B)

    def test_fields_are_read_only(self):
        inst = make_instance(10, 8, 2, seed=0)
        with pytest.raises(ValueError):
            inst.x[0] = 1.0

    def test_selection_uniform(self):
        # 10^5 draws over the C(4, 2) = 6 selections
        rng = np.random.default_rng(77)
        counts = {}
        for _ in range(100_000):
            key = tuple(random_selection(4, 2, rng).indices)
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        freq = np.array(list(counts.values())) / 100_000
        assert np.all(np.abs(freq - 1 / 6) < 0.01)
        assert chisquare(list(counts.values())).pvalue > 1e-3

    def test_from_observations(self):
        inst = UosInstance.from_observations(np.eye(4, 2), np.ones(3), 0.5)
        assert inst.noise_norm == 0.5 and inst.m == 3 and inst.k == 2
        with pytest.raises(InvalidArgumentError):
            UosInstance.from_observations(np.eye(4, 2), np.ones(1), 0.5)
