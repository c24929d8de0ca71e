from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import (
    brute_best_path,
    brute_forward_posteriors,
    naive_trailing_median,
    path_probability,
    random_hmm,
)
from cellloc.postprocess import (
    ForwardState,
    Hmm,
    chain_structural_zeros,
    fit_hmm,
    fit_hmm_segments,
    forward_step,
    hmm_filter,
    hmm_filter_with_probabilities,
    median_filter,
    transition_counts,
    viterbi,
)


def _uniform_hmm(b=None, n=3):
    a = np.full((n, n), 1.0 / n)
    if b is None:
        b = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]])
    return Hmm(a, np.asarray(b, dtype=np.float64), np.full(n, 1.0 / n))


class TestMedianFilter:
    def test_window_zero_is_identity(self, rng):
        y = rng.integers(0, 3, size=50).astype(np.int64)
        np.testing.assert_array_equal(median_filter(y, 0), y)

    def test_lone_spike_removed(self):
        got = median_filter(np.array([0, 1, 0, 0]), 2)
        np.testing.assert_array_equal(got, [0, 0, 0, 0])

    def test_matches_naive(self, rng):
        y = rng.integers(0, 3, size=200).astype(np.int64)
        for m in (0, 1, 5, 10):
            want = naive_trailing_median(list(y), m)
            np.testing.assert_array_equal(median_filter(y, m), want)

    def test_even_window_takes_lower_median(self):
        # window [0, 2] sorts to itself; the lower middle wins
        got = median_filter(np.array([0, 2]), 1)
        np.testing.assert_array_equal(got, [0, 0])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(min_value=0, max_value=2), min_size=1, max_size=40),
           st.integers(min_value=0, max_value=12))
    def test_matches_naive_property(self, y, m):
        got = median_filter(np.array(y, dtype=np.int64), m)
        np.testing.assert_array_equal(got, naive_trailing_median(y, m))

    def test_empty_sequence(self):
        assert median_filter(np.empty(0, dtype=np.int64), 3).shape == (0,)

    def test_rejects_negative_window(self):
        with pytest.raises(ValueError):
            median_filter(np.array([0]), -1)


class TestHmmModel:
    def test_row_sum_validation(self):
        a = np.array([[0.6, 0.5], [0.5, 0.5]])
        with pytest.raises(ValueError, match="row 0"):
            Hmm(a, np.eye(2), np.array([0.5, 0.5]))

    def test_negative_entry(self):
        a = np.array([[1.1, -0.1], [0.5, 0.5]])
        with pytest.raises(ValueError, match="non-negative"):
            Hmm(a, np.eye(2), np.array([0.5, 0.5]))

    def test_pi0_validation(self):
        with pytest.raises(ValueError, match="probability"):
            Hmm(np.eye(2), np.eye(2), np.array([0.7, 0.5]))

    def test_forbidden_must_be_zero(self):
        a = np.array([[0.5, 0.5], [0.5, 0.5]])
        forbidden = np.array([[False, True], [False, False]])
        with pytest.raises(ValueError, match="forbidden"):
            Hmm(a, np.eye(2), np.array([0.5, 0.5]), forbidden=forbidden)
        a0 = np.array([[1.0, 0.0], [0.5, 0.5]])
        Hmm(a0, np.eye(2), np.array([0.5, 0.5]), forbidden=forbidden)

    def test_json_roundtrip_exact(self, rng):
        a, b, pi0 = random_hmm(rng)
        model = Hmm(np.array(a), np.array(b), np.array(pi0), eps=1e-6)
        back = Hmm.from_json(model.to_json())
        np.testing.assert_array_equal(model.a, back.a)
        np.testing.assert_array_equal(model.b, back.b)
        np.testing.assert_array_equal(model.pi0, back.pi0)
        assert back.forbidden is None
        assert back.eps == model.eps
        assert back.to_json() == model.to_json()

    def test_json_roundtrip_with_structural_zeros(self, rng):
        truth = np.repeat([0, 1, 2, 1, 0], 10)
        model = fit_hmm(truth, truth, eps=1e-6, structural_zeros=chain_structural_zeros())
        back = Hmm.from_json(model.to_json())
        np.testing.assert_array_equal(model.forbidden, back.forbidden)
        np.testing.assert_array_equal(model.a, back.a)
        assert back.to_json() == model.to_json()

    def test_json_field_names(self, rng):
        import json

        a, b, pi0 = random_hmm(rng)
        payload = json.loads(Hmm(np.array(a), np.array(b), np.array(pi0)).to_json())
        assert set(payload) == {"format", "version", "n", "a", "b", "pi0", "eps",
                                "structural_zeros"}
        assert payload["n"] == 3
        assert payload["structural_zeros"] is None

    def test_rejects_wrong_format(self):
        with pytest.raises(ValueError, match="not a"):
            Hmm.from_json('{"format": "x"}')

    def test_chain_structural_zeros_pattern(self):
        want = np.array([[False, False, True],
                         [False, False, False],
                         [True, False, False]])
        np.testing.assert_array_equal(chain_structural_zeros(3), want)


class TestFitHmm:
    def test_transition_hand_tally(self):
        counts = transition_counts(np.array([0, 0, 1, 1]))
        want = np.array([[1, 1, 0], [0, 1, 0], [0, 0, 0]])
        np.testing.assert_array_equal(counts, want)

    def test_fit_without_smoothing_matches_hand_result(self):
        truth = np.array([0, 0, 1, 1])
        pred = np.array([0, 1, 1, 1])
        model = fit_hmm(truth, pred, eps=0.0)
        np.testing.assert_allclose(model.a[0], [0.5, 0.5, 0.0])
        np.testing.assert_allclose(model.a[1], [0.0, 1.0, 0.0])
        np.testing.assert_allclose(model.a[2], [1 / 3, 1 / 3, 1 / 3])  # no data: uniform
        np.testing.assert_allclose(model.b[0], [0.5, 0.5, 0.0])
        np.testing.assert_allclose(model.b[1], [0.0, 1.0, 0.0])
        np.testing.assert_allclose(model.pi0, [1 / 3, 1 / 3, 1 / 3])

    def test_smoothing_keeps_rows_stochastic(self, rng):
        truth = rng.integers(0, 3, size=200).astype(np.int64)
        pred = rng.integers(0, 3, size=200).astype(np.int64)
        model = fit_hmm(truth, pred, eps=1e-6)
        np.testing.assert_allclose(model.a.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(model.b.sum(axis=1), 1.0, atol=1e-12)
        assert (model.a > 0).all() and (model.b > 0).all()

    def test_structural_zeros_stay_zero(self, rng):
        truth = np.repeat([0, 1, 2, 1, 0], 20)
        pred = truth.copy()
        model = fit_hmm(truth, pred, eps=1e-6, structural_zeros=chain_structural_zeros())
        assert model.a[0, 2] == 0.0 and model.a[2, 0] == 0.0
        assert model.a[0, 1] > 0.0

    def test_segments_do_not_bridge_boundaries(self):
        # back-to-back segments ending 0 and starting 2 must not count a 0->2 hop
        seg1 = (np.array([0, 0]), np.array([0, 0]))
        seg2 = (np.array([2, 2]), np.array([2, 2]))
        model = fit_hmm_segments([seg1, seg2], eps=0.0)
        assert model.a[0, 2] == 0.0
        joined = fit_hmm(np.array([0, 0, 2, 2]), np.array([0, 0, 2, 2]), eps=0.0)
        assert joined.a[0, 2] == 0.5

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="no training frames"):
            fit_hmm_segments([], eps=0.0)

    def test_rejects_out_of_range_labels(self):
        with pytest.raises(ValueError):
            fit_hmm(np.array([0, 5]), np.array([0, 0]))


class TestForward:
    def test_single_observation_reweights_prior_by_emission_column(self):
        b = np.array([[0.7, 0.2, 0.1], [0.2, 0.6, 0.2], [0.1, 0.2, 0.7]])
        model = _uniform_hmm(b)
        z, pis = hmm_filter_with_probabilities(model, np.array([1]))
        want = b[:, 1] / b[:, 1].sum()
        np.testing.assert_allclose(pis[0], want, atol=1e-12)
        assert z[0] == 1

    def test_uniform_transitions_make_steps_independent(self):
        # with a uniform transition matrix the propagated prior is uniform, so
        # each posterior is just the renormalized emission column
        b = np.array([[0.7, 0.2, 0.1], [0.2, 0.6, 0.2], [0.1, 0.2, 0.7]])
        model = _uniform_hmm(b)
        y = np.array([0, 2, 1, 1])
        _, pis = hmm_filter_with_probabilities(model, y)
        for t, obs in enumerate(y):
            np.testing.assert_allclose(pis[t], b[:, obs] / b[:, obs].sum(), atol=1e-12)

    def test_matches_brute_force_enumeration(self, rng):
        for _ in range(50):
            a, b, pi0 = random_hmm(rng)
            T = int(rng.integers(1, 7))
            y = rng.integers(0, 3, size=T).astype(np.int64)
            model = Hmm(np.array(a), np.array(b), np.array(pi0))
            _, pis = hmm_filter_with_probabilities(model, y)
            want = brute_forward_posteriors(list(y), a, b, pi0)
            np.testing.assert_allclose(pis, want, atol=1e-9, rtol=0.0)

    def test_streaming_equals_batch(self, rng):
        a, b, pi0 = random_hmm(rng)
        model = Hmm(np.array(a), np.array(b), np.array(pi0))
        y = rng.integers(0, 3, size=40).astype(np.int64)
        z_batch, pis = hmm_filter_with_probabilities(model, y)
        state = ForwardState.initial(model)
        for t, obs in enumerate(y):
            z_t, state = forward_step(model, state, int(obs))
            assert z_t == z_batch[t]
            np.testing.assert_allclose(state.pi, pis[t], atol=1e-12)
        assert state.t == len(y) - 1

    def test_causality_prefix_property(self, rng):
        a, b, pi0 = random_hmm(rng)
        model = Hmm(np.array(a), np.array(b), np.array(pi0))
        y = rng.integers(0, 3, size=30).astype(np.int64)
        full = hmm_filter(model, y)
        for cut in (1, 7, 29):
            np.testing.assert_array_equal(hmm_filter(model, y[:cut]), full[:cut])

    def test_argmax_tie_takes_smallest_state(self):
        b = np.array([[0.5, 0.5], [0.5, 0.5]])
        model = Hmm(np.full((2, 2), 0.5), b, np.array([0.5, 0.5]))
        z = hmm_filter(model, np.array([0, 1, 0]))
        np.testing.assert_array_equal(z, [0, 0, 0])

    def test_impossible_observation_raises(self):
        b = np.array([[1.0, 0.0], [1.0, 0.0]])
        model = Hmm(np.full((2, 2), 0.5), b, np.array([0.5, 0.5]))
        with pytest.raises(ValueError, match="impossible"):
            hmm_filter(model, np.array([1]))

    def test_observation_out_of_range(self):
        model = _uniform_hmm()
        with pytest.raises(ValueError):
            hmm_filter(model, np.array([3]))
        with pytest.raises(ValueError):
            forward_step(model, ForwardState.initial(model), 3)

    def test_empty_sequence(self):
        model = _uniform_hmm()
        z, pis = hmm_filter_with_probabilities(model, np.empty(0, dtype=np.int64))
        assert z.shape == (0,) and pis.shape == (0, 3)


class TestViterbi:
    def test_matches_exhaustive_max(self, rng):
        for _ in range(50):
            a, b, pi0 = random_hmm(rng)
            T = int(rng.integers(1, 7))
            y = rng.integers(0, 3, size=T).astype(np.int64)
            model = Hmm(np.array(a), np.array(b), np.array(pi0))
            path = viterbi(model, y)
            best_w, _ = brute_best_path(list(y), a, b, pi0)
            got_w = path_probability(list(path), list(y), a, b, pi0)
            assert abs(np.log(got_w) - np.log(best_w)) <= 1e-9

    def test_tie_takes_smallest_state(self):
        model = _uniform_hmm(np.full((3, 3), 1.0 / 3))
        np.testing.assert_array_equal(viterbi(model, np.array([0, 1, 2])), [0, 0, 0])

    def test_structural_zero_blocks_path(self):
        # a direct 0 -> 2 hop is forbidden, so decoding a clean 0...2 handover
        # must visit state 1 even though no observation supports it
        a = np.array([[0.8, 0.2, 0.0], [0.1, 0.8, 0.1], [0.0, 0.2, 0.8]])
        b = np.array([[0.9, 0.05, 0.05], [0.05, 0.9, 0.05], [0.05, 0.05, 0.9]])
        pi0 = np.array([1 / 3, 1 / 3, 1 / 3])
        y = np.array([0, 0, 0, 2, 2, 2])
        model = Hmm(a, b, pi0)
        path = viterbi(model, y)
        assert path[0] == 0 and path[-1] == 2
        assert 1 in path
        assert (np.abs(np.diff(path)) <= 1).all()
        best_w, _ = brute_best_path(list(y), a.tolist(), b.tolist(), list(pi0))
        assert path_probability(list(path), list(y), a.tolist(), b.tolist(), list(pi0)) == \
            pytest.approx(best_w)

    def test_impossible_sequence_raises(self):
        b = np.array([[1.0, 0.0], [1.0, 0.0]])
        model = Hmm(np.full((2, 2), 0.5), b, np.array([0.5, 0.5]))
        with pytest.raises(ValueError, match="impossible"):
            viterbi(model, np.array([0, 1]))
