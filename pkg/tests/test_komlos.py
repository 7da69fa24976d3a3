"""Tail-hull extraction: convergence on bounded sequences, escape
certificates on unbounded ones, and the supporting mass estimates."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cckit import (
    InputError,
    NonConvergent,
    Polytope,
    ProbSpace,
    RandVar,
    SequenceSpec,
    Unbounded,
    WeightVector,
    check_bounded_prefix,
    combo_mass_bound,
    contains,
    detect_escape,
    escape_eps,
    extract,
    metric_d,
    prob_at_least,
    trace_to_jsonl,
)

U2 = ProbSpace.uniform(2)


def rv(space, vals):
    return RandVar(space, np.asarray(vals, dtype=float))


def seq_from_values(space, rows, horizon=None):
    terms = [rv(space, row) for row in rows]
    return SequenceSpec(space, terms, horizon or len(terms))


def alternating_seq(horizon=64):
    rows = [[1.0, 0.0] if n % 2 else [0.0, 1.0] for n in range(horizon)]
    return seq_from_values(U2, rows)


def escaping_seq(horizon=64):
    # f_n = n on the first atom, 0 on the second: half the mass rides
    # the diagonal P[f_n >= n] = 1/2 forever.
    rows = [[float(n), 0.0] for n in range(1, horizon + 1)]
    return seq_from_values(U2, rows)


def ambient_for(seq):
    return Polytope([seq.term(n) for n in range(1, seq.horizon + 1)])


class TestSequenceSpec:
    def test_list_dict_callable_agree(self):
        rows = [[1.0, 2.0], [3.0, 4.0]]
        s_list = seq_from_values(U2, rows)
        s_dict = SequenceSpec(U2, {1: rv(U2, rows[0]), 2: rv(U2, rows[1])}, 2)
        s_call = SequenceSpec(U2, lambda n: rv(U2, rows[n - 1]), 2)
        for n in (1, 2):
            assert np.array_equal(s_list.term(n).values, s_dict.term(n).values)
            assert np.array_equal(s_list.term(n).values, s_call.term(n).values)

    def test_index_bounds(self):
        s = alternating_seq(8)
        with pytest.raises(InputError):
            s.term(0)
        with pytest.raises(InputError):
            s.term(9)

    def test_short_list_rejected(self):
        with pytest.raises(InputError):
            SequenceSpec(U2, [rv(U2, [1.0, 0.0])], 2)

    def test_negative_term_rejected(self):
        s = SequenceSpec(U2, [rv(U2, [1.0, -0.5])], 1)
        with pytest.raises(InputError):
            s.term(1)

    def test_values_matrix_columns(self):
        s = alternating_seq(4)
        V = s.values_matrix()
        assert V.shape == (2, 4)
        assert np.array_equal(V[:, 0], s.term(1).values)
        assert np.array_equal(V[:, 3], s.term(4).values)
        V2 = s.values_matrix(start=3)
        assert V2.shape == (2, 2)


class TestBoundednessDiagnostics:
    def test_bounded_prefix_on_alternating(self):
        rep = check_bounded_prefix(alternating_seq(32), [1.0, 2.0, 4.0])
        sups = [row["sup"] for row in rep["per_M"]]
        assert sups == [0.5, 0.0, 0.0]
        assert rep["escaping"] is False

    def test_bounded_prefix_on_escaper(self):
        rep = check_bounded_prefix(escaping_seq(32), [1.0, 2.0, 4.0])
        sups = [row["sup"] for row in rep["per_M"]]
        assert sups == [0.5, 0.5, 0.5]
        assert rep["escaping"] is True

    def test_grid_validation(self):
        s = alternating_seq(8)
        with pytest.raises(InputError):
            check_bounded_prefix(s, [])
        with pytest.raises(InputError):
            check_bounded_prefix(s, [2.0, 1.0])
        with pytest.raises(InputError):
            check_bounded_prefix(s, [-1.0, 1.0])

    def test_escape_eps_on_escaper(self):
        eps, start, q_map = escape_eps(escaping_seq(64))
        assert start == 16
        assert eps == pytest.approx(0.5, abs=1e-6)
        assert all(q == 0.5 for q in q_map.values())

    def test_escape_eps_zero_on_bounded(self):
        eps, _, q_map = escape_eps(alternating_seq(64))
        assert eps == 0.0
        assert all(q == 0.0 for q in q_map.values())


class TestComboMassBound:
    def test_worked_instance(self):
        pts = [rv(U2, [3.0, 0.0]), rv(U2, [0.0, 3.0])]
        w = WeightVector([0.5, 0.5])
        # g = (1.5, 1.5); threshold 3*0.4/2 = 0.6; P[g >= 0.6] = 1 >= 0.2
        assert combo_mass_bound(pts, w, n=3.0, eps=0.4) is True

    def test_precondition_violation_raises(self):
        pts = [rv(U2, [3.0, 0.0]), rv(U2, [0.0, 0.0])]
        w = WeightVector([0.5, 0.5])
        with pytest.raises(InputError, match="precondition"):
            combo_mass_bound(pts, w, n=3.0, eps=0.4)

    def test_parameter_validation(self):
        pts = [rv(U2, [3.0, 0.0])]
        w = WeightVector([1.0])
        with pytest.raises(InputError):
            combo_mass_bound(pts, w, n=3.0, eps=0.0)
        with pytest.raises(InputError):
            combo_mass_bound(pts, w, n=3.0, eps=1.0)
        with pytest.raises(InputError):
            combo_mass_bound(pts, w, n=-1.0, eps=0.4)
        # length mismatch between points and weights
        with pytest.raises(InputError):
            combo_mass_bound(pts * 2, w, n=3.0, eps=0.4)

    @given(data=st.data())
    @settings(max_examples=80, deadline=None)
    def test_conclusion_never_fails_under_preconditions(self, data):
        # whenever every point clears P[f >= n] > eps, the recombined
        # mass bound must hold -- no counterexample may exist
        space = ProbSpace.uniform(3)
        n = 2.0
        eps = data.draw(st.floats(0.05, 0.45))
        pts = []
        for _ in range(data.draw(st.integers(1, 4))):
            # at least two of three atoms sit at or above n
            lo = data.draw(st.floats(0.0, 1.5))
            hi1 = data.draw(st.floats(2.0, 9.0))
            hi2 = data.draw(st.floats(2.0, 9.0))
            vals = [hi1, hi2, lo]
            pts.append(rv(space, vals))
        raw = [data.draw(st.floats(0.01, 1.0)) for _ in pts]
        w = WeightVector(np.asarray(raw) / np.sum(raw))
        assert combo_mass_bound(pts, w, n=n, eps=eps) is True


class TestExtractBounded:
    def test_constant_sequence_returns_itself(self):
        f = rv(U2, [0.3, 0.7])
        s = SequenceSpec(U2, lambda n: f, 32)
        limit, trace = extract(s, Polytope([f]), tol=1e-9)
        assert np.allclose(limit.values, [0.3, 0.7], atol=1e-9)
        assert trace[-1].metric_step == 0.0

    def test_alternating_converges_to_mean(self):
        s = alternating_seq(64)
        limit, trace = extract(s, ambient_for(s), tol=1e-6)
        assert np.allclose(limit.values, [0.5, 0.5], atol=1e-5)

    def test_u_exactly_nonincreasing(self):
        s = alternating_seq(64)
        _, trace = extract(s, ambient_for(s), tol=1e-6)
        for prev, cur in zip(trace, trace[1:]):
            assert cur.u <= prev.u

    def test_weights_reproduce_iterate(self):
        s = alternating_seq(64)
        _, trace = extract(s, ambient_for(s), tol=1e-6)
        for state in trace:
            assert np.max(np.abs(state.recombined().values - state.g.values)) <= 1e-10
            total = sum(state.weights_dict().values())
            assert total == pytest.approx(1.0, abs=1e-12)
            assert all(n >= state.D for n in state.indices)

    def test_prefix_junk_does_not_move_limit(self):
        clean = alternating_seq(64)
        junk = rv(U2, [17.0, 3.0])
        rows = [[17.0, 3.0]] + [
            [1.0, 0.0] if n % 2 else [0.0, 1.0] for n in range(64)
        ]
        dirty = seq_from_values(U2, rows)
        lim_clean, _ = extract(clean, ambient_for(clean), tol=1e-6)
        lim_dirty, trace = extract(dirty, ambient_for(dirty), tol=1e-6)
        assert metric_d(lim_clean, lim_dirty) <= 2e-6
        # the accepted stage draws only on indices past the junk
        assert all(n >= 2 for n in trace[-1].indices)

    def test_slow_sequence_raises_nonconvergent(self):
        rows = [[1.0 / n, 0.0] for n in range(1, 65)]
        s = seq_from_values(U2, rows)
        with pytest.raises(NonConvergent):
            extract(s, ambient_for(s), tol=1e-9)

    def test_slow_sequence_converges_at_matching_tol(self):
        rows = [[1.0 / n, 0.0] for n in range(1, 65)]
        s = seq_from_values(U2, rows)
        limit, _ = extract(s, ambient_for(s), tol=0.01)
        assert limit.values[0] <= 1.0 / 32

    def test_input_validation(self):
        s = alternating_seq(8)
        with pytest.raises(InputError):
            extract(s, ambient_for(s), tol=0.0)
        # ambient set missing some terms
        with pytest.raises(InputError):
            extract(s, Polytope([rv(U2, [1.0, 0.0])]), tol=1e-6)

    @given(data=st.data())
    @settings(max_examples=25, deadline=None)
    def test_random_bounded_sequences_behave(self, data):
        space = ProbSpace.uniform(data.draw(st.integers(2, 3)))
        horizon = 16
        rows = [
            [data.draw(st.floats(0.0, 3.0)) for _ in range(space.n)]
            for _ in range(horizon)
        ]
        s = seq_from_values(space, rows)
        amb = ambient_for(s)
        try:
            limit, trace = extract(s, amb, tol=1e-3)
        except NonConvergent:
            return  # legitimate: horizon too short for the tolerance
        assert contains(amb, limit, 2e-3)
        for prev, cur in zip(trace, trace[1:]):
            assert cur.u <= prev.u
        for state in trace:
            assert np.max(np.abs(state.recombined().values - state.g.values)) <= 1e-10


class TestExtractEscape:
    def test_escaper_raises_unbounded_with_verified_certificate(self):
        s = escaping_seq(64)
        with pytest.raises(Unbounded) as ei:
            extract(s, ambient_for(s), tol=1e-6)
        cert = ei.value.certificate
        assert cert is not None
        assert cert.eps == pytest.approx(0.5, abs=1e-6)
        assert len(cert.combo_bound) == 2
        for inst in cert.combo_bound:
            assert inst["holds"] is True
            assert inst["precondition_verified"] is True
            # re-run the mass estimate from the recorded data
            pts = [s.term(i) for i in inst["indices"]]
            w = WeightVector([inst["weights"][str(i)] for i in inst["indices"]])
            assert combo_mass_bound(pts, w, n=inst["n"], eps=inst["eps"]) is True

    def test_certificate_serializes(self):
        s = escaping_seq(64)
        with pytest.raises(Unbounded) as ei:
            extract(s, ambient_for(s), tol=1e-6)
        obj = ei.value.certificate.to_json()
        text = json.dumps(obj)
        back = json.loads(text)
        assert set(back) == {"eps", "indices", "combo_bound", "delta", "thresholds"}

    def test_short_horizon_keeps_detector_off(self):
        # P[f_n >= n] = 1/2 here too, but with horizon 4 the detector's
        # floor (4 / horizon) disables it: four terms are no evidence of
        # escape, and the stationary tail maximizer converges instead.
        rows = [[float(n), 0.0] for n in range(1, 5)]
        s = seq_from_values(U2, rows)
        limit, _ = extract(s, ambient_for(s), tol=1e-12)
        assert np.allclose(limit.values, [4.0, 0.0], atol=1e-9)


class TestDetectEscape:
    def _bounded_trace(self):
        f = rv(U2, [5.0, 5.0])
        s = SequenceSpec(U2, lambda n: f, 64)
        _, trace = extract(s, Polytope([f]), tol=1e-9)
        return trace

    def test_detects_high_mass(self):
        trace = self._bounded_trace()
        cert = detect_escape(trace, [1.0, 2.0, 4.0], delta=0.4)
        assert cert is not None
        assert cert.delta == 0.4
        assert 0.0 < cert.eps < 1.0

    def test_none_when_mass_below_grid(self):
        trace = self._bounded_trace()
        assert detect_escape(trace, [10.0], delta=0.4) is None

    def test_none_on_empty_inputs(self):
        trace = self._bounded_trace()
        assert detect_escape(trace, [], delta=0.4) is None
        assert detect_escape([], [1.0], delta=0.4) is None

    def test_delta_validation(self):
        trace = self._bounded_trace()
        with pytest.raises(InputError):
            detect_escape(trace, [1.0], delta=0.0)
        with pytest.raises(InputError):
            detect_escape(trace, [1.0], delta=1.0)


class TestTraceSerialization:
    def test_jsonl_lines_parse(self):
        s = alternating_seq(64)
        _, trace = extract(s, ambient_for(s), tol=1e-6)
        lines = trace_to_jsonl(trace).splitlines()
        assert len(lines) == len(trace)
        first = json.loads(lines[0])
        assert set(first) == {"D", "u", "gamma", "weights", "metric_d"}
        assert first["metric_d"] is None
        for line in lines[1:]:
            assert json.loads(line)["metric_d"] is not None
