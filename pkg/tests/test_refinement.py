"""Selective refinement loop: hand traces, contract checks, batch parity."""

import numpy as np
import pytest

from mlmcsr.estimators import InsufficientSamplesError, LevelSchedule
from mlmcsr.models import EllipticFlux1D, SyntheticNormalModel
from mlmcsr.refinement import (
    RealizationState,
    SampleId,
    SolveStep,
    _batch_via_scalar,
    assumption_holds,
    mean_selective_cost,
    sample_corrector_batch,
    solve_full,
    solve_selective,
)

SCHED = LevelSchedule(gamma=0.5, q=1.0)
Y = 0.8


def fixture_model(q=2.0):
    """Synthetic model with the U = 0.5 fixture stream."""
    return SyntheticNormalModel(q=q, uniform_source=lambda level, index, j: 0.5)


# ---------------------------------------------------------------------------
# hand-traced fixtures (printed rule: guard and re-solve share the ladder
# index, including the redundant tolerance-1 re-solve at j = 0)
# ---------------------------------------------------------------------------

def test_printed_trace_flat_realization():
    model = fixture_model()
    st = solve_selective(model, model.from_omega(0.0, level=2), 2, Y, SCHED, rule="printed")
    # omega = 0: value 1/11 stays far from y, only j = 0 runs
    assert st.value == pytest.approx(0.0909090909090909, abs=1e-15)
    assert st.cost == 2.0
    assert [s.tol_index for s in st.steps] == [0, 0]
    assert st.steps[0].value == st.steps[1].value


def test_printed_trace_near_critical_realization():
    model = fixture_model(q=2.0)
    st = solve_selective(model, model.from_omega(0.79, level=2), 2, Y, SCHED, rule="printed")
    assert st.value == pytest.approx(0.8127272727272727, abs=1e-15)
    assert st.cost == 22.0  # 1 + 1 + 4 + 16
    assert st.achieved_tolerance_index == 2
    traced = [round(s.value, 4) for s in st.steps]
    assert traced == [0.8809, 0.8809, 0.8355, 0.8127]


def test_certified_trace_flat_realization():
    # certified guard: one refinement past the initial solve, because the
    # tolerance actually certified (1.0) still straddles y after it
    model = fixture_model(q=2.0)
    st = solve_selective(model, model.from_omega(0.0, level=2), 2, Y, SCHED, rule="certified")
    assert st.value == pytest.approx(0.5 / 11.0, abs=1e-15)
    assert st.cost == 1.0 + 4.0
    assert st.achieved_tolerance_index == 1


def test_certified_trace_near_critical_realization():
    model = fixture_model(q=2.0)
    st = solve_selective(model, model.from_omega(0.79, level=2), 2, Y, SCHED, rule="certified")
    assert st.value == pytest.approx(0.8127272727272727, abs=1e-15)
    assert st.cost == 21.0  # 1 + 4 + 16: no duplicate tolerance-1 solve
    assert st.achieved_tolerance_index == 2


def test_far_realization_costs_one_initial_solve():
    # |value - y| > 1 fails the guard immediately under either rule
    model = fixture_model()
    for rule in ("certified", "printed"):
        st = solve_selective(model, model.from_omega(-5.0, level=3), 3, Y, SCHED, rule=rule)
        assert st.cost == model.work_units(1.0)
        assert st.iterations == 0
        assert len(st.steps) == 1


def test_skip_redundant_drops_only_the_duplicate():
    model = fixture_model(q=2.0)
    h = model.from_omega(0.79, level=2)
    full = solve_selective(model, h, 2, Y, SCHED, rule="printed")
    slim = solve_selective(model, h, 2, Y, SCHED, rule="printed", skip_redundant=True)
    assert slim.value == full.value
    assert slim.achieved_tolerance_index == full.achieved_tolerance_index
    assert slim.cost == full.cost - 1.0


def test_solve_full_goes_straight_to_target():
    model = fixture_model(q=2.0)
    st = solve_full(model, model.from_omega(0.79), 3, SCHED)
    assert st.value == pytest.approx(0.79 + 0.125 / 11.0)
    assert st.cost == 64.0
    assert st.achieved_tolerance_index == 3


def test_cost_ledger_replays_exactly():
    model = SyntheticNormalModel(q=2.0)
    for i in range(30):
        st = solve_selective(model, SampleId(11, 4, i), 4, Y, SCHED)
        assert st.cost == sum(s.work for s in st.steps)
        assert st.iterations == len(st.steps) - 1


def test_state_invariants_on_random_draws():
    model = SyntheticNormalModel(q=1.0)
    for i in range(200):
        st = solve_selective(model, SampleId(3, 5, i), 5, Y, SCHED)
        assert 0 <= st.achieved_tolerance_index <= 5
        handle = model.draw(st.sid)
        assert assumption_holds(model, st, Y, SCHED, handle=handle)
        # outside-band exits decide the indicator exactly
        err = abs(model.exact_qoi(handle) - st.value)
        if err < abs(st.value - Y):
            assert (st.value <= Y) == (model.exact_qoi(handle) <= Y)


def test_assumption_holds_on_elliptic_spot_sample():
    model = EllipticFlux1D(master_cells=256)
    sched = LevelSchedule(gamma=0.5, q=1.0)
    for i in range(40):
        sid = SampleId(21, 4, i)
        st = solve_selective(model, sid, 4, 1.0, sched)
        assert assumption_holds(model, st, 1.0, sched)


def test_mean_selective_cost():
    mk = lambda c: RealizationState(None, 2, 0.0, 0, c, 0, [])
    assert mean_selective_cost([mk(2.0), mk(22.0)]) == 12.0
    with pytest.raises(InsufficientSamplesError):
        mean_selective_cost([])
    with pytest.raises(ValueError):
        bad = RealizationState(None, 3, 0.0, 0, 5.0, 0, [])
        mean_selective_cost([mk(2.0), bad])


def test_rule_name_is_validated():
    model = fixture_model()
    with pytest.raises(ValueError):
        solve_selective(model, model.from_omega(0.0), 2, Y, SCHED, rule="eager")


# ---------------------------------------------------------------------------
# batch sampling
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("rule", ["certified", "printed"])
@pytest.mark.parametrize("level", [0, 1, 4])
def test_batch_matches_scalar_loop_bitwise(rule, level):
    for model in (SyntheticNormalModel(q=2.0), EllipticFlux1D(master_cells=128)):
        fast = sample_corrector_batch(model, 99, level, 10, 60, Y, SCHED, rule=rule)
        slow = _batch_via_scalar(model, 99, level, 10, 60, Y, SCHED, rule, False)
        np.testing.assert_array_equal(fast.q_fine, slow.q_fine)
        np.testing.assert_array_equal(fast.q_coarse, slow.q_coarse)
        np.testing.assert_array_equal(fast.cost_fine, slow.cost_fine)
        np.testing.assert_array_equal(fast.cost_coarse, slow.cost_coarse)
        np.testing.assert_array_equal(fast.stop_index, slow.stop_index)


def test_batch_respects_skip_redundant():
    model = SyntheticNormalModel(q=2.0)
    fast = sample_corrector_batch(
        model, 5, 3, 0, 500, Y, SCHED, rule="printed", skip_redundant=True
    )
    slow = _batch_via_scalar(model, 5, 3, 0, 500, Y, SCHED, "printed", True)
    np.testing.assert_array_equal(fast.cost_fine, slow.cost_fine)
    np.testing.assert_array_equal(fast.q_fine, slow.q_fine)


def test_batch_falls_back_without_vector_hooks():
    class Scalarized:
        """Contract-complete wrapper hiding the vector hooks."""

        def __init__(self, inner):
            self._inner = inner
            self.name = inner.name

        def draw(self, sid):
            return self._inner.draw(sid)

        def solve(self, handle, tolerance, tol_index):
            return self._inner.solve(handle, tolerance, tol_index)

        def work_units(self, tolerance):
            return self._inner.work_units(tolerance)

    inner = SyntheticNormalModel(q=1.0)
    a = sample_corrector_batch(Scalarized(inner), 7, 3, 0, 80, Y, SCHED)
    b = sample_corrector_batch(inner, 7, 3, 0, 80, Y, SCHED)
    np.testing.assert_array_equal(a.q_fine, b.q_fine)
    np.testing.assert_array_equal(a.cost_fine, b.cost_fine)


def test_batch_coarse_is_fine_truncated():
    # the coarse functional shares the fine trajectory, capped one rung
    # earlier, so its cost never exceeds the fine cost
    model = SyntheticNormalModel(q=2.0)
    batch = sample_corrector_batch(model, 31, 5, 0, 2000, Y, SCHED)
    assert np.all(batch.cost_coarse <= batch.cost_fine)
    assert np.all(batch.cost_coarse > 0)
    # correctors are sparse: most realizations agree across levels
    assert np.mean(batch.q_fine != batch.q_coarse) < 0.1


def test_entry_probability_decays_geometrically():
    # fraction of realizations refining past rung j ~ gamma^j
    model = SyntheticNormalModel(q=1.0)
    batch = sample_corrector_batch(model, 17, 8, 0, 100_000, Y, SCHED)
    frac = np.array([np.mean(batch.stop_index >= j) for j in range(1, 7)])
    slope = np.polyfit(np.arange(1, 7), np.log(frac), 1)[0]
    assert -1.3 * np.log(2) < slope < -0.7 * np.log(2)


def test_batch_empty_range():
    model = SyntheticNormalModel()
    batch = sample_corrector_batch(model, 1, 2, 5, 5, Y, SCHED)
    assert batch.q_fine.size == 0
    with pytest.raises(ValueError):
        sample_corrector_batch(model, 1, 2, 5, 4, Y, SCHED)
