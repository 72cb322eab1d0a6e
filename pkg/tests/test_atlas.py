import numpy as np
import pytest

from mollow.atlas import (LeapfrogCondition, annotate, enumerate_conditions,
                          recommend_filters)
from mollow.correlators import ResultGrid
from mollow.errors import FeasibilityError, ParameterError

OP = 300.0


def test_condition_invariants():
    c = LeapfrogCondition(coefficients=(1, 1), delta=OP, omega_plus=OP)
    assert c.order == 2
    assert c.satisfied((100.0, 200.0))
    assert not c.satisfied((100.0, 100.0))
    assert c.residual((OP, OP)) == pytest.approx(OP)
    with pytest.raises(ParameterError):
        LeapfrogCondition(coefficients=(1,), delta=0.0, omega_plus=OP)
    with pytest.raises(ParameterError):
        LeapfrogCondition(coefficients=(1, 1), delta=0.5 * OP, omega_plus=OP)


def test_enumeration_families():
    # pair of one-photon sensors: the three antidiagonals only
    c11 = enumerate_conditions((1, 1), OP)
    assert len(c11) == 3
    assert all(c.coefficients == (1, 1) for c in c11)
    assert sorted(c.delta for c in c11) == [-OP, 0.0, OP]
    # three sensors: pair sub-leapfrogs plus the all-photon family
    c111 = enumerate_conditions((1, 1, 1), OP)
    fams = {c.coefficients for c in c111}
    assert fams == {(1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1)}
    assert len(c111) == 12
    # heralding partition: the two line families of the bundle map
    c21 = enumerate_conditions((2, 1), OP)
    assert {c.coefficients for c in c21} == {(1, 1), (2, 1)}
    # one scanned sensor of order 4 sees all lower degenerate jumps
    c4 = enumerate_conditions((4,), OP)
    assert {c.coefficients for c in c4} == {(2,), (3,), (4,)}
    with pytest.raises(ParameterError):
        enumerate_conditions((1, 1), -1.0)


def _grid2d(n=5, half=1.2 * OP):
    g = np.linspace(-half, half, n)
    return ResultGrid(axes=[("frequency_1", g), ("frequency_2", g)],
                      values=np.zeros((n, n)))


def test_annotate_antidiagonals():
    rec = annotate(_grid2d(), enumerate_conditions((1, 1), OP))
    assert rec["format"] == "overlay-1"
    assert len(rec["lines"]) == 3 and not rec["skipped"]
    for line in rec["lines"]:
        (x0, y0), (x1, y1) = line["points"]
        assert x0 + y0 == pytest.approx(line["delta"], abs=1e-9)
        assert x1 + y1 == pytest.approx(line["delta"], abs=1e-9)
        assert abs(x0) <= 1.2 * OP + 1e-9 and abs(y0) <= 1.2 * OP + 1e-9


def test_annotate_skips_unconstrained_conditions():
    conds = enumerate_conditions((1, 1, 1), OP)
    # third frequency pinned far off every surviving plane
    rec = annotate(_grid2d(), conds, fixed_frequencies={2: 1234.5})
    assert rec["lines"] or rec["skipped"]
    offplane = [s for s in rec["skipped"] if s["coefficients"] == [0, 1, 1]]
    # (0,1,1) involves only one free axis plus the pinned sensor: still a line
    assert not offplane or all("outside" in s["note"] for s in offplane)
    # without pinning, conditions touching sensor 3 cannot be drawn
    rec2 = annotate(_grid2d(), conds)
    assert all(s["note"] for s in rec2["skipped"])
    assert {tuple(s["coefficients"]) for s in rec2["skipped"]} == {
        (1, 0, 1), (0, 1, 1), (1, 1, 1)}


def test_annotate_one_dimensional_markers():
    g = np.linspace(-1.2 * OP, 1.2 * OP, 11)
    grid = ResultGrid(axes=[("frequency", g)], values=np.zeros(11))
    rec = annotate(grid, enumerate_conditions((2,), OP))
    xs = sorted(line["points"][0][0] for line in rec["lines"])
    assert xs == pytest.approx([-OP / 2, 0.0, OP / 2])


def test_recommend_degenerate_bundle():
    for n in (2, 3, 4):
        rec = recommend_filters((n,), OP, OP, linewidth=5.0)
        assert rec.frequencies == pytest.approx((OP / n,))
        assert rec.condition.satisfied(rec.frequencies)
        assert rec.achieved_margin * 5.0 >= 3.0 * 5.0


def test_recommend_self_consistency_and_case_ii_rejection():
    rec = recommend_filters((2, 1), OP, OP, linewidth=5.0)
    w1, w2 = rec.frequencies
    assert 2 * w1 + w2 == pytest.approx(OP, abs=1e-6)
    real = (0.0, -OP, OP)
    # every single frequency and every cascade partial sum clears the margin
    for probe in list(rec.frequencies) + rec.checks["partial_sums"]:
        assert min(abs(probe - r) for r in real) >= 3.0 * 5.0
    # the case-ii style assignment (heralder photon on a real transition)
    # violates the exclusion test the recommendation must pass
    bad = (0.0, OP)
    assert 2 * bad[0] + bad[1] == OP
    assert min(abs(bad[0] - r) for r in real) < 3.0 * 5.0


def test_recommend_infeasible_margin():
    with pytest.raises(FeasibilityError) as exc:
        recommend_filters((1, 1), 0.0, OP, linewidth=5.0, margin=40.0)
    assert exc.value.best_margin is not None
    assert exc.value.best_margin < 40.0
