import math
from dataclasses import replace

import numpy as np
import pytest

from overflowlab.chain import kernel_row
from overflowlab.errors import InvalidNetwork, TooLarge, TruncationNoConverge
from overflowlab.exact import (
    enumerate_states,
    first_passage_system,
    overflow_probability,
    regeneration_check,
    solve_system,
)
from overflowlab.network import target_params
from overflowlab.settings import SolverSettings


def mm1_closed_form(n: int) -> float:
    return 0.4 / ((7 / 3) ** n - 1)


def ruin_probability(x: int, n: int) -> float:
    ratio = 0.7 / 0.3
    return (ratio ** x - 1) / (ratio ** n - 1)


@pytest.mark.parametrize(
    "n,v,caps,expected",
    [
        pytest.param(3, (1,), None, [(1,), (2,)], id="mm1"),
        pytest.param(3, (1, 1), None, [(0, 1), (0, 2), (1, 0), (1, 1), (2, 0)], id="tandem-total"),
        pytest.param(
            2,
            (1, 0),
            (None, 3),
            [(0, 1), (0, 2), (0, 3), (1, 0), (1, 1), (1, 2), (1, 3)],
            id="tandem-first-station",
        ),
    ],
)
def test_enumerate_states(n, v, caps, expected):
    indexer = enumerate_states(n, v, caps)
    assert list(indexer.states) == expected
    assert len(indexer) == len(expected)
    for i, x in enumerate(expected):
        assert indexer.index(x) == i
    assert (0,) * len(v) not in indexer


def test_enumerate_states_respects_limit():
    with pytest.raises(TooLarge) as excinfo:
        enumerate_states(100, (1, 1), max_states=1000)
    assert excinfo.value.limit == 1000


def test_enumerate_states_needs_caps_for_non_target_stations():
    with pytest.raises(InvalidNetwork):
        enumerate_states(3, (1, 0))


def test_enumerate_states_reads_limit_from_environment(monkeypatch):
    monkeypatch.setenv("OVERFLOWLAB_MAX_STATES", "10")
    with pytest.raises(TooLarge):
        enumerate_states(10, (1, 1))


def test_first_passage_system_mm1_n2(mm1):
    system = first_passage_system(mm1, 2, (1,))
    assert system.matrix.shape == (1, 1)
    assert system.matrix.toarray() == pytest.approx(np.array([[1.0]]))
    assert system.rhs == pytest.approx([0.3])
    solution = solve_system(system)
    assert solution == pytest.approx([0.3])
    assert system.value_at((0,), solution) == pytest.approx(0.09, abs=1e-12)


def test_first_passage_system_without_unknowns(mm1):
    system = first_passage_system(mm1, 1, (1,))
    assert len(system.rhs) == 0
    assert system.value_at((0,), solve_system(system)) == pytest.approx(0.3, abs=1e-12)


@pytest.mark.parametrize(
    "fixture_name,n,v,caps",
    [
        pytest.param("symmetric_tandem", 4, (1, 1), None, id="symmetric-total"),
        pytest.param("asymmetric_tandem", 3, (1, 0), (None, 5), id="asymmetric-first"),
    ],
)
def test_first_passage_rows_account_for_all_mass(request, fixture_name, n, v, caps):
    vn = request.getfixturevalue(fixture_name)
    system = first_passage_system(vn, n, v, caps)
    origin = (0,) * vn.d
    row_sums = np.asarray(system.matrix.sum(axis=1)).ravel()
    for i, x in enumerate(system.indexer.states):
        to_origin = dict(kernel_row(vn, x)).get(origin, 0.0)
        assert row_sums[i] - system.rhs[i] == pytest.approx(to_origin, abs=1e-12)


@pytest.mark.parametrize("method", ["direct", "gauss-seidel"])
def test_solve_system_matches_ruin_formula(mm1, method):
    system = first_passage_system(mm1, 5, (1,))
    solution = solve_system(system, method=method)
    for x in range(1, 5):
        assert solution[system.indexer.index((x,))] == pytest.approx(ruin_probability(x, 5), abs=1e-10)


def test_solve_system_with_zero_rhs(symmetric_tandem):
    system = first_passage_system(symmetric_tandem, 4, (1, 1))
    system = replace(system, rhs=np.zeros_like(system.rhs))
    assert not np.any(solve_system(system))


def test_solve_system_rejects_unknown_method(mm1):
    with pytest.raises(ValueError):
        solve_system(first_passage_system(mm1, 3, (1,)), method="lu")


@pytest.mark.parametrize(
    "fixture_name,n,v",
    [
        pytest.param("symmetric_tandem", 4, (1, 1), id="symmetric-n4"),
        pytest.param("asymmetric_tandem", 12, (1, 1), id="asymmetric-n12"),
    ],
)
def test_direct_and_gauss_seidel_agree(request, fixture_name, n, v):
    system = first_passage_system(request.getfixturevalue(fixture_name), n, v)
    direct = solve_system(system, method="direct")
    iterative = solve_system(system, method="gauss-seidel")
    assert np.max(np.abs(direct - iterative)) <= 1e-10


def test_overflow_probability_matches_ruin_formula(mm1):
    assert overflow_probability(mm1, 2, (1,), (0,)) == pytest.approx(0.09, abs=1e-12)
    assert overflow_probability(mm1, 5, (1,), (0,)) == pytest.approx(0.0058681, abs=1e-7)
    for n in range(2, 31):
        assert overflow_probability(mm1, n, (1,), (0,)) == pytest.approx(mm1_closed_form(n), abs=1e-9)


@pytest.mark.parametrize("x", [(4, 0), (2, 2), (0, 7)])
def test_overflow_probability_is_one_in_target(symmetric_tandem, x):
    assert overflow_probability(symmetric_tandem, 4, (1, 1), x) == 1.0


def test_overflow_probability_rejects_foreign_state(symmetric_tandem):
    with pytest.raises(InvalidNetwork):
        overflow_probability(symmetric_tandem, 4, (1, 1), (1,))


def test_overflow_probability_is_monotone_in_start(symmetric_tandem):
    n = 6
    values = {
        (x1, x2): overflow_probability(symmetric_tandem, n, (1, 1), (x1, x2))
        for x1 in range(n)
        for x2 in range(n - x1)
    }
    for (x1, x2), p in values.items():
        if (x1 + 1, x2) in values:
            assert values[(x1 + 1, x2)] >= p - 1e-12
        if (x1, x2 + 1) in values:
            assert values[(x1, x2 + 1)] >= p - 1e-12


@pytest.mark.parametrize("fixture_name,v", [("mm1", (1,)), ("symmetric_tandem", (1, 1)), ("asymmetric_tandem", (1, 1))])
def test_overflow_probability_decays_at_bottleneck_rate(request, fixture_name, v):
    vn = request.getfixturevalue(fixture_name)
    target = target_params(vn, v)
    origin = (0,) * vn.d
    probabilities = [overflow_probability(vn, n, v, origin) for n in range(5, 31)]
    assert all(b < a for a, b in zip(probabilities, probabilities[1:]))
    normalized = [
        math.log(p) + n * target.gamma_V - (target.beta_V - 1) * math.log(n)
        for n, p in zip(range(5, 31), probabilities)
    ]
    assert max(normalized) - min(normalized) < 3.0


def test_overflow_probability_truncates_non_target_stations(symmetric_tandem):
    partial = overflow_probability(symmetric_tandem, 4, (1, 0), (0, 0))
    total = overflow_probability(symmetric_tandem, 4, (1, 1), (0, 0))
    assert 0.0 < partial < total


def test_overflow_probability_reports_truncation_failure(asymmetric_tandem):
    settings = SolverSettings(max_cap_doublings=0)
    with pytest.raises(TruncationNoConverge):
        overflow_probability(asymmetric_tandem, 4, (1, 0), (0, 0), settings=settings)


@pytest.mark.parametrize(
    "fixture_name,n,v,x,tolerance",
    [
        pytest.param("mm1", 4, (1,), (1,), 1e-9, id="mm1-x1"),
        pytest.param("mm1", 4, (1,), (3,), 1e-9, id="mm1-x3"),
        pytest.param("symmetric_tandem", 5, (1, 1), (1, 1), 1e-8, id="symmetric-tandem"),
    ],
)
def test_regeneration_check(request, fixture_name, n, v, x, tolerance):
    lhs, rhs = regeneration_check(request.getfixturevalue(fixture_name), n, v, x)
    assert 0.0 < lhs < 1.0
    assert lhs == pytest.approx(rhs, abs=tolerance)


def test_regeneration_check_rejects_origin(mm1):
    with pytest.raises(ValueError):
        regeneration_check(mm1, 4, (1,), (0,))
