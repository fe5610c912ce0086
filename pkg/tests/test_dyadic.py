import math

import numpy as np
import pytest

import oracles
from homwave.dyadic import (
    DyadicError,
    build_cubes,
    build_nets,
    build_system,
    cube_rows,
    net_rows,
    separated_sum_diag,
    verify_cubes,
)
from homwave.space import fixture, load_space, parse_fixture


def ids(S, arr):
    return [S.ids[i] for i in arr]


def test_line4_nets(line4):
    N = build_nets(line4, 0.5)
    assert (N.k_min, N.k_max) == (-2, 0)
    assert ids(line4, N.centers[0]) == ["p0", "p1", "p2", "p3"]
    assert ids(line4, N.centers[-1]) == ["p0", "p2"]
    assert ids(line4, N.centers[-2]) == ["p0"]


def test_two_points():
    S = load_space({"schema": "space/v1", "metric": "matrix", "points": [{"id": "a", "weight": 1}, {"id": "b", "weight": 1}], "matrix": [[0, 1], [1, 0]]})
    N = build_nets(S, 0.5)
    assert [len(N.centers[k]) for k in N.levels] == [1, 2]
    assert ids(S, N.centers[N.k_min]) == ["a"]


def test_ring16_nets_match_greedy_oracle():
    S = fixture("ring", 16)
    N = build_nets(S, 0.5)
    ref = oracles.greedy_nets(S.dist, 0.5, N.k_max)
    assert {k: list(v) for k, v in N.centers.items()} == ref
    assert [len(N.centers[k]) for k in sorted(N.centers, reverse=True)] == [16, 8, 4, 2, 1]


def test_bad_delta_and_tiny_space(line4):
    for d in (0, 0.6, -1):
        with pytest.raises(DyadicError):
            build_nets(line4, d)
    S = load_space({"schema": "space/v1", "metric": "matrix", "points": [{"id": "a", "weight": 1}], "matrix": [[0]]})
    with pytest.raises(DyadicError):
        build_nets(S, 0.5)
    with pytest.raises(DyadicError):
        build_nets(line4, 0.5, k_min=1, k_max=0)


def test_line4_cubes(line4):
    D = build_system(line4, 0.5)
    assert sorted(ids(line4, D.cube(-1, 0))) == ["p0", "p1"]
    assert sorted(ids(line4, D.cube(-1, 2))) == ["p2", "p3"]
    assert len(D.cube(-2, 0)) == 4
    assert ids(line4, D.new_labels(-1)) == ["p1", "p3"]
    assert ids(line4, D.new_labels(-2)) == ["p2"]


def test_line4_randomized_tie_frequency(line4):
    nets = build_nets(line4, 0.5)
    hits = sum(build_cubes(nets, "random", seed=s).labels[-1][1] == 0 for s in range(10_000))
    assert abs(hits / 10_000 - 0.5) <= 0.02


def test_no_ties_means_no_randomness():
    # points on a line with strictly increasing gaps: every parent is unique and far from any rival
    coords = np.cumsum([0, 1, 3, 9, 27, 81])[:, None].astype(float)
    pts = [{"id": f"q{i}", "weight": 1.0, "coords": c.tolist()} for i, c in enumerate(coords)]
    S = load_space({"schema": "space/v1", "metric": "euclidean", "points": pts})
    nets = build_nets(S, 0.5)
    det = build_cubes(nets)
    for seed in range(20):
        rnd = build_cubes(nets, "random", seed=seed)
        assert all(np.array_equal(det.labels[k], rnd.labels[k]) for k in det.levels)


def test_determinism():
    S = parse_fixture("cloud:50:2:1")
    a, b = build_system(S, 0.25, tiebreak="random", seed=3), build_system(S, 0.25, tiebreak="random", seed=3)
    assert all(np.array_equal(a.labels[k], b.labels[k]) for k in a.levels)


@pytest.mark.parametrize("name", ["line4", "ring(16)", "cantor(3)", "cloud(64,2,7)"])
def test_verify_hard_checks(name):
    D = build_system(parse_fixture(name), 0.25)
    rep = verify_cubes(D)
    assert rep.ok, [c.to_dict() for c in rep.checks if not c.passed]


def test_cantor_small_delta_inner_ball():
    D = build_system(fixture("cantor", 3), 1 / 16)
    rep = verify_cubes(D)
    assert rep["inner_ball_third"].passed and rep.c_in >= 1 / 3
    assert rep.ok


def test_either_containment_or_disjoint():
    D = build_system(parse_fixture("cloud:40:2:5"), 0.25)
    for k in D.levels:
        for l in D.levels:
            if l < k:
                continue
            for a in D.centers(k):
                A = set(D.cube(k, int(a)))
                for b in D.centers(l):
                    Bc = set(D.cube(l, int(b)))
                    assert Bc <= A or not (A & Bc)


def test_level_masses_sum_to_total(pipe):
    D = pipe.D
    for k in D.levels:
        assert math.fsum(D.cube_mass[k]) == pipe.S.total_mass


def test_broken_system_reports_witness(line4):
    D = build_system(line4, 0.5)
    labels = dict(D.labels)
    bad = labels[-1].copy()
    bad[3] = 0
    labels[-1] = bad
    broken = type(D)(D.nets, labels, D.parent, D.seed, D.jitter, D.tiebreak)
    rep = verify_cubes(broken)
    assert not rep.ok
    assert not rep["nesting"].passed
    assert rep["nesting"].witness["level"] in (-2, -1)


def test_separated_sum(line4):
    assert separated_sum_diag(line4, ["p2"], 1.0) <= 1
    v = separated_sum_diag(line4, line4.ids, 1.0)
    assert v <= 1 + 2 * math.exp(-1) + math.exp(-2) + math.exp(-3)
    assert math.isclose(v, 1 + 2 * math.exp(-1) + math.exp(-2))
    with pytest.raises(DyadicError):
        separated_sum_diag(line4, [], 1.0)


def test_separated_sum_stable_across_scales():
    S = fixture("ring", 64)
    N = build_nets(S, 0.5)
    a = separated_sum_diag(S, N.centers[N.k_max - 1], 1.0)
    b = separated_sum_diag(S, N.centers[N.k_max - 3], 1.0)
    assert max(a, b) <= 2 * min(a, b)


def test_dumps(line4):
    D = build_system(line4, 0.5)
    rows = list(cube_rows(D))
    assert (-1, "p2", "p3") in rows and len(rows) == 12
    assert list(net_rows(D)) == [(-2, "p0"), (-1, "p0"), (-1, "p2"), (0, "p0"), (0, "p1"), (0, "p2"), (0, "p3")]
