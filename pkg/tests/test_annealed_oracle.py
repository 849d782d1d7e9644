import json
import math
from fractions import Fraction as F
from itertools import permutations

import pytest

from betarwre.annealed_oracle import (
    averaged_walk_probability,
    cluster_step_law,
    cluster_transition,
    exact_moment,
    exact_moment_fullspace,
    mc_moment,
    mc_moment_fullspace,
)
from betarwre.core_model import FullParams, ModelParams

P11 = ModelParams(F(1), F(1))
PQ = ModelParams(F(3, 4), F(3, 2))


def test_anchor_values():
    assert exact_moment(P11, 1, 2, [1]).exact == F(3, 4)
    assert exact_moment(P11, 1, 3, [2]).exact == F(1, 2)
    assert exact_moment(P11, 2, 2, [1, 1]).exact == F(11, 18)
    assert exact_moment(P11, 1, 4, [1]).exact == F(5, 8)
    assert exact_moment(P11, 3, 0, [1, 1, 1]).exact == 1


def test_averaged_walk_anchors():
    assert averaged_walk_probability(P11, 2, 1, 1) == F(3, 4)
    assert averaged_walk_probability(P11, 1, 0, 1) == 1
    assert averaged_walk_probability(P11, 2, 1, 3) == F(1, 4)
    assert averaged_walk_probability(P11, 3, 1, 1) == 0


def test_cluster_laws():
    assert cluster_step_law(P11, 1, 2) == (F(1, 3), F(1, 3), F(1, 3))
    assert cluster_step_law(P11, 5, 1) == (F(1, 2), F(1, 2))
    assert cluster_step_law(P11, 0, 3) == (1, 0, 0, 0)
    a, b = F(2), F(1, 2)
    law = cluster_step_law(FullParams(a, b), 0, 3)
    # E[(1-W)^j W^(3-j)] times binomial, via Beta integrals
    for j in range(4):
        ref = math.comb(3, j) * F(math.prod(b + i for i in range(j)) if j else 1) * F(
            math.prod(a + i for i in range(3 - j)) if 3 - j else 1
        ) / math.prod(a + b + i for i in range(3))
        assert law[j] == ref


@pytest.mark.parametrize("state", [(0, 0, 1), (1, 1, 1), (1, 2, 2, 5), (0, 3, 3, 3, 3)])
def test_transition_rows_sum_to_one(state):
    for p in (P11, PQ):
        assert sum(cluster_transition(state, p).values()) == 1


def test_symmetry_in_x():
    base = exact_moment(PQ, 3, 7, [2, 4, 6]).exact
    for perm in permutations([2, 4, 6]):
        assert exact_moment(PQ, 3, 7, list(perm)).exact == base


def test_k1_equals_averaged_walk():
    for p in (P11, PQ):
        for t in range(0, 9):
            for x in range(0, 6):
                if (t + x) % 2 == 1:
                    assert exact_moment(p, 1, t, [x]).exact == averaged_walk_probability(p, t, x, 1)


def test_float_parameters_agree_with_exact():
    pf = ModelParams(0.75, 1.5)
    assert abs(exact_moment(pf, 2, 6, [1, 3]).value - float(exact_moment(PQ, 2, 6, [1, 3]).exact)) < 1e-14


def test_parity_and_budget_errors():
    with pytest.raises(ValueError):
        exact_moment(P11, 1, 2, [2])
    with pytest.raises(ValueError):
        exact_moment(P11, 7, 1, [0] * 7)
    with pytest.raises(ValueError):
        mc_moment(P11, 1, 2, [1], replicas=0, seed=1)


def test_fullspace_anchors():
    fp = FullParams(F(1), F(1))
    assert exact_moment_fullspace(fp, 1, 2, [0]).exact == F(1, 2)
    assert exact_moment_fullspace(fp, 1, 2, [2]).exact == F(1, 4)
    # both up then both down 1/9, split then each back 1/3 * 1/4, both down then up 1/9
    assert exact_moment_fullspace(fp, 2, 2, [0, 0]).exact == F(11, 36)


@pytest.mark.parametrize("k,t,x", [(1, 4, [1]), (2, 5, [2, 4]), (3, 6, [1, 1, 3])])
def test_mc_agrees_with_oracle(k, t, x):
    mc = mc_moment(ModelParams(1.0, 1.0), k, t, x, replicas=50000, seed=17)
    ex = exact_moment(P11, k, t, x).value
    assert abs(mc.value - ex) < 4 * mc.stderr


def test_mc_fullspace_agrees_with_oracle():
    mc = mc_moment_fullspace(FullParams(1.0, 1.0), 2, 4, [0, 2], replicas=50000, seed=3)
    ex = exact_moment_fullspace(FullParams(F(1), F(1)), 2, 4, [0, 2]).value
    assert abs(mc.value - ex) < 4 * mc.stderr


def test_mc_reproducible_single_replica():
    a = mc_moment(ModelParams(1.0, 1.0), 2, 4, [1, 3], replicas=1, seed=5)
    b = mc_moment(ModelParams(1.0, 1.0), 2, 4, [1, 3], replicas=1, seed=5)
    assert a.value == b.value


def test_json_record():
    rec = json.loads(exact_moment(P11, 2, 2, [1, 1]).to_json())
    assert rec["exact_num"] == "11" and rec["exact_den"] == "18"
    assert rec["method"] == "oracle" and rec["x"] == [1, 1]
