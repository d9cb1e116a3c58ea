import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from episode_moments import Chain, Mdp, ModelError, Policy, induce_chain, validate_chain
from episode_moments.chain import check_chain

from models import two_path


def single_state_mdp(transitions, num_actions=2):
    # state 0 acts, state 1 is the goal, state 2 a fail state
    return Mdp(3, num_actions, tuple(transitions), frozenset({1}), frozenset({2}))


ALL_TIMES = {(0, y): 1 for y in range(3)}


def test_deterministic_policy_gives_single_edge():
    mdp = single_state_mdp([(0, 0, 1, 1.0), (0, 1, 2, 1.0)])
    chain = induce_chain(mdp, Policy.deterministic({0: 0}), ALL_TIMES)
    assert chain.edges == [(0, 1, 1.0, 1)]


def test_both_actions_reaching_same_state():
    mdp = single_state_mdp([(0, 0, 1, 1.0), (0, 1, 1, 1.0)])
    chain = induce_chain(mdp, Policy(((0, 0, 0.5), (0, 1, 0.5))), ALL_TIMES)
    assert chain.edges == [(0, 1, 1.0, 1)]


def test_policy_average_of_kernel():
    mdp = single_state_mdp([(0, 0, 1, 0.6), (0, 0, 2, 0.4), (0, 1, 1, 0.2), (0, 1, 2, 0.8)])
    chain = induce_chain(mdp, Policy(((0, 0, 0.5), (0, 1, 0.5))), {(0, 1): 2, (0, 2): 7})
    (e1, e2) = chain.edges
    assert (e1.dst, e1.time) == (1, 2) and e1.prob == pytest.approx(0.4, abs=1e-15)
    assert (e2.dst, e2.time) == (2, 7) and e2.prob == pytest.approx(0.6, abs=1e-15)


def test_terminal_rows_are_dropped():
    mdp = Mdp(2, 1, ((0, 0, 1, 1.0), (1, 0, 0, 1.0)), frozenset({1}))
    policy = Policy(((0, 0, 1.0), (1, 0, 1.0)))
    chain = induce_chain(mdp, policy, {(0, 1): 1, (1, 0): 1})
    assert chain.edges == [(0, 1, 1.0, 1)]


def test_tiny_induced_probability_is_dropped_and_row_renormalized():
    mdp = single_state_mdp([(0, 0, 1, 1.0), (0, 1, 2, 1.0)])
    chain = induce_chain(mdp, Policy(((0, 0, 1.0 - 1e-16), (0, 1, 1e-16))), ALL_TIMES)
    assert chain.edges == [(0, 1, 1.0, 1)]


@pytest.mark.parametrize("policy, times, match", [
    (Policy(((0, 0, 0.5),)), ALL_TIMES, "sum to"),
    (Policy(((0, 0, 1.0),)), {}, "no transition time"),
    (Policy(((5, 0, 1.0),)), ALL_TIMES, "unknown state"),
    (Policy(((0, 7, 1.0),)), ALL_TIMES, "unknown action"),
    (Policy(((0, 1, 1.0),)), ALL_TIMES, "no transitions"),
])
def test_induce_chain_errors(policy, times, match):
    mdp = single_state_mdp([(0, 0, 1, 1.0)])
    with pytest.raises(ModelError, match=match):
        induce_chain(mdp, policy, times)


@pytest.mark.parametrize("kwargs, match", [
    (dict(transitions=((0, 0, 1, 0.9),)), "sums to"),
    (dict(transitions=((0, 0, 9, 1.0),)), "out of range"),
    (dict(transitions=((0, 3, 1, 1.0),)), "action out of range"),
    (dict(transitions=((0, 0, 1, 1.5),)), "probability"),
    (dict(transitions=(), fail_states=frozenset({1})), "both goal and fail"),
])
def test_mdp_invariants(kwargs, match):
    base = dict(num_states=3, num_actions=2, transitions=(), goal_states=frozenset({1}),
                fail_states=frozenset({2}))
    base.update(kwargs)
    with pytest.raises(ModelError, match=match):
        Mdp(**base)


def test_policy_weight_range():
    with pytest.raises(ModelError):
        Policy(((0, 0, 1.2),))


def test_valid_chain_has_no_diagnostics():
    assert validate_chain(Chain.from_edges(2, [(0, 1, 1.0, 1)], {1})) == []
    assert validate_chain(two_path()) == []


def test_row_sum_defect():
    chain = Chain.from_edges(3, [(0, 1, 0.9, 1)], {1}, {2})
    (diag,) = validate_chain(chain)
    assert diag.kind == "row-sum" and diag.state == 0 and diag.fatal
    assert str(diag) == "row-sum defect 0.1 at state 0"


@pytest.mark.parametrize("edges, kind", [
    ([(0, 1, 1.0, 1), (1, 0, 1.0, 1)], "terminal"),
    ([(0, 1, 1.0, 0)], "time"),
    ([(0, 5, 1.0, 1)], "range"),
    ([(0, 1, 0.5, 1), (0, 1, 0.5, 2)], "duplicate"),
])
def test_constructed_violations(edges, kind):
    chain = Chain.from_edges(2, edges, {1})
    assert kind in {d.kind for d in validate_chain(chain) if d.fatal}


def test_unreachable_terminal_is_a_warning():
    # 1 loops forever and 0 only leads to 1, so neither reaches the goal
    chain = Chain.from_edges(3, [(0, 1, 1.0, 1), (1, 1, 1.0, 1)], {2})
    diags = validate_chain(chain)
    assert {d.state for d in diags} == {0, 1}
    assert all(d.kind == "absorption" and not d.fatal for d in diags)
    assert "absorption not guaranteed" in str(diags[0])
    assert check_chain(chain) == diags


def test_check_chain_raises_on_fatal():
    with pytest.raises(ModelError, match="row-sum"):
        check_chain(Chain.from_edges(3, [(0, 1, 0.9, 1)], {1}, {2}))


def test_chain_is_immutable():
    chain = two_path()
    with pytest.raises(ValueError):
        chain.prob[0] = 0.1
    with pytest.raises(AttributeError):
        chain.num_states = 4


@st.composite
def mdp_and_policy(draw):
    n = draw(st.integers(2, 7))
    n_actions = draw(st.integers(1, 3))
    goal = {n - 1}
    fail = {0} if draw(st.booleans()) and n > 2 else set()
    transitions, policy, times = [], [], {}
    unit = st.floats(0.01, 1.0)
    for x in range(n):
        if x in goal or x in fail:
            continue
        for a in range(n_actions):
            ys = draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=4, unique=True))
            w = np.array(draw(st.lists(unit, min_size=len(ys), max_size=len(ys))))
            w /= w.sum()
            transitions += [(x, a, y, float(p)) for y, p in zip(ys, w)]
            times.update({(x, y): draw(st.integers(1, 6)) for y in ys if (x, y) not in times})
        pw = np.array(draw(st.lists(unit, min_size=n_actions, max_size=n_actions)))
        pw /= pw.sum()
        policy += [(x, a, float(p)) for a, p in enumerate(pw)]
    return Mdp(n, n_actions, tuple(transitions), frozenset(goal), frozenset(fail)), \
        Policy(tuple(policy)), times


@settings(max_examples=60, deadline=None)
@given(mdp_and_policy())
def test_induced_chain_is_valid_and_deterministic(case):
    mdp, policy, times = case
    chain = induce_chain(mdp, policy, times)
    assert not [d for d in validate_chain(chain) if d.fatal]
    again = induce_chain(mdp, policy, times)
    assert chain.same_as(again)
    assert np.array_equal(chain.prob.view(np.uint64), again.prob.view(np.uint64))


@settings(max_examples=60, deadline=None)
@given(mdp_and_policy())
def test_induced_rows_match_direct_sum(case):
    mdp, policy, times = case
    chain = induce_chain(mdp, policy, times)
    expected = np.zeros((mdp.num_states, mdp.num_states))
    weight = {(x, a): w for x, a, w in policy.entries}
    for x, a, y, p in mdp.transitions:
        expected[x, y] += weight.get((x, a), 0.0) * p
    got = chain.matrix().toarray()
    np.testing.assert_allclose(got, expected, atol=1e-12)
