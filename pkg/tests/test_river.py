import numpy as np
import pytest

from episode_moments import ModelError, RiverConfig, build_river, solve_all, validate_chain


@pytest.fixture(scope="module")
def default_river():
    chain, layout = build_river()
    return chain, layout, {cell: i for i, cell in enumerate(layout)}


def out_edges(chain, x):
    return sorted((e.dst, e.prob, e.time) for e in chain.edges if e.src == x)


def test_default_size(default_river):
    chain, layout, _ = default_river
    assert chain.num_states == 500
    assert len(chain.goal_states) == 1 and len(chain.fail_states) == 10
    assert {layout[f][1] for f in chain.fail_states} == {49}


def test_interior_cell(default_river):
    chain, _, idx = default_river
    x = idx[5, 10]
    got = {e.dst: (e.prob, e.time) for e in chain.edges if e.src == x}
    assert got == {idx[4, 11]: (0.3, 2), idx[5, 11]: (0.3, 1), idx[6, 11]: (0.3, 2),
                   idx[5, 9]: (0.1, 5)}


def test_top_row_cell(default_river):
    chain, _, idx = default_river
    got = {e.dst: e.prob for e in chain.edges if e.src == idx[0, 10]}
    assert got == pytest.approx({idx[0, 11]: 0.4, idx[1, 11]: 0.4, idx[0, 9]: 0.2}, abs=1e-15)


def test_leftmost_column_cell(default_river):
    chain, _, idx = default_river
    got = {e.dst: e.prob for e in chain.edges if e.src == idx[5, 0]}
    third = 0.3 + 0.1 / 3
    assert got == pytest.approx({idx[4, 1]: third, idx[5, 1]: third, idx[6, 1]: third},
                                abs=1e-15)


def test_port_is_goal_without_edges(default_river):
    chain, _, idx = default_river
    assert chain.goal_states == {idx[0, 35]}
    assert out_edges(chain, idx[0, 35]) == []


def test_generated_chain_is_valid(default_river):
    chain, _, _ = default_river
    assert validate_chain(chain) == []
    sums = np.bincount(chain.src, weights=chain.prob, minlength=chain.num_states)
    inner = ~chain.terminal_mask
    assert np.max(np.abs(sums[inner] - 1.0)) <= 1e-12


def test_obstacles_remove_states_and_redirect_mass():
    config = RiverConfig(obstacles=frozenset({(4, 10), (5, 10)}))
    chain, layout = build_river(config)
    assert chain.num_states == 498
    assert (4, 10) not in layout
    idx = {cell: i for i, cell in enumerate(layout)}
    got = {e.dst: e.prob for e in chain.edges if e.src == idx[5, 9]}
    # right and up-right blocked: 0.6 split over down-right and back
    assert got == pytest.approx({idx[6, 10]: 0.6, idx[5, 8]: 0.4}, abs=1e-15)
    assert validate_chain(chain) == []


def test_walled_in_cell_rejected():
    walls = frozenset({(0, 3), (1, 3), (0, 1)})
    with pytest.raises(ModelError, match="no available moves"):
        build_river(RiverConfig(width=5, height=2, port=(1, 0), obstacles=walls))


@pytest.mark.parametrize("kwargs", [
    dict(port=(0, 49)), dict(port=(10, 3)), dict(port=(0, 3), obstacles=frozenset({(0, 3)})),
    dict(p_back=0.2), dict(t_back=0), dict(obstacles=frozenset({(11, 0)})), dict(width=0),
])
def test_config_validation(kwargs):
    with pytest.raises(ModelError):
        RiverConfig(**kwargs)


def test_minimal_grid():
    chain, layout = build_river(RiverConfig(width=2, height=1, port=(0, 0)))
    assert layout == [(0, 0), (0, 1)]
    assert chain.goal_states == {0} and chain.fail_states == {1}
    assert chain.num_edges == 0


def test_no_port_means_no_success():
    chain, _ = build_river(RiverConfig(port=None))
    assert chain.goal_states == frozenset()
    assert np.all(solve_all(chain).s == 0.0)


def test_success_is_depressed_east_of_port(default_river):
    chain, layout, _ = default_river
    s = solve_all(chain).s
    cols = np.array([c for _, c in layout])
    inner = ~chain.terminal_mask
    east = s[inner & (cols > 35)].mean()
    west = s[inner & (cols < 35)].mean()
    assert east < west
