import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridtopo.covariance import analytic_lc_covariance, analytic_theta_covariance
from gridtopo.fixtures import g2, g3, get_fixture, gstar, random_grid
from gridtopo.grid import Edge, Grid, Node, build_laplacian, topology_error, validate_assumptions
from gridtopo.learner import (LearnError, LearnerConfig, StageCache, detect_uc_edges, estimate_u_neighbors,
                              identify_zero_injection, joint_identify, learn_from_covariance, learn_topology,
                              merge_overlapping_nodes, read_report_sections,
                              theoretical_thresholds, write_report)
from gridtopo.powerflow import simulate
from gridtopo.samples import SampleSet, add_noise


def _cov(grid, var=1.0):
    return analytic_theta_covariance(build_laplacian(grid), var, grid.zero_injection)


def _g3_sub():
    return _cov(g3()).sub((1, 3))


def eps_family_grid():
    edges = (Edge(0, 1, 1.0), Edge(1, 2, 0.5), Edge(2, 3, 1.0), Edge(2, 5, 1.0), Edge(3, 4, 1.0),
             Edge(4, 5, 1.0), Edge(3, 6, 1.0), Edge(5, 7, 1.0))
    return Grid(tuple(Node(k, k == 0, k not in (2, 4)) for k in range(8)), edges, "EPS")


def test_config_validation():
    with pytest.raises(ValueError):
        LearnerConfig(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        LearnerConfig(1.0, 1.0, 1.0, mode="ac")
    with pytest.raises(ValueError):
        LearnerConfig(1.0, 1.0, 1.0, overlap_tolerance=-1)


def test_thresholds_g3():
    th = theoretical_thresholds(g3(), 1.0)
    assert th.tau1 == pytest.approx((6 - np.sqrt(32)) / 21)
    assert th.tau1 == pytest.approx(0.01634, abs=1e-5)
    assert th.tau2 == 0.25 and th.tau3 == 1.0
    assert th.snr == np.inf and th.snr_ok
    assert theoretical_thresholds(g3(), 1.0, mode="lc", kappa=0.5).tau3 == pytest.approx(5.0)


def test_tau2_scale_free():
    scaled = Grid(g3().nodes, tuple(Edge(e.i, e.j, 7.5 * e.beta) for e in g3().edges))
    assert theoretical_thresholds(scaled, 1.0).tau2 == theoretical_thresholds(g3(), 1.0).tau2


def test_identify_examples():
    U, costs, _ = identify_zero_injection(_cov(g3()), 0.0163)
    assert U == {2}
    S2 = _cov(g2())
    _, costs, _ = identify_zero_injection(S2, 1.0)
    assert identify_zero_injection(S2, 0.99 * min(costs.values()))[0] == frozenset()


def test_adjacent_pair_misclassifies_excited_node():
    nodes = tuple(Node(k, k == 0, k not in (10, 11)) for k in (0, 1, 9, 10, 11, 12))
    edges = (Edge(0, 1, 1.0), Edge(1, 9, 1.0), Edge(9, 10, 1.0), Edge(9, 11, 1.0),
             Edge(10, 11, 1.0), Edge(1, 12, 1.0))
    grid = Grid(nodes, edges)
    assert not validate_assumptions(grid).nonadjacent_zero
    U, _, _ = identify_zero_injection(_cov(grid), 1e-9)
    assert 9 in U


def test_neighbours_examples():
    edges, n2, coef = estimate_u_neighbors({2}, _cov(g3()), 0.25)
    assert edges == {(1, 2), (2, 3)} and n2 == {(1, 3)}
    assert coef[2][1] == pytest.approx(0.5)
    assert estimate_u_neighbors(set(), _cov(g3()), 0.25)[:2] == (frozenset(), frozenset())
    _, n2, _ = estimate_u_neighbors({1}, _cov(gstar()), 0.05)
    assert n2 == {(2, 3), (2, 4), (3, 4)}


def test_uc_edges_examples():
    assert detect_uc_edges(_g3_sub(), {(1, 3)}, 0.5) == frozenset()
    assert detect_uc_edges(_g3_sub(), set(), 0.5) == {(1, 3)}
    assert detect_uc_edges(_cov(g2()), set(), 1.0) == {(1, 2)}
    # 1 and 3 share neighbour 2 but no edge: the entry is positive
    path = Grid(tuple(Node(k, k == 0) for k in range(4)), tuple(Edge(k, k + 1, 1.0) for k in range(3)))
    S = _cov(path)
    assert detect_uc_edges(S, set(), 1e-6) == {(1, 2), (2, 3)}
    # inclusive boundary
    assert detect_uc_edges(_cov(g2()), set(), 3.0) == {(1, 2)}


def test_g3_end_to_end():
    th = theoretical_thresholds(g3(), 0.01)
    s = simulate(g3(), "dc-linear", 10_000, 0.1, seed=1)
    out = learn_topology(s, th.config())
    assert topology_error(g3(), out.estimate) == 0
    assert out.zero_injection == {2}
    assert not (out.n2 & out.edges)


def test_precondition_errors():
    with pytest.raises(ValueError):
        learn_topology(SampleSet(np.zeros((1, 3)), (1, 2, 3)), LearnerConfig(1, 1, 1))
    with pytest.raises(ValueError, match="magnitude"):
        learn_topology(simulate(g3(), "dc-linear", 10, seed=0), LearnerConfig(1, 1, 1, mode="lc"))


def test_stage_failure_keeps_diagnostics():
    # a negative linear dependence: no node is a convex combination of the
    # others, so U stays empty and the excited covariance is singular
    theta = np.random.default_rng(0).standard_normal((50, 3))
    theta[:, 2] = -theta[:, 0] - theta[:, 1]
    with pytest.raises(LearnError) as exc:
        learn_topology(SampleSet(theta, (1, 2, 3)), LearnerConfig(1e-12, 0.25, 1.0, overlap_tolerance=0.0))
    assert "costs" in exc.value.diagnostics


def test_joint_matches_two_stage_on_trees():
    for grid in (g3(), gstar(), get_fixture("IEEE33_RADIAL")):
        S = _cov(grid)
        th = theoretical_thresholds(grid, 1.0)
        U, e_joint, n2_joint, _, _ = joint_identify(S, th.tau1, th.tau2)
        e_two, n2_two, _ = estimate_u_neighbors(U, S, th.tau2)
        assert (e_joint, n2_joint) == (e_two, n2_two)
        assert learn_from_covariance(S, th.config(joint_mode=True)).edges == \
            learn_from_covariance(S, th.config()).edges
    U, edges, _, _, _ = joint_identify(_cov(gstar()), 1e-9, 0.05)
    assert edges == {(1, 2), (1, 3), (1, 4)}


def test_eps_family_joint_differs():
    grid = eps_family_grid()
    rep = validate_assumptions(grid)
    assert rep.assumption2 and not rep.no_zero_in_4_loop
    S = _cov(grid)
    U, e_joint, _, _, _ = joint_identify(S, 1e-9, 0.05)
    assert U == {2, 4}
    e_two, _, _ = estimate_u_neighbors(U, S, 0.05)
    assert e_two == {(1, 2), (2, 3), (2, 5), (3, 4), (4, 5)}
    assert e_joint != e_two


def test_merge_examples():
    rng = np.random.default_rng(0)
    s = SampleSet(rng.standard_normal((100, 3)), (1, 2, 3))
    same, rep = merge_overlapping_nodes(s)
    assert same is s and rep.removed == []
    # node 4 is a zero-injection leaf hanging off 3
    grid = Grid((Node(0, True), Node(1), Node(2, has_injection=False), Node(3), Node(4, has_injection=False)),
                (Edge(0, 1, 1.0), Edge(1, 2, 1.0), Edge(2, 3, 1.0), Edge(3, 4, 2.0)))
    sim = simulate(grid, "dc-linear", 500, 0.1, seed=3)
    merged, rep = merge_overlapping_nodes(sim)
    assert rep.representative == {4: 3} and merged.labels == (1, 2, 3)
    noisy = add_noise(sim, 0.01, seed=1)
    assert merge_overlapping_nodes(noisy, 0.0)[1].removed == []
    assert merge_overlapping_nodes(noisy, 0.0, noise_fraction=0.01)[1].representative == {4: 3}
    out = learn_topology(noisy, LearnerConfig(1e-5, 0.25, 0.5))
    assert out.merge.representative == {4: 3} and (3, 4) in out.edges


def test_monotone_in_tau3():
    s = simulate(get_fixture("IEEE33_LOOPY"), "dc-linear", 800, 0.1, seed=4)
    cache = StageCache.from_samples(s, LearnerConfig(1, 1, 1))
    prev = None
    for tau3 in np.geomspace(1e-2, 1e3, 12):
        e = cache.outcome(LearnerConfig(1e-6, 0.2, tau3)).edges
        if prev is not None:
            assert e <= prev
        prev = e


def test_report_round_trip(tmp_path):
    out = learn_from_covariance(_cov(g3()), theoretical_thresholds(g3(), 1.0).config())
    path = tmp_path / "r.csv"
    write_report(out, path)
    sec = read_report_sections(path)
    assert sec["edges"] == [["1", "2"], ["2", "3"]]
    assert sec["zero_injection"] == [["2"]] and sec["n2"] == [["1", "3"]]
    assert {r[0] for r in sec["thresholds"]} == {"tau1", "tau2", "tau3"}
    assert len(sec["pair_statistics"]) == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_exact_recovery_and_n2_soundness(seed, loopy):
    grid = random_grid(np.random.default_rng(seed), loopy=loopy)
    th = theoretical_thresholds(grid, 1.0)
    out = learn_from_covariance(_cov(grid), th.config())
    assert topology_error(grid, out.estimate) == 0
    assert not (out.n2 & grid.edge_set())


def test_lc_mode_on_analytic_covariance():
    grid = get_fixture("GSTAR").with_conductance_ratio(0.5)
    Hb = build_laplacian(grid).reorder(grid.node_ids)
    Hg = build_laplacian(grid, "conductance").reorder(grid.node_ids)
    S = analytic_lc_covariance(Hb, Hg, 1.0, grid.zero_injection)
    th = theoretical_thresholds(grid, 1.0, mode="lc")
    out = learn_from_covariance(S, th.config())
    assert out.zero_injection == {1}
    assert topology_error(grid, out.estimate) == 0
