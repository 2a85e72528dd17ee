import copy
import math
from collections import Counter

import numpy as np
import pytest

from ocskit import matching
from ocskit.bounds import BoundParams
from ocskit.instances import Instance, from_adjacency, generate_instance, offline_optimum
from ocskit.matching import (DETERMINISTIC, THREE_WAY, TWO_WAY, MatchingError, WeightProfile,
                             WeightedTables, delta_beta, dual_audit_check, run, run_unweighted,
                             run_weighted)


def profile(pairs=(), triples=(), det=0.0):
    levels = sorted({*pairs, *triples} | ({det} if det > 0 else set()))
    return WeightProfile(list(pairs), list(triples), det, np.array(levels),
                         np.zeros(len(levels)))


def riemann_delta_beta(tab, prof, w, steps=400_000):
    """Midpoint sum of b below w minus a third of a above w, from raw counts."""
    top = max([w, prof.det] + prof.pairs + prof.triples)
    h = top / steps
    xs = (np.arange(steps) + 0.5) * h
    k = (np.array(prof.pairs, dtype=float)[None, :] >= xs[:, None]).sum(axis=1)
    l = (np.array(prof.triples, dtype=float)[None, :] >= xs[:, None]).sum(axis=1)
    inf = prof.det >= xs
    below = xs <= w
    return float(h * (tab.b(k, l, inf)[below].sum() - tab.a(k, l, inf)[~below].sum() / 3))


# ---------------------------------------------------------------------------
# unweighted
# ---------------------------------------------------------------------------

def test_single_edge_is_matched(uw_consistent):
    inst = from_adjacency(1, [[0]])
    res, aud = run("unweighted", inst, uw_consistent)
    assert res.value == 1 and aud.steps[0].case == DETERMINISTIC
    assert dual_audit_check(aud).passed


def test_two_fresh_neighbours_use_the_pair_selector(uw_consistent):
    inst = from_adjacency(2, [[0, 1]])
    res, aud = run("unweighted", inst, uw_consistent)
    assert aud.steps[0].case == TWO_WAY and res.value == 1


def test_three_fresh_neighbours_are_uniform(uw_consistent):
    inst = from_adjacency(3, [[0, 1, 2]])
    trials = 3000
    counts = Counter()
    for s in range(trials):
        res, aud = run("unweighted", inst, uw_consistent, seed=s)
        assert aud.steps[0].case == THREE_WAY
        (u,) = res.assignment
        counts[u] += 1
    sd = math.sqrt(trials * (1 / 3) * (2 / 3))
    for u in range(3):
        assert abs(counts[u] - trials / 3) < 5 * sd


def test_larger_ties_send_lowest_ids_to_three_way(uw_consistent):
    inst = from_adjacency(5, [[4, 3, 2, 1, 0]])
    _, aud = run("unweighted", inst, uw_consistent)
    assert aud.steps[0].chosen == (0, 1, 2)


def test_empty_instance(uw_consistent, w10_consistent):
    for variant, tab in (("unweighted", uw_consistent), ("weighted", w10_consistent)):
        res, aud = run(variant, Instance(0), tab)
        assert res.value == 0 and dual_audit_check(aud).passed
        res, aud = run(variant, from_adjacency(3, [[], []]), tab)
        assert res.value == 0 and len(res.exposed) == 2


@pytest.mark.parametrize("mode", ["consistent", "paper"])
@pytest.mark.parametrize("kind", ["random-bipartite", "upper-triangular-adversarial"])
def test_unweighted_audit_passes(mode, kind):
    summary = matching.ratio_experiment(kind, 20, 15, seed=3, mode=mode)
    assert summary.audits_passed
    assert all(r.alg <= r.opt + 1e-9 for r in summary.rows)


def test_unweighted_increment_matches_direct_sum(uw_consistent):
    inst = generate_instance("random-bipartite", 15, seed=4)
    _, aud = run("unweighted", inst, uw_consistent, seed=4)
    assert aud.primal == pytest.approx(sum(aud.x.values()))
    assert aud.dual == pytest.approx(sum(aud.alpha.values()) + sum(aud.beta.values()))


def test_unweighted_fault_is_detected(uw_consistent):
    bad = copy.deepcopy(uw_consistent)
    bad.b[bad.model.qorder.next((0, 0))] += 0.3
    inst = from_adjacency(2, [[0, 1]])
    _, aud = run_unweighted(inst, bad.model.qorder, bad)
    assert not dual_audit_check(aud).passed


def test_table_mismatch_raises(uw_consistent, uw_paper, w10_consistent):
    inst = from_adjacency(1, [[0]])
    with pytest.raises(MatchingError):
        run_unweighted(inst, uw_paper.model.qorder, uw_consistent)
    with pytest.raises(MatchingError):
        run_unweighted(inst, uw_consistent.model.qorder, uw_consistent,
                       params=BoundParams.paper())
    with pytest.raises(MatchingError):
        run_weighted(inst, uw_consistent)
    with pytest.raises(MatchingError):
        run("nothing", inst, w10_consistent)
    with pytest.raises(MatchingError):
        matching.cached_tables("nothing")


# ---------------------------------------------------------------------------
# edge-weighted
# ---------------------------------------------------------------------------

def test_weighted_single_edge_is_deterministic(w10_consistent):
    assert w10_consistent.b[(0, 0)] > 0
    inst = from_adjacency(1, [[0]], [[2.5]])
    res, aud = run("weighted", inst, w10_consistent)
    assert aud.steps[0].case == DETERMINISTIC
    assert res.value == 2.5 and res.assignment == {0: (0, 2.5)}
    assert dual_audit_check(aud).passed


@pytest.mark.parametrize("mode", ["consistent", "paper"])
@pytest.mark.parametrize("kind", ["uniform-weights", "exponential-weights"])
def test_weighted_audit_passes(mode, kind, w10_consistent, w10_paper):
    tables = w10_consistent if mode == "consistent" else w10_paper
    summary = matching.ratio_experiment(kind, 15, 10, seed=11, tables=tables)
    assert summary.audits_passed
    assert all(r.alg <= r.opt + 1e-9 for r in summary.rows)


def test_weighted_audit_on_unit_weights(w10_consistent):
    for s in range(5):
        inst = generate_instance("upper-triangular-adversarial", 12, seed=s)
        res, aud = run_weighted(inst, w10_consistent, seed=s)
        assert dual_audit_check(aud).passed
        assert res.is_valid()


def test_weighted_fault_is_detected(w10_consistent):
    bad = copy.deepcopy(w10_consistent)
    bad.a[(1, 0)] = 0.0
    flagged = 0
    for s in range(20):
        inst = generate_instance("uniform-weights", 20, seed=s)
        _, aud = run_weighted(inst, bad, seed=s)
        flagged += not dual_audit_check(aud).passed
    assert flagged >= 15


def test_weighted_matching_is_valid_and_keeps_heaviest(w10_consistent):
    inst = generate_instance("exponential-weights", 20, seed=2)
    res, aud = run_weighted(inst, w10_consistent, seed=2)
    assert res.is_valid()
    assert res.value == pytest.approx(sum(w for _, w in res.assignment.values()))
    assert res.value <= offline_optimum(inst) + 1e-9
    for u, (v, w) in res.assignment.items():
        assert dict(inst.arrivals[v].edges)[u] == w


def test_delta_beta_against_riemann_sum(w10_consistent):
    tab = WeightedTables(w10_consistent, BoundParams.consistent())
    prof = profile(pairs=[0.5, 1.2], triples=[0.8])
    for w in (0.3, 1.0, 2.0):
        assert delta_beta(tab, prof, w) == pytest.approx(riemann_delta_beta(tab, prof, w),
                                                         abs=1e-4)
    prof = profile(pairs=[0.4], triples=[0.9, 0.6, 0.2], det=0.7)
    for w in (0.1, 0.65, 1.5):
        assert delta_beta(tab, prof, w) == pytest.approx(riemann_delta_beta(tab, prof, w),
                                                         abs=1e-4)


def test_fresh_vertex_price_is_linear(w10_consistent):
    tab = WeightedTables(w10_consistent, BoundParams.consistent())
    b00 = w10_consistent.b[(0, 0)]
    assert delta_beta(tab, WeightProfile(), 1.7) == pytest.approx(1.7 * b00)


def test_table_bounds_match_parameters(w10_consistent):
    params = BoundParams.consistent()
    tab = WeightedTables(w10_consistent, params)
    for k in range(8):
        assert float(tab.zeta(k)) == pytest.approx(params.zeta(k), rel=1e-12)
        assert float(tab.eta(k)) == pytest.approx(params.eta_pow(k), rel=1e-12)
    assert float(tab.a(99, 0, False)) == tab.a_inf == float(tab.a(0, 0, True))
    assert float(tab.b(99, 0, False)) == 0.0


def test_ybar_of_fresh_and_deterministic_vertices(w10_consistent):
    tab = WeightedTables(w10_consistent, BoundParams.consistent())
    pts = np.array([0.5, 1.0])
    assert np.allclose(tab.ybar(WeightProfile(), pts), 0.0)
    assert np.allclose(tab.ybar(WeightProfile(det=0.7), pts), [1.0, 0.0])
    assert np.allclose(tab.ybar(WeightProfile(pairs=[1.0]), pts), 0.5)
    assert np.allclose(tab.ybar(WeightProfile(triples=[1.0]), pts), 1 / 3)


# ---------------------------------------------------------------------------
# ratio summaries
# ---------------------------------------------------------------------------

def test_ratio_summary(uw_consistent):
    s = matching.ratio_experiment("random-bipartite", 10, 8, seed=0, tables=uw_consistent)
    assert len(s.rows) == 8 and s.min <= s.mean <= 1.0
    lo, hi = s.ci()
    assert lo <= s.mean <= hi
    csv = s.to_csv().splitlines()
    assert csv[0] == "seed,alg,opt,ratio,audit_pass" and len(csv) == 9
    again = matching.ratio_experiment("random-bipartite", 10, 8, seed=0, tables=uw_consistent)
    assert again.to_csv() == s.to_csv()
    with pytest.raises(MatchingError):
        matching.ratio_experiment("nope", 5, 1)


def test_fixed_instance_varies_only_coins(uw_consistent):
    s = matching.ratio_experiment("random-bipartite", 12, 6, seed=1, tables=uw_consistent,
                                  fixed_instance=True)
    assert len({r.opt for r in s.rows}) == 1
