import numpy as np
import pytest

from fedgwc.clustering import ClusteringOutcome
from fedgwc.config import config_from_dict
from fedgwc.errors import CohortTooSmallError, DivergenceError
from fedgwc.interaction import InteractionState
from fedgwc.orchestrator import (
    ClusterNode,
    Experiment,
    SamplerState,
    cohort_size,
    maybe_split,
    run_round,
    sample_cohort,
    split_node,
)
from fedgwc.rewards import LossTrace


def node(members, rho=0.3, P=None, seed=0):
    K = len(members)
    inter = InteractionState(list(members), np.zeros((K, K)) if P is None else P, 0.1)
    return ClusterNode(0, list(members), np.zeros(2), inter, SamplerState.fresh(rho, members, seed))


def same_trainer(c, params, r):
    return params + 1.0, LossTrace(c, [1.0, 0.5, 0.25]), 10


def mean_agg(updates, node):
    return np.mean([p for p, _ in updates], axis=0)


@pytest.mark.parametrize("rho, n, k", [(0.1, 100, 10), (0.1, 12, 3), (0.1, 60, 6), (0.2, 40, 8), (1.0, 5, 5)])
def test_cohort_size(rho, n, k):
    assert cohort_size(rho, n) == k


def test_sampling_is_balanced():
    nd = node(range(17), rho=0.2)
    for _ in range(200):
        cohort = sample_cohort(nd)
        assert len(cohort) == len(set(cohort)) == 4
        counts = list(nd.sampler.counts.values())
        assert max(counts) - min(counts) <= 1


def test_small_cluster_cannot_sample():
    with pytest.raises(CohortTooSmallError):
        sample_cohort(node([0, 1]))


def test_identical_clients_get_full_rewards():
    nd = node(range(10))
    res = run_round(nd, same_trainer, mean_agg, 0.1)
    assert all(w == 1.0 for w in res.omegas.values())
    assert np.array_equal(nd.model, [1.0, 1.0])
    idx = np.array(res.cohort)
    np.testing.assert_allclose(nd.interaction.P[np.ix_(idx, idx)], 0.1)
    assert all(nd.weights.weight(c) == pytest.approx(0.1) for c in res.cohort)


def test_aborted_round_leaves_the_node_untouched():
    def trainer(c, params, r):
        if c == 3:
            raise DivergenceError("boom")
        return same_trainer(c, params, r)

    nd = node(range(10), rho=1.0)
    P, counts, model = nd.interaction.P.copy(), dict(nd.sampler.counts), nd.model.copy()
    res = run_round(nd, trainer, mean_agg, 0.1)
    assert res.aborted and "boom" in res.error
    assert np.array_equal(nd.interaction.P, P) and nd.sampler.counts == counts
    assert np.array_equal(nd.model, model) and nd.interaction.round == 0


def two_block(sizes=(5, 7)):
    g = np.repeat([0, 1], sizes)
    return np.where(g[:, None] == 0, 0.2, 0.9) * np.ones(sum(sizes))


def test_split_inherits_parent_state():
    P = two_block() + np.arange(144).reshape(12, 12) * 1e-6
    parent = node(range(12), P=P)
    parent.model = np.array([3.0, 4.0])
    parent.weights.gamma = {c: c / 100 for c in range(12)}
    out = ClusteringOutcome({c: int(c >= 5) for c in range(12)}, 2)
    kids = split_node(parent, out, first_id=7, round_index=40, seed=0)
    assert [k.id for k in kids] == [7, 8] and [k.members for k in kids] == [list(range(5)), list(range(5, 12))]
    for k in kids:
        idx = np.array(k.members)
        assert np.array_equal(k.interaction.P, P[np.ix_(idx, idx)])
        assert k.interaction.mse_signal == 1.0 and k.born == 40
        assert np.array_equal(k.model, parent.model) and k.model is not parent.model
        assert set(k.weights.gamma) == set(k.members)
        assert set(k.sampler.counts) == set(k.members)


def test_maybe_split_needs_convergence():
    nd = node(range(12), P=two_block())
    nodes, outcome = maybe_split(nd, 1e-5, 0.5, 5, 3)
    assert nodes == [nd] and outcome is None
    nd.interaction.mse_signal = 1e-9
    nodes, outcome = maybe_split(nd, 1e-5, 0.5, 5, 3, first_id=1)
    assert outcome.split and [n.members for n in nodes] == [list(range(5)), list(range(5, 12))]


def experiment_config(**fedgwc):
    fg = {"rho": 0.5, "epsilon": 1.0e-3, "k_min": 3}
    fg.update(fedgwc)
    return config_from_dict({
        "federation": {
            "K": 12, "C": 3, "d": 4, "samples_per_client": 40, "seed": 7,
            "partition": [{"size": 6, "alpha": 100.0, "domain": "clean"},
                          {"size": 6, "alpha": 0.5, "domain": "noisy"}],
        },
        "training": {"T": 60, "lr": 0.1, "batch_size": 8, "eval_every": 5},
        "fedgwc": fg,
    })


def test_run_is_deterministic(small_federation):
    a = Experiment(experiment_config(), small_federation).run()
    b = Experiment(experiment_config(), small_federation).run()
    assert a.records == b.records


def test_clusters_partition_the_federation_and_only_grow(small_federation):
    ex = Experiment(experiment_config(epsilon=1.0e-2), small_federation)
    ex.evaluate()
    sizes = []
    for _ in range(60):
        ex.step()
        members = sorted(m for n in ex.clusters for m in n.members)
        assert members == list(range(12))
        sizes.append(len(ex.clusters))
    assert sizes == sorted(sizes) and sizes[-1] > 1
    log = ex.finish()
    assert log.summary["n_cl"] == sizes[-1] == len(ex.clusters)
    assert set(log.labels()) == set(range(12))


def test_zero_rounds(small_federation):
    log = Experiment(experiment_config(), small_federation).run(rounds=0)
    assert log.summary["rounds"] == 0 and log.summary["n_cl"] == 1
    assert len(log.of_type("eval")) == 1 and not log.of_type("round")


def test_disabled_clustering_never_splits(small_federation):
    log = Experiment(experiment_config(enabled=False, epsilon=1.0), small_federation).run()
    assert log.summary["n_cl"] == 1 and not log.splits
    assert set(log.n_clusters_by_round().values()) == {1}
    series = log.accuracy_series()
    assert sorted(series) == list(range(0, 61, 5))
