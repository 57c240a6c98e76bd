"""Recursive clustered federated training.

Every live cluster runs its own server: it samples a cohort, trains, aggregates,
turns the cohort's loss traces into rewards, updates its interaction matrix and,
once that matrix has settled, tries to split itself.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusteringOutcome, fedgw_cluster
from .config import ExperimentConfig
from .datagen import Federation, make_federation
from .errors import CohortTooSmallError, DivergenceError
from .interaction import InteractionState, converged, update_interaction
from .metrics import balanced_accuracy
from .rewards import GaussianWeightState, cohort_rewards, update_weight
from .training import ServerState, aggregate, build_model, evaluate, local_train

log = logging.getLogger(__name__)

# spawn-key namespaces for the independent random streams of a run
_SAMPLER, _LOCAL, _KMEANS, _INIT = 1, 2, 3, 4


def _seed_seq(seed, *key):
    return np.random.SeedSequence(entropy=seed, spawn_key=key)


def _int_seed(seed, *key) -> int:
    return int(_seed_seq(seed, *key).generate_state(1)[0])


def cohort_size(rho: float, n_members: int) -> int:
    """``max(ceil(rho * n), 3)``; the rounding guard keeps 0.1 * 60 at 6."""
    return max(math.ceil(round(rho * n_members, 9)), 3)


@dataclass
class SamplerState:
    rho: float
    counts: dict
    rng_seed: int
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng(self.rng_seed)

    @classmethod
    def fresh(cls, rho, members, seed):
        return cls(rho=rho, counts={m: 0 for m in members}, rng_seed=seed)

    def snapshot(self):
        return dict(self.counts), self.rng.bit_generator.state

    def restore(self, snap):
        self.counts, self.rng.bit_generator.state = dict(snap[0]), snap[1]


@dataclass
class ClusterNode:
    id: int
    members: list
    model: np.ndarray
    interaction: InteractionState
    sampler: SamplerState
    weights: GaussianWeightState = field(default_factory=GaussianWeightState)
    server: ServerState = field(default_factory=ServerState)
    born: int = 0


def sample_cohort(node: ClusterNode) -> list:
    """Pick ``max(ceil(rho * |members|), 3)`` distinct members.

    Least-sampled members are always taken first; within the stratum that
    only partly fits, the choice is a seeded uniform shuffle. Counts are
    incremented. The cohort is returned in member order.
    """
    members = node.members
    if len(members) < 3:
        raise CohortTooSmallError(f"cluster {node.id} has {len(members)} members; at least 3 are needed")
    sampler = node.sampler
    need = min(cohort_size(sampler.rho, len(members)), len(members))
    by_count: dict = {}
    for m in members:
        by_count.setdefault(sampler.counts.get(m, 0), []).append(m)
    chosen = []
    for count in sorted(by_count):
        stratum = by_count[count]
        if len(chosen) + len(stratum) <= need:
            chosen.extend(stratum)
        else:
            picks = sampler.rng.permutation(len(stratum))[: need - len(chosen)]
            chosen.extend(stratum[i] for i in sorted(picks))
        if len(chosen) == need:
            break
    for m in chosen:
        sampler.counts[m] = sampler.counts.get(m, 0) + 1
    order = {m: i for i, m in enumerate(members)}
    return sorted(chosen, key=order.__getitem__)


@dataclass
class RoundResult:
    cluster: int
    cohort: list
    omegas: dict = field(default_factory=dict)
    mean_loss: float = float("nan")
    aborted: bool = False
    error: str = None


class LocalTrainer:
    """Runs local SGD for a client of a federation with per-(round, client) seeds."""

    def __init__(self, federation: Federation, model, trainer_cfg, seed: int):
        self.federation = federation
        self.model = model
        self.cfg = trainer_cfg
        self.seed = seed

    def __call__(self, client_id, params, round_index: int):
        data = self.federation[client_id].train
        seed = _seed_seq(self.seed, _LOCAL, round_index, client_id)
        theta, trace = local_train(self.model, params, data, self.cfg, seed, client_id=client_id)
        return theta, trace, data.n_k


class Aggregator:
    def __init__(self, method: str = "fedavg"):
        self.method = method

    def __call__(self, updates, node: ClusterNode) -> np.ndarray:
        return aggregate(updates, self.method, node.server, current=node.model)


def run_round(node: ClusterNode, trainer, aggregator, alpha: float, round_index: int = 0) -> RoundResult:
    """One communication round of a cluster server (mutates ``node``).

    If any cohort member diverges the round is abandoned and the node,
    sampler included, is left exactly as it was.
    """
    snap = node.sampler.snapshot()
    cohort = sample_cohort(node)
    try:
        outputs = [trainer(c, node.model, round_index) for c in cohort]
    except DivergenceError as exc:
        node.sampler.restore(snap)
        log.warning("round %d of cluster %d aborted: %s", round_index, node.id, exc)
        return RoundResult(cluster=node.id, cohort=cohort, aborted=True, error=str(exc))

    traces = [trace for _, trace, _ in outputs]
    omegas = cohort_rewards(traces)
    node.model = aggregator([(theta, n_k) for theta, _, n_k in outputs], node)
    for c in cohort:
        update_weight(node.weights, c, omegas[c], alpha)
    update_interaction(node.interaction, cohort, omegas)
    mean_loss = float(np.mean([t.values.mean() for t in traces]))
    return RoundResult(cluster=node.id, cohort=cohort, omegas=omegas, mean_loss=mean_loss)


def split_node(node: ClusterNode, outcome: ClusteringOutcome, first_id: int, round_index: int, seed: int) -> list:
    """Children of ``node`` for a splitting outcome.

    Each child starts from a copy of the parent model and server state, the
    parent's interaction matrix restricted to its members (convergence
    signal back to 1) and a fresh sampler.
    """
    children = []
    for offset, members in enumerate(outcome.groups(node.members)):
        cid = first_id + offset
        children.append(
            ClusterNode(
                id=cid,
                members=members,
                model=node.model.copy(),
                interaction=node.interaction.restrict(members),
                sampler=SamplerState.fresh(node.sampler.rho, members, _int_seed(seed, _SAMPLER, cid)),
                weights=node.weights.subset(members),
                server=node.server.copy(),
                born=round_index,
            )
        )
    return children


def maybe_split(node, epsilon, beta, n_max, k_min, seed=0, first_id=None, round_index=0):
    """Return ``(nodes, outcome)``.

    ``nodes`` is ``[node]`` when the interaction matrix has not converged or
    clustering declines to split (``outcome`` is None in the first case);
    otherwise it holds the new child clusters.
    """
    if not converged(node.interaction, epsilon):
        return [node], None
    if len(node.members) < 3:
        return [node], None
    outcome = fedgw_cluster(node.interaction, beta, n_max, _int_seed(seed, _KMEANS, round_index, node.id), k_min)
    if not outcome.split:
        return [node], outcome
    first_id = node.id + 1 if first_id is None else first_id
    return split_node(node, outcome, first_id, round_index, seed), outcome


@dataclass
class ExperimentLog:
    """Everything a run produces.

    ``records`` is the ordered list of log entries (dicts with a ``type``
    of "round", "split", "eval" or "summary"); ``clusters`` are the live
    cluster nodes at the end of the run.
    """

    records: list = field(default_factory=list)
    clusters: list = field(default_factory=list)

    def of_type(self, kind):
        return [r for r in self.records if r["type"] == kind]

    @property
    def summary(self) -> dict:
        return self.of_type("summary")[-1]

    @property
    def splits(self):
        return self.of_type("split")

    def labels(self) -> dict:
        return {m: node.id for node in self.clusters for m in node.members}

    def n_clusters_by_round(self) -> dict:
        return {r["round"]: r["n_cl"] for r in self.of_type("round")}

    def accuracy_series(self) -> dict:
        """``{round: federation mean balanced accuracy}`` from eval records."""
        out: dict = {}
        for r in self.of_type("eval"):
            out.setdefault(r["round"], []).append((r["balanced_accuracy"], len(r["members"])))
        return {t: sum(a * n for a, n in v) / sum(n for _, n in v) for t, v in sorted(out.items())}


def client_balanced_accuracy(model, params, federation, members, n_classes) -> dict:
    return {
        m: balanced_accuracy(evaluate(model, params, federation[m].test), federation[m].test.labels, n_classes)
        for m in members
    }


class Experiment:
    """Stateful driver behind :func:`run_experiment`; exposes the clusters
    between rounds for inspection."""

    def __init__(self, config: ExperimentConfig, federation: Federation = None):
        self.config = config
        self.federation = federation if federation is not None else make_federation(config.federation)
        tc, gc = config.training, config.fedgwc
        spec = self.federation.spec
        self.model = build_model(tc.model, spec.d, spec.C, tc.hidden)
        init_rng = np.random.default_rng(_seed_seq(config.seed, _INIT))
        members = [c.id for c in self.federation.clients]
        root = ClusterNode(
            id=0,
            members=members,
            model=self.model.init(init_rng),
            interaction=InteractionState.zeros(members, gc.alpha),
            sampler=SamplerState.fresh(gc.rho, members, _int_seed(config.seed, _SAMPLER, 0)),
            server=ServerState(momentum=tc.server_momentum),
        )
        self.clusters = [root]
        self.next_id = 1
        self.round = 0
        self.trainer = LocalTrainer(self.federation, self.model, tc.trainer(), config.seed)
        self.aggregator = Aggregator(tc.aggregator)
        self.log = ExperimentLog()

    def evaluate(self):
        C = self.federation.spec.C
        for node in self.clusters:
            accs = client_balanced_accuracy(self.model, node.model, self.federation, node.members, C)
            self.log.records.append({
                "type": "eval",
                "round": self.round,
                "cluster": node.id,
                "members": list(node.members),
                "balanced_accuracy": float(np.mean(list(accs.values()))),
            })

    def step(self):
        gc = self.config.fedgwc
        n_cl = len(self.clusters)
        survivors = []
        for node in self.clusters:
            res = run_round(node, self.trainer, self.aggregator, gc.alpha, self.round)
            rec = {
                "type": "round",
                "round": self.round,
                "cluster": node.id,
                "cohort": list(res.cohort),
                "aborted": res.aborted,
                "n_cl": n_cl,
                "mse": float(node.interaction.mse_signal),
            }
            if res.aborted:
                rec["error"] = res.error
            else:
                rec["mean_loss"] = res.mean_loss
                rec["omega"] = [float(res.omegas[c]) for c in res.cohort]
            self.log.records.append(rec)
            if res.aborted or not gc.enabled:
                survivors.append(node)
                continue
            nodes, outcome = maybe_split(
                node, gc.epsilon, gc.beta, gc.n_max, gc.k_min,
                seed=self.config.seed, first_id=self.next_id, round_index=self.round,
            )
            if outcome is not None and not outcome.split:
                rec["db_scores"] = {str(n): float(v) for n, v in sorted(outcome.db_scores.items())}
                rec["rejected"] = sorted(int(n) for n in outcome.rejected)
            if outcome is not None and outcome.split:
                self.next_id += len(nodes)
                self.log.records.append({
                    "type": "split",
                    "round": self.round,
                    "parent": node.id,
                    "children": [n.id for n in nodes],
                    "sizes": [len(n.members) for n in nodes],
                    **outcome.to_record(),
                })
                log.info("round %d: cluster %d split into %s", self.round, node.id, [len(n.members) for n in nodes])
            survivors.extend(nodes)
        self.clusters = sorted(survivors, key=lambda n: n.id)
        self.round += 1
        if self.round % self.config.training.eval_every == 0:
            self.evaluate()

    def run(self, rounds=None) -> ExperimentLog:
        T = self.config.training.T if rounds is None else rounds
        if self.round == 0:
            self.evaluate()
        for _ in range(T):
            self.step()
        return self.finish()

    def finish(self) -> ExperimentLog:
        if not self.log.of_type("eval") or self.log.of_type("eval")[-1]["round"] != self.round:
            self.evaluate()
        final = [r for r in self.log.of_type("eval") if r["round"] == self.round]
        total = sum(len(r["members"]) for r in final)
        self.log.records.append({
            "type": "summary",
            "rounds": self.round,
            "n_cl": len(self.clusters),
            "clusters": [{"id": n.id, "members": list(n.members)} for n in self.clusters],
            "balanced_accuracy": {str(r["cluster"]): r["balanced_accuracy"] for r in final},
            "mean_balanced_accuracy": sum(r["balanced_accuracy"] * len(r["members"]) for r in final) / total,
            "splits": len(self.log.splits),
        })
        self.log.clusters = list(self.clusters)
        return self.log


def run_experiment(config: ExperimentConfig, federation: Federation = None) -> ExperimentLog:
    """Run the whole recursive procedure for ``config.training.T`` rounds."""
    return Experiment(config, federation).run()
