"""Pairwise interaction matrix, its convergence signal, unbiased perception
vectors and the RBF affinity built from them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClusterTooSmallError, CohortTooSmallError, DomainError, ShapeError
from .rewards import check_alpha


@dataclass
class InteractionState:
    """Interaction matrix over an ordered list of clients.

    ``P[k, j]`` tracks the average reward of client ``k`` over the rounds in
    which ``k`` and ``j`` were sampled together. ``mse_signal`` is an
    exponential moving average (coefficient ``alpha``) of the mean squared
    change of the whole matrix between consecutive rounds and starts at 1. ``P0`` is the matrix this state started from and
    ``round`` counts the updates applied since then.
    """

    clients: list
    P: np.ndarray
    alpha: float
    mse_signal: float = 1.0
    round: int = 0
    P0: np.ndarray = None
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        check_alpha(self.alpha)
        self.clients = list(self.clients)
        self.P = np.array(self.P, dtype=np.float64)
        k = len(self.clients)
        if self.P.shape != (k, k):
            raise ShapeError(f"P has shape {self.P.shape}, expected ({k}, {k})")
        if len(set(self.clients)) != k:
            raise DomainError("client ids must be unique")
        if self.P0 is None:
            self.P0 = self.P.copy()
        self._index = {c: i for i, c in enumerate(self.clients)}

    @classmethod
    def zeros(cls, clients, alpha):
        k = len(clients)
        return cls(clients=clients, P=np.zeros((k, k)), alpha=alpha)

    def __len__(self):
        return len(self.clients)

    def index_of(self, clients) -> np.ndarray:
        try:
            return np.array([self._index[c] for c in clients], dtype=np.intp)
        except KeyError as exc:
            raise DomainError(f"client {exc.args[0]!r} is not part of this interaction state") from None

    def entry_bound(self) -> np.ndarray:
        """Entrywise upper bound ``(1-a)^t P0 + 1 - (1-a)^(t+1)`` at the current round."""
        decay = (1.0 - self.alpha) ** self.round
        return decay * self.P0 + 1.0 - decay * (1.0 - self.alpha)

    def restrict(self, clients) -> "InteractionState":
        """Sub-state on ``clients`` (rows and columns filtered), with the
        convergence signal reset to 1 and the round counter restarted."""
        idx = self.index_of(clients)
        sub = self.P[np.ix_(idx, idx)].copy()
        return InteractionState(clients=list(clients), P=sub, alpha=self.alpha)


def update_interaction(state: InteractionState, sampled, omegas: dict) -> InteractionState:
    """Blend the average rewards of a cohort into its block of ``P`` (in place).

    Every pair (k, j) of sampled clients, the diagonal included, moves
    towards ``omegas[k]``; all other entries are left untouched.
    """
    sampled = list(sampled)
    if len(sampled) < 3:
        raise CohortTooSmallError(f"need at least 3 sampled clients, got {len(sampled)}")
    if len(set(sampled)) != len(sampled):
        raise DomainError("sampled clients must be distinct")
    if set(omegas) != set(sampled):
        raise DomainError("omegas must be defined exactly on the sampled clients")
    omega = np.array([omegas[c] for c in sampled], dtype=np.float64)
    if np.any(~(omega > 0.0) | (omega > 1.0)):
        raise DomainError(f"average rewards must lie in (0, 1], got {omega}")

    idx = state.index_of(sampled)
    block = np.ix_(idx, idx)
    old = state.P[block]
    new = (1.0 - state.alpha) * old + state.alpha * omega[:, None]
    state.P[block] = new
    # entries outside the block did not move; average over all K^2 of them
    mse = float(np.sum((new - old) ** 2)) / state.P.size
    state.mse_signal = (1.0 - state.alpha) * state.mse_signal + state.alpha * mse
    state.round += 1
    return state


def converged(state: InteractionState, epsilon: float) -> bool:
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    return state.mse_signal < epsilon


def extract_upv(state, k: int, j: int) -> np.ndarray:
    """Row ``k`` of P without positions ``k`` and ``j``, order preserved."""
    P = state.P if isinstance(state, InteractionState) else np.asarray(state)
    n = P.shape[0]
    if k == j:
        raise DomainError("unbiased perception vector needs two distinct clients")
    if not (0 <= k < n and 0 <= j < n):
        raise DomainError(f"indices ({k}, {j}) out of range for {n} clients")
    keep = np.ones(n, dtype=bool)
    keep[[k, j]] = False
    return P[k, keep]


@dataclass(frozen=True)
class AffinityMatrix:
    W: np.ndarray
    beta: float

    def __len__(self):
        return self.W.shape[0]


def upv_sq_distances(P: np.ndarray) -> np.ndarray:
    """Squared distances ``||v_k^j - v_j^k||^2`` for every pair, symmetric,
    zero diagonal. Each unordered pair is evaluated once."""
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    out = np.zeros((n, n))
    for k in range(n - 1):
        js = np.arange(k + 1, n)
        diff = P[k] - P[js]
        # drop the two excluded coordinates from the row-difference
        diff[np.arange(js.size), k] = 0.0
        diff[np.arange(js.size), js] = 0.0
        d2 = np.einsum("ij,ij->i", diff, diff)
        out[k, js] = d2
        out[js, k] = d2
    return out


def build_affinity(state, beta: float) -> AffinityMatrix:
    """RBF kernel ``exp(-beta * ||v_k^j - v_j^k||^2)`` with unit diagonal."""
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    P = state.P if isinstance(state, InteractionState) else np.asarray(state)
    if P.shape[0] < 3:
        raise ClusterTooSmallError(f"affinity needs at least 3 clients, got {P.shape[0]}")
    W = np.exp(-beta * upv_sq_distances(P))
    np.fill_diagonal(W, 1.0)
    return AffinityMatrix(W=W, beta=float(beta))
