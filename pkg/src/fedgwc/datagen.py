"""Synthetic federations with Dirichlet class skew and feature-space domains."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .training import ClientDataset

DOMAINS = ("clean", "noisy", "blurred")


@dataclass(frozen=True)
class GroupSpec:
    size: int
    dirichlet_alpha: float
    domain: str = "clean"

    def __post_init__(self):
        if self.size < 1:
            raise ConfigError(f"group size must be positive, got {self.size}")
        if self.dirichlet_alpha < 0:
            raise ConfigError(f"dirichlet_alpha must be >= 0, got {self.dirichlet_alpha}")
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}; expected one of {DOMAINS}")


@dataclass(frozen=True)
class FederationSpec:
    """Recipe for a synthetic federation.

    Class ``c`` is a unit-covariance Gaussian centred at ``class_sep * e_c``
    in R^d (so ``d >= C``). The noisy domain adds Gaussian noise of scale
    ``noise_scale``; the blurred domain replaces each feature by a moving
    average over ``blur_width`` neighbouring features.
    """

    K: int
    C: int
    d: int
    groups: tuple
    samples_per_client: int = 200
    seed: int = 0
    class_sep: float = 3.0
    noise_scale: float = 1.5
    blur_width: int = 5
    test_fraction: float = 0.2

    def __post_init__(self):
        groups = tuple(g if isinstance(g, GroupSpec) else GroupSpec(**g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if not groups:
            raise ConfigError("federation needs at least one group")
        if sum(g.size for g in groups) != self.K:
            raise ConfigError(f"group sizes sum to {sum(g.size for g in groups)}, expected K={self.K}")
        if self.C < 2:
            raise ConfigError(f"need at least 2 classes, got C={self.C}")
        if self.d < self.C:
            raise ConfigError(f"feature dimension d={self.d} must be at least C={self.C}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        n_test = int(round(self.samples_per_client * self.test_fraction))
        if n_test < 1 or self.samples_per_client - n_test < 1:
            raise ConfigError(f"samples_per_client={self.samples_per_client} too small for a train/test split")
        if self.blur_width < 1:
            raise ConfigError(f"blur_width must be positive, got {self.blur_width}")


@dataclass
class Client:
    id: int
    group: int
    domain: str
    histogram: np.ndarray
    train: ClientDataset
    test: ClientDataset


@dataclass
class Federation:
    spec: FederationSpec
    clients: list = field(default_factory=list)

    @property
    def ground_truth(self) -> dict:
        return {c.id: c.group for c in self.clients}

    def __len__(self):
        return len(self.clients)

    def __getitem__(self, client_id):
        return self.clients[client_id]


def dirichlet_partition(alpha: float, C: int, rng) -> np.ndarray:
    """Class proportions drawn from Dirichlet(alpha * 1_C).

    ``alpha == 0`` is the degenerate limit: all mass on one uniformly chosen
    class.
    """
    if alpha < 0:
        raise ConfigError(f"dirichlet alpha must be >= 0, got {alpha}")
    if alpha == 0:
        h = np.zeros(C)
        h[rng.integers(C)] = 1.0
        return h
    h = rng.dirichlet(np.full(C, float(alpha)))
    if not np.all(np.isfinite(h)) or h.sum() == 0:
        # tiny alphas can underflow every component; fall back to the limit
        h = np.zeros(C)
        h[rng.integers(C)] = 1.0
    return h / h.sum()


def blur(X, width: int) -> np.ndarray:
    """Centred moving average along the feature axis, edges zero-padded."""
    if width <= 1:
        return X.copy()
    kernel = np.full(width, 1.0 / width)
    return np.stack([np.convolve(row, kernel, mode="same") for row in X])


def apply_domain(X, domain: str, spec: FederationSpec, rng) -> np.ndarray:
    if domain == "clean":
        return X
    if domain == "noisy":
        return X + spec.noise_scale * rng.standard_normal(X.shape)
    if domain == "blurred":
        return blur(X, spec.blur_width)
    raise ConfigError(f"unknown domain {domain!r}")


def class_means(spec: FederationSpec) -> np.ndarray:
    means = np.zeros((spec.C, spec.d))
    means[np.arange(spec.C), np.arange(spec.C)] = spec.class_sep
    return means


def make_federation(spec: FederationSpec) -> Federation:
    """Generate every client of ``spec``; client ids are 0..K-1 in group order.

    Each client draws its own generator from ``SeedSequence(seed)`` so
    clients are reproducible independently of each other.
    """
    means = class_means(spec)
    children = np.random.SeedSequence(spec.seed).spawn(spec.K)
    n = spec.samples_per_client
    n_test = int(round(n * spec.test_fraction))
    fed = Federation(spec=spec)
    cid = 0
    for gid, group in enumerate(spec.groups):
        for _ in range(group.size):
            rng = np.random.default_rng(children[cid])
            hist = dirichlet_partition(group.dirichlet_alpha, spec.C, rng)
            counts = rng.multinomial(n, hist)
            y = np.repeat(np.arange(spec.C), counts)
            X = means[y] + rng.standard_normal((n, spec.d))
            X = apply_domain(X, group.domain, spec, rng)
            perm = rng.permutation(n)
            X, y = X[perm], y[perm]
            fed.clients.append(
                Client(
                    id=cid,
                    group=gid,
                    domain=group.domain,
                    histogram=hist,
                    train=ClientDataset(X[n_test:], y[n_test:]),
                    test=ClientDataset(X[:n_test], y[:n_test]),
                )
            )
            cid += 1
    return fed
