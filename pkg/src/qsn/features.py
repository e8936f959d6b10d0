"""Lagged feature vectors, standardization and per-site binning of targets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from qsn.errors import (
    ConfigurationError,
    DegenerateFeatureError,
    InsufficientDataError,
)
from qsn.l96 import Trajectory

FULL = "full"
LOCAL = "local"


@dataclass(frozen=True)
class FeatureSpec:
    """Which lagged quantities make up a feature vector.

    Lags count macro time steps back from the current step ``j``.  Within a
    feature vector the r-lags come first, then the X-lags; each lag block
    holds all N sites (``locality="full"``) or a single site (``"local"``).
    """

    x_lags: tuple[int, ...] = (0,)
    r_lags: tuple[int, ...] = ()
    locality: str = FULL

    def __post_init__(self):
        object.__setattr__(self, "x_lags", tuple(int(k) for k in self.x_lags))
        object.__setattr__(self, "r_lags", tuple(int(k) for k in self.r_lags))
        for name, lags in (("x_lags", self.x_lags), ("r_lags", self.r_lags)):
            if any(k < 0 for k in lags):
                raise ConfigurationError(f"{name} must be non-negative: {lags}")
            if list(lags) != sorted(set(lags)):
                raise ConfigurationError(f"{name} must be sorted ascending without duplicates: {lags}")
        if not self.x_lags and not self.r_lags:
            raise ConfigurationError("feature spec needs at least one lag")
        if self.locality not in (FULL, LOCAL):
            raise ConfigurationError(f"locality must be '{FULL}' or '{LOCAL}', got {self.locality!r}")

    @property
    def max_lag(self) -> int:
        return max(self.x_lags + self.r_lags)

    @property
    def n_lags(self) -> int:
        return len(self.x_lags) + len(self.r_lags)

    def feature_dim(self, N: int) -> int:
        return self.n_lags * (N if self.locality == FULL else 1)

    def n_heads(self, N: int) -> int:
        return N if self.locality == FULL else 1

    def to_dict(self) -> dict:
        return {"x_lags": list(self.x_lags), "r_lags": list(self.r_lags), "locality": self.locality}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(tuple(d.get("x_lags", ())), tuple(d.get("r_lags", ())), d.get("locality", FULL))


@dataclass
class FeatureMatrix:
    """Design matrix ``d_j`` with aligned raw targets ``r_{j+1}``.

    ``rows`` holds the time index j of every row and ``sites`` the site it
    belongs to (-1 for full-vector rows).  ``labels`` are integer bin indices
    per head, filled in once a binning scheme is known.
    """

    features: np.ndarray
    targets: np.ndarray
    rows: np.ndarray
    sites: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_heads(self) -> int:
        return self.targets.shape[1]

    def one_hot(self, M: int) -> np.ndarray:
        """Labels as an ``(rows, heads, M)`` one-hot array."""
        if self.labels is None:
            raise ConfigurationError("feature matrix has no labels; call with_labels first")
        return np.eye(M)[self.labels]

    def with_features(self, features: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(features, self.targets, self.rows, self.sites, self.labels)

    def with_labels(self, scheme: "BinningScheme") -> "FeatureMatrix":
        return FeatureMatrix(self.features, self.targets, self.rows, self.sites, scheme.assign(self.targets))


def _lag_blocks(X, r, spec: FeatureSpec, start: int, stop: int):
    """Yield ``(stop - start, N)`` slices in feature order for rows j in [start, stop)."""
    for k in spec.r_lags:
        yield r[start - k: stop - k]
    for k in spec.x_lags:
        yield X[start - k: stop - k]


def build_features(
    traj: Trajectory,
    spec: FeatureSpec,
    sites: Sequence[int] | None = None,
    stop: int | None = None,
) -> FeatureMatrix:
    """Unstandardized features ``d_j`` and targets ``r_{j+1}`` for j = J..T-1.

    ``stop`` caps the last target row index (exclusive bound on j+1 is
    ``stop + 1``), which selects a training prefix without copying.  For
    local features one row is emitted per (j, n) for every n in ``sites``
    (all sites by default), j-major.
    """
    T = len(traj) - 1 if stop is None else int(stop)
    J = spec.max_lag
    if T > len(traj) - 1:
        raise ConfigurationError(f"stop={stop} beyond trajectory end {len(traj) - 1}")
    if not T > J + 1:
        raise InsufficientDataError(
            f"trajectory too short for max lag {J}: need at least {J + 3} rows, have {T + 1}"
        )
    n_rows = T - J
    blocks = list(_lag_blocks(traj.X, traj.r, spec, J, T))
    targets = traj.r[J + 1: T + 1]
    rows = np.arange(J, T)
    if spec.locality == FULL:
        return FeatureMatrix(
            np.concatenate(blocks, axis=1), targets.copy(), rows, np.full(n_rows, -1)
        )
    sites = np.arange(traj.N) if sites is None else np.asarray(sites, dtype=int)
    if np.any((sites < 0) | (sites >= traj.N)):
        raise ConfigurationError(f"sites {sites.tolist()} out of range for N={traj.N}")
    # (rows, lags, N) -> (rows, N_sel, lags) -> flatten j-major
    stacked = np.stack(blocks, axis=1)[:, :, sites].transpose(0, 2, 1)
    feats = stacked.reshape(n_rows * len(sites), spec.n_lags)
    return FeatureMatrix(
        feats,
        targets[:, sites].reshape(-1, 1),
        np.repeat(rows, len(sites)),
        np.tile(sites, n_rows),
    )


def feature_vector(X_hist: np.ndarray, r_hist: np.ndarray | None, spec: FeatureSpec) -> np.ndarray:
    """Feature rows from histories where ``X_hist[k]`` is the state k steps back.

    Returns shape ``(1, dim)`` for full-vector specs and ``(N, n_lags)`` for
    local specs (one row per site).
    """
    parts = [r_hist[k] for k in spec.r_lags] + [X_hist[k] for k in spec.x_lags]
    if spec.locality == FULL:
        return np.concatenate(parts)[None, :]
    return np.stack(parts, axis=1)


@dataclass
class StandardScaler:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if np.any(~(self.std > 0)):
            raise DegenerateFeatureError("scaler std entries must be positive")

    def transform(self, features):
        return (np.asarray(features, dtype=float) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardScaler":
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


def fit_scaler(features) -> StandardScaler:
    """Column means and population standard deviations (denominator n)."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] < 2:
        raise InsufficientDataError("need a 2-d feature array with at least 2 rows")
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    scale = np.maximum(np.abs(mean), 1.0)
    bad = np.flatnonzero(std <= 1e-12 * scale)
    if bad.size:
        raise DegenerateFeatureError(f"constant feature column(s): {bad.tolist()}")
    return StandardScaler(mean, std)


def apply_scaler(scaler: StandardScaler, features) -> np.ndarray:
    return scaler.transform(features)


@dataclass
class BinningScheme:
    """M ordered intervals per output site, built from training targets.

    ``values[i, n]`` is training target i at site n; ``members[n][m]`` lists
    the training indices i whose value falls in bin m of site n.
    """

    edges: np.ndarray  # (sites, M+1)
    values: np.ndarray  # (n_train, sites)
    members: list = field(default_factory=list)
    counts: np.ndarray = field(init=False)
    means: np.ndarray = field(init=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if not self.members:
            labels = self.assign(self.values)
            self.members = [
                [np.flatnonzero(labels[:, n] == m) for m in range(self.M)]
                for n in range(self.n_sites)
            ]
        else:
            self.members = [[np.asarray(ix, dtype=np.int64) for ix in site] for site in self.members]
        self.counts = np.array([[len(ix) for ix in site] for site in self.members], dtype=np.int64)
        if np.any(self.counts == 0):
            site, m = np.argwhere(self.counts == 0)[0]
            raise InsufficientDataError(f"bin {m} of site {site} is empty (too many tied targets)")
        self.means = np.array(
            [[self.values[ix, n].mean() for ix in site] for n, site in enumerate(self.members)]
        )
        # flattened member table: bin m of site n occupies
        # _flat[n, _offsets[n, m] : _offsets[n, m + 1]]
        self._flat = np.stack([np.concatenate(site) for site in self.members])
        self._offsets = np.concatenate(
            [np.zeros((self.n_sites, 1), dtype=np.int64), np.cumsum(self.counts, axis=1)], axis=1
        )

    @property
    def M(self) -> int:
        return self.edges.shape[1] - 1

    @property
    def n_sites(self) -> int:
        return self.edges.shape[0]

    def bin_index(self, n: int, value) -> np.ndarray | int:
        """Half-open ``[e_m, e_{m+1})`` lookup, clamped to bins 0 and M-1."""
        m = np.searchsorted(self.edges[n, 1:-1], value, side="right")
        return int(m) if np.ndim(m) == 0 else m

    def assign(self, targets) -> np.ndarray:
        """Bin labels for a ``(rows, sites)`` target array."""
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        if targets.shape[1] != self.n_sites:
            raise ConfigurationError(
                f"targets have {targets.shape[1]} columns, scheme has {self.n_sites} sites"
            )
        return np.stack([self.bin_index(n, targets[:, n]) for n in range(self.n_sites)], axis=1)

    def member_value(self, n, m, k):
        """Value of the k-th member of bin m at site n (vectorized over arrays)."""
        i = self._flat[n, self._offsets[n, m] + k]
        return self.values[i, n]

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "edges": self.edges.tolist(),
            "counts": self.counts.tolist(),
            "members": [[ix.tolist() for ix in site] for site in self.members],
            "values": self.values.T.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinningScheme":
        return cls(
            np.array(d["edges"], dtype=float),
            np.array(d["values"], dtype=float).T,
            d["members"],
        )


QUANTILE = "quantile"
EQUAL_WIDTH = "equal_width"
BIN_KINDS = (QUANTILE, EQUAL_WIDTH)


def fit_bins(targets, M: int = 10, kind: str = QUANTILE) -> BinningScheme:
    """Per-column bins: equal-count (edges at the k/M quantiles) or equal-width.

    Equal-width bins can come out empty on heavy-tailed data, which raises
    InsufficientDataError rather than leaving a bin nothing to resample.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if M < 2:
        raise ConfigurationError(f"need at least 2 bins, got M={M}")
    if kind not in BIN_KINDS:
        raise ConfigurationError(f"bin kind must be one of {BIN_KINDS}, got {kind!r}")
    for n in range(targets.shape[1]):
        distinct = np.unique(targets[:, n]).size
        if distinct < M:
            raise InsufficientDataError(
                f"site {n} has {distinct} distinct target values, fewer than M={M}"
            )
    if kind == QUANTILE:
        edges = np.quantile(targets, np.linspace(0.0, 1.0, M + 1), axis=0).T
    else:
        edges = np.linspace(targets.min(axis=0), targets.max(axis=0), M + 1).T
    return BinningScheme(edges, targets)
