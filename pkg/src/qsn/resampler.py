"""Turn predicted bin pmfs into subgrid tendencies by resampling training data."""

from __future__ import annotations

import numpy as np

from qsn.errors import ConfigurationError, InsufficientDataError
from qsn.features import BinningScheme
from qsn.network import QSNetwork, argmax_bins, predict_pmf

STOCHASTIC = "stochastic"
DETERMINISTIC = "deterministic"
MODES = (STOCHASTIC, DETERMINISTIC)

PMF_TOL = 1e-9


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ConfigurationError(f"sampler mode must be one of {MODES}, got {mode!r}")
    return mode


def _check_pmf(pmf):
    total = pmf.sum(axis=-1)
    if np.any(np.abs(total - 1.0) > PMF_TOL) or np.any(pmf < 0):
        raise ValueError(f"pmf not normalized (sums {np.atleast_1d(total)[:4]}...)")


def _categorical(pmf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-cdf draws for each row of ``pmf`` given uniforms ``u``."""
    cdf = np.cumsum(pmf, axis=-1)
    m = (cdf < u[..., None] * cdf[..., -1:]).sum(axis=-1)
    return np.minimum(m, pmf.shape[-1] - 1)


def sample_bin(pmf, rng: np.random.Generator) -> int:
    pmf = np.asarray(pmf, dtype=float)
    _check_pmf(pmf)
    return int(_categorical(pmf, np.asarray(rng.random())))


def sample_from_bin(scheme: BinningScheme, n: int, m: int, rng: np.random.Generator) -> float:
    """Uniform draw from the training values that fell in bin m of site n."""
    count = scheme.counts[n, m]
    if count == 0:
        raise InsufficientDataError(f"bin {m} of site {n} is empty")
    k = int(rng.random() * count)
    return float(scheme.member_value(n, m, min(k, count - 1)))


def draw(pmf: np.ndarray, scheme: BinningScheme, sites: np.ndarray, mode: str,
         rng: np.random.Generator | None) -> np.ndarray:
    """Vectorized two-stage draw: row k of ``pmf`` (K, M) uses scheme site ``sites[k]``.

    Stochastic: categorical bin, then a uniform member of that bin, with one
    uniform per row for each stage.  Deterministic: the argmax bin's mean.
    """
    if mode == DETERMINISTIC:
        return scheme.means[sites, argmax_bins(pmf)]
    u = rng.random((2, len(sites)))
    m = _categorical(pmf, u[0])
    counts = scheme.counts[sites, m]
    k = np.minimum((u[1] * counts).astype(np.int64), counts - 1)
    return scheme.member_value(sites, m, k)


def sample_r(net: QSNetwork, scheme: BinningScheme, d, mode: str = STOCHASTIC,
             rng: np.random.Generator | None = None) -> np.ndarray:
    """Sampled tendency for a standardized feature input.

    ``d`` is one full-vector feature row (one output per head), or a stack of
    local rows (one output per row, all drawn from the single local scheme).
    """
    check_mode(mode)
    if mode == STOCHASTIC and rng is None:
        raise ConfigurationError("stochastic sampling needs an rng")
    pmf = predict_pmf(net, d)  # (B, heads, M)
    B, heads, M = pmf.shape
    if M != scheme.M:
        raise ConfigurationError(f"network has {M} bins per head, scheme has {scheme.M}")
    if heads == scheme.n_sites and B == 1:
        sites = np.arange(heads)
    elif heads == 1 and scheme.n_sites == 1:
        sites = np.zeros(B, dtype=np.int64)
    else:
        raise ConfigurationError(
            f"cannot map {B} rows x {heads} heads onto a scheme with {scheme.n_sites} sites"
        )
    return draw(pmf.reshape(-1, M), scheme, sites, mode, rng)


def resampling_weights(scheme: BinningScheme, n: int, pmf) -> np.ndarray:
    """Single-stage weights ``w_i = sum_m rho_m / |B_m| * 1(r_i in B_m)`` over training values.

    Bin membership is recomputed from the edges rather than read from the
    member lists, so this is an independent route to the two-stage law.
    """
    pmf = np.asarray(pmf, dtype=float)
    values = scheme.values[:, n]
    m = scheme.bin_index(n, values)
    sizes = np.bincount(m, minlength=scheme.M)
    return pmf[m] / sizes[m]


def sample_weighted(scheme: BinningScheme, n: int, pmf, rng: np.random.Generator, size: int) -> np.ndarray:
    w = resampling_weights(scheme, n, pmf)
    idx = rng.choice(len(w), size=size, p=w / w.sum())
    return scheme.values[idx, n]


def two_stage_law(scheme: BinningScheme, n: int, pmf) -> np.ndarray:
    """Exact probability of each training index under bin-then-member sampling."""
    pmf = np.asarray(pmf, dtype=float)
    p = np.zeros(scheme.values.shape[0])
    for m, ix in enumerate(scheme.members[n]):
        p[ix] += pmf[m] / len(ix)
    return p
