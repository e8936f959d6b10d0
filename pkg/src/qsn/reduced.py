"""Reduced macro model closed by the resampling surrogate.

The macro state advances with AB2 on ``rhs_macro(X, r~)`` where ``r~`` is
held fixed over the step, while ``r~`` itself is redrawn every step from the
surrogate conditioned on the lagged macro history.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from qsn.errors import ConfigurationError, InsufficientDataError, NumericalError
from qsn.features import FULL, BinningScheme, FeatureSpec, StandardScaler
from qsn.l96 import L96Params, Trajectory, ab2_update, rhs_macro
from qsn.network import QSNetwork, predict_pmf
from qsn.resampler import STOCHASTIC, check_mode, draw

# r~_{j+1} is drawn from the features of step j (the pairing the network was
# trained on) or from the features after the macro update to X_{j+1}.
CURRENT = "current"
UPDATED = "updated"


class HistoryBuffer:
    """Ring buffers of the last ``depth`` macro states and tendencies.

    ``X_at(k)`` is the state k pushes ago (k = 0 is the newest).  X and r
    have independent write heads so they can be pushed at different points
    of a step.
    """

    def __init__(self, depth: int, N: int):
        if depth < 1:
            raise ConfigurationError("history depth must be >= 1")
        self.depth = depth
        self.N = N
        self._X = np.zeros((depth, N))
        self._r = np.zeros((depth, N))
        self._hx = -1
        self._hr = -1
        self._nx = 0
        self._nr = 0

    def __len__(self):
        return min(self._nx, self.depth)

    def push_X(self, X):
        self._hx = (self._hx + 1) % self.depth
        self._X[self._hx] = X
        self._nx += 1

    def push_r(self, r):
        self._hr = (self._hr + 1) % self.depth
        self._r[self._hr] = r
        self._nr += 1

    def push(self, X, r):
        self.push_X(X)
        self.push_r(r)

    def X_lagged(self, lags) -> np.ndarray:
        return self._X[(self._hx - np.asarray(lags)) % self.depth]

    def r_lagged(self, lags) -> np.ndarray:
        return self._r[(self._hr - np.asarray(lags)) % self.depth]

    def X_at(self, k: int) -> np.ndarray:
        return self._X[(self._hx - k) % self.depth]

    def features(self, spec: FeatureSpec) -> np.ndarray:
        """Raw feature rows in the same layout as ``build_features``."""
        parts = []
        if spec.r_lags:
            parts.append(self.r_lagged(spec.r_lags))
        if spec.x_lags:
            parts.append(self.X_lagged(spec.x_lags))
        blocks = np.concatenate(parts, axis=0)  # (n_lags, N)
        if spec.locality == FULL:
            return blocks.reshape(1, -1)
        return blocks.T.copy()


def warm_start(traj: Trajectory, spec: FeatureSpec, j: int) -> HistoryBuffer:
    """History holding reference states ``X_{j-J..j}`` and ``r_{j-J..j}``."""
    J = spec.max_lag
    if j < J:
        raise InsufficientDataError(f"warm start at index {j} needs {J} earlier rows")
    if j >= len(traj):
        raise InsufficientDataError(f"warm start index {j} beyond trajectory of {len(traj)} rows")
    buf = HistoryBuffer(J + 1, traj.N)
    for k in range(j - J, j + 1):
        buf.push(traj.X[k], traj.r[k])
    return buf


class Surrogate:
    """QSN + scaler + bins bundled into ``features -> r~`` draws."""

    def __init__(self, net: QSNetwork, scheme: BinningScheme, scaler: StandardScaler,
                 spec: FeatureSpec, mode: str = STOCHASTIC, N: int | None = None,
                 expected_hash: str | None = None):
        from qsn.io import artifact_hash

        self.net, self.scheme, self.scaler, self.spec = net, scheme, scaler, spec
        self.mode = check_mode(mode)
        self.hash = artifact_hash(spec, scaler, scheme)
        recorded = expected_hash if expected_hash is not None else net.meta.get("feature_hash")
        if recorded is not None and recorded != self.hash:
            raise ConfigurationError(
                f"artifact hash mismatch: network trained against {recorded}, "
                f"loaded spec/scaler/bins hash to {self.hash}"
            )
        if spec.locality == FULL:
            if N is not None and scheme.n_sites != N:
                raise ConfigurationError(f"scheme has {scheme.n_sites} sites, model has N={N}")
            self._sites = np.arange(scheme.n_sites)
        else:
            if scheme.n_sites != 1 or net.arch.heads != 1:
                raise ConfigurationError("local surrogate needs a single head and a single-site scheme")
            self._sites = None if N is None else np.zeros(N, dtype=np.int64)
        if net.arch.input_dim != scaler.mean.size:
            raise ConfigurationError("scaler width does not match the network input")

    def __call__(self, raw_features: np.ndarray, rng: np.random.Generator | None) -> np.ndarray:
        pmf = predict_pmf(self.net, self.scaler.transform(raw_features))
        pmf = pmf.reshape(-1, self.scheme.M)
        sites = self._sites
        if sites is None or len(sites) != pmf.shape[0]:
            sites = np.arange(pmf.shape[0]) if self.spec.locality == FULL else np.zeros(pmf.shape[0], dtype=np.int64)
        return draw(pmf, self.scheme, sites, self.mode, rng)


@dataclass(frozen=True)
class ReducedRunConfig:
    t_start: float = 0.0
    t_end: float = 1000.0
    dt: float = 0.01
    mode: str = STOCHASTIC
    seed: int = 0
    feature_timing: str = CURRENT

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ConfigurationError(f"t_end ({self.t_end}) must exceed t_start ({self.t_start})")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        check_mode(self.mode)
        if self.feature_timing not in (CURRENT, UPDATED):
            raise ConfigurationError(f"feature_timing must be '{CURRENT}' or '{UPDATED}'")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def step_reduced(X, r, f_prev, history: HistoryBuffer, surrogate: Callable, spec: FeatureSpec,
                 params: L96Params, rng, timing: str = CURRENT):
    """One reduced step from ``(X_j, r~_j)``; returns ``(X_{j+1}, r~_{j+1}, f_j)``.

    ``history`` must end at ``(X_j, r~_j)`` on entry and ends at
    ``(X_{j+1}, r~_{j+1})`` on return.  ``f_prev=None`` takes an Euler step.
    """
    f = rhs_macro(X, r, params)
    if timing == CURRENT:
        r_next = surrogate(history.features(spec), rng)
        X_next = X + params.dt * f if f_prev is None else ab2_update(X, f, f_prev, params.dt)
        history.push(X_next, r_next)
    else:
        X_next = X + params.dt * f if f_prev is None else ab2_update(X, f, f_prev, params.dt)
        history.push_X(X_next)
        r_next = surrogate(history.features(spec), rng)
        history.push_r(r_next)
    return X_next, np.asarray(r_next, dtype=float), f


def simulate_reduced(config: ReducedRunConfig, surrogate: Callable, spec: FeatureSpec,
                     reference: Trajectory, params: L96Params,
                     rng: np.random.Generator | None = None) -> Trajectory:
    """Run the closed macro model over ``[t_start, t_end]`` on the reference time grid.

    The first ``max_lag + 1`` rows are copied from the reference trajectory
    (warm start); every later row is produced by the reduced model.
    """
    if abs(config.dt - params.dt) > 1e-12 or abs(reference.dt - params.dt) > 1e-9:
        raise ConfigurationError(
            f"reduced dt {config.dt} must equal the training dt {params.dt} (lags count steps)"
        )
    if rng is None:
        rng = np.random.default_rng(config.seed)
    dt = params.dt
    i0 = int(round((config.t_start - reference.times[0]) / dt))
    if i0 < 0:
        raise ConfigurationError("t_start precedes the reference trajectory")
    n_total = int(round((config.t_end - config.t_start) / dt))
    J = spec.max_lag
    j0 = i0 + J
    if n_total <= J:
        raise InsufficientDataError("run shorter than the warm-start history")
    history = warm_start(reference, spec, j0)

    X_out = np.empty((n_total + 1, params.N))
    r_out = np.empty((n_total + 1, params.N))
    X_out[: J + 1] = reference.X[i0: j0 + 1]
    r_out[: J + 1] = reference.r[i0: j0 + 1]
    X, r = reference.X[j0].copy(), reference.r[j0].copy()
    f_prev = rhs_macro(reference.X[j0 - 1], reference.r[j0 - 1], params) if j0 >= 1 else None

    for k in range(J, n_total):
        with np.errstate(over="ignore", invalid="ignore"):
            X, r, f_prev = step_reduced(X, r, f_prev, history, surrogate, spec, params, rng,
                                        config.feature_timing)
        if not np.all(np.isfinite(X)):
            raise NumericalError(
                f"reduced model blew up at step {k + 1} (t = {config.t_start + (k + 1) * dt:.4f})",
                step=k + 1, time=config.t_start + (k + 1) * dt, last_state=X_out[k].copy(),
            )
        X_out[k + 1] = X
        r_out[k + 1] = r
    times = config.t_start + np.arange(n_total + 1) * dt
    return Trajectory(times, X_out, r_out)


def _ensemble_member(args):
    config, surrogate, spec, reference, params, seed_seq = args
    return simulate_reduced(config, surrogate, spec, reference, params,
                            np.random.default_rng(seed_seq))


def simulate_ensemble(config: ReducedRunConfig, surrogate: Surrogate, spec: FeatureSpec,
                      reference: Trajectory, params: L96Params, seeds, workers: int = 1):
    """Independent reduced runs, one per seed (int or SeedSequence), optionally in parallel."""
    jobs = [(config, surrogate, spec, reference, params, s) for s in seeds]
    if workers <= 1 or len(jobs) == 1:
        return [_ensemble_member(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_ensemble_member, jobs))
