"""Two-layer Lorenz 96 system and its Adams-Bashforth integrator.

Macro variables ``X_n`` (n = 0..N-1) and micro variables ``Y_{l,n}``
(l = 0..L-1) live on a circle.  ``Y`` is stored as an ``(N, L)`` array, i.e.
row-major over sites with the ``l`` index contiguous inside a site, so the
flattened vector obeys ``Y_{l+L,n} = Y_{l,n+1}`` by plain cyclic shifting.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from qsn.errors import ConfigurationError, NumericalError


@dataclass(frozen=True)
class L96Params:
    N: int = 18
    L: int = 20
    F: float = 10.0
    h_x: float = -1.0
    h_y: float = 1.0
    eps: float = 0.5
    dt: float = 0.01
    # Sign of the forcing term in dX/dt.  -1 is "- X_n - F" as written in the
    # reference equations, +1 the classical Lorenz convention "- X_n + F".
    forcing_sign: int = -1

    def __post_init__(self):
        if self.N < 4:
            raise ConfigurationError(f"N must be >= 4 for the advection stencil, got {self.N}")
        if self.L < 4:
            raise ConfigurationError(f"L must be >= 4 for the micro stencil, got {self.L}")
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.forcing_sign not in (-1, 1):
            raise ConfigurationError(f"forcing_sign must be -1 or +1, got {self.forcing_sign}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "L96Params":
        return cls(**d)


UNIMODAL = L96Params(N=18, L=20, F=10.0, h_x=-1.0, h_y=1.0, eps=0.5, dt=0.01)
BIMODAL = L96Params(N=18, L=20, F=10.0, h_x=-2.0, h_y=1.0, eps=0.5, dt=0.01)


@dataclass
class FullState:
    X: np.ndarray  # (N,)
    Y: np.ndarray  # (N, L)

    def copy(self) -> "FullState":
        return FullState(self.X.copy(), self.Y.copy())

    def rotate(self, shift: int = 1) -> "FullState":
        """Cyclically relabel sites: site n of the result is site n - shift here."""
        return FullState(np.roll(self.X, shift), np.roll(self.Y, shift, axis=0))


@dataclass
class Trajectory:
    """Recorded macro states and subgrid tendencies, one row per macro step."""

    times: np.ndarray  # (T+1,)
    X: np.ndarray  # (T+1, N)
    r: np.ndarray  # (T+1, N)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        n = len(self.times)
        if self.X.shape[0] != n or self.r.shape[0] != n:
            raise ConfigurationError(
                f"row counts differ: times {n}, X {self.X.shape[0]}, r {self.r.shape[0]}"
            )
        if self.X.shape != self.r.shape:
            raise ConfigurationError(f"X {self.X.shape} and r {self.r.shape} shapes differ")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ConfigurationError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def N(self) -> int:
        return self.X.shape[1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def slice(self, start: int, stop: int | None = None) -> "Trajectory":
        return Trajectory(self.times[start:stop], self.X[start:stop], self.r[start:stop])

    def split(self, fraction: float = 0.5) -> tuple["Trajectory", "Trajectory"]:
        """Split at row ``round(fraction * T)``; the split row belongs to both halves."""
        mid = int(round(fraction * (len(self) - 1)))
        return self.slice(0, mid + 1), self.slice(mid)


def _check_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"non-finite values in {what}")


def coupling_r(Y, params: L96Params) -> np.ndarray:
    """Subgrid tendency ``r_n = (h_x / L) * sum_l Y_{l,n}``."""
    Y = np.asarray(Y, dtype=float)
    if Y.size != params.N * params.L:
        raise ConfigurationError(f"Y has {Y.size} entries, expected N*L = {params.N * params.L}")
    _check_finite(Y, "Y (corrupted micro state)")
    return (params.h_x / params.L) * Y.reshape(params.N, params.L).sum(axis=1)


def rhs_macro(X, r, params: L96Params) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    if X.shape != (params.N,) or r.shape != (params.N,):
        raise ConfigurationError(
            f"X {X.shape} and r {r.shape} must both have shape ({params.N},)"
        )
    # np.roll(X, 1)[n] == X[n-1]
    return (
        np.roll(X, 1) * (np.roll(X, -1) - np.roll(X, 2))
        - X
        + params.forcing_sign * params.F
        + r
    )


def rhs_micro(X, Y, params: L96Params) -> np.ndarray:
    """Micro tendency, returned with the same ``(N, L)`` layout as ``Y``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != (params.N,) or Y.size != params.N * params.L:
        raise ConfigurationError(
            f"inconsistent shapes X {X.shape}, Y {Y.shape} for N={params.N}, L={params.L}"
        )
    y = Y.reshape(-1)
    dy = (
        np.roll(y, -1) * (np.roll(y, 1) - np.roll(y, -2))
        - y
        + params.h_y * np.repeat(X, params.L)
    ) / params.eps
    return dy.reshape(params.N, params.L)


def tendencies(state: FullState, params: L96Params) -> FullState:
    """Joint tendency f(s) of the coupled system, packaged as a FullState."""
    r = coupling_r(state.Y, params)
    return FullState(rhs_macro(state.X, r, params), rhs_micro(state.X, state.Y, params))


def ab2_update(y, f_curr, f_prev, dt):
    """Two-step Adams-Bashforth: ``y + dt * (3/2 f_curr - 1/2 f_prev)``."""
    return y + dt * (1.5 * f_curr - 0.5 * f_prev)


def integrate_ab2(f: Callable, y0, dt: float, n_steps: int, f_prev=None) -> np.ndarray:
    """Integrate ``dy/dt = f(y)`` for ``n_steps`` steps and return all states.

    When ``f_prev`` is None the first step is forward Euler.
    """
    y = np.asarray(y0, dtype=float)
    out = np.empty((n_steps + 1,) + y.shape)
    out[0] = y
    for j in range(n_steps):
        fc = f(y)
        y = y + dt * fc if f_prev is None else ab2_update(y, fc, f_prev, dt)
        f_prev = fc
        out[j + 1] = y
    return out


def ab2_step(curr: FullState, rhs_prev: FullState | None, params: L96Params, step: int | None = None):
    """Advance the coupled system by one macro step.

    Returns the new state and the tendency evaluated at ``curr``, which is the
    ``rhs_prev`` argument of the following call.  ``rhs_prev=None`` falls back
    to forward Euler (startup step).
    """
    with np.errstate(over="ignore", invalid="ignore"):
        f = tendencies(curr, params)
        if rhs_prev is None:
            X = curr.X + params.dt * f.X
            Y = curr.Y + params.dt * f.Y
        else:
            X = ab2_update(curr.X, f.X, rhs_prev.X, params.dt)
            Y = ab2_update(curr.Y, f.Y, rhs_prev.Y, params.dt)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise NumericalError(
            f"full model blew up at step {step}", step=step, last_state=curr.copy()
        )
    return FullState(X, Y), f


def random_initial_state(params: L96Params, rng: np.random.Generator) -> FullState:
    return FullState(rng.standard_normal(params.N), np.zeros((params.N, params.L)))


def generate_trajectory(
    params: L96Params,
    t_end: float,
    burn_in: float = 10.0,
    init: FullState | None = None,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Integrate the full system and record ``(X_j, r_j)`` at every macro step.

    The first ``burn_in`` time units are integrated and discarded; recorded
    times start at 0.  Without ``init`` the start state is drawn from ``rng``
    (X standard normal, Y zero).
    """
    if not t_end > 0:
        raise ConfigurationError(f"t_end must be positive, got {t_end}")
    if burn_in < 0:
        raise ConfigurationError(f"burn_in must be non-negative, got {burn_in}")
    if init is None:
        if rng is None:
            rng = np.random.default_rng()
        init = random_initial_state(params, rng)
    n_burn = int(round(burn_in / params.dt))
    n_rec = int(round(t_end / params.dt))

    X_out = np.empty((n_rec + 1, params.N))
    r_out = np.empty((n_rec + 1, params.N))
    state, f_prev = init.copy(), None
    for j in range(n_burn + n_rec + 1):
        k = j - n_burn
        if k >= 0:
            X_out[k] = state.X
            r_out[k] = coupling_r(state.Y, params)
            if k == n_rec:
                break
        try:
            state, f_prev = ab2_step(state, f_prev, params, step=j)
        except NumericalError as exc:
            exc.time = (j - n_burn) * params.dt
            raise NumericalError(
                f"full model blew up at step {j} (t = {exc.time:.4f})",
                step=j, time=exc.time, last_state=exc.last_state,
            ) from None
    times = np.arange(n_rec + 1) * params.dt
    return Trajectory(times, X_out, r_out)
