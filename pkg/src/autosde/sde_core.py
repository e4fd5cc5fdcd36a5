"""
Slow-fast stochastic systems and their Euler-Maruyama simulation.

This module defines the ``SlowFastSystem`` bundle (slow drift f, fast drift g,
additive noise intensities and the scale separation epsilon), the data
containers produced by simulation (``Trajectory``, ``Ensemble``, ``Snapshot``)
and the integrators that fill them.

Random numbers follow a fixed contract: every ensemble member ``i`` draws its
initial condition from ``SeedSequence(seed, spawn_key=(i, 0))`` and its noise
from ``SeedSequence(seed, spawn_key=(i, 1))``, both through a counter-based
Philox generator. The same seed therefore reproduces the same ensemble
bit-for-bit, independently of how trajectories are blocked or parallelized.

Key Functions:
    - euler_maruyama_step(): One explicit step of the scheme
    - simulate_trajectory(): Single path from a given random stream
    - simulate_ensemble(): Seeded ensemble of paths
    - coarse_grain(): Keep every stride-th time row
    - snapshot_at(): Ensemble cross-section at one time index

Author: F. Herbrand
License: MIT
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from .errors import IntegrationBlowupError

logger = logging.getLogger(__name__)

# Any state entry beyond this magnitude aborts the integration.
BLOWUP_LIMIT = 1.0e12

DriftFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class SdeSystem(Protocol):
    """Anything the integrator can advance: a drift and additive noise scales."""

    @property
    def dim(self) -> int: ...

    @property
    def noise_scale(self) -> np.ndarray: ...

    def drift(self, z: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class SlowFastSystem:
    """
    Slow-fast SDE with additive diagonal noise.

    The system reads ``dx = f(x, y) dt + sigma_slow dW1`` and
    ``dy = g(x, y) / epsilon dt + sigma_fast / sqrt(epsilon) dW2``.
    Drift callables take batched arrays ``x`` of shape ``(..., slow_dim)`` and
    ``y`` of shape ``(..., fast_dim)`` and return the matching trailing shape.
    ``drift_fast`` is g itself, without the ``1/epsilon`` factor.

    Parameters
    ----------
    slow_dim, fast_dim : int
        Block sizes n and N - n, both at least 1
    epsilon : float
        Scale separation, strictly positive
    drift_slow, drift_fast : callable
        f and g
    sigma_slow, sigma_fast : array-like
        Nonnegative noise intensities per coordinate
    name : str
        Label written into artifacts
    """

    slow_dim: int
    fast_dim: int
    epsilon: float
    drift_slow: DriftFn
    drift_fast: DriftFn
    sigma_slow: np.ndarray
    sigma_fast: np.ndarray
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.slow_dim < 1 or self.fast_dim < 1:
            raise ValueError(
                f"slow_dim and fast_dim must be >= 1, got {self.slow_dim}, {self.fast_dim}"
            )
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

        sigma_slow = np.array(self.sigma_slow, dtype=np.float64).reshape(-1)
        sigma_fast = np.array(self.sigma_fast, dtype=np.float64).reshape(-1)
        if sigma_slow.shape != (self.slow_dim,) or sigma_fast.shape != (self.fast_dim,):
            raise ValueError(
                f"sigma vectors must have lengths ({self.slow_dim}, {self.fast_dim}), "
                f"got ({sigma_slow.size}, {sigma_fast.size})"
            )
        if np.any(sigma_slow < 0) or np.any(sigma_fast < 0):
            raise ValueError("all sigma entries must be nonnegative")
        sigma_slow.flags.writeable = False
        sigma_fast.flags.writeable = False
        object.__setattr__(self, "sigma_slow", sigma_slow)
        object.__setattr__(self, "sigma_fast", sigma_fast)

        # Probe evaluation at the origin checks the declared output sizes.
        x0 = np.zeros(self.slow_dim)
        y0 = np.zeros(self.fast_dim)
        f0 = np.asarray(self.drift_slow(x0, y0))
        g0 = np.asarray(self.drift_fast(x0, y0))
        if f0.shape != (self.slow_dim,):
            raise ValueError(
                f"drift_slow returned shape {f0.shape}, expected ({self.slow_dim},)"
            )
        if g0.shape != (self.fast_dim,):
            raise ValueError(
                f"drift_fast returned shape {g0.shape}, expected ({self.fast_dim},)"
            )

    @property
    def dim(self) -> int:
        """Full state dimension N."""
        return self.slow_dim + self.fast_dim

    @property
    def slow_dims(self) -> Tuple[int, ...]:
        return tuple(range(self.slow_dim))

    @property
    def fast_dims(self) -> Tuple[int, ...]:
        return tuple(range(self.slow_dim, self.dim))

    @property
    def noise_scale(self) -> np.ndarray:
        """Per-coordinate factor in front of dW: (sigma_slow, sigma_fast/sqrt(eps))."""
        return np.concatenate(
            [self.sigma_slow, self.sigma_fast / math.sqrt(self.epsilon)]
        )

    def split(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Split a (batched) full state into its slow and fast blocks."""
        z = np.asarray(z, dtype=np.float64)
        return z[..., : self.slow_dim], z[..., self.slow_dim :]

    def drift(self, z: np.ndarray) -> np.ndarray:
        """Full drift (f, g/epsilon) at a (batched) state."""
        x, y = self.split(z)
        f = np.asarray(self.drift_slow(x, y), dtype=np.float64)
        g = np.asarray(self.drift_fast(x, y), dtype=np.float64)
        return np.concatenate([f, g / self.epsilon], axis=-1)


@dataclass(frozen=True)
class Trajectory:
    """One sampled path on a uniform time grid; row k is the state at t0 + k*dt."""

    t0: float
    dt: float
    states: np.ndarray

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 2 or states.shape[0] < 1:
            raise ValueError(f"states must be a nonempty 2-D matrix, got shape {states.shape}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(states)):
            raise ValueError("trajectory states must be finite")
        object.__setattr__(self, "states", states)

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[0])


@dataclass(frozen=True)
class Ensemble:
    """
    Shape-identical trajectories stored as one ``(n_traj, n_steps + 1, N)`` array.

    Attributes
    ----------
    states : ndarray
        Stacked trajectory states
    t0, dt : float
        Shared time grid
    seed : int
        Seed the ensemble was generated from
    slow_dim : int
        Number of leading slow coordinates
    dropped : tuple of int
        Indices of members discarded under the ``on_blowup="drop"`` policy
    """

    states: np.ndarray
    t0: float
    dt: float
    seed: int
    slow_dim: int
    dropped: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 3 or states.shape[0] < 1 or states.shape[1] < 1:
            raise ValueError(
                f"ensemble states must have shape (n_traj>=1, rows>=1, N), got {states.shape}"
            )
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 1 <= self.slow_dim <= states.shape[2]:
            raise ValueError(
                f"slow_dim {self.slow_dim} incompatible with state dimension {states.shape[2]}"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "dropped", tuple(int(i) for i in self.dropped))

    @property
    def n_traj(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.states.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[1])

    @property
    def trajectories(self) -> List[Trajectory]:
        return [Trajectory(self.t0, self.dt, s) for s in self.states]


@dataclass(frozen=True)
class Snapshot:
    """Cross-section of an ensemble at one time index."""

    time_index: int
    points: np.ndarray

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError(f"snapshot needs at least one point, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValueError("snapshot points must be finite")
        object.__setattr__(self, "points", points)

    @property
    def n_samples(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class InitSampler:
    """
    Product distribution for initial conditions.

    Each entry of ``ranges`` is either a ``(low, high)`` pair, sampled
    uniformly, or a single number, used as a fixed coordinate.
    """

    ranges: Tuple[Union[float, Tuple[float, float]], ...]

    def __post_init__(self) -> None:
        normalized: List[Union[float, Tuple[float, float]]] = []
        for entry in self.ranges:
            if isinstance(entry, (int, float, np.floating, np.integer)):
                normalized.append(float(entry))
            else:
                low, high = (float(v) for v in entry)
                if high < low:
                    raise ValueError(f"uniform range ({low}, {high}) has high < low")
                normalized.append((low, high))
        if not normalized:
            raise ValueError("InitSampler needs at least one coordinate")
        object.__setattr__(self, "ranges", tuple(normalized))

    @classmethod
    def fixed(cls, point: Sequence[float]) -> "InitSampler":
        return cls(tuple(float(v) for v in point))

    @property
    def dim(self) -> int:
        return len(self.ranges)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = np.empty(self.dim)
        for k, entry in enumerate(self.ranges):
            if isinstance(entry, tuple):
                z[k] = rng.uniform(entry[0], entry[1])
            else:
                z[k] = entry
        return z


def substream(seed: int, index: int, purpose: int = 1) -> np.random.Generator:
    """
    Independent random stream for ensemble member ``index``.

    ``purpose`` 0 feeds the initial condition, 1 the Wiener increments.
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(index), int(purpose)))
    return np.random.Generator(np.random.Philox(sequence))


def euler_maruyama_step(
    system: SdeSystem, z: np.ndarray, dt: float, noise: np.ndarray
) -> np.ndarray:
    """
    Advance a state by one Euler-Maruyama step.

    Parameters
    ----------
    system : SlowFastSystem or ReducedSystem
        Drift and additive noise scales
    z : ndarray
        Current state (length N, or batched ``(..., N)``)
    dt : float
        Step size, strictly positive
    noise : ndarray
        Standard-normal draw of the same shape as ``z``

    Returns
    -------
    ndarray
        ``z + drift(z) dt + scale * sqrt(dt) * noise``

    Raises
    ------
    IntegrationBlowupError
        If the drift is non-finite or the new state exceeds ``BLOWUP_LIMIT``

    Examples
    --------
    >>> sys1 = parabolic_system()
    >>> euler_maruyama_step(sys1, np.array([2.0, 1.0]), 0.001, np.array([0.5, -0.3]))
    array([2.01581139, 0.99051317])
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    z = np.asarray(z, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != z.shape or z.shape[-1] != system.dim:
        raise ValueError(
            f"state shape {z.shape} and noise shape {noise.shape} must both end in {system.dim}"
        )
    if not np.all(np.isfinite(z)):
        raise IntegrationBlowupError("Non-finite state", state=z)
    return _step(system, z, dt, math.sqrt(dt), noise, step_index=0)


def _step(
    system: SdeSystem,
    z: np.ndarray,
    dt: float,
    sqrt_dt: float,
    noise: np.ndarray,
    step_index: int,
) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        drift = system.drift(z)
        if not np.all(np.isfinite(drift)):
            bad = _first_bad_row(np.isfinite(drift))
            raise IntegrationBlowupError(
                "Non-finite drift evaluation", state=_row(z, bad), step_index=step_index
            )
        new = z + drift * dt + system.noise_scale * sqrt_dt * noise
    ok = np.isfinite(new) & (np.abs(new) <= BLOWUP_LIMIT)
    if not np.all(ok):
        bad = _first_bad_row(ok)
        raise IntegrationBlowupError(
            "State left the finite range", state=_row(new, bad), step_index=step_index
        )
    return new


def _first_bad_row(ok: np.ndarray) -> Optional[int]:
    if ok.ndim == 1:
        return None
    rows = np.flatnonzero(~np.all(ok.reshape(ok.shape[0], -1), axis=1))
    return int(rows[0])


def _row(z: np.ndarray, index: Optional[int]) -> np.ndarray:
    return z if index is None else z[index]


def integrate(
    system: SdeSystem,
    z0: np.ndarray,
    dt: float,
    n_steps: int,
    noise: np.ndarray,
    substeps: int = 1,
    on_blowup: str = "raise",
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched Euler-Maruyama integration with a precomputed noise block.

    Parameters
    ----------
    system : SdeSystem
        System to advance
    z0 : ndarray
        Initial states, shape ``(B, N)``
    dt : float
        Recording step; the scheme advances with ``dt / substeps``
    n_steps : int
        Number of recorded steps
    noise : ndarray
        Standard-normal draws, shape ``(B, n_steps * substeps, N)``
    substeps : int
        Inner steps per recorded step
    on_blowup : {"raise", "drop"}
        Abort on the first divergence, or freeze diverged rows and report them

    Returns
    -------
    states : ndarray
        Shape ``(B, n_steps + 1, N)``; rows of dropped members are undefined
    diverged : ndarray of bool
        Shape ``(B,)``, always all False under ``"raise"``
    """
    z = np.array(z0, dtype=np.float64, ndmin=2)
    batch, dim = z.shape
    if noise.shape != (batch, n_steps * substeps, dim):
        raise ValueError(
            f"noise must have shape {(batch, n_steps * substeps, dim)}, got {noise.shape}"
        )
    h = dt / substeps
    sqrt_h = math.sqrt(h)
    states = np.empty((batch, n_steps + 1, dim))
    states[:, 0] = z
    diverged = np.zeros(batch, dtype=bool)

    for k in range(n_steps):
        for s in range(substeps):
            xi = noise[:, k * substeps + s]
            if on_blowup == "raise":
                try:
                    z = _step(system, z, h, sqrt_h, xi, step_index=k)
                except IntegrationBlowupError as e:
                    bad = _locate_divergence(system, z, h, sqrt_h, xi)
                    if bad is not None and batch > 1:
                        raise IntegrationBlowupError(
                            "Integration blow-up",
                            state=e.state,
                            step_index=k,
                            trajectory_index=bad,
                        ) from e
                    raise
            else:
                z = _step_dropping(system, z, h, sqrt_h, xi, diverged)
        states[:, k + 1] = z
    return states, diverged


def _locate_divergence(
    system: SdeSystem, z: np.ndarray, h: float, sqrt_h: float, xi: np.ndarray
) -> Optional[int]:
    with np.errstate(over="ignore", invalid="ignore"):
        new = z + system.drift(z) * h + system.noise_scale * sqrt_h * xi
    ok = np.all(np.isfinite(new) & (np.abs(new) <= BLOWUP_LIMIT), axis=1)
    rows = np.flatnonzero(~ok)
    return int(rows[0]) if rows.size else None


def _step_dropping(
    system: SdeSystem,
    z: np.ndarray,
    h: float,
    sqrt_h: float,
    xi: np.ndarray,
    diverged: np.ndarray,
) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        new = z + system.drift(z) * h + system.noise_scale * sqrt_h * xi
    ok = np.all(np.isfinite(new) & (np.abs(new) <= BLOWUP_LIMIT), axis=1)
    diverged |= ~ok
    # Diverged rows are parked at the origin so they stop producing overflows.
    new[diverged] = 0.0
    return new


def simulate_trajectory(
    system: SdeSystem,
    z0: Sequence[float],
    dt: float,
    n_steps: int,
    stream: np.random.Generator,
    substeps: int = 1,
    t0: float = 0.0,
) -> Trajectory:
    """
    Simulate one path with noise drawn from ``stream``.

    The whole noise block ``(n_steps * substeps, N)`` is drawn up front, so a
    stream produced by ``substream(seed, i)`` reproduces member ``i`` of
    ``simulate_ensemble(..., seed)`` exactly.

    Raises
    ------
    ValueError
        If ``n_steps < 1`` or ``substeps < 1``
    IntegrationBlowupError
        Propagated from the step
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    z0 = np.asarray(z0, dtype=np.float64).reshape(1, -1)
    if z0.shape[1] != system.dim:
        raise ValueError(f"z0 has length {z0.shape[1]}, system dimension is {system.dim}")
    noise = stream.standard_normal((n_steps * substeps, system.dim))
    states, _ = integrate(system, z0, dt, n_steps, noise[None], substeps=substeps)
    return Trajectory(t0, dt, states[0])


def simulate_ensemble(
    system: SdeSystem,
    init_sampler: InitSampler,
    n_traj: int,
    dt: float,
    n_steps: int,
    seed: int,
    substeps: int = 1,
    on_blowup: str = "raise",
    block_size: int = 1024,
    t0: float = 0.0,
) -> Ensemble:
    """
    Simulate a seeded ensemble of independent paths.

    Trajectories are integrated in blocks of ``block_size`` for speed; each
    member still owns its sub-streams, so results do not depend on blocking.

    Parameters
    ----------
    system : SdeSystem
        Slow-fast or reduced system to simulate
    init_sampler : InitSampler
        Distribution of initial conditions
    n_traj : int
        Number of trajectories, at least 1
    dt, n_steps, substeps : see ``simulate_trajectory``
    seed : int
        64-bit ensemble seed
    on_blowup : {"raise", "drop"}
        ``"drop"`` discards diverged members with a warning

    Returns
    -------
    Ensemble

    Raises
    ------
    IntegrationBlowupError
        With the trajectory index attached, under ``on_blowup="raise"``
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    if on_blowup not in ("raise", "drop"):
        raise ValueError(f"on_blowup must be 'raise' or 'drop', got {on_blowup!r}")
    if init_sampler.dim != system.dim:
        raise ValueError(
            f"init sampler has {init_sampler.dim} coordinates, system needs {system.dim}"
        )

    logger.info(
        "Simulating %d trajectories of %s: dt=%g, n_steps=%d, substeps=%d, seed=%d",
        n_traj, getattr(system, "name", "system"), dt, n_steps, substeps, seed,
    )
    n_inner = n_steps * substeps
    states = np.empty((n_traj, n_steps + 1, system.dim))
    diverged = np.zeros(n_traj, dtype=bool)

    for start in range(0, n_traj, block_size):
        stop = min(start + block_size, n_traj)
        z0 = np.stack([init_sampler.sample(substream(seed, i, 0)) for i in range(start, stop)])
        noise = np.stack(
            [substream(seed, i, 1).standard_normal((n_inner, system.dim)) for i in range(start, stop)]
        )
        try:
            block, block_diverged = integrate(
                system, z0, dt, n_steps, noise, substeps=substeps, on_blowup=on_blowup
            )
        except IntegrationBlowupError as e:
            local = e.trajectory_index if e.trajectory_index is not None else 0
            raise e.with_trajectory(start + local) from e
        states[start:stop] = block
        diverged[start:stop] = block_diverged

    dropped = tuple(int(i) for i in np.flatnonzero(diverged))
    if dropped:
        if len(dropped) == n_traj:
            raise IntegrationBlowupError(
                "Every trajectory diverged", trajectory_index=dropped[0]
            )
        warnings.warn(
            f"Dropped {len(dropped)} of {n_traj} diverged trajectories "
            f"(first indices: {list(dropped[:5])}).",
            UserWarning,
            stacklevel=2,
        )
        states = states[~diverged]

    return Ensemble(states, t0, dt, int(seed), getattr(system, "slow_dim", system.dim), dropped)


def coarse_grain(ensemble: Ensemble, stride: int) -> Ensemble:
    """
    Keep every ``stride``-th time row and scale ``dt`` accordingly.

    Raises
    ------
    ValueError
        If ``stride < 1`` or ``stride`` does not divide ``n_steps``
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if ensemble.n_steps % stride != 0:
        raise ValueError(
            f"stride {stride} does not divide n_steps {ensemble.n_steps}"
        )
    return Ensemble(
        ensemble.states[:, ::stride],
        ensemble.t0,
        ensemble.dt * stride,
        ensemble.seed,
        ensemble.slow_dim,
        ensemble.dropped,
    )


def snapshot_at(ensemble: Ensemble, time_index: int) -> Snapshot:
    """
    Return the ensemble states at ``time_index``, trajectory order preserved.

    Raises
    ------
    IndexError
        If ``time_index`` is outside ``[0, n_steps]``
    """
    if not 0 <= time_index <= ensemble.n_steps:
        raise IndexError(
            f"time_index {time_index} outside [0, {ensemble.n_steps}]"
        )
    return Snapshot(int(time_index), ensemble.states[:, time_index].copy())


# ---------------------------------------------------------------------------
# Built-in benchmark systems
# ---------------------------------------------------------------------------


def _parabolic_f(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return x * (1.0 - y)


def _parabolic_g(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return -(y - 0.25 * x**2)


def parabolic_system(
    sigma_slow: float = 1.0, sigma_fast: float = 0.1, epsilon: float = 0.01
) -> SlowFastSystem:
    """
    Two-dimensional benchmark ``dx = (x - xy) dt + s1 dW``,
    ``dy = -(y - x^2/4)/eps dt + s2/sqrt(eps) dW``.

    Its slow manifold is the parabola ``y = x^2 / 4``.
    """
    return SlowFastSystem(
        1, 1, epsilon, _parabolic_f, _parabolic_g, [sigma_slow], [sigma_fast], name="parabolic2d"
    )


def parabolic_manifold(x: np.ndarray) -> np.ndarray:
    """Analytic slow manifold of ``parabolic_system``: ``h(x) = x^2 / 4``."""
    x = np.asarray(x, dtype=np.float64)
    return 0.25 * x**2


def _saddle_f(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x1, x2, yy = x[..., 0], x[..., 1], y[..., 0]
    return np.stack([x1 + yy - 0.5 * x1 * x2, x2 + yy**2 - x1**2], axis=-1)


def _saddle_g(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return -(y + 0.125 * x[..., :1] * x[..., 1:2])


def saddle_system(
    sigma_slow: Sequence[float] = (1.0, 2.0),
    sigma_fast: float = 0.1,
    epsilon: float = 0.001,
) -> SlowFastSystem:
    """
    Three-dimensional benchmark with slow ``(x1, x2)`` and fast ``y``:
    ``dx1 = (x1 + y - x1 x2 / 2) dt``, ``dx2 = (x2 + y^2 - x1^2) dt``,
    ``dy = -(y + x1 x2 / 8)/eps dt``, all with additive noise.

    Its slow manifold is the saddle ``y = -x1 x2 / 8``.
    """
    return SlowFastSystem(
        2, 1, epsilon, _saddle_f, _saddle_g, list(sigma_slow), [sigma_fast], name="saddle3d"
    )


def saddle_manifold(x: np.ndarray) -> np.ndarray:
    """Analytic slow manifold of ``saddle_system``: ``h(x1, x2) = -x1 x2 / 8``."""
    x = np.asarray(x, dtype=np.float64)
    return -0.125 * x[..., :1] * x[..., 1:2]


@dataclass(frozen=True)
class PolynomialDrift:
    """
    Polynomial vector field over the full state ``z = (x, y)``.

    ``terms`` holds one ``(coefficient, exponents)`` list per output
    coordinate; ``exponents`` has one entry per state coordinate.
    """

    slow_dim: int
    terms: Tuple[Tuple[Tuple[float, Tuple[int, ...]], ...], ...]

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        z = np.concatenate([np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)], axis=-1)
        outputs = []
        for coordinate_terms in self.terms:
            value = np.zeros(z.shape[:-1])
            for coefficient, exponents in coordinate_terms:
                value = value + coefficient * np.prod(z ** np.asarray(exponents), axis=-1)
            outputs.append(value)
        return np.stack(outputs, axis=-1)


def polynomial_system(
    slow_dim: int,
    fast_dim: int,
    epsilon: float,
    drift_slow: Sequence[Sequence[Tuple[float, Sequence[int]]]],
    drift_fast: Sequence[Sequence[Tuple[float, Sequence[int]]]],
    sigma_slow: Sequence[float],
    sigma_fast: Sequence[float],
    name: str = "polynomial",
) -> SlowFastSystem:
    """Build a system whose f and g are given as lists of monomial terms."""

    def freeze(spec: Sequence[Sequence[Tuple[float, Sequence[int]]]]) -> Tuple:
        frozen = []
        for coordinate_terms in spec:
            entries = []
            for coefficient, exponents in coordinate_terms:
                exponents = tuple(int(e) for e in exponents)
                if len(exponents) != slow_dim + fast_dim:
                    raise ValueError(
                        f"exponent vector {exponents} must have {slow_dim + fast_dim} entries"
                    )
                entries.append((float(coefficient), exponents))
            frozen.append(tuple(entries))
        return tuple(frozen)

    return SlowFastSystem(
        slow_dim,
        fast_dim,
        epsilon,
        PolynomialDrift(slow_dim, freeze(drift_slow)),
        PolynomialDrift(slow_dim, freeze(drift_fast)),
        list(sigma_slow),
        list(sigma_fast),
        name=name,
    )


BUILTIN_SYSTEMS: Dict[str, Callable[..., SlowFastSystem]] = {
    "parabolic2d": parabolic_system,
    "saddle3d": saddle_system,
}


def stability_matrix(
    system: SlowFastSystem, x: Sequence[float], h: Callable[[np.ndarray], np.ndarray], step: float = 1e-6
) -> np.ndarray:
    """
    ``A(x) = d g / d y`` at ``(x, h(x))`` by central differences.

    The slow manifold attracts where every eigenvalue of ``A`` has a strictly
    negative real part.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(h(x), dtype=np.float64).reshape(system.fast_dim)
    jac = np.empty((system.fast_dim, system.fast_dim))
    for j in range(system.fast_dim):
        e = np.zeros(system.fast_dim)
        e[j] = step
        jac[:, j] = (
            np.asarray(system.drift_fast(x, y + e)) - np.asarray(system.drift_fast(x, y - e))
        ) / (2 * step)
    return jac
