"""Trace-class Wiener noise for the interior and boundary channels.

Both channels are sampled by eigen-expansion.  The interior channel W1
uses the sine basis e_i(x) = sqrt(2) sin(i pi x) with eigenvalues
lambda_i = c * i^(-gamma); the boundary channel W2 uses the canonical
R^2 basis with an explicit eigenvalue pair (the trace of any basis that
vanishes on the boundary degenerates, so the boundary noise is an
independent two-component Wiener process).

Reproducibility contract: every mode increment is a pure function of
(seed, replica_id, tag, mode index, master-step index).  Normals are
produced by a Philox generator keyed on (seed, tag, master step); the
words of that stream are laid out replica-major, so replica r always
reads words [r*M, (r+1)*M) regardless of how many replicas run, in what
order, or on which thread.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .geometry import Grid1D

_TAG_IDS = {"W1": 1, "W2": 2}


class StepReuseError(RuntimeError):
    """Raised when a stream is asked to reuse a master step with a new dt."""


@dataclass(frozen=True)
class CovarianceSpec:
    """Truncated covariance of one noise channel.

    kind 'interior': eigenvalues c * i^(-gamma), i = 1..num_modes, with
    gamma > 1 so the partial trace stays bounded as the truncation grows.
    kind 'boundary': the explicit nonnegative pair (lambda_left,
    lambda_right); num_modes == 2.
    """

    kind: str
    num_modes: int
    c: float = 0.0
    gamma: float = 2.0
    lambda_left: float = 0.0
    lambda_right: float = 0.0

    def __post_init__(self):
        if self.kind not in ("interior", "boundary"):
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.num_modes < 1:
            raise ValueError("num_modes must be >= 1")
        if self.kind == "interior":
            if self.c < 0:
                raise ValueError("eigenvalue scale c must be >= 0")
            if self.gamma <= 1:
                raise ValueError("gamma must exceed 1 for a trace-class covariance")
        else:
            if self.num_modes != 2:
                raise ValueError("boundary covariance has exactly 2 modes")
            if self.lambda_left < 0 or self.lambda_right < 0:
                raise ValueError("boundary eigenvalues must be >= 0")

    @classmethod
    def interior(cls, c: float = 1.0, gamma: float = 2.0, num_modes: int = 50) -> "CovarianceSpec":
        return cls(kind="interior", num_modes=num_modes, c=c, gamma=gamma)

    @classmethod
    def boundary(cls, lambda_left: float = 0.5, lambda_right: float = 0.5) -> "CovarianceSpec":
        return cls(kind="boundary", num_modes=2,
                   lambda_left=lambda_left, lambda_right=lambda_right)

    def eigenvalues(self) -> np.ndarray:
        if self.kind == "interior":
            i = np.arange(1, self.num_modes + 1, dtype=float)
            return self.c * i ** (-self.gamma)
        return np.array([self.lambda_left, self.lambda_right])


def trace_of(spec: CovarianceSpec) -> float:
    """Partial trace of the covariance over the truncation."""
    return float(np.sum(spec.eigenvalues()))


def _philox_key(seed: int, tag: str, master_step: int) -> np.ndarray:
    w0 = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    w1 = np.uint64((_TAG_IDS[tag] << 56) | master_step)
    return np.array([w0, w1], dtype=np.uint64)


def keyed_normals(seed: int, tag: str, master_step: int, count: int) -> np.ndarray:
    """Standard normals for one (seed, tag, master step), replica-major.

    Word j of the underlying counter stream maps to normal j through the
    inverse normal CDF, so element j never depends on how many elements
    are requested.
    """
    if master_step < 0 or master_step >= 1 << 56:
        raise ValueError(f"master_step {master_step} out of range")
    raw = np.random.Philox(key=_philox_key(seed, tag, master_step)).random_raw(count)
    u = (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53 + 2.0 ** -54
    return ndtri(u)


@dataclass
class NoiseStream:
    """Handle on the mode normals of one replica and one channel.

    The stream locks onto the master-grid dt at first use; reusing a
    master step with a different dt is a contract violation (the keyed
    increments would silently change meaning).
    """

    seed: int
    replica_id: int
    tag: str
    _dt: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.tag not in _TAG_IDS:
            raise ValueError(f"tag must be one of {sorted(_TAG_IDS)}, got {self.tag!r}")
        if self.replica_id < 0:
            raise ValueError("replica_id must be >= 0")

    def _lock_dt(self, dt: float) -> None:
        if dt <= 0:
            raise ValueError("dt must be positive")
        if self._dt is None:
            self._dt = dt
        elif self._dt != dt:
            raise StepReuseError(
                f"stream already keyed with dt={self._dt}, refusing dt={dt}"
            )

    def normals(self, num_modes: int, master_step: int) -> np.ndarray:
        """Mode normals for this replica at one master step, shape (M,)."""
        block = keyed_normals(self.seed, self.tag, master_step,
                              (self.replica_id + 1) * num_modes)
        return block[self.replica_id * num_modes:]


@dataclass
class NoiseBatch:
    """Contiguous replicas [0, n_replicas) of one channel, vectorized."""

    seed: int
    n_replicas: int
    tag: str
    _dt: float | None = field(default=None, repr=False)

    def _lock_dt(self, dt: float) -> None:
        if dt <= 0:
            raise ValueError("dt must be positive")
        if self._dt is None:
            self._dt = dt
        elif self._dt != dt:
            raise StepReuseError(
                f"stream already keyed with dt={self._dt}, refusing dt={dt}"
            )

    def normals(self, num_modes: int, master_step: int) -> np.ndarray:
        """Mode normals for all replicas, shape (n_replicas, M)."""
        block = keyed_normals(self.seed, self.tag, master_step,
                              self.n_replicas * num_modes)
        return block.reshape(self.n_replicas, num_modes)


@dataclass
class WienerIncrement:
    """Channel increments over one master step of length dt.

    Mode amplitudes have variance lambda_i * dt; fields are the sampled
    eigen-expansions on the grid.  Either channel may be absent when
    only one stream produced the increment.
    """

    dt: float
    dW1: np.ndarray | None = None
    dW2: np.ndarray | None = None
    modes1: np.ndarray | None = None
    modes2: np.ndarray | None = None


def sine_basis(grid: Grid1D, num_modes: int) -> np.ndarray:
    """Basis matrix E[i, j] = sqrt(2) sin((i+1) pi x_j), shape (M, n).

    Discretely orthonormal under the h-weighted inner product for
    num_modes <= n_interior.
    """
    i = np.arange(1, num_modes + 1)[:, None]
    return np.sqrt(2.0) * np.sin(i * np.pi * grid.x[None, :])


def _mode_increments(stream, spec: CovarianceSpec, master_step: int, dt: float) -> np.ndarray:
    stream._lock_dt(dt)
    xi = stream.normals(spec.num_modes, master_step)
    return np.sqrt(spec.eigenvalues() * dt) * xi


def sample_increment(stream, spec: CovarianceSpec, master_step: int, dt: float,
                     grid: Grid1D) -> WienerIncrement:
    """Keyed Wiener increment over [step*dt, (step+1)*dt) for one channel.

    Repeated calls with identical keys are bit-identical.  The interior
    field is the sine expansion sampled on the grid; the boundary field
    is the raw two-mode amplitude pair.
    """
    expected = "W1" if spec.kind == "interior" else "W2"
    if stream.tag != expected:
        raise ValueError(f"spec kind {spec.kind!r} requires stream tag {expected!r}")
    modes = _mode_increments(stream, spec, master_step, dt)
    if spec.kind == "interior":
        return WienerIncrement(dt=dt, dW1=modes @ sine_basis(grid, spec.num_modes),
                               modes1=modes)
    return WienerIncrement(dt=dt, dW2=modes, modes2=modes)


def ou_scale(eps: float, alpha: float, dt: float) -> float:
    """Per-step factor turning a plain increment into the exact OU kick.

    The stochastic convolution of x' = -x/eps + eps^(alpha-1) * dW over
    one step has per-mode variance eps^(2 alpha - 1) * lambda_i *
    (1 - exp(-2 dt/eps)) / 2; dividing by the increment's lambda_i * dt
    gives a mode-independent rescaling, so the kick uses the same keyed
    normals as the plain increment.
    """
    return float(np.sqrt(eps ** (2.0 * alpha - 1.0) * (-np.expm1(-2.0 * dt / eps)) / (2.0 * dt)))


def ou_update(x: np.ndarray, eps: float, alpha: float, spec: CovarianceSpec,
              stream, master_step: int, dt: float, grid: Grid1D) -> np.ndarray:
    """Exact one-step transition of the damped noise channel.

    x' = exp(-dt/eps) x + eta with eta the exact Gaussian convolution,
    realized as ou_scale * (keyed increment) so splitting recombination
    and cross-system coupling share one noise path.
    """
    if eps <= 0 or dt <= 0:
        raise ValueError("eps and dt must be positive")
    inc = sample_increment(stream, spec, master_step, dt, grid)
    fld = inc.dW1 if spec.kind == "interior" else inc.dW2
    return np.exp(-dt / eps) * np.asarray(x, dtype=float) + ou_scale(eps, alpha, dt) * fld


@dataclass
class NoisePair:
    """Both channels for one run (single replica or a replica batch).

    Wraps two streams plus their covariance specs and caches the basis
    synthesis; steppers pull plain increments and OU kicks through one
    object so every consumer sees the same keyed path.
    """

    spec1: CovarianceSpec
    spec2: CovarianceSpec
    stream1: object
    stream2: object
    grid: Grid1D

    def __post_init__(self):
        self._basis = sine_basis(self.grid, self.spec1.num_modes)

    @classmethod
    def for_replica(cls, seed: int, replica_id: int, spec1: CovarianceSpec,
                    spec2: CovarianceSpec, grid: Grid1D) -> "NoisePair":
        return cls(spec1, spec2, NoiseStream(seed, replica_id, "W1"),
                   NoiseStream(seed, replica_id, "W2"), grid)

    @classmethod
    def for_batch(cls, seed: int, n_replicas: int, spec1: CovarianceSpec,
                  spec2: CovarianceSpec, grid: Grid1D) -> "NoisePair":
        return cls(spec1, spec2, NoiseBatch(seed, n_replicas, "W1"),
                   NoiseBatch(seed, n_replicas, "W2"), grid)

    def increment(self, master_step: int, dt: float) -> WienerIncrement:
        """Plain increments of both channels at one master step."""
        m1 = _mode_increments(self.stream1, self.spec1, master_step, dt)
        m2 = _mode_increments(self.stream2, self.spec2, master_step, dt)
        return WienerIncrement(dt=dt, dW1=m1 @ self._basis, dW2=m2,
                               modes1=m1, modes2=m2)


def zero_increment(grid: Grid1D, dt: float, batch_shape: tuple = ()) -> WienerIncrement:
    """Increment of an identically zero noise path (deterministic runs)."""
    n = grid.n_interior
    return WienerIncrement(dt=dt,
                           dW1=np.zeros(batch_shape + (n,)),
                           dW2=np.zeros(batch_shape + (2,)),
                           modes1=np.zeros(batch_shape + (1,)),
                           modes2=np.zeros(batch_shape + (2,)))
