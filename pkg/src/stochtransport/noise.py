"""Brownian paths, Ito sums and stochastic exponentials on a uniform grid.

Random streams
--------------
Path ``i`` under root seed ``s`` is drawn from
``numpy.random.SeedSequence(s, spawn_key=(i,))``, so any single path can be
regenerated on its own, independently of how paths are batched. Module-level
streams (one per experiment component) are derived with :func:`stream_seed`,
which hashes a text label into the spawn key.
"""

from __future__ import annotations

import zlib
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatch


def stream_seed(root_seed: int, label: str) -> int:
    """Derive a 64-bit seed for the stream named ``label``."""
    ss = np.random.SeedSequence(int(root_seed), spawn_key=(zlib.crc32(label.encode()),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def path_generator(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """One realisation of ``B`` on ``t_k = k T / K``; ``increments`` is ``(K, d)``."""

    increments: np.ndarray
    T: float
    seed: int | None = None
    index: int = 0

    @property
    def K(self) -> int:
        return self.increments.shape[0]

    @property
    def d(self) -> int:
        return self.increments.shape[1]

    @property
    def dt(self) -> float:
        return self.T / self.K

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.K + 1)

    @cached_property
    def values(self) -> np.ndarray:
        """``B_{t_k}`` for k = 0..K, shape ``(K + 1, d)``; ``B_0 = 0``."""
        out = np.zeros((self.K + 1, self.d))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    @classmethod
    def zero(cls, K: int, T: float, d: int = 1) -> BrownianPath:
        return cls(np.zeros((K, d)), T, seed=None)


def sample_path(seed: int, K: int, T: float, d: int = 1, index: int = 0) -> BrownianPath:
    """Draw path ``index`` of the stream rooted at ``seed``."""
    if K < 1 or not T > 0:
        raise ValueError("need K >= 1 and T > 0")
    z = path_generator(seed, index).standard_normal((K, d))
    return BrownianPath(z * np.sqrt(T / K), T, seed=int(seed), index=int(index))


def sample_increments(seed: int, M: int, K: int, T: float, d: int = 1, start: int = 0) -> np.ndarray:
    """Increments of paths ``start .. start + M - 1``, shape ``(M, K, d)``.

    Row ``m`` equals ``sample_path(seed, K, T, d, start + m).increments``.
    """
    if K < 1 or not T > 0:
        raise ValueError("need K >= 1 and T > 0")
    out = np.empty((M, K, d))
    scale = np.sqrt(T / K)
    for m in range(M):
        out[m] = path_generator(seed, start + m).standard_normal((K, d))
    out *= scale
    return out


def coarsen(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` increments along the time axis."""
    K = increments.shape[-2]
    if K % factor:
        raise ValueError(f"K={K} not divisible by {factor}")
    shape = increments.shape[:-2] + (K // factor, factor, increments.shape[-1])
    return increments.reshape(shape).sum(axis=-2)


# ---------------------------------------------------------------------------
# controls and exponentials


@dataclass(frozen=True, eq=False)
class ControlFunction:
    """Deterministic piecewise-constant ``h``; ``values[k]`` holds on ``[t_k, t_{k+1})``."""

    values: np.ndarray
    T: float
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "values", v)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return self.T / self.K

    @property
    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values ** 2) * self.dt))

    def cumulative(self) -> np.ndarray:
        """``H(t_k) = int_0^{t_k} h``, shape ``(K + 1, d)``."""
        out = np.zeros((self.K + 1, self.d))
        np.cumsum(self.values * self.dt, axis=0, out=out[1:])
        return out

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @classmethod
    def constant(cls, value, K: int, T: float, d: int = 1) -> ControlFunction:
        v = np.broadcast_to(np.atleast_1d(np.asarray(value, float)), (d,))
        return cls(np.tile(v, (K, 1)), T, label=f"const:{float(v[0]):g}")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]], K: int, T: float, d: int = 1,
                   label: str = "") -> ControlFunction:
        """Piecewise constant from ``(t_start, value)`` pairs sorted by time."""
        pairs = sorted((float(t), v) for t, v in pairs)
        t_left = np.arange(K) * (T / K)
        vals = np.zeros((K, d))
        for t0, v in pairs:
            vals[t_left >= t0 - 1e-12 * T] = np.broadcast_to(np.atleast_1d(np.asarray(v, float)), (d,))
        return cls(vals, T, label=label or ";".join(f"{t:g}:{np.atleast_1d(v)[0]:g}" for t, v in pairs))

    @classmethod
    def parse(cls, spec: str, K: int, T: float, d: int = 1) -> ControlFunction:
        """``"0"``, ``"1"``, ``"const:c"``, ``"switch"`` or ``"t0:v0;t1:v1"``.

        ``"switch"`` is +1 on ``[0, T/2)`` and -1 afterwards.
        """
        spec = spec.strip()
        if spec == "switch":
            return cls.from_pairs([(0.0, 1.0), (T / 2, -1.0)], K, T, d, label="switch")
        if spec.startswith("const:"):
            return cls.constant(float(spec[6:]), K, T, d)
        if ":" in spec:
            pairs = []
            for part in spec.split(";"):
                t0, v = part.split(":")
                pairs.append((float(t0), float(v)))
            return cls.from_pairs(pairs, K, T, d, label=spec)
        return cls.constant(float(spec), K, T, d)


def _check_grid(h: ControlFunction, K: int, T: float, d: int):
    if h.K != K or not np.isclose(h.T, T) or h.d != d:
        raise GridMismatch(f"control grid (K={h.K}, T={h.T}, d={h.d}) != path grid (K={K}, T={T}, d={d})")


@dataclass(frozen=True, eq=False)
class ExponentialSample:
    """``F_{t_k}`` along one path, shape ``(K + 1,)``; ``F_0 = 1``."""

    values: np.ndarray

    @property
    def terminal(self) -> float:
        return float(self.values[-1])


def log_exponential(h: ControlFunction, increments: np.ndarray) -> np.ndarray:
    """``log F_{t_k}`` for a batch ``(M, K, d)`` (or one path ``(K, d)``)."""
    inc = np.asarray(increments, float)
    dt = h.dt
    step = np.einsum("...kd,kd->...k", inc, h.values) - 0.5 * np.sum(h.values ** 2, axis=1) * dt
    out = np.zeros(inc.shape[:-2] + (inc.shape[-2] + 1,))
    np.cumsum(step, axis=-1, out=out[..., 1:])
    return out


def exponential_weights(h: ControlFunction, increments: np.ndarray, T: float) -> np.ndarray:
    inc = np.asarray(increments, float)
    _check_grid(h, inc.shape[-2], T, inc.shape[-1])
    return np.exp(log_exponential(h, inc))


def exponential_of(h: ControlFunction, path: BrownianPath) -> ExponentialSample:
    """``F_k = exp(sum_{j<k} h_j . dB_j - 1/2 sum_{j<k} |h_j|^2 dt)``."""
    _check_grid(h, path.K, path.T, path.d)
    return ExponentialSample(np.exp(log_exponential(h, path.increments)))


def exponential_sde_residuals(h: ControlFunction, increments: np.ndarray, T: float) -> np.ndarray:
    """``max_k |F_k - (1 + sum_{j<k} h_j F_j dB_j)|`` per path."""
    inc = np.asarray(increments, float)
    F = exponential_weights(h, inc, T)
    ito = np.einsum("...kd,kd->...k", inc, h.values) * F[..., :-1]
    rhs = np.ones_like(F)
    np.cumsum(ito, axis=-1, out=rhs[..., 1:])
    rhs[..., 1:] += 1.0
    return np.max(np.abs(F - rhs), axis=-1)


def verify_exponential_sde(h: ControlFunction, path: BrownianPath) -> float:
    _check_grid(h, path.K, path.T, path.d)
    return float(exponential_sde_residuals(h, path.increments, path.T))


def ito_integrals(Y: np.ndarray, increments: np.ndarray) -> np.ndarray:
    """``sum_k Y_k . dB_k`` for a batch; ``Y`` is ``(..., K)`` (d = 1) or ``(..., K, d)``."""
    inc = np.asarray(increments, float)
    Y = np.asarray(Y, float)
    if Y.ndim == inc.ndim - 1:
        Y = Y[..., None]
    if Y.shape[-2] != inc.shape[-2]:
        raise GridMismatch(f"process has {Y.shape[-2]} steps, path has {inc.shape[-2]}")
    return np.sum(Y * inc, axis=(-2, -1))


def ito_integral(Y: np.ndarray, path: BrownianPath) -> float:
    """Left-point Ito sum ``sum_k Y_k . dB_k``; ``Y_k`` must not look ahead."""
    return float(ito_integrals(Y, path.increments))


def check_adapted(process: Callable[[np.ndarray], np.ndarray], path: BrownianPath, rng: np.random.Generator,
                  trials: int = 8) -> bool:
    """Spot check that ``process(increments)[k]`` ignores increments ``>= k``.

    Increments from a random index on are shuffled and perturbed; the values
    up to that index must not change.
    """
    base = np.asarray(process(path.increments))
    for _ in range(trials):
        k = int(rng.integers(0, path.K))
        mod = path.increments.copy()
        tail = mod[k:]
        mod[k:] = rng.permutation(tail) + rng.standard_normal(tail.shape) * np.sqrt(path.dt)
        if not np.array_equal(np.asarray(process(mod))[: k + 1], base[: k + 1]):
            return False
    return True


# ---------------------------------------------------------------------------
# Monte Carlo helpers


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int

    def ci(self, k: float = 3.0) -> tuple[float, float]:
        return self.mean - k * self.stderr, self.mean + k * self.stderr

    def overlaps(self, other: Estimate, k: float = 3.0) -> bool:
        lo1, hi1 = self.ci(k)
        lo2, hi2 = other.ci(k)
        return lo1 <= hi2 and lo2 <= hi1

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n}


class RunningMoments:
    """Mean and variance over batches, merged in call order (Chan et al.)."""

    def __init__(self):
        self.n = 0
        self._mean = None
        self._m2 = None

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, float)
        nb = batch.shape[0]
        if nb == 0:
            return
        mb = batch.mean(axis=0)
        m2b = np.sum((batch - mb) ** 2, axis=0)
        if self._mean is None:
            self.n, self._mean, self._m2 = nb, mb, m2b
            return
        n = self.n + nb
        delta = mb - self._mean
        self._mean = self._mean + delta * (nb / n)
        self._m2 = self._m2 + m2b + delta ** 2 * (self.n * nb / n)
        self.n = n

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def var(self) -> np.ndarray:
        return self._m2 / max(self.n - 1, 1)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.var / max(self.n, 1))


def _chunks(M: int, chunk: int):
    for start in range(0, M, chunk):
        yield start, min(chunk, M - start)


@dataclass(frozen=True)
class BFReport:
    """Both sides of ``E[(int_0^t Y.dB) F] = int_0^t h(s) . E[Y_s F] ds``."""

    lhs: Estimate
    rhs: Estimate
    closed_form: float | None = None

    def agree(self, k: float = 3.0) -> bool:
        return self.lhs.overlaps(self.rhs, k)

    def as_dict(self) -> dict:
        return {"lhs": self.lhs.as_dict(), "rhs": self.rhs.as_dict(), "closed_form": self.closed_form}


def verify_bf_identity(process: Callable[[np.ndarray], np.ndarray], h: ControlFunction, seed: int, M: int,
                       t_index: int | None = None, chunk: int = 5000,
                       closed_form: float | None = None) -> BFReport:
    """Monte Carlo estimates of both sides of the Brownian/exponential identity.

    ``process`` maps a batch of increments ``(m, K, d)`` to an adapted process
    ``(m, K)`` or ``(m, K, d)``. Both sides share the same paths. ``F`` is the
    terminal exponential ``F_T``.
    """
    K, T, d = h.K, h.T, h.d
    n = K if t_index is None else t_index
    lhs, rhs = RunningMoments(), RunningMoments()
    for start, m in _chunks(M, chunk):
        inc = sample_increments(seed, m, K, T, d, start)
        F = exponential_weights(h, inc, T)[:, -1]
        Y = np.asarray(process(inc), float)
        if Y.ndim == 2:
            Y = Y[..., None]
        ito = np.sum(Y[:, :n] * inc[:, :n], axis=(1, 2))
        lhs.update(ito * F)
        rhs.update(np.einsum("mkd,kd->m", Y[:, :n], h.values[:n]) * h.dt * F)
    return BFReport(
        Estimate(float(lhs.mean), float(lhs.stderr), lhs.n),
        Estimate(float(rhs.mean), float(rhs.stderr), rhs.n),
        closed_form,
    )


def martingale_profile(h: ControlFunction, seed: int, M: int, chunk: int = 5000) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean and standard error of ``F_{t_k}`` at every grid time."""
    acc = RunningMoments()
    for start, m in _chunks(M, chunk):
        inc = sample_increments(seed, m, h.K, h.T, h.d, start)
        acc.update(exponential_weights(h, inc, h.T))
    return acc.mean, acc.stderr


def sde_residual_rms(make_h: Callable[[int], ControlFunction], seed: int, M: int,
                     K_levels: Sequence[int]) -> dict[int, float]:
    """RMS over ``M`` paths of the exponential-SDE residual at each ``K``.

    ``make_h(K)`` builds the control on a ``K``-step grid. Coarse levels reuse
    the finest paths (increments summed), so the levels are strongly coupled.
    """
    K_levels = sorted(K_levels)
    K_fine = K_levels[-1]
    h_fine = make_h(K_fine)
    inc = sample_increments(seed, M, K_fine, h_fine.T, h_fine.d)
    out = {}
    for K in K_levels:
        res = exponential_sde_residuals(make_h(K), coarsen(inc, K_fine // K), h_fine.T)
        out[K] = float(np.sqrt(np.mean(res ** 2)))
    return out
