"""Monte Carlo means ``V(t, x) = E[u(t, x) F_t]`` and weak-form pairings."""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .characteristics import (
    BatchTransport,
    default_lattice,
    exited_count,
    solve_forward,
    transport_solution,
)
from .errors import GridMismatch, InsufficientSamples, InvalidTestFunction
from .field import ScalarField, VectorField
from .grid import SpaceTimeGrid
from .noise import (
    BrownianPath,
    ControlFunction,
    RunningMoments,
    exponential_weights,
    sample_increments,
)

MIN_PATHS = 100


@dataclass(frozen=True, eq=False)
class MeanField:
    """``V(t_k, x)`` on a grid at the stored steps, with optional standard errors.

    ``values`` has shape ``(len(steps), *grid.shape)``.
    """

    grid: SpaceTimeGrid
    steps: np.ndarray
    values: np.ndarray
    stderr: np.ndarray | None = None
    M: int = 0
    provenance: str = "monte-carlo"
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times[self.steps]

    def at_step(self, k: int) -> np.ndarray:
        i = int(np.searchsorted(self.steps, k))
        if i >= len(self.steps) or self.steps[i] != k:
            raise KeyError(f"step {k} not stored")
        return self.values[i]

    def restrict(self, steps: Sequence[int]) -> MeanField:
        idx = [int(np.searchsorted(self.steps, k)) for k in steps]
        if any(i >= len(self.steps) or self.steps[i] != k for i, k in zip(idx, steps)):
            raise KeyError("requested steps are not all stored")
        se = None if self.stderr is None else self.stderr[idx]
        return MeanField(self.grid, np.asarray(steps, int), self.values[idx], se, self.M, self.provenance,
                         self.label, dict(self.meta))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2_norms(self) -> np.ndarray:
        return np.sqrt(self.grid.integrate(self.values ** 2))

    def h1_seminorms(self) -> np.ndarray:
        """Discrete ``(int |grad V|^2)^{1/2}`` per stored step (centred differences)."""
        return np.sqrt(self.grid.integrate(grad_squared(self.values, self.grid)))

    def summary(self) -> dict:
        return {
            "label": self.label,
            "provenance": self.provenance,
            "paths": self.M,
            "times": self.times.tolist(),
            "sup": self.sup_norm(),
            "l2": self.l2_norms().tolist(),
            "h1_seminorm": self.h1_seminorms().tolist(),
            "max_stderr": None if self.stderr is None else float(np.max(self.stderr)),
        }

    def write_csv(self, path: str | Path) -> None:
        """Rows ``t, x[, y], V, stderr`` in step-major, C order."""
        g = self.grid
        pts = g.points
        cols = ["t", "x"] if g.d == 1 else ["t", "x", "y"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols + ["V", "stderr"])
            for s, t in enumerate(self.times):
                vals = self.values[s].reshape(-1)
                se = np.zeros_like(vals) if self.stderr is None else self.stderr[s].reshape(-1)
                for i in range(vals.size):
                    w.writerow([_fmt(t)] + [_fmt(c) for c in pts[i]] + [_fmt(vals[i]), _fmt(se[i])])

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    return repr(float(v))


def grad_squared(values: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """``|grad V|^2`` by centred differences (one-sided at the boundary)."""
    axes = tuple(range(values.ndim - grid.d, values.ndim))
    g = np.gradient(values, grid.dx, axis=axes)
    if grid.d == 1:
        return g ** 2
    return sum(gi ** 2 for gi in g)


# ---------------------------------------------------------------------------
# Monte Carlo estimators


@dataclass(frozen=True)
class MeanProblem:
    """One ``(b, u0)`` pair to transport."""

    b: VectorField
    u0: ScalarField
    label: str = ""


def _check_paths(M: int):
    if M < MIN_PATHS:
        raise InsufficientSamples(f"M={M} < {MIN_PATHS} paths")


def _check_control(h: ControlFunction, grid: SpaceTimeGrid):
    if h.K != grid.K or not math.isclose(h.T, grid.T) or h.d != grid.d:
        raise GridMismatch(f"control (K={h.K}, T={h.T}) does not match grid (K={grid.K}, T={grid.T})")


@dataclass(frozen=True, eq=False)
class MeanFieldBatch:
    """Outputs of :func:`estimate_means`: ``fields[(i, j)]`` is problem ``i`` under control ``j``;
    ``differences[(i, i2, j)]`` estimates ``V_i - V_i2`` from per-path differences.
    """

    fields: dict
    differences: dict
    exited: int
    F_mean: dict


def estimate_means(problems: Sequence[MeanProblem], controls: Sequence[ControlFunction], grid: SpaceTimeGrid,
                   M: int, seed: int, steps: Sequence[int] | None = None,
                   differences: Sequence[tuple[int, int]] = (), weight: str = "running",
                   chunk: int = 2000, lattice_spacing: float | None = None) -> MeanFieldBatch:
    """Estimate ``V = E[u F]`` for every problem and control on common paths.

    Paths are drawn in chunks of ``chunk`` consecutive indices and the chunk
    moments are merged in index order, so results do not depend on how
    work is split. ``weight`` selects ``F_{t_k}`` ("running") or ``F_T``
    ("terminal").
    """
    _check_paths(M)
    if grid.d != 1:
        return _estimate_means_loop(problems, controls, grid, M, seed, steps, differences, weight)
    for h in controls:
        _check_control(h, grid)
    steps = grid.snapshot_indices(8) if steps is None else np.asarray(steps, int)
    runners = []
    for p in problems:
        lat = default_lattice(p.b, p.u0, grid.L, lattice_spacing)
        runners.append(BatchTransport(p.b, p.u0, lat, grid.x, steps, grid.dt))
    acc = {(i, j): RunningMoments() for i in range(len(problems)) for j in range(len(controls))}
    dacc = {(a, b, j): RunningMoments() for a, b in differences for j in range(len(controls))}
    Facc = {j: RunningMoments() for j in range(len(controls))}
    exited = 0
    for start in range(0, M, chunk):
        m = min(chunk, M - start)
        inc = sample_increments(seed, m, grid.K, grid.T, 1, start)
        weights = []
        for j, h in enumerate(controls):
            F = exponential_weights(h, inc, grid.T)
            Fw = F[:, steps] if weight == "running" else np.repeat(F[:, -1:], steps.size, axis=1)
            weights.append(Fw)
            Facc[j].update(Fw)
        us = []
        for runner in runners:
            u, status = runner.run(inc)
            runner.raise_on(status)
            exited += exited_count(status)
            us.append(u)
        for (i, j), a in acc.items():
            a.update(us[i] * weights[j][:, :, None])
        for (a_, b_, j), a in dacc.items():
            a.update((us[a_] - us[b_]) * weights[j][:, :, None])
    fields = {}
    for (i, j), a in acc.items():
        fields[(i, j)] = MeanField(grid, steps, a.mean, a.stderr, a.n, "monte-carlo",
                                   f"{problems[i].label or problems[i].b.name}|h={controls[j].label}")
    diffs = {key: MeanField(grid, steps, a.mean, a.stderr, a.n, "monte-carlo", f"diff{key}")
             for key, a in dacc.items()}
    F_mean = {j: (a.mean, a.stderr) for j, a in Facc.items()}
    return MeanFieldBatch(fields, diffs, exited, F_mean)


def _estimate_means_loop(problems, controls, grid, M, seed, steps, differences, weight):
    """Per-path fallback for d = 2 (barycentric inverse flows)."""
    steps = grid.snapshot_indices(4) if steps is None else np.asarray(steps, int)
    acc = {(i, j): RunningMoments() for i in range(len(problems)) for j in range(len(controls))}
    dacc = {(a, b, j): RunningMoments() for a, b in differences for j in range(len(controls))}
    Facc = {j: RunningMoments() for j in range(len(controls))}
    lattices = [grid.points[np.all(np.abs(grid.points) <= grid.L * 0.75, axis=1)] for _ in problems]
    for idx in range(M):
        inc = sample_increments(seed, 1, grid.K, grid.T, grid.d, idx)
        path = BrownianPath(inc[0], grid.T, seed, idx)
        us = []
        for p, lat in zip(problems, lattices):
            flow = solve_forward(p.b, path, lat)
            us.append(transport_solution(p.u0, flow, grid.points, steps).values.reshape((1, len(steps)) + grid.shape))
        for j, h in enumerate(controls):
            F = exponential_weights(h, inc, grid.T)
            Fw = F[:, steps] if weight == "running" else np.repeat(F[:, -1:], len(steps), axis=1)
            Facc[j].update(Fw)
            wb = Fw.reshape(Fw.shape + (1,) * grid.d)
            for i in range(len(problems)):
                acc[(i, j)].update(us[i] * wb)
            for a_, b_ in differences:
                dacc[(a_, b_, j)].update((us[a_] - us[b_]) * wb)
    fields = {key: MeanField(grid, steps, a.mean, a.stderr, a.n, "monte-carlo") for key, a in acc.items()}
    diffs = {key: MeanField(grid, steps, a.mean, a.stderr, a.n, "monte-carlo") for key, a in dacc.items()}
    return MeanFieldBatch(fields, diffs, 0, {j: (a.mean, a.stderr) for j, a in Facc.items()})


def estimate_V(b: VectorField, u0: ScalarField, h: ControlFunction, grid: SpaceTimeGrid, M: int, seed: int,
               steps: Sequence[int] | None = None, weight: str = "running", chunk: int = 2000) -> MeanField:
    """Monte Carlo ``V(t_k, x_i) = E[u(t_k, x_i) F]`` with pointwise standard errors.

    The same path drives the flow and the exponential weight.
    """
    out = estimate_means([MeanProblem(b, u0)], [h], grid, M, seed, steps, weight=weight, chunk=chunk)
    return out.fields[(0, 0)]


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """Smooth bump ``exp(1 - 1/(1 - z^2))`` with ``z = (x - center)/width`` (1-d)."""

    center: float
    width: float

    __test__ = False  # not a pytest class

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.width, self.center + self.width

    def _parts(self, x):
        z = (np.asarray(x, float) - self.center) / self.width
        s = z * z
        inside = s < 1.0
        f = np.zeros_like(z)
        gp = np.zeros_like(z)
        gpp = np.zeros_like(z)
        si = s[inside]
        f[inside] = np.exp(1.0 - 1.0 / (1.0 - si))
        gp[inside] = -1.0 / (1.0 - si) ** 2
        gpp[inside] = -2.0 / (1.0 - si) ** 3
        return z, f, gp, gpp

    def __call__(self, x) -> np.ndarray:
        return self._parts(x)[1]

    def grad(self, x) -> np.ndarray:
        z, f, gp, _ = self._parts(x)
        return f * gp * 2 * z / self.width

    def laplacian(self, x) -> np.ndarray:
        z, f, gp, gpp = self._parts(x)
        return f * ((gp * 2 * z) ** 2 + gpp * 4 * z * z + 2 * gp) / self.width ** 2


def probe_functions() -> list[TestFunction]:
    """The fixed probe set used by the weak-form checks."""
    return [TestFunction(-0.6, 0.4), TestFunction(-0.25, 0.5), TestFunction(0.0, 0.6),
            TestFunction(0.3, 0.35), TestFunction(0.7, 0.45)]


def _check_phi(phi: TestFunction, x: np.ndarray):
    lo, hi = phi.support
    if lo <= x[0] or hi >= x[-1]:
        raise InvalidTestFunction(f"support [{lo:g}, {hi:g}] of the test function leaves [{x[0]:g}, {x[-1]:g}]")


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.empty_like(x)
    dx = np.diff(x)
    w[0], w[-1] = dx[0] / 2, dx[-1] / 2
    w[1:-1] = (dx[:-1] + dx[1:]) / 2
    return w


def weak_pairing(sample, phi: TestFunction) -> np.ndarray:
    """``int u(t_k, x) phi(x) dx`` at every stored step (trapezoid on the sample grid)."""
    x = np.asarray(sample.x, float)
    _check_phi(phi, x)
    return sample.values @ (phi(x) * trapezoid_weights(x))


@dataclass(frozen=True)
class PairingWeights:
    """Quadrature rows giving every term of the Ito weak form on a grid."""

    value: np.ndarray
    drift: np.ndarray
    noise: np.ndarray
    laplace: np.ndarray

    @classmethod
    def build(cls, phi: TestFunction, b: VectorField, x: np.ndarray) -> PairingWeights:
        _check_phi(phi, x)
        w = trapezoid_weights(x)
        bx = b.evaluate(0.0, x)[:, 0]
        divb = b.div(0.0, x)
        return cls(phi(x) * w, (bx * phi.grad(x) + phi(x) * divb) * w, phi.grad(x) * w, phi.laplacian(x) * w)


def residual_from_values(u: np.ndarray, dB: np.ndarray, dt: float, pw: PairingWeights,
                         drop_laplacian: bool = False) -> np.ndarray:
    """Residual series from ``u`` at every step ``(..., K + 1, N)`` and increments ``(..., K)``.

    ``R_k = (u_k, phi) - (u_0, phi) - sum_{j<k} [(u_j, b.grad phi + phi div b) dt
    + (u_j, grad phi) dB_j + 1/2 (u_j, lap phi) dt]``.
    """
    P = u @ pw.value
    A = u[..., :-1, :] @ pw.drift
    G = u[..., :-1, :] @ pw.noise
    D = u[..., :-1, :] @ pw.laplace
    incr = A * dt + G * dB
    if not drop_laplacian:
        incr = incr + 0.5 * D * dt
    R = P - P[..., :1]
    R[..., 1:] -= np.cumsum(incr, axis=-1)
    return R


def weak_residual(sample, path: BrownianPath, b: VectorField, phi: TestFunction,
                  drop_laplacian: bool = False) -> np.ndarray:
    """Discrete Ito weak-form residual ``R(t_k)`` for one transported sample (all steps stored)."""
    if len(sample.steps) != path.K + 1:
        raise GridMismatch("weak_residual needs the sample at every step")
    pw = PairingWeights.build(phi, b, np.asarray(sample.x, float))
    return residual_from_values(sample.values, path.increments[:, 0], path.dt, pw, drop_laplacian)


def pairing_grid(phis: Sequence[TestFunction], spacing: float) -> np.ndarray:
    lo = min(p.support[0] for p in phis) - 2 * spacing
    hi = max(p.support[1] for p in phis) + 2 * spacing
    n = int(math.ceil((hi - lo) / spacing)) + 1
    return np.linspace(lo, hi, n)


def weak_residual_rms(b: VectorField, u0: ScalarField, phis: Sequence[TestFunction], K: int, T: float,
                      M: int, seed: int, x: np.ndarray | None = None, fine_K: int | None = None,
                      drop_laplacian: bool = False, chunk: int = 10) -> dict:
    """RMS over ``M`` paths of ``max_k |R_k|`` per test function.

    ``rms_pooled`` pools paths and test functions into one RMS.

    With ``fine_K`` set, increments are drawn on ``fine_K`` steps and summed
    down to ``K``, so runs at different ``K`` share the same Brownian paths.
    """
    fine_K = fine_K or K
    if fine_K % K:
        raise ValueError("fine_K must be a multiple of K")
    x = pairing_grid(phis, 0.005) if x is None else x
    dt = T / K
    lat = default_lattice(b, u0, b.L)
    runner = BatchTransport(b, u0, lat, x, np.arange(K + 1), dt)
    weights = [PairingWeights.build(p, b, x) for p in phis]
    sq = np.zeros(len(phis))
    for start in range(0, M, chunk):
        m = min(chunk, M - start)
        inc = sample_increments(seed, m, fine_K, T, 1, start)[..., 0]
        dB = inc.reshape(m, K, fine_K // K).sum(axis=-1)
        u, status = runner.run(dB)
        runner.raise_on(status)
        for i, pw in enumerate(weights):
            R = residual_from_values(u, dB, dt, pw, drop_laplacian)
            sq[i] += np.sum(np.max(np.abs(R), axis=-1) ** 2)
    rms = np.sqrt(sq / M)
    return {"K": K, "rms": rms.tolist(), "rms_max": float(np.max(rms)),
            "rms_pooled": float(np.sqrt(np.mean(sq) / M))}
