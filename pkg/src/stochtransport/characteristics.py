"""Forward flows of ``dX = b(t, X) dt + dB`` and transport by inverse flow.

The noise is constant in space, so every lattice trajectory of one flow map
sees the same increments. The solution of the transport equation is read off
as ``u(t, x) = u0(phi_t^{-1}(x))``: in one dimension the inverse is the
piecewise-linear inverse of the monotone map ``x0 -> X_t(x0)``; in two
dimensions it is barycentric interpolation on the image of a triangulated
lattice.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import Delaunay, cKDTree

from . import _kernels
from .errors import GridMismatch, NonInvertibleFlow
from .field import ScalarField, VectorField
from .noise import BrownianPath

# neighbours closer than this fraction of their initial gap count as collided
MIN_STRETCH = 1e-8
DEFAULT_SPACING = 0.0125


def field_eps(fld) -> float | None:
    """Mollification width recorded on a mollified field, else None."""
    rho = fld.meta.get("mollifier") if fld.meta else None
    return None if rho is None else float(rho.eps)


def lattice_spacing(b: VectorField, u0: ScalarField | None = None, spacing: float | None = None) -> float:
    """Lattice spacing: ``eps / 8`` of the finest mollifier involved, capped at 0.0125."""
    if spacing is not None:
        return float(spacing)
    eps = [e for e in (field_eps(b), field_eps(u0) if u0 is not None else None) if e is not None]
    return min([DEFAULT_SPACING] + [e / 8 for e in eps])


def default_lattice(b: VectorField, u0: ScalarField, L: float, spacing: float | None = None) -> np.ndarray:
    """Uniform 1-d lattice covering the support of ``u0`` plus two cells.

    Data without a declared support get a lattice over the whole box.
    """
    h = lattice_spacing(b, u0, spacing)
    R = L if u0.support is None else min(L, u0.support + 2 * h)
    n = int(math.ceil(2 * R / h)) + 1
    return np.linspace(-R, R, n)


@dataclass(frozen=True)
class Table:
    """Uniform 1-d lookup table, clamped to its end values outside."""

    x0: float
    h: float
    values: np.ndarray

    @classmethod
    def of(cls, fld, spacing: float, pad: float = 1.0) -> Table:
        return cls(*fld.tabulate(spacing, pad))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        return _kernels.table_eval(self.x0, self.h, self.values, x.ravel()).reshape(x.shape)


def table_spacing(fld) -> float:
    eps = field_eps(fld)
    return 1e-3 if eps is None else min(1e-3, eps / 64)


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FlowMap:
    """Trajectories ``X_k(x0)`` for every lattice point, shape ``(K + 1, n, d)``.

    ``exited`` records whether any trajectory left the box ``[-L, L]^d``.
    Positions are not clamped: the drift is evaluated at the nearest box
    point, which is zero for every catalog drift.
    """

    times: np.ndarray
    lattice: np.ndarray
    trajectories: np.ndarray
    L: float
    drift: str = ""
    eps: float | None = None
    exited: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.lattice.shape[-1]

    @property
    def K(self) -> int:
        return self.times.shape[0] - 1

    def at(self, k: int) -> np.ndarray:
        return self.trajectories[k]


def _lattice_points(lattice, d) -> np.ndarray:
    lat = np.asarray(lattice, float)
    if d == 1 and lat.ndim == 1:
        lat = lat[:, None]
    if lat.ndim != 2 or lat.shape[1] != d:
        raise GridMismatch(f"lattice shape {lat.shape} does not match d={d}")
    return lat


def solve_forward(b: VectorField, path: BrownianPath, lattice, method: str = "auto") -> FlowMap:
    """Euler-Maruyama ``X_{k+1} = X_k + b(t_k, X_k) dt + dB_k`` from every lattice point.

    ``method="table"`` evaluates a 1-d autonomous drift through a fine lookup
    table in compiled code; ``"direct"`` calls ``b.evaluate`` at every step.
    ``"auto"`` picks the table when it applies.
    """
    if b.dim != path.d:
        raise GridMismatch(f"drift dimension {b.dim} != path dimension {path.d}")
    lat = _lattice_points(lattice, b.dim)
    if method == "auto":
        method = "table" if b.dim == 1 and b.autonomous else "direct"
    L = b.L
    if method == "table":
        tab = Table.of(b, table_spacing(b))
        X = _kernels.flow_single(np.ascontiguousarray(path.increments[:, 0]), path.dt, lat[:, 0],
                                 tab.x0, tab.h, tab.values)[..., None]
    elif method == "direct":
        X = np.empty((path.K + 1,) + lat.shape)
        X[0] = lat
        dt = path.dt
        for k in range(path.K):
            pos = np.clip(X[k], -L, L)
            X[k + 1] = X[k] + b.evaluate(path.times[k], pos) * dt + path.increments[k]
    else:
        raise ValueError(f"unknown method {method!r}")
    exited = bool(np.any(np.abs(X) > L))
    return FlowMap(path.times, lat, X, L, drift=b.name, eps=field_eps(b), exited=exited)


# ---------------------------------------------------------------------------
# inversion


def check_monotone(flow: FlowMap, k: int, min_stretch: float = MIN_STRETCH) -> float:
    """Smallest ratio of deformed to initial neighbour gap at step ``k`` (1-d)."""
    X = flow.at(k)[:, 0]
    gaps = np.diff(X) / np.diff(flow.lattice[:, 0])
    worst = float(np.min(gaps))
    if not worst > min_stretch:
        raise NonInvertibleFlow(
            f"flow at t={flow.times[k]:.4g} is not invertible on the lattice "
            f"(min stretch {worst:.3g}); eps is too small for this grid")
    return worst


def _structured_triangles(lattice: np.ndarray) -> np.ndarray | None:
    """Triangles of a tensor-product lattice, or None if it is not one."""
    xs = np.unique(lattice[:, 0])
    ys = np.unique(lattice[:, 1])
    if xs.size * ys.size != lattice.shape[0]:
        return None
    idx = np.arange(lattice.shape[0]).reshape(xs.size, ys.size)
    a, b_ = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    return np.concatenate([np.stack([a, b_, c], 1), np.stack([a, c, d], 1)])


def _signed_areas(P, tri):
    p0, p1, p2 = P[tri[:, 0]], P[tri[:, 1]], P[tri[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))


def check_injective(flow: FlowMap, k: int, min_stretch: float = MIN_STRETCH) -> float:
    """Smallest ratio of deformed to initial triangle area at step ``k`` (2-d)."""
    tri = flow.meta.get("triangles")
    if tri is None:
        tri = _structured_triangles(flow.lattice)
        if tri is None:
            tri = Delaunay(flow.lattice).simplices
        flow.meta["triangles"] = tri
    a0 = _signed_areas(flow.lattice, tri)
    ratio = _signed_areas(flow.at(k), tri) / a0
    worst = float(np.min(ratio))
    if not worst > min_stretch:
        raise NonInvertibleFlow(f"flow at t={flow.times[k]:.4g} folds the lattice (min area ratio {worst:.3g})")
    return worst


def invert_flow(flow: FlowMap, k: int, x) -> np.ndarray:
    """``(phi_{t_k})^{-1}`` at the points ``x``.

    Beyond the image of the lattice the inverse is extended with the end
    slopes (1-d) or by the displacement of the nearest trajectory (2-d).
    """
    if flow.d == 1:
        check_monotone(flow, k)
        xq = np.asarray(x, float)
        flat = xq.reshape(-1)
        order = np.argsort(flat, kind="stable")
        out = np.empty_like(flat)
        tmp = np.empty_like(flat)
        _kernels._invert_into(flow.lattice[:, 0], np.ascontiguousarray(flow.at(k)[:, 0]),
                              np.ascontiguousarray(flat[order]), tmp)
        out[order] = tmp
        return out.reshape(xq.shape)
    check_injective(flow, k)
    pts = np.asarray(x, float).reshape(-1, 2)
    Xk = flow.at(k)
    inv = LinearNDInterpolator(Xk, flow.lattice)(pts)
    miss = np.isnan(inv[:, 0])
    if np.any(miss):
        _, j = cKDTree(Xk).query(pts[miss])
        inv[miss] = pts[miss] - (Xk[j] - flow.lattice[j])
    return inv.reshape(np.shape(x))


def round_trip_error(flow: FlowMap, k: int, x) -> float:
    """``max |phi(phi^{-1}(x)) - x|`` with ``phi`` interpolated on the lattice."""
    y = invert_flow(flow, k, x)
    if flow.d == 1:
        fwd = np.interp(y, flow.lattice[:, 0], flow.at(k)[:, 0])
        return float(np.max(np.abs(fwd - np.asarray(x))))
    fwd = LinearNDInterpolator(flow.lattice, flow.at(k))(y.reshape(-1, 2))
    ok = ~np.isnan(fwd[:, 0])
    return float(np.max(np.linalg.norm(fwd[ok] - np.asarray(x).reshape(-1, 2)[ok], axis=1)))


# ---------------------------------------------------------------------------
# transport


@dataclass(frozen=True, eq=False)
class TransportSample:
    """Values ``u(t_k, x_i)`` along one path at steps ``steps``, shape ``(len(steps), N)``."""

    times: np.ndarray
    steps: np.ndarray
    x: np.ndarray
    values: np.ndarray
    sup_bound: float
    lower: float = -np.inf
    upper: float = np.inf

    def at_step(self, k: int) -> np.ndarray:
        i = np.searchsorted(self.steps, k)
        if i >= len(self.steps) or self.steps[i] != k:
            raise KeyError(f"step {k} not stored")
        return self.values[i]

    def within_bounds(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.values >= self.lower - tol) and np.all(self.values <= self.upper + tol))


def _range_of(u0: ScalarField, probe: np.ndarray, tabulated: bool = False) -> tuple[float, float]:
    v = probe if tabulated else u0.evaluate(probe)
    lo, hi = float(np.min(v)), float(np.max(v))
    if u0.support is not None:
        lo, hi = min(lo, 0.0), max(hi, 0.0)
    return lo, hi


def transport_solution(u0: ScalarField, flow: FlowMap, x, steps: Sequence[int] | None = None,
                       use_table: bool | None = None) -> TransportSample:
    """``u(t_k, x) = u0(phi_{t_k}^{-1}(x))`` at the requested steps (default: all)."""
    steps = np.arange(flow.K + 1) if steps is None else np.asarray(steps, int)
    xq = np.asarray(x, float)
    if use_table is None:
        use_table = u0.dim == 1
    evaluate = Table.of(u0, table_spacing(u0)) if use_table else (lambda y: u0.evaluate(y))
    vals = np.stack([np.asarray(evaluate(invert_flow(flow, int(k), xq))) for k in steps])
    if use_table:
        # table lookups interpolate the table nodes, so the node range bounds them exactly
        lo, hi = _range_of(u0, evaluate.values, tabulated=True)
    else:
        lo, hi = _range_of(u0, flow.lattice if flow.d > 1 else flow.lattice[:, 0])
    return TransportSample(flow.times[steps], steps, xq, vals, u0.sup_bound, lo, hi)


def deterministic_solve(b: VectorField, u0: ScalarField, K: int, T: float, x, lattice=None,
                        steps: Sequence[int] | None = None, method: str = "auto") -> TransportSample:
    """Noise-free pipeline: characteristics of ``dX = b dt`` and the representation formula."""
    if lattice is None:
        lattice = default_lattice(b, u0, b.L)
    path = BrownianPath.zero(K, T, b.dim)
    flow = solve_forward(b, path, lattice, method=method)
    return transport_solution(u0, flow, x, steps)


def backward_characteristics(b: VectorField, u0: ScalarField, T: float, x, K: int) -> np.ndarray:
    """Noise-free ``u(T, x) = u0(phi_T^{-1}(x))`` by integrating ``dX/ds = -b(X)`` from ``x`` (1-d, RK4).

    For an autonomous drift and zero noise the backward ODE is the exact
    inverse flow, so no lattice is involved. Used to cross-check the lattice
    pipeline where the forward map stretches a single cell over a fan.
    """
    if b.dim != 1 or not b.autonomous:
        raise ValueError("backward characteristics need an autonomous 1-d drift")
    tb = Table.of(b, table_spacing(b))
    tu = Table.of(u0, table_spacing(u0))
    X = np.array(x, float, copy=True)
    dt = T / K
    for _ in range(K):
        k1 = -tb(X)
        k2 = -tb(X + 0.5 * dt * k1)
        k3 = -tb(X + 0.5 * dt * k2)
        k4 = -tb(X + dt * k3)
        X += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return tu(X)


# ---------------------------------------------------------------------------
# batched 1-d transport


@dataclass(frozen=True, eq=False)
class BatchTransport:
    """Compiled transport of many paths for a fixed ``(b, u0, lattice, grid)``."""

    b: VectorField
    u0: ScalarField
    lattice: np.ndarray
    x: np.ndarray
    steps: np.ndarray
    dt: float

    def __post_init__(self):
        if self.b.dim != 1:
            raise ValueError("batched transport is 1-d only")
        object.__setattr__(self, "_btab", Table.of(self.b, table_spacing(self.b)))
        object.__setattr__(self, "_utab", Table.of(self.u0, table_spacing(self.u0)))

    def run(self, increments: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(values (m, S, N), status (m,))`` for increments ``(m, K)`` or ``(m, K, 1)``."""
        dB = np.ascontiguousarray(increments.reshape(increments.shape[0], -1))
        m = dB.shape[0]
        out = np.empty((m, self.steps.size, self.x.size))
        status = np.zeros(m, dtype=np.int64)
        bt, ut = self._btab, self._utab
        order = np.argsort(self.x, kind="stable")
        xs = np.ascontiguousarray(self.x[order])
        _kernels.transport_batch(dB, self.dt, self.lattice, bt.x0, bt.h, bt.values, ut.x0, ut.h, ut.values,
                                 self.steps.astype(np.int64), xs, self.b.L, MIN_STRETCH, out, status)
        if not np.all(order == np.arange(order.size)):
            inv = np.empty_like(order)
            inv[order] = np.arange(order.size)
            out = out[..., inv]
        return out, status

    def raise_on(self, status: np.ndarray) -> None:
        bad = np.flatnonzero(status & _kernels.NON_INVERTIBLE)
        if bad.size:
            raise NonInvertibleFlow(f"{bad.size} path(s) produced a non-invertible flow (first index {bad[0]})")


def exited_count(status: np.ndarray) -> int:
    return int(np.count_nonzero(status & _kernels.EXITED))
