"""Explicit solver for ``dV/dt + (b + h) . grad V = 1/2 lap V`` and energy bounds.

Advection is first-order upwind in the direction of ``b + h``; diffusion uses
the centred three-point stencil per axis. Boundary nodes keep their initial
values, which is homogeneous Dirichlet for data supported inside the box and
keeps constants steady.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, UnstableConfig
from .expectation import MeanField, grad_squared
from .field import ScalarField, VectorField
from .grid import SpaceTimeGrid, check_same_grid
from .noise import ControlFunction

SAFETY = 0.9
DIFFUSION = 0.5
MAX_PRINCIPLE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ParabolicProblem:
    b: VectorField
    h: ControlFunction
    V0: ScalarField
    grid: SpaceTimeGrid
    source: Callable[[float, np.ndarray], np.ndarray] | None = None
    label: str = ""

    def __post_init__(self):
        g = self.grid
        if self.b.dim != g.d or self.V0.dim != g.d:
            raise GridMismatch("field dimensions do not match the grid")
        if self.h.K != g.K or not math.isclose(self.h.T, g.T) or self.h.d != g.d:
            raise GridMismatch(f"control grid (K={self.h.K}, T={self.h.T}) != solver grid (K={g.K}, T={g.T})")

    def drift_on_grid(self, t: float = 0.0) -> np.ndarray:
        """``b(t, x)`` at the grid nodes, shape ``(*grid.shape, d)``."""
        g = self.grid
        return self.b.evaluate(t, g.points).reshape(g.shape + (g.d,))


def stability_report(p: ParabolicProblem, b_grid: np.ndarray | None = None) -> dict:
    """The three step-size limits and whether they hold."""
    g = p.grid
    if b_grid is None:
        b_grid = p.drift_on_grid()
    adv = np.abs(b_grid[None, ...] + p.h.values[:, None, :] if g.d == 1 else
                 b_grid[None, ...] + p.h.values[:, None, None, :])
    amax = float(np.max(adv)) if adv.size else 0.0
    row = float(np.max(np.sum(adv, axis=-1))) if adv.size else 0.0
    diff_limit = SAFETY * g.dx ** 2 / (2 * g.d * DIFFUSION)
    adv_limit = SAFETY * g.dx / amax if amax > 0 else math.inf
    # every explicit update is a convex combination when this stays <= 1
    positivity = g.dt * (row / g.dx + 2 * g.d * DIFFUSION / g.dx ** 2)
    ok = g.dt <= diff_limit and g.dt <= adv_limit and positivity <= 1.0
    return {"dt": g.dt, "diffusion_limit": diff_limit, "advection_limit": adv_limit,
            "positivity_number": positivity, "ok": bool(ok)}


def _step_1d(V, a, dt, dx, out):
    """One explicit step on the interior; ``a`` is the advection speed per node."""
    Vi, Vl, Vr = V[1:-1], V[:-2], V[2:]
    ai = a[1:-1]
    up = np.where(ai > 0, ai * (Vi - Vl), ai * (Vr - Vi)) / dx
    out[1:-1] = Vi - dt * up + dt * DIFFUSION * (Vr - 2 * Vi + Vl) / dx ** 2
    out[0], out[-1] = V[0], V[-1]


def _step_2d(V, a, dt, dx, out):
    Vi = V[1:-1, 1:-1]
    total = np.zeros_like(Vi)
    for axis, (lo, hi) in enumerate(((V[:-2, 1:-1], V[2:, 1:-1]), (V[1:-1, :-2], V[1:-1, 2:]))):
        ai = a[1:-1, 1:-1, axis]
        total -= np.where(ai > 0, ai * (Vi - lo), ai * (hi - Vi)) / dx
        total += DIFFUSION * (hi - 2 * Vi + lo) / dx ** 2
    out[...] = V
    out[1:-1, 1:-1] = Vi + dt * total


def solve_parabolic(p: ParabolicProblem, steps: Sequence[int] | str | None = "all") -> MeanField:
    """March the explicit scheme over ``grid.K`` steps.

    ``steps`` selects stored snapshots (``"all"`` or a list of indices).
    Energies ``int V^2`` and ``int |grad V|^2`` are recorded at every step in
    ``meta["energy"]`` and ``meta["grad_energy"]``, and ``int div(b) V^2`` in
    ``meta["div_energy"]`` when the divergence has pointwise values;
    ``meta["max_principle"]``
    tells whether ``min V0 <= V <= max V0`` held at every step.
    """
    g = p.grid
    b_grid = p.drift_on_grid()
    rep = stability_report(p, b_grid)
    if not rep["ok"]:
        raise UnstableConfig(
            f"dt={g.dt:.3g} violates the explicit limits (diffusion {rep['diffusion_limit']:.3g}, "
            f"advection {rep['advection_limit']:.3g}, positivity number {rep['positivity_number']:.3g})")
    store = np.arange(g.K + 1) if steps is None or (isinstance(steps, str) and steps == "all") \
        else np.unique(np.asarray(steps, int))
    V = np.asarray(p.V0.evaluate(g.points), float).reshape(g.shape).copy()
    lo, hi = float(V.min()), float(V.max())
    step = _step_1d if g.d == 1 else _step_2d
    out = np.empty((store.size,) + g.shape)
    energy = np.empty(g.K + 1)
    grad_energy = np.empty(g.K + 1)
    autonomous = p.b.autonomous
    div_energy = None
    if not p.b.distributional:
        div_energy = np.empty(g.K + 1)
        div_grid = p.b.div(0.0, g.points).reshape(g.shape)
    max_ok = True
    worst = 0.0
    nxt = np.empty_like(V)
    s = 0
    for k in range(g.K + 1):
        energy[k] = g.integrate(V * V)
        grad_energy[k] = g.integrate(grad_squared(V, g))
        if div_energy is not None:
            if not autonomous:
                div_grid = p.b.div(g.times[k], g.points).reshape(g.shape)
            div_energy[k] = g.integrate(div_grid * V * V)
        if s < store.size and store[s] == k:
            out[s] = V
            s += 1
        if k == g.K:
            break
        t = g.times[k]
        bk = b_grid if autonomous else p.drift_on_grid(t)
        a = bk + p.h.values[k]
        step(V, a[..., 0] if g.d == 1 else a, g.dt, g.dx, nxt)
        if p.source is not None:
            src = np.asarray(p.source(t, g.points), float).reshape(g.shape)
            nxt += g.dt * src
        V, nxt = nxt, V
        excess = max(lo - float(V.min()), float(V.max()) - hi)
        if excess > MAX_PRINCIPLE_TOL * max(1.0, abs(lo), abs(hi)):
            max_ok = False
            worst = max(worst, excess)
    b_sup = float(np.max(np.linalg.norm(b_grid, axis=-1)))
    meta = {"energy": energy, "grad_energy": grad_energy, "div_energy": div_energy, "max_principle": max_ok,
            "max_principle_excess": worst, "stability": rep, "b_sup": b_sup,
            "range": (lo, hi), "drift": p.b.name, "control": p.h.label}
    return MeanField(g, store, out, None, 0, "parabolic-solver", p.label or f"{p.b.name}|h={p.h.label}", meta)


# ---------------------------------------------------------------------------
# energy estimates


def gronwall_rate(b_sup: float) -> float:
    """Growth rate ``C_b = |b|_inf^2 + 1`` used for the predicted bounds."""
    return b_sup ** 2 + 1.0


def cumulative(values: np.ndarray, dt: float) -> np.ndarray:
    """Left-point running integral, ``out[0] = 0``."""
    out = np.zeros_like(values)
    np.cumsum(values[:-1] * dt, out=out[1:])
    return out


@dataclass(frozen=True)
class EnergyReport:
    """``int V^2``, ``int |grad V|^2`` and ``int_0^t int |grad V|^2`` per step."""

    times: np.ndarray
    energy: np.ndarray
    grad_energy: np.ndarray
    cumulative_grad: np.ndarray
    C_energy: float
    C_dissipation: float
    C_measured: float
    C_b: float
    predicted: float

    @property
    def bound_holds(self) -> bool:
        return self.C_measured <= self.predicted

    def as_dict(self) -> dict:
        return {
            "C_energy": self.C_energy, "C_dissipation": self.C_dissipation, "C_measured": self.C_measured,
            "C_b": self.C_b, "predicted": self.predicted, "bound_holds": self.bound_holds,
            "energy_final": float(self.energy[-1]), "energy_initial": float(self.energy[0]),
        }


def energy_report(V: MeanField, b_sup: float | None = None) -> EnergyReport:
    """Smallest ``C`` with ``int V^2(t) <= C int V0^2`` and ``int_0^T int |grad V|^2 <= C int V0^2``,
    compared with ``exp(C_b T)``.
    """
    if "energy" not in V.meta:
        raise ValueError("energy_report needs a solver-produced MeanField")
    g = V.grid
    E = np.asarray(V.meta["energy"])
    G = np.asarray(V.meta["grad_energy"])
    cumG = cumulative(G, g.dt)
    b_sup = V.meta["b_sup"] if b_sup is None else b_sup
    E0 = E[0]
    if E0 > 0:
        c_un = float(np.max(E / E0))
        c_dos = float(cumG[-1] / E0)
    else:
        c_un = c_dos = 0.0
    Cb = gronwall_rate(b_sup)
    return EnergyReport(g.times, E, G, cumG, c_un, c_dos, max(c_un, c_dos), Cb, math.exp(Cb * g.T))


def heat_energy_defect(V: MeanField) -> float:
    """``max_k |(E_{k+1} - E_k)/dt + G_k|`` for a pure heat run."""
    E = np.asarray(V.meta["energy"])
    G = np.asarray(V.meta["grad_energy"])
    return float(np.max(np.abs(np.diff(E) / V.grid.dt + G[:-1])))


def energy_balance_defect(V: MeanField) -> float:
    """``max_k |(E_{k+1} - E_k)/dt + G_k - D_k|`` with ``D_k = int div(b) V_k^2``.

    This is the discrete form of ``d/dt int V^2 = -int |grad V|^2 + int div(b + h) V^2``
    (``h`` is constant in space); the defect is the scheme's numerical
    dissipation and shrinks with the grid.
    """
    E = np.asarray(V.meta["energy"])
    G = np.asarray(V.meta["grad_energy"])
    D = V.meta.get("div_energy")
    if D is None:
        raise ValueError("the drift has no pointwise divergence; the balance is not defined")
    return float(np.max(np.abs(np.diff(E) / V.grid.dt + G[:-1] - np.asarray(D)[:-1])))


@dataclass(frozen=True)
class DifferenceEnergy:
    """Both sides of the difference inequality at every stored step."""

    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    rhs_grown: np.ndarray
    constant: float
    drift_gap_l2: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs))

    @property
    def holds_grown(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs_grown))

    @property
    def slack(self) -> float:
        """Smallest ``rhs - lhs`` over the stored steps with ``t > 0``."""
        m = self.times > 0
        return float(np.min(self.rhs[m] - self.lhs[m])) if np.any(m) else 0.0

    def as_dict(self) -> dict:
        return {
            "holds": self.holds, "holds_with_growth_factor": self.holds_grown, "slack": self.slack,
            "constant": self.constant, "drift_gap_l2": self.drift_gap_l2,
            "lhs_final": float(self.lhs[-1]), "rhs_final": float(self.rhs[-1]),
        }


def difference_energy(V: MeanField, W: MeanField, b_eps: VectorField, b_delta: VectorField) -> DifferenceEnergy:
    """Check ``int (V - W)^2 (t) <= int (V0 - W0)^2 + C A(t)^{1/2} B(t)^{1/2}``.

    ``A(t) = int_0^t int |grad W|^2`` and ``B(t) = int_0^t int |b_eps - b_delta|^2``;
    ``C = 2 (|V|_inf + |W|_inf) exp(C_b T)`` with ``C_b`` from the larger drift
    bound. ``rhs_grown`` also multiplies the initial term by ``exp(C_b T)``.
    """
    check_same_grid(V.grid, W.grid, "mean fields")
    if not np.array_equal(V.steps, W.steps):
        raise GridMismatch("mean fields store different steps")
    g = V.grid
    steps = V.steps
    lhs = g.integrate((V.values - W.values) ** 2)
    cumGW = cumulative(np.asarray(W.meta["grad_energy"]), g.dt)[steps]
    gap = b_eps.evaluate(0.0, g.points) - b_delta.evaluate(0.0, g.points)
    gap2 = float(g.integrate(np.sum(gap ** 2, axis=-1).reshape(g.shape)))
    B = gap2 * g.times[steps]
    b_sup = max(V.meta.get("b_sup", 0.0), W.meta.get("b_sup", 0.0))
    growth = math.exp(gronwall_rate(b_sup) * g.T)
    C = 2.0 * (float(np.max(np.abs(V.values))) + float(np.max(np.abs(W.values)))) * growth
    z0 = lhs[0] if steps[0] == 0 else float(g.integrate((V.at_step(0) - W.at_step(0)) ** 2))
    cross = C * np.sqrt(cumGW) * np.sqrt(B)
    return DifferenceEnergy(g.times[steps], lhs, z0 + cross, z0 * growth + cross, C, math.sqrt(gap2))


def heat_solution(u0: ScalarField, grid: SpaceTimeGrid, t: float, shift: float = 0.0,
                  spacing: float | None = None) -> np.ndarray:
    """Oracle ``(G_t * u0)(x - shift)`` on the 1-d grid by fine trapezoid convolution."""
    if grid.d != 1:
        raise ValueError("heat oracle is 1-d")
    x = grid.x - shift
    if t == 0:
        return u0.evaluate(x)
    sigma = math.sqrt(t)
    spacing = spacing or min(sigma / 8, 2e-3)
    R = (u0.support if u0.support is not None else grid.L) + 0.2
    y = np.linspace(-R, R, int(math.ceil(2 * R / spacing)) + 1)
    w = np.full(y.size, y[1] - y[0])
    w[0] = w[-1] = w[0] / 2
    uy = u0.evaluate(y) * w
    out = np.empty_like(x)
    for start in range(0, x.size, 256):
        xs = x[start:start + 256]
        kern = np.exp(-0.5 * ((xs[:, None] - y[None, :]) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
        out[start:start + 256] = kern @ uy
    return out
