"""The mollification commutator ``(f . grad)(rho_eps * g) - rho_eps * (f . grad g)``.

Both convolutions are taken on the same quadrature nodes, so the commutator
reduces to ``int rho_eps(x - z) (f(x) - f(z)) . grad g(z) dz`` and vanishes
to round-off when ``f`` is constant.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UnresolvedMollifier
from .field import MollifierFamily, ScalarField, VectorField, quadrature_nodes

RESOLUTION = 4  # eps must span this many grid spacings


def _cdf_table(rho: MollifierFamily, n: int = 4001):
    r = np.linspace(-rho.eps, rho.eps, n)
    dens = rho(r)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(r))])
    return r, cdf / cdf[-1]


def smoothed_grid_function(x: np.ndarray, values: np.ndarray, scale: float, kind: str = "bump",
                           name: str = "grid") -> ScalarField:
    """Piecewise-linear 1-d data ``(x, values)`` convolved with ``rho_scale``.

    The gradient is exact for the smoothed function: the piecewise-constant
    slopes convolved with ``rho_scale``, using a tabulated kernel CDF.
    """
    x = np.asarray(x, float)
    values = np.asarray(values, float)
    rho = MollifierFamily(kind, scale)
    r, cdf = _cdf_table(rho)
    slopes = np.diff(values) / np.diff(x)

    def Phi(s):
        return np.interp(s, r, cdf, left=0.0, right=1.0)

    def grad(p):
        z = p[..., 0]
        flat = z.reshape(-1)
        out = np.zeros_like(flat)
        # only cells within ``scale`` of a node contribute
        lo = np.searchsorted(x, flat - scale, side="right") - 1
        hi = np.searchsorted(x, flat + scale, side="left")
        width = int(np.max(hi - lo)) + 1 if flat.size else 0
        for off in range(width):
            c = lo + off
            ok = (c >= 0) & (c < slopes.size) & (c <= hi)
            cc = np.clip(c, 0, slopes.size - 1)
            contrib = slopes[cc] * (Phi(flat - x[cc]) - Phi(flat - x[cc + 1]))
            out += np.where(ok, contrib, 0.0)
        return out.reshape(z.shape)[..., None]

    def func(p):
        return np.interp(p[..., 0], x, values, left=0.0, right=0.0)

    return ScalarField(
        name=name, dim=1, func=func, L=float(max(abs(x[0]), abs(x[-1]))),
        sup_bound=float(np.max(np.abs(values))), gradient=grad,
        description=f"grid data pre-smoothed at scale {scale:g}",
        meta={"grid_spacing": float(np.min(np.diff(x))), "smoothing": scale},
    )


def gaussian_profile(center: float = 0.3, sigma: float = 0.2, d: int = 1, L: float = 3.0) -> ScalarField:
    """``exp(-|x - c e_1|^2 / (2 sigma^2))``, an H1 function with analytic gradient."""
    c = np.zeros(d)
    c[0] = center

    def f(x):
        return np.exp(-0.5 * np.sum((x - c) ** 2, axis=-1) / sigma ** 2)

    def g(x):
        return -(x - c) / sigma ** 2 * f(x)[..., None]

    return ScalarField(name=f"gaussian({center:g},{sigma:g})", dim=d, func=f, L=L, sup_bound=1.0, gradient=g,
                       description="Gaussian profile")


def indicator_profile(a: float = 0.0, b: float = 0.5, scale: float = 0.01, L: float = 3.0) -> ScalarField:
    """Indicator of ``[a, b]`` pre-smoothed at ``scale`` (not H1 in the limit)."""
    x = np.array([-L, a - 1e-12, a, b, b + 1e-12, L])
    v = np.array([0.0, 0.0, 1.0, 1.0, 0.0, 0.0])
    return smoothed_grid_function(x, v, scale, name=f"indicator[{a:g},{b:g}]")


def compute_commutator(f: VectorField, g: ScalarField, rho: MollifierFamily, x, spacing: float | None = None
                       ) -> np.ndarray:
    """Commutator values at the points ``x`` (``(N,)`` in 1-d or ``(N, d)``).

    ``spacing`` is the resolution of the evaluation grid; ``eps`` below
    ``4 * spacing`` raises :class:`UnresolvedMollifier`.
    """
    if g.gradient is None:
        raise UnresolvedMollifier(f"{g.name} has no evaluable gradient; pre-smooth it first")
    pts = np.asarray(x, float)
    if f.dim == 1 and pts.ndim == 1:
        pts = pts[:, None]
    if spacing is None:
        axis = np.unique(pts[:, 0])
        spacing = float(np.min(np.diff(axis))) if axis.size > 1 else 0.0
    spacing = max(spacing, float(g.meta.get("grid_spacing", 0.0)) if g.meta else 0.0)
    if rho.eps < RESOLUTION * spacing:
        raise UnresolvedMollifier(f"eps={rho.eps:g} is below {RESOLUTION} grid spacings ({spacing:g})")
    cuts = []
    for i in range(f.dim):
        fb = f.breakpoints[i] if i < len(f.breakpoints) else ()
        gb = g.breakpoints[i] if i < len(g.breakpoints) else ()
        cuts.append(tuple(sorted(set(fb) | set(gb))))
    out = np.empty(pts.shape[0])
    chunk = 1024
    for start in range(0, pts.shape[0], chunk):
        xc = pts[start:start + chunk]
        z, w = quadrature_nodes(xc, rho.eps, cuts)
        kern = rho(xc[:, None, :] - z) * w
        fx = f.evaluate(0.0, xc)
        fz = f.evaluate(0.0, z)
        gz = g.grad(z)
        out[start:start + chunk] = np.sum(kern * np.sum((fx[:, None, :] - fz) * gz, axis=-1), axis=1)
    return out


def l1loc_norm(values: np.ndarray, x: np.ndarray, K: tuple[float, float] | None = None) -> float:
    """Trapezoid ``int_K |R|`` on a 1-d grid (``K`` defaults to the whole grid)."""
    x = np.asarray(x, float)
    v = np.abs(np.asarray(values, float))
    if K is not None:
        m = (x >= K[0] - 1e-12) & (x <= K[1] + 1e-12)
        x, v = x[m], v[m]
    if x.size < 2:
        return 0.0
    return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(x)))


@dataclass(frozen=True, eq=False)
class CommutatorStudy:
    """A pair ``(f, g)`` with a mollifier family, a decreasing eps ladder and a compact set.

    ``g`` may also be a callable ``eps -> ScalarField`` when it is pre-smoothed
    at a scale tied to each rung.
    """

    f: VectorField
    g: ScalarField | Callable[[float], ScalarField]
    kind: str = "bump"
    ladder: tuple = (0.2, 0.1, 0.05, 0.025)
    K: tuple = (-1.0, 1.0)
    spacing: float = 0.00625
    label: str = ""

    def __post_init__(self):
        lad = tuple(float(e) for e in self.ladder)
        if any(b >= a for a, b in zip(lad, lad[1:])) or not lad:
            raise ValueError("eps ladder must be nonempty and strictly decreasing")
        if self.K[0] - lad[0] <= -self.f.L or self.K[1] + lad[0] >= self.f.L:
            raise ValueError("compact set plus the largest eps must stay inside the box")
        object.__setattr__(self, "ladder", lad)

    def grid(self) -> np.ndarray:
        n = int(round((self.K[1] - self.K[0]) / self.spacing)) + 1
        return np.linspace(self.K[0], self.K[1], n)


@dataclass(frozen=True)
class StudyResult:
    label: str
    eps: tuple
    norms: tuple
    halving: bool
    ratios: tuple

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for v in self.norms)

    def as_dict(self) -> dict:
        return {"label": self.label, "eps": list(self.eps), "norms": list(self.norms),
                "ratios": list(self.ratios), "last_over_first": self.norms[-1] / self.norms[0]
                if self.norms[0] > 0 else 0.0, "halving": self.halving, "finite": self.finite}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "l1_norm"])
            for e, v in zip(self.eps, self.norms):
                w.writerow([repr(float(e)), repr(float(v))])


def convergence_study(study: CommutatorStudy, factor: float = 0.5) -> StudyResult:
    """``||R_eps||_{L1(K)}`` down the ladder; ``halving`` is ``last <= factor * first``."""
    x = study.grid()
    norms = []
    for eps in study.ladder:
        rho = MollifierFamily(study.kind, eps, study.f.dim)
        g = study.g if isinstance(study.g, ScalarField) else study.g(eps)
        R = compute_commutator(study.f, g, rho, x, study.spacing)
        norms.append(l1loc_norm(R, x, study.K))
    ratios = tuple(b / a if a > 0 else 0.0 for a, b in zip(norms, norms[1:]))
    halving = norms[-1] <= factor * norms[0]
    gname = study.g.name if isinstance(study.g, ScalarField) else "g(eps)"
    return StudyResult(study.label or f"{study.f.name}|{gname}", study.ladder, tuple(norms), halving, ratios)
