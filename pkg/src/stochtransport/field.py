"""Drifts, initial data, mollifiers and the catalog of example fields.

Fields live on the box ``[-L, L]^d`` (``d`` is 1 or 2) but are evaluable
anywhere in ``R^d``. Points are arrays of shape ``(..., d)``; vector fields
return ``(..., d)`` and scalar fields return ``(...)``.

Convolutions with a mollifier are computed by Gauss-Legendre quadrature on
the kernel support, split at the known discontinuities of the integrand so
that jump-type drifts such as ``sign(x)`` are integrated to near machine
precision.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from functools import cache

import numpy as np
from scipy import integrate

from .errors import InvalidField, InvalidMollifier

ArrayFn = Callable[..., np.ndarray]

_GL_NODES = {1: 48, 2: 24}


# ---------------------------------------------------------------------------
# field types


@dataclass(frozen=True)
class Divergence:
    """How the divergence of a vector field is known.

    ``kind`` is ``"analytic"`` (``func(t, x)`` gives it pointwise),
    ``"stencil"`` (central differences of the field itself) or
    ``"distributional"`` (singular part listed in ``atoms`` as
    ``(location, mass)`` pairs; never evaluated pointwise). A distributional
    divergence may still carry an absolutely continuous part in ``func``.
    """

    kind: str
    func: ArrayFn | None = None
    atoms: tuple = ()
    step: float = 1e-4

    def __post_init__(self):
        if self.kind not in ("analytic", "stencil", "distributional"):
            raise ValueError(f"unknown divergence kind {self.kind!r}")
        if self.kind == "analytic" and self.func is None:
            raise ValueError("analytic divergence needs func")


class _ConvolutionCache:
    """Small LRU cache of field values keyed on the exact evaluation points."""

    def __init__(self, size=16):
        self.size = size
        self._data: OrderedDict = OrderedDict()

    def get(self, key):
        if key in self._data:
            self._data.move_to_end(key)
            return self._data[key]
        return None

    def put(self, key, value):
        value = np.array(value)
        value.setflags(write=False)
        self._data[key] = value
        if len(self._data) > self.size:
            self._data.popitem(last=False)
        return value


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if dim == 1 and x.ndim <= 1:
        x = x[..., None]
    if x.shape[-1] != dim:
        raise InvalidField(f"points have trailing dimension {x.shape[-1]}, expected {dim}")
    return x


@dataclass(frozen=True, eq=False)
class VectorField:
    """A drift ``b(t, x)``.

    ``sup_bound`` is a declared bound on ``|b|``; ``l2_bound`` may be None when
    unknown. ``breakpoints`` lists, per axis, coordinates across which the
    field may jump or kink; quadrature splits there. ``support`` is a
    half-width outside of which the field vanishes (None if it does not).
    """

    name: str
    dim: int
    func: ArrayFn
    L: float
    sup_bound: float
    divergence: Divergence
    l2_bound: float | None = None
    breakpoints: tuple = ()
    support: float | None = None
    autonomous: bool = True
    description: str = ""
    meta: Mapping = field(default_factory=dict)
    _cache: _ConvolutionCache | None = field(default=None, repr=False)

    def evaluate(self, t: float, x) -> np.ndarray:
        pts = _as_points(x, self.dim)
        key = None
        if self._cache is not None:
            key = (None if self.autonomous else float(t), pts.shape, pts.tobytes())
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        out = np.asarray(self.func(t, pts), dtype=float)
        out = np.broadcast_to(out, pts.shape)
        if not np.all(np.isfinite(out)):
            raise InvalidField(f"{self.name}: non-finite value at t={t}")
        if key is not None:
            out = self._cache.put(key, out)
        return out

    def div(self, t: float, x) -> np.ndarray:
        """Pointwise divergence; raises for a purely distributional one."""
        pts = _as_points(x, self.dim)
        dv = self.divergence
        if dv.kind == "analytic":
            return np.broadcast_to(np.asarray(dv.func(t, pts), float), pts.shape[:-1]).copy()
        if dv.kind == "stencil":
            h = dv.step
            total = np.zeros(pts.shape[:-1])
            for i in range(self.dim):
                e = np.zeros(self.dim)
                e[i] = h
                total += (self.evaluate(t, pts + e)[..., i] - self.evaluate(t, pts - e)[..., i]) / (2 * h)
            return total
        raise InvalidField(f"{self.name}: divergence is distributional and has no pointwise value")

    @property
    def distributional(self) -> bool:
        return self.divergence.kind == "distributional"

    def tabulate(self, spacing: float, pad: float = 0.0):
        """Values on a uniform 1-d table covering ``[-L - pad, L + pad]``.

        Returns ``(x0, h, values)`` for linear interpolation in compiled
        kernels. Only for autonomous 1-d fields.
        """
        if self.dim != 1 or not self.autonomous:
            raise ValueError("tables are only built for autonomous 1-d fields")
        return _tabulate(self, spacing, pad, vector=True)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Initial datum or test function ``u(x)``; see :class:`VectorField`."""

    name: str
    dim: int
    func: ArrayFn
    L: float
    sup_bound: float
    l2_bound: float | None = None
    breakpoints: tuple = ()
    support: float | None = None
    gradient: ArrayFn | None = None
    description: str = ""
    meta: Mapping = field(default_factory=dict)
    _cache: _ConvolutionCache | None = field(default=None, repr=False)

    def evaluate(self, x) -> np.ndarray:
        pts = _as_points(x, self.dim)
        key = None
        if self._cache is not None:
            key = (pts.shape, pts.tobytes())
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        out = np.broadcast_to(np.asarray(self.func(pts), dtype=float), pts.shape[:-1])
        if not np.all(np.isfinite(out)):
            raise InvalidField(f"{self.name}: non-finite value")
        if key is not None:
            out = self._cache.put(key, out)
        return out

    def grad(self, x) -> np.ndarray:
        pts = _as_points(x, self.dim)
        if self.gradient is None:
            raise InvalidField(f"{self.name}: no analytic gradient")
        return np.broadcast_to(np.asarray(self.gradient(pts), float), pts.shape).copy()

    def tabulate(self, spacing: float, pad: float = 0.0):
        if self.dim != 1:
            raise ValueError("tables are only built for 1-d fields")
        return _tabulate(self, spacing, pad, vector=False)

    @classmethod
    def from_grid(cls, x: np.ndarray, values: np.ndarray, name: str = "grid", L: float | None = None):
        """Piecewise-linear 1-d field through ``(x, values)``, zero outside."""
        x = np.asarray(x, float)
        values = np.asarray(values, float)
        L = float(L if L is not None else max(abs(x[0]), abs(x[-1])))

        def func(p):
            return np.interp(p[..., 0], x, values, left=0.0, right=0.0)

        return cls(
            name=name, dim=1, func=func, L=L,
            sup_bound=float(np.max(np.abs(values))) if values.size else 0.0,
            breakpoints=(tuple(x.tolist()),) if x.size <= 64 else (),
            support=float(max(abs(x[0]), abs(x[-1]))),
            meta={"grid": x, "values": values},
        )


def _tabulate(fld, spacing, pad, vector):
    lo = -fld.L - pad
    n = int(math.ceil(2 * (fld.L + pad) / spacing)) + 1
    xs = np.linspace(lo, -lo, n)
    h = xs[1] - xs[0]
    if vector:
        vals = fld.evaluate(0.0, xs[:, None])[:, 0]
    else:
        vals = fld.evaluate(xs[:, None])
    return float(xs[0]), float(h), np.ascontiguousarray(vals, dtype=float)


# ---------------------------------------------------------------------------
# mollifiers


def _bump_profile(r):
    r = np.asarray(r, float)
    inside = r < 1.0
    out = np.zeros_like(r)
    ri = r[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ri * ri))
    return out


_GAUSS_SIGMA = 1.0 / 3.0


def _gauss_profile(r):
    r = np.asarray(r, float)
    return np.where(r <= 1.0, np.exp(-0.5 * (r / _GAUSS_SIGMA) ** 2), 0.0)


_PROFILES = {"bump": _bump_profile, "gauss": _gauss_profile}


@cache
def _normalisation(kind: str, dim: int) -> float:
    prof = _PROFILES[kind]
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)
    if dim == 1:
        return 2.0 * integrate.quad(lambda r: float(prof(r)), 0.0, 1.0, **opts)[0]
    return 2.0 * np.pi * integrate.quad(lambda r: float(prof(r)) * r, 0.0, 1.0, **opts)[0]


@dataclass(frozen=True)
class MollifierFamily:
    """Radial, positive, mass-one kernel ``rho_eps`` of width ``eps``.

    ``"bump"`` is the compact bump ``exp(-1/(1-|x|^2))`` on the unit ball,
    ``"gauss"`` a Gaussian with standard deviation ``eps/3`` truncated at
    radius ``eps``. Both are supported in the closed ball of radius ``eps``.
    """

    kind: str
    eps: float
    dim: int = 1

    def __post_init__(self):
        if self.kind not in _PROFILES:
            raise InvalidMollifier(f"unknown mollifier kind {self.kind!r}")
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise InvalidMollifier(f"mollifier width must be positive, got {self.eps}")
        if self.dim not in (1, 2):
            raise InvalidMollifier("dimension must be 1 or 2")

    @property
    def support_radius(self) -> float:
        return self.eps

    def __call__(self, y) -> np.ndarray:
        y = _as_points(y, self.dim)
        r = np.sqrt(np.sum(y * y, axis=-1)) / self.eps
        return _PROFILES[self.kind](r) / (_normalisation(self.kind, self.dim) * self.eps ** self.dim)

    def with_eps(self, eps: float) -> MollifierFamily:
        return replace(self, eps=eps)

    def mass(self) -> float:
        """Independent check of unit mass by adaptive quadrature."""
        opts = dict(epsabs=1e-14, epsrel=1e-13, limit=200)
        if self.dim == 1:
            f = lambda s: float(self(np.array([s]))[0])
            return integrate.quad(f, -self.eps, 0.0, **opts)[0] + integrate.quad(f, 0.0, self.eps, **opts)[0]
        f = lambda r: float(self(np.array([r, 0.0]))) * 2 * np.pi * r
        return integrate.quad(f, 0.0, self.eps, **opts)[0]


# ---------------------------------------------------------------------------
# quadrature convolution


def _axis_nodes(center, radius, cuts, q):
    """Gauss nodes covering ``[c - r, c + r]`` for every c, split at ``cuts``."""
    gx, gw = np.polynomial.legendre.leggauss(q)
    edges = [center - radius]
    for c in sorted(cuts):
        edges.append(np.clip(c, center - radius, center + radius))
    edges.append(center + radius)
    edges = np.stack(edges, axis=-1)
    a, b = edges[:, :-1], edges[:, 1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[..., None] + half[..., None] * gx
    weights = half[..., None] * gw
    n = center.shape[0]
    return nodes.reshape(n, -1), weights.reshape(n, -1)


def quadrature_nodes(x: np.ndarray, radius: float, breakpoints=(), q: int | None = None):
    """Nodes ``z`` (N, Q, d) and weights (N, Q) for integrals over the cube of
    half-width ``radius`` centred at each point of ``x`` (N, d).
    """
    x = np.asarray(x, float)
    n, dim = x.shape
    q = q or _GL_NODES[dim]
    bps = tuple(breakpoints) + ((),) * (dim - len(breakpoints))
    per_axis = [_axis_nodes(x[:, i], radius, bps[i], q) for i in range(dim)]
    if dim == 1:
        z, w = per_axis[0]
        return z[..., None], w
    (za, wa), (zb, wb) = per_axis
    qa, qb = za.shape[1], zb.shape[1]
    z = np.empty((n, qa, qb, 2))
    z[..., 0] = za[:, :, None]
    z[..., 1] = zb[:, None, :]
    w = wa[:, :, None] * wb[:, None, :]
    return z.reshape(n, qa * qb, 2), w.reshape(n, qa * qb)


def convolve(func: ArrayFn, rho: MollifierFamily, x, breakpoints=(), chunk: int = 2048) -> np.ndarray:
    """``(func * rho)(x) = int func(z) rho(x - z) dz`` by split Gauss quadrature.

    ``func`` maps points ``(..., d)`` to ``(...)`` or ``(..., m)``.
    """
    pts = _as_points(x, rho.dim)
    flat = pts.reshape(-1, rho.dim)
    out = None
    for start in range(0, flat.shape[0], chunk):
        xc = flat[start:start + chunk]
        z, w = quadrature_nodes(xc, rho.eps, breakpoints)
        kern = rho(xc[:, None, :] - z) * w
        vals = np.asarray(func(z), float)
        if vals.ndim == 2:
            res = np.sum(kern * vals, axis=1)
        else:
            res = np.einsum("nq,nqm->nm", kern, vals)
        if out is None:
            out = np.empty((flat.shape[0],) + res.shape[1:])
        out[start:start + chunk] = res
    return out.reshape(pts.shape[:-1] + out.shape[1:])


def mollify_field(b: VectorField, rho: MollifierFamily) -> VectorField:
    """``b_eps = b(t, .) * rho_eps``, evaluated by quadrature and cached."""
    if rho.dim != b.dim:
        raise InvalidMollifier(f"mollifier dimension {rho.dim} != field dimension {b.dim}")
    if rho.eps > b.L / 4:
        raise InvalidMollifier(f"eps={rho.eps} exceeds L/4={b.L / 4}")
    bps = b.breakpoints

    def func(t, x):
        return convolve(lambda z: b.func(t, z), rho, x, bps)

    return VectorField(
        name=f"{b.name}*{rho.kind}({rho.eps:g})",
        dim=b.dim,
        func=func,
        L=b.L,
        sup_bound=b.sup_bound,
        l2_bound=b.l2_bound,
        divergence=Divergence("stencil", step=rho.eps / 200.0),
        support=None if b.support is None else b.support + rho.eps,
        autonomous=b.autonomous,
        description=f"{b.description} mollified by {rho.kind} kernel, eps={rho.eps:g}",
        meta={"parent": b, "mollifier": rho},
        _cache=_ConvolutionCache(),
    )


def mollify_initial(u0: ScalarField, rho: MollifierFamily) -> ScalarField:
    """Scalar counterpart of :func:`mollify_field`."""
    if rho.dim != u0.dim:
        raise InvalidMollifier(f"mollifier dimension {rho.dim} != field dimension {u0.dim}")
    if rho.eps > u0.L / 4:
        raise InvalidMollifier(f"eps={rho.eps} exceeds L/4={u0.L / 4}")
    bps = u0.breakpoints

    def func(x):
        return convolve(u0.func, rho, x, bps)

    grad = None
    if u0.gradient is not None:
        def grad(x):
            return convolve(u0.gradient, rho, x, bps)

    return ScalarField(
        name=f"{u0.name}*{rho.kind}({rho.eps:g})",
        dim=u0.dim,
        func=func,
        L=u0.L,
        sup_bound=u0.sup_bound,
        l2_bound=u0.l2_bound,
        support=None if u0.support is None else u0.support + rho.eps,
        gradient=grad,
        description=f"{u0.description} mollified by {rho.kind} kernel, eps={rho.eps:g}",
        meta={"parent": u0, "mollifier": rho},
        _cache=_ConvolutionCache(),
    )


# ---------------------------------------------------------------------------
# hypothesis checks


@dataclass(frozen=True)
class HypothesisReport:
    con1_ok: bool
    con2_ok: bool
    conIC_ok: bool
    b_l2: float
    b_linf: float
    div_l1: float | None
    u0_l2: float
    u0_linf: float
    divergence_kind: str
    atoms: tuple = ()

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _panel_rule(a, b, cuts, width, q=16):
    """Composite Gauss rule on [a, b] with panels split at cuts, graded near them."""
    gx, gw = np.polynomial.legendre.leggauss(q)
    edges = {a, b}
    for c in cuts:
        if a < c < b:
            edges.add(c)
            for k in range(1, 40):
                for s in (-1, 1):
                    e = c + s * width * 2.0 ** (-k)
                    if a < e < b:
                        edges.add(e)
    edges = np.array(sorted(edges))
    fine = [edges[0]]
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = max(1, int(math.ceil((hi - lo) / width)))
        fine.extend(np.linspace(lo, hi, m + 1)[1:])
    e = np.array(fine)
    lo, hi = e[:-1], e[1:]
    nodes = (0.5 * (lo + hi))[:, None] + (0.5 * (hi - lo))[:, None] * gx
    weights = (0.5 * (hi - lo))[:, None] * gw
    return nodes.ravel(), weights.ravel()


def _space_rule(L, dim, breakpoints, width=0.05):
    bps = tuple(breakpoints) + ((),) * (dim - len(breakpoints))
    rules = [_panel_rule(-L, L, bps[i], width) for i in range(dim)]
    if dim == 1:
        return rules[0][0][:, None], rules[0][1]
    (xa, wa), (xb, wb) = rules
    X, Y = np.meshgrid(xa, xb, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], -1), np.outer(wa, wb).ravel()


def validate_hypothesis(b: VectorField, u0: ScalarField, T: float, compact_half_width: float | None = None,
                        rng_seed: int = 0) -> HypothesisReport:
    """Quadrature estimates of the integrability conditions on ``b`` and ``u0``.

    ``div_l1`` integrates ``|div b|`` over ``[0, T] x [-c, c]^d`` with
    ``c = compact_half_width`` (default: the whole box). A distributional
    divergence fails that condition by definition and is reported with its
    atoms.
    """
    if b.dim != u0.dim or not math.isclose(b.L, u0.L):
        raise InvalidField("b and u0 must share dimension and domain box")
    if not T > 0:
        raise InvalidField("horizon T must be positive")
    L = b.L
    c = L if compact_half_width is None else compact_half_width
    if b.autonomous:
        t_nodes, t_weights = np.array([0.0]), np.array([T])
    else:
        gx, gw = np.polynomial.legendre.leggauss(16)
        t_nodes, t_weights = 0.5 * T * (gx + 1), 0.5 * T * gw

    xs, ws = _space_rule(L, b.dim, b.breakpoints)
    rng = np.random.default_rng(rng_seed)
    probe = rng.uniform(-L, L, size=(4096, b.dim))
    b_l2sq, b_linf = 0.0, 0.0
    for t, wt in zip(t_nodes, t_weights):
        v = b.evaluate(t, xs)
        b_l2sq += wt * np.sum(ws * np.sum(v * v, axis=-1))
        b_linf = max(b_linf, float(np.max(np.linalg.norm(v, axis=-1))),
                     float(np.max(np.linalg.norm(b.evaluate(t, probe), axis=-1))))

    div_l1 = None
    if b.divergence.kind != "distributional":
        xc, wc = _space_rule(c, b.dim, b.breakpoints, width=min(0.05, c / 4))
        div_l1 = 0.0
        for t, wt in zip(t_nodes, t_weights):
            div_l1 += wt * float(np.sum(wc * np.abs(b.div(t, xc))))

    xu, wu = _space_rule(L, u0.dim, u0.breakpoints)
    uv = u0.evaluate(xu)
    u0_l2 = float(np.sqrt(np.sum(wu * uv * uv)))
    u0_linf = max(float(np.max(np.abs(uv))), float(np.max(np.abs(u0.evaluate(probe)))))
    b_l2 = float(np.sqrt(b_l2sq))
    tol = 1e-12
    return HypothesisReport(
        con1_ok=bool(np.isfinite(b_l2) and b_linf <= b.sup_bound * (1 + tol) + tol),
        con2_ok=div_l1 is not None and bool(np.isfinite(div_l1)),
        conIC_ok=bool(np.isfinite(u0_l2) and u0_linf <= u0.sup_bound * (1 + tol) + tol),
        b_l2=b_l2,
        b_linf=b_linf,
        div_l1=div_l1,
        u0_l2=u0_l2,
        u0_linf=u0_linf,
        divergence_kind=b.divergence.kind,
        atoms=tuple(b.divergence.atoms),
    )


# ---------------------------------------------------------------------------
# catalog


def _ramp(r, inner, outer):
    """1 on [0, inner], linear down to 0 at outer, 0 beyond."""
    return np.clip((outer - r) / (outer - inner), 0.0, 1.0)


def _dramp(r, inner, outer):
    return np.where((r > inner) & (r < outer), -1.0 / (outer - inner), 0.0)


def zero_drift(d=1, L=3.0) -> VectorField:
    return VectorField(
        name="zero", dim=d, func=lambda t, x: np.zeros_like(x), L=L, sup_bound=0.0, l2_bound=0.0,
        divergence=Divergence("analytic", lambda t, x: np.zeros(x.shape[:-1])), support=0.0,
        description="b = 0",
    )


def constant_drift(c, d=1, L=3.0) -> VectorField:
    c = np.broadcast_to(np.atleast_1d(np.asarray(c, float)), (d,)).copy()
    norm = float(np.linalg.norm(c))
    name = "const:" + ",".join(f"{v:g}" for v in (c if d > 1 and c[0] != c[1] else c[:1]))
    return VectorField(
        name=name, dim=d, func=lambda t, x: np.broadcast_to(c, x.shape).copy(), L=L,
        sup_bound=norm, l2_bound=norm * (2 * L) ** (d / 2),
        divergence=Divergence("analytic", lambda t, x: np.zeros(x.shape[:-1])),
        description=f"constant drift {c.tolist()} (not cut off: transport is an exact shift)",
    )


def ou_drift(d=1, L=3.0) -> VectorField:
    """``b = -x`` for ``|x| <= L/4``, linearly ramped to zero at ``L/2``."""
    R = L / 4

    def func(t, x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        scale = np.where(r <= R, 1.0, np.where(r < 2 * R, (2 * R - r) / np.maximum(r, 1e-300), 0.0))
        return -x * scale

    def div(t, x):
        r = np.linalg.norm(x, axis=-1)
        outer = 1.0 - (d - 1) * (2 * R - r) / np.maximum(r, 1e-300)
        return np.where(r <= R, -float(d), np.where(r < 2 * R, outer, 0.0))

    return VectorField(
        name="ou", dim=d, func=func, L=L, sup_bound=R, l2_bound=None,
        divergence=Divergence("analytic", div),
        breakpoints=((-2 * R, -R, R, 2 * R),) * d if d == 1 else (),
        support=2 * R,
        description=f"Ornstein-Uhlenbeck b=-x clipped at |x|={R:g}, zero beyond {2 * R:g}",
    )


def _signlike(name, d, L, profile, dprofile, sign, description, div_kind, atoms=()):
    a, outer = L / 3, L / 2

    def func(t, x):
        s = np.sign(x[..., 0])
        r = np.abs(x[..., 0])
        val = sign * s * profile(r) * _ramp(r, a, outer)
        if d == 2:
            val = val * _ramp(np.abs(x[..., 1]), a, outer)
        out = np.zeros_like(x)
        out[..., 0] = val
        return out

    def div(t, x):
        r = np.abs(x[..., 0])
        val = sign * (dprofile(r) * _ramp(r, a, outer) + profile(r) * _dramp(r, a, outer))
        if d == 2:
            val = val * _ramp(np.abs(x[..., 1]), a, outer)
        return val

    bps = ((-outer, -a, 0.0, a, outer),) + (((-outer, -a, a, outer),) if d == 2 else ())
    return VectorField(
        name=name, dim=d, func=func, L=L, sup_bound=1.0, l2_bound=None,
        divergence=Divergence(div_kind, div, atoms=atoms),
        breakpoints=bps, support=outer, description=description,
    )


def sign_drift(d=1, L=3.0, sign=1.0) -> VectorField:
    """``b = sign(x_1) e_1`` on ``|x_1| <= L/3``, ramped to zero at ``L/2``.

    Divergence ``2 delta_0`` (expanding, ``sign=+1``) or ``-2 delta_0``
    (compressive) plus a bounded part on the ramp.
    """
    name = "sign" if sign > 0 else "antisign"
    desc = ("expanding sign drift, non-unique deterministic characteristics" if sign > 0
            else "compressive sign drift, colliding characteristics")
    return _signlike(name, d, L, lambda r: np.ones_like(r), lambda r: np.zeros_like(r), sign, desc,
                     "distributional", atoms=((0.0, 2.0 * sign),))


def sqrt_sign_drift(d=1, L=3.0) -> VectorField:
    """``b = sign(x)|x/a|^{1/2}`` with ``a = L/3``: bounded, L2, divergence
    ``1/(2 sqrt(a|x|))`` in L1_loc but unbounded."""
    a = L / 3
    return _signlike(
        "sqrtsign", d, L,
        lambda r: np.sqrt(np.minimum(r, a) / a),
        lambda r: np.where(r < a, 0.5 / np.sqrt(a * np.maximum(r, 1e-300)), 0.0),
        1.0, "sign(x)|x|^(1/2): bounded, unbounded L1_loc divergence", "analytic",
    )


def _radial_bump(radius):
    def f(x):
        r2 = np.sum(x * x, axis=-1) / radius ** 2
        out = np.zeros(x.shape[:-1])
        m = r2 < 1
        out[m] = np.exp(1.0 - 1.0 / (1.0 - r2[m]))
        return out

    def g(x):
        r2 = np.sum(x * x, axis=-1) / radius ** 2
        out = np.zeros(x.shape)
        m = r2 < 1
        fac = np.zeros(x.shape[:-1])
        fac[m] = np.exp(1.0 - 1.0 / (1.0 - r2[m])) * (-2.0 / radius ** 2) / (1.0 - r2[m]) ** 2
        out[...] = fac[..., None] * x
        return out

    return f, g


def _l2(func, L, d, bps=()):
    xs, ws = _space_rule(L, d, bps)
    v = func(xs)
    return float(np.sqrt(np.sum(ws * v * v)))


def bump_initial(d=1, L=3.0, radius=0.5) -> ScalarField:
    f, g = _radial_bump(radius)
    return ScalarField(
        name="bump", dim=d, func=f, L=L, sup_bound=1.0, l2_bound=_l2(f, L, d),
        support=radius, gradient=g, description=f"smooth bump of radius {radius:g}, height 1",
    )


def gauss_initial(d=1, L=3.0, sigma=0.15, cut=0.6) -> ScalarField:
    def f(x):
        r2 = np.sum(x * x, axis=-1)
        return np.where(r2 <= cut * cut, np.exp(-0.5 * r2 / sigma ** 2), 0.0)

    def g(x):
        return (-x / sigma ** 2) * f(x)[..., None]

    bps = ((-cut, cut),) * d if d == 1 else ()
    return ScalarField(
        name="gauss", dim=d, func=f, L=L, sup_bound=1.0, l2_bound=_l2(f, L, d, bps), breakpoints=bps,
        support=cut, gradient=g, description=f"Gaussian sigma={sigma:g} clipped at |x|={cut:g}",
    )


def step_initial(d=1, L=3.0) -> ScalarField:
    def f(x):
        val = ((x[..., 0] >= 0) & (x[..., 0] <= 1)).astype(float)
        if d == 2:
            val = val * (np.abs(x[..., 1]) <= 0.5)
        return val

    bps = ((0.0, 1.0),) + (((-0.5, 0.5),) if d == 2 else ())
    return ScalarField(
        name="step", dim=d, func=f, L=L, sup_bound=1.0, l2_bound=1.0, breakpoints=bps, support=1.0,
        description="indicator of [0, 1] (jump at the origin)",
    )


def odd_initial(d=1, L=3.0, radius=0.5) -> ScalarField:
    fb, gb = _radial_bump(radius)

    def f(x):
        return x[..., 0] / radius * fb(x)

    def g(x):
        out = x[..., :1] / radius * gb(x)
        out[..., 0] += fb(x) / radius
        return out

    return ScalarField(
        name="odd", dim=d, func=f, L=L, sup_bound=1.0, l2_bound=_l2(f, L, d), support=radius,
        gradient=g, description="odd profile x * bump(x)",
    )


def one_initial(d=1, L=3.0) -> ScalarField:
    return ScalarField(
        name="one", dim=d, func=lambda x: np.ones(x.shape[:-1]), L=L, sup_bound=1.0,
        l2_bound=(2 * L) ** (d / 2), gradient=lambda x: np.zeros(x.shape),
        description="u0 = 1 (constant)",
    )


_DRIFTS: dict[str, tuple[Callable, str]] = {
    "zero": (lambda d, L: zero_drift(d, L), "bump"),
    "const": (lambda d, L, c=0.5: constant_drift(c, d, L), "bump"),
    "ou": (lambda d, L: ou_drift(d, L), "bump"),
    "sign": (lambda d, L: sign_drift(d, L, 1.0), "step"),
    "antisign": (lambda d, L: sign_drift(d, L, -1.0), "bump"),
    "sqrtsign": (lambda d, L: sqrt_sign_drift(d, L), "bump"),
}

_INITIAL: dict[str, Callable] = {
    "bump": bump_initial,
    "gauss": gauss_initial,
    "step": step_initial,
    "odd": odd_initial,
    "one": one_initial,
}


def drift_ids() -> list[str]:
    return list(_DRIFTS)


def initial_ids() -> list[str]:
    return list(_INITIAL)


def drift_from_id(spec: str, d: int = 1, L: float = 3.0) -> VectorField:
    """Catalog lookup: ``"sign"``, ``"ou"``, ``"const:0.5"``, ``"const:1,0"`` ..."""
    key, _, arg = spec.partition(":")
    if key not in _DRIFTS:
        raise KeyError(f"unknown drift id {spec!r}; known: {', '.join(_DRIFTS)}")
    make = _DRIFTS[key][0]
    if key == "const":
        if arg:
            vals = [float(v) for v in arg.split(",")]
            return make(d, L, vals if len(vals) > 1 else vals[0])
        return make(d, L)
    if arg:
        raise KeyError(f"drift {key!r} takes no argument")
    return make(d, L)


def default_initial(drift_spec: str) -> str:
    """Catalog initial datum paired with a drift id."""
    return _DRIFTS[drift_spec.partition(":")[0]][1]


def initial_from_id(spec: str, d: int = 1, L: float = 3.0) -> ScalarField:
    if spec not in _INITIAL:
        raise KeyError(f"unknown initial datum id {spec!r}; known: {', '.join(_INITIAL)}")
    return _INITIAL[spec](d, L)


def builtin_examples(d: int = 1, L: float = 3.0) -> dict[str, tuple[VectorField, ScalarField]]:
    """Catalog of ``(b, u0)`` pairs keyed by drift id."""
    return {key: (drift_from_id(key, d, L), initial_from_id(u0, d, L)) for key, (_, u0) in _DRIFTS.items()}
