"""Smooth isothermic surfaces in the light-cone model.

A surface given in conformal curvature-line coordinates is lifted to the
light cone, its Christoffel dual supplies a closed retraction 1-form eta
valued in f ∧ f^perp, and the family of connections d + t*eta is flat for
every t.  Parallel transport of that family is integrated numerically with
a classical 4th-order one-step scheme.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .pseudo import (
    CONFORMAL_3D,
    Bivector,
    GeometryError,
    NullLine,
    PseudoVector,
    Signature,
    e0,
    einf,
    inner,
)

log = logging.getLogger(__name__)

# Validation and integration bands.
TOL_COORD = 1e-7       # conformal curvature-line coordinate residuals
TOL_UMB = 1e-6         # |k1 - k2| must exceed this (umbilic-free)
TOL_METRIC = 1e-12     # conformal factor must exceed this
TOL_CLOSED = 1e-6      # finite-difference closedness of eta
H_FD = 1e-4            # central-difference step for derivative fallbacks
ODE_STEP_FACTOR = 1e-3  # integrator step = factor * path length
RENORM_EVERY = 32      # renormalization schedule for transported null lines

#: Frozen scale of the retraction form, calibrated once on the unit cylinder
#: so the cylinder's linear conserved quantity is exactly parallel (see
#: transforms.calibrate_eta_scale; candidates tried are +-1, +-1/2).
ETA_SCALE = -0.5


class NonIsothermicError(GeometryError):
    """Surface rejected by the conformal curvature-line validator."""


class DomainError(GeometryError):
    """A path or point leaves the surface's parameter domain."""


class PointAtInfinityError(GeometryError):
    """A light-cone point is orthogonal to the space form vector."""


@dataclass(frozen=True)
class SpaceFormVector:
    """Nonzero vector q determining the space form {X in L : (X,q) = -1}."""

    q_vec: PseudoVector

    def __post_init__(self):
        if self.q_vec.euclidean_norm() == 0.0:
            raise ValueError("space form vector must be nonzero")

    @classmethod
    def euclidean(cls, sig: Signature = CONFORMAL_3D) -> "SpaceFormVector":
        return cls(2.0 * einf(sig))


def lift_vector(x, sig: Signature = CONFORMAL_3D) -> PseudoVector:
    """Raw light-cone lift e0 + x + |x|^2 einf of a chart point.

    Coordinates (x_1..x_p, (1-|x|^2)/2, (1+|x|^2)/2); satisfies (s,s) = 0 and
    (s, 2 einf) = -1 identically.
    """
    x = np.asarray(x, dtype=float)
    n_chart = sig.dim - 2
    if x.shape != (n_chart,):
        raise ValueError(f"chart point needs {n_chart} coordinates, got {x.shape}")
    g_chart = sig.metric[:n_chart]
    s = float(np.dot(x * g_chart, x))
    coords = np.empty(sig.dim)
    coords[:n_chart] = x
    coords[-2] = (1.0 - s) / 2.0
    coords[-1] = (1.0 + s) / 2.0
    return PseudoVector(coords, sig)


def euclidean_lift(x, sig: Signature = CONFORMAL_3D) -> NullLine:
    """Projective light-cone point of a chart point of the space form."""
    return NullLine(lift_vector(x, sig))


def project_to_spaceform(f: NullLine, q: SpaceFormVector) -> np.ndarray:
    """Chart coordinates of the space-form point of a null line.

    Rescales the representative X so (X, q) = -1 and returns the leading
    chart coordinates; inverts `euclidean_lift` when q = 2 einf.
    """
    s = inner(f.rep, q.q_vec)
    if abs(s) < 1e-12:
        raise PointAtInfinityError("line is orthogonal to the space form vector")
    coords = f.rep.coords / (-s)
    return coords[: f.sig.dim - 2].copy()


def _fd1(func, u, v, h):
    du = (np.asarray(func(u + h, v), float) - np.asarray(func(u - h, v), float)) / (2 * h)
    dv = (np.asarray(func(u, v + h), float) - np.asarray(func(u, v - h), float)) / (2 * h)
    return du, dv


class ParametrizedSurface:
    """Immersion (u,v) -> R^3 in conformal curvature-line coordinates.

    `immersion` maps a parameter pair to a 3-vector.  Analytic first/second
    derivative evaluators may be supplied; otherwise central finite
    differences with step `h_fd` are used.  `normal_sign` selects the unit
    normal as +-(f_u x f_v)/|f_u x f_v|, which fixes the sign of the mean
    curvature.  Construction runs the coordinate validator unless disabled.
    """

    def __init__(self, immersion, domain, derivative=None, second_derivative=None,
                 normal_sign: int = 1, h_fd: float | None = None, name: str = "",
                 eta_scale: float | None = None, validate: bool = True,
                 validate_n: int = 9):
        self.immersion = immersion
        self.domain = tuple(float(t) for t in domain)  # (u0, u1, v0, v1)
        if not (self.domain[0] < self.domain[1] and self.domain[2] < self.domain[3]):
            raise ValueError("domain must be a nondegenerate rectangle (u0,u1,v0,v1)")
        self._derivative = derivative
        self._second = second_derivative
        if normal_sign not in (1, -1):
            raise ValueError("normal_sign must be +1 or -1")
        self.normal_sign = normal_sign
        scale = max(self.domain[1] - self.domain[0], self.domain[3] - self.domain[2])
        self.h_fd = h_fd if h_fd is not None else H_FD * scale
        self.name = name
        #: per-surface scale of the retraction form; None = package default
        self.eta_scale = eta_scale
        if validate:
            self.validate(n=validate_n)

    def contains(self, u, v, slack: float = 0.0) -> bool:
        u0, u1, v0, v1 = self.domain
        return (u0 - slack <= u <= u1 + slack) and (v0 - slack <= v <= v1 + slack)

    def point(self, u, v) -> np.ndarray:
        return np.asarray(self.immersion(u, v), dtype=float)

    def derivs(self, u, v):
        if self._derivative is not None:
            fu, fv = self._derivative(u, v)
            return np.asarray(fu, float), np.asarray(fv, float)
        return _fd1(self.immersion, u, v, self.h_fd)

    def second_derivs(self, u, v):
        if self._second is not None:
            fuu, fuv, fvv = self._second(u, v)
            return np.asarray(fuu, float), np.asarray(fuv, float), np.asarray(fvv, float)
        h = self.h_fd
        p = self.point
        fuu = (p(u + h, v) - 2 * p(u, v) + p(u - h, v)) / h**2
        fvv = (p(u, v + h) - 2 * p(u, v) + p(u, v - h)) / h**2
        fuv = (p(u + h, v + h) - p(u + h, v - h) - p(u - h, v + h) + p(u - h, v - h)) / (4 * h**2)
        return fuu, fuv, fvv

    def conformal_factor(self, u, v) -> float:
        """e^{2 omega} = |f_u|^2 (equals |f_v|^2 in conformal coordinates)."""
        fu, _ = self.derivs(u, v)
        return float(np.dot(fu, fu))

    def normal(self, u, v) -> np.ndarray:
        fu, fv = self.derivs(u, v)
        n = np.cross(fu, fv)
        norm = np.linalg.norm(n)
        if norm < TOL_METRIC:
            raise NonIsothermicError(f"degenerate tangent plane at {(u, v)}")
        return self.normal_sign * n / norm

    def principal_curvatures(self, u, v):
        """(k1, k2) along the u- and v-coordinate directions."""
        fu, fv = self.derivs(u, v)
        fuu, _, fvv = self.second_derivs(u, v)
        n = self.normal(u, v)
        e2w = float(np.dot(fu, fu))
        if e2w < TOL_METRIC:
            raise NonIsothermicError(f"degenerate metric at {(u, v)}")
        return float(np.dot(fuu, n)) / e2w, float(np.dot(fvv, n)) / float(np.dot(fv, fv))

    def mean_curvature(self, u, v) -> float:
        k1, k2 = self.principal_curvatures(u, v)
        return 0.5 * (k1 + k2)

    def validate(self, n: int = 9, tol_coord: float = TOL_COORD,
                 tol_umb: float = TOL_UMB) -> None:
        """Reject surfaces that are not umbilic-free isothermic immersions.

        Checks, on an n x n sample grid: E = G and F = 0 of the first
        fundamental form, vanishing off-diagonal second fundamental form,
        a nondegenerate conformal factor, and |k1 - k2| > tol_umb.
        """
        u0, u1, v0, v1 = self.domain
        us = np.linspace(u0, u1, n)
        vs = np.linspace(v0, v1, n)
        worst = {"F_I": 0.0, "EG": 0.0, "F_II": 0.0}
        for u in us:
            for v in vs:
                fu, fv = self.derivs(u, v)
                e_ = float(np.dot(fu, fu))
                g_ = float(np.dot(fv, fv))
                if e_ < TOL_METRIC or g_ < TOL_METRIC:
                    raise NonIsothermicError(f"degenerate metric at {(u, v)}")
                scale = max(e_, g_)
                worst["F_I"] = max(worst["F_I"], abs(float(np.dot(fu, fv))) / scale)
                worst["EG"] = max(worst["EG"], abs(e_ - g_) / scale)
                _, fuv, _ = self.second_derivs(u, v)
                nvec = self.normal(u, v)
                worst["F_II"] = max(worst["F_II"], abs(float(np.dot(fuv, nvec))) / scale)
                k1, k2 = self.principal_curvatures(u, v)
                if abs(k1 - k2) <= tol_umb:
                    raise NonIsothermicError(
                        f"umbilic point at {(u, v)}: k1 = {k1:.6g}, k2 = {k2:.6g}"
                    )
        for key, value in worst.items():
            if value > tol_coord:
                raise NonIsothermicError(
                    "not conformal curvature-line coordinates: "
                    f"residual {key} = {value:.3e} exceeds {tol_coord:.1e}"
                )


def christoffel_dual_diff(surface: ParametrizedSurface, u, v):
    """Partial derivatives (f*_u, f*_v) = (e^{-2w} f_u, -e^{-2w} f_v) of the
    Christoffel dual surface."""
    fu, fv = surface.derivs(u, v)
    e2w = float(np.dot(fu, fu))
    if e2w < TOL_METRIC:
        raise NonIsothermicError(f"degenerate metric at {(u, v)}")
    return fu / e2w, -fv / e2w


def dual_integrability_residual(surface: ParametrizedSurface, n: int = 9,
                                h: float | None = None) -> float:
    """Max |d_v f*_u - d_u f*_v| over an interior sample grid (mixed-partial
    integrability of the dual differential; zero exactly on isothermic
    parametrizations)."""
    h = h if h is not None else surface.h_fd
    u0, u1, v0, v1 = surface.domain
    us = np.linspace(u0 + 2 * h, u1 - 2 * h, n)
    vs = np.linspace(v0 + 2 * h, v1 - 2 * h, n)
    worst = 0.0
    for u in us:
        for v in vs:
            dv_su = (christoffel_dual_diff(surface, u, v + h)[0]
                     - christoffel_dual_diff(surface, u, v - h)[0]) / (2 * h)
            du_sv = (christoffel_dual_diff(surface, u + h, v)[1]
                     - christoffel_dual_diff(surface, u - h, v)[1]) / (2 * h)
            worst = max(worst, float(np.max(np.abs(dv_su - du_sv))))
    return worst


class RetractionForm:
    """Closed 1-form eta with values in f ∧ f^perp.

    eta(X) = scale * sigma ∧ w(X) with sigma the raw light-cone lift and
    w(X) = df*(X) + 2 (f, df*(X)) einf the lift differential of the
    Christoffel dual, corrected so (sigma, w(X)) = 0.
    """

    def __init__(self, surface: ParametrizedSurface, scale: float,
                 sig: Signature = CONFORMAL_3D):
        if scale == 0.0:
            raise ValueError("retraction form scale must be nonzero")
        self.surface = surface
        self.scale = float(scale)
        self.sig = sig
        self._einf = einf(sig).coords
        self._n_chart = sig.dim - 2

    def sigma(self, u, v) -> np.ndarray:
        return lift_vector(self.surface.point(u, v), self.sig).coords

    def w_vectors(self, u, v):
        """Corrected dual differentials (w_u, w_v), each orthogonal to sigma."""
        f = self.surface.point(u, v)
        su, sv = christoffel_dual_diff(self.surface, u, v)
        wu = np.zeros(self.sig.dim)
        wv = np.zeros(self.sig.dim)
        wu[: self._n_chart] = su
        wv[: self._n_chart] = sv
        wu += 2.0 * float(np.dot(f, su)) * self._einf
        wv += 2.0 * float(np.dot(f, sv)) * self._einf
        return wu, wv

    def _component(self, u, v, which: int) -> Bivector:
        s = PseudoVector(self.sigma(u, v), self.sig)
        w = PseudoVector(self.w_vectors(u, v)[which], self.sig)
        return Bivector(((self.scale * s, w),), self.sig)

    def eta_u(self, u, v) -> Bivector:
        return self._component(u, v, 0)

    def eta_v(self, u, v) -> Bivector:
        return self._component(u, v, 1)

    def matrices(self, u, v):
        """Matrices of eta(d/du) and eta(d/dv) at a point."""
        g = self.sig.metric
        s = self.sigma(u, v)
        wu, wv = self.w_vectors(u, v)
        sg = s * g
        mu_ = self.scale * (np.outer(wu, sg) - np.outer(s, wu * g))
        mv_ = self.scale * (np.outer(wv, sg) - np.outer(s, wv * g))
        return mu_, mv_

    def matrix(self, u, v, du, dv) -> np.ndarray:
        """Matrix of eta(du d/du + dv d/dv)."""
        mu_, mv_ = self.matrices(u, v)
        return du * mu_ + dv * mv_

    def closedness_residual(self, n: int = 12, h: float | None = None) -> float:
        """Max matrix norm of the finite-difference curl d_u eta_v - d_v eta_u
        over an interior sample grid."""
        h = h if h is not None else self.surface.h_fd
        u0, u1, v0, v1 = self.surface.domain
        us = np.linspace(u0 + 2 * h, u1 - 2 * h, n)
        vs = np.linspace(v0 + 2 * h, v1 - 2 * h, n)
        worst = 0.0
        for u in us:
            for v in vs:
                du_ev = (self.matrices(u + h, v)[1] - self.matrices(u - h, v)[1]) / (2 * h)
                dv_eu = (self.matrices(u, v + h)[0] - self.matrices(u, v - h)[0]) / (2 * h)
                worst = max(worst, float(np.max(np.abs(du_ev - dv_eu))))
        return worst

    def max_operator_norm(self, n: int = 8) -> float:
        u0, u1, v0, v1 = self.surface.domain
        worst = 0.0
        for u in np.linspace(u0, u1, n):
            for v in np.linspace(v0, v1, n):
                mu_, mv_ = self.matrices(u, v)
                worst = max(worst, float(np.linalg.norm(mu_)), float(np.linalg.norm(mv_)))
        return worst


def retraction_form(surface: ParametrizedSurface, scale: float | None = None,
                    sig: Signature = CONFORMAL_3D) -> RetractionForm:
    """Retraction form of a validated surface.

    With scale None, uses the surface's own eta scale when set (the surface
    zoo attaches one) and the frozen package calibration otherwise.
    """
    if scale is None:
        scale = surface.eta_scale if surface.eta_scale is not None else ETA_SCALE
    return RetractionForm(surface, scale, sig)


@dataclass(frozen=True)
class ConnectionFamily:
    """Family of flat metric connections d + t*eta of an isothermic surface."""

    eta: RetractionForm
    base: ParametrizedSurface

    @property
    def sig(self) -> Signature:
        return self.eta.sig

    def lift_at(self, u, v) -> np.ndarray:
        return self.eta.sigma(u, v)

    def line_at(self, u, v) -> NullLine:
        return NullLine(PseudoVector(self.eta.sigma(u, v), self.sig))


def connection_family(surface: ParametrizedSurface, scale: float | None = None,
                      sig: Signature = CONFORMAL_3D) -> ConnectionFamily:
    return ConnectionFamily(retraction_form(surface, scale, sig), surface)


def _path_segments(path: np.ndarray):
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or path.shape[1] != 2 or path.shape[0] < 2:
        raise ValueError("path must be a polyline of shape (k, 2) with k >= 2")
    segs = []
    for i in range(len(path) - 1):
        p, q = path[i], path[i + 1]
        length = float(np.linalg.norm(q - p))
        if length > 0.0:
            segs.append((p, q, length))
    if not segs:
        raise ValueError("path has zero length")
    return segs


def _rk4_step(y, a0, a1, a2, h):
    k1 = a0 @ y
    k2 = a1 @ (y + (h / 2.0) * k1)
    k3 = a1 @ (y + (h / 2.0) * k2)
    k4 = a2 @ (y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def transport_array(connection: ConnectionFamily, t: float, path, y0: np.ndarray,
                    h_ode: float | None = None, renormalize: bool = False,
                    check_domain: bool = True) -> np.ndarray:
    """Solve dY/ds = -t * eta(path'(s)) Y along a polyline.

    `y0` may be a vector or a matrix of frame columns.  With t = 0 the input
    is returned unchanged.  `renormalize` rescales to unit Euclidean norm on
    the renormalization schedule (null-line transport only).
    """
    segs = _path_segments(np.asarray(path, dtype=float))
    if check_domain:
        for p, q, _ in segs:
            for pt in (p, q):
                if not connection.base.contains(*pt, slack=1e-12):
                    raise DomainError(f"path point {tuple(pt)} outside domain")
    if t == 0.0:
        return np.array(y0, dtype=float)
    total = sum(s[2] for s in segs)
    h_target = h_ode if h_ode is not None else ODE_STEP_FACTOR * total
    y = np.array(y0, dtype=float)
    eta = connection.eta
    count = 0
    for p, q, length in segs:
        n_steps = max(1, int(np.ceil(length / h_target)))
        h = length / n_steps
        direction = (q - p) / length
        du, dv = direction
        a_prev = -t * eta.matrix(p[0], p[1], du, dv)
        for k in range(n_steps):
            s_mid = (k + 0.5) * h
            s_end = (k + 1.0) * h
            pm = p + s_mid * direction
            pe = p + s_end * direction
            a_mid = -t * eta.matrix(pm[0], pm[1], du, dv)
            a_end = -t * eta.matrix(pe[0], pe[1], du, dv)
            y = _rk4_step(y, a_prev, a_mid, a_end, h)
            a_prev = a_end
            count += 1
            if renormalize and count % RENORM_EVERY == 0:
                y = y / np.linalg.norm(y)
    return y


def parallel_transport(connection: ConnectionFamily, t: float, path,
                       y0: PseudoVector, h_ode: float | None = None) -> PseudoVector:
    """Parallel transport of a vector for the connection d + t*eta."""
    out = transport_array(connection, t, path, y0.coords, h_ode=h_ode)
    return PseudoVector(out, y0.sig)


def transport_line(connection: ConnectionFamily, t: float, path, line: NullLine,
                   h_ode: float | None = None) -> NullLine:
    """Parallel transport of a null line (projective, renormalized)."""
    out = transport_array(connection, t, path, line.rep.coords, h_ode=h_ode,
                          renormalize=True)
    return NullLine(PseudoVector(out, line.sig), tol=1e-6)


def transport_matrix(connection: ConnectionFamily, t: float, path,
                     h_ode: float | None = None) -> np.ndarray:
    """Full-frame transport matrix along a polyline."""
    return transport_array(connection, t, path, np.eye(connection.sig.dim),
                           h_ode=h_ode)


@dataclass
class HolonomyReport:
    """Per-(t, loop) frame deviations from the identity."""

    deviations: list = field(default_factory=list)  # (t, loop_index, deviation)
    max_deviation: float = 0.0

    def add(self, t, loop_index, dev):
        self.deviations.append((t, loop_index, dev))
        self.max_deviation = max(self.max_deviation, dev)


def flatness_check(connection: ConnectionFamily, t_samples, loops,
                   h_ode: float | None = None) -> HolonomyReport:
    """Transport a full frame around closed loops; flat connections return it.

    Each loop is a closed polyline (first point repeated last, or closed
    automatically).  Reports the Frobenius deviation of the holonomy from
    the identity for every (t, loop) pair.
    """
    report = HolonomyReport()
    dim = connection.sig.dim
    for li, loop in enumerate(loops):
        loop = np.asarray(loop, dtype=float)
        if np.linalg.norm(loop[0] - loop[-1]) > 0.0:
            loop = np.vstack([loop, loop[0]])
        for t in t_samples:
            mat = transport_array(connection, t, loop, np.eye(dim), h_ode=h_ode)
            report.add(float(t), li, float(np.linalg.norm(mat - np.eye(dim))))
    return report


def rectangle_loop(u0, v0, du, dv) -> np.ndarray:
    return np.array([[u0, v0], [u0 + du, v0], [u0 + du, v0 + dv], [u0, v0 + dv], [u0, v0]])


@dataclass(frozen=True)
class SampleGrid:
    """Rectangular (u,v) sample grid shared by lattice-level computations."""

    u_nodes: np.ndarray
    v_nodes: np.ndarray

    @classmethod
    def regular(cls, u_range, v_range, nu: int, nv: int) -> "SampleGrid":
        if nu < 2 or nv < 2:
            raise ValueError("grid needs at least 2 nodes per direction")
        return cls(np.linspace(u_range[0], u_range[1], nu),
                   np.linspace(v_range[0], v_range[1], nv))

    @property
    def shape(self):
        return (len(self.u_nodes), len(self.v_nodes))

    @property
    def center_index(self):
        return (len(self.u_nodes) // 2, len(self.v_nodes) // 2)

    def point(self, iu: int, iv: int):
        return float(self.u_nodes[iu]), float(self.v_nodes[iv])

    def index_of(self, u, v, tol: float = 1e-9):
        iu = int(np.argmin(np.abs(self.u_nodes - u)))
        iv = int(np.argmin(np.abs(self.v_nodes - v)))
        if abs(self.u_nodes[iu] - u) > tol or abs(self.v_nodes[iv] - v) > tol:
            raise DomainError(f"({u}, {v}) is not a grid node")
        return iu, iv

    def diameter(self) -> float:
        return float(np.hypot(self.u_nodes[-1] - self.u_nodes[0],
                              self.v_nodes[-1] - self.v_nodes[0]))


class GridTransport:
    """Cached frame transports from a base node to every node of a grid.

    The grid is swept along a spanning tree (base row first, then columns);
    the retraction-form matrices along every tree edge are sampled once, so
    transports at a new t reduce to matrix integration over cached samples.
    """

    def __init__(self, connection: ConnectionFamily, grid: SampleGrid,
                 base_index=None, h_step: float | None = None):
        self.connection = connection
        self.grid = grid
        self.base_index = tuple(base_index) if base_index is not None else grid.center_index
        self.h_step = h_step if h_step is not None else 5e-4 * grid.diameter()
        self._edges = []   # (parent_index, child_index, h, E_samples)
        self._frames: dict[float, np.ndarray] = {}
        self._build_tree()

    def _sample_edge(self, p, q):
        length = float(np.linalg.norm(np.subtract(q, p)))
        n_steps = max(1, int(np.ceil(length / self.h_step)))
        h = length / n_steps
        direction = (np.subtract(q, p)) / length
        du, dv = float(direction[0]), float(direction[1])
        eta = self.connection.eta
        samples = np.empty((2 * n_steps + 1, self.connection.sig.dim, self.connection.sig.dim))
        for j in range(2 * n_steps + 1):
            pt = np.add(p, (j * h / 2.0) * direction)
            samples[j] = eta.matrix(pt[0], pt[1], du, dv)
        return h, samples

    def _build_tree(self):
        nu, nv = self.grid.shape
        iu0, iv0 = self.base_index
        if not (0 <= iu0 < nu and 0 <= iv0 < nv):
            raise ValueError("base index outside grid")

        def add_edge(i_from, i_to):
            p = self.grid.point(*i_from)
            q = self.grid.point(*i_to)
            h, samples = self._sample_edge(p, q)
            self._edges.append((i_from, i_to, h, samples))

        for iu in range(iu0 + 1, nu):
            add_edge((iu - 1, iv0), (iu, iv0))
        for iu in range(iu0 - 1, -1, -1):
            add_edge((iu + 1, iv0), (iu, iv0))
        for iu in range(nu):
            for iv in range(iv0 + 1, nv):
                add_edge((iu, iv - 1), (iu, iv))
            for iv in range(iv0 - 1, -1, -1):
                add_edge((iu, iv + 1), (iu, iv))

    def frames(self, t: float) -> np.ndarray:
        """Array (nu, nv, dim, dim) of transports base -> node at parameter t."""
        t = float(t)
        if t in self._frames:
            return self._frames[t]
        nu, nv = self.grid.shape
        dim = self.connection.sig.dim
        out = np.empty((nu, nv, dim, dim))
        out[self.base_index] = np.eye(dim)
        if t == 0.0:
            out[:] = np.eye(dim)
        else:
            for i_from, i_to, h, samples in self._edges:
                mat = np.eye(dim)
                n_steps = (len(samples) - 1) // 2
                for k in range(n_steps):
                    a0 = -t * samples[2 * k]
                    a1 = -t * samples[2 * k + 1]
                    a2 = -t * samples[2 * k + 2]
                    mat = _rk4_step(mat, a0, a1, a2, h)
                out[i_to] = mat @ out[i_from]
        self._frames[t] = out
        return out


# ---------------------------------------------------------------------------
# Surface zoo


def cylinder(radius: float = 1.0, orientation: str = "inward",
             domain=(-1.5, 1.5, -1.5, 1.5)) -> ParametrizedSurface:
    """Circular cylinder (r cos u, r sin u, r v) in conformal curvature-line
    coordinates.

    The inward orientation has principal curvatures (1/r, 0) and mean
    curvature 1/(2r); outward flips both signs.  The natural retraction-form
    scale for the attached linear conserved quantity is -+ r/2.
    """
    r = float(radius)
    if r <= 0.0:
        raise ValueError("radius must be positive")
    if orientation not in ("inward", "outward"):
        raise ValueError("orientation must be 'inward' or 'outward'")
    sign = -1 if orientation == "inward" else 1

    def immersion(u, v):
        return np.array([r * np.cos(u), r * np.sin(u), r * v])

    def derivative(u, v):
        return (np.array([-r * np.sin(u), r * np.cos(u), 0.0]),
                np.array([0.0, 0.0, r]))

    def second(u, v):
        return (np.array([-r * np.cos(u), -r * np.sin(u), 0.0]),
                np.zeros(3), np.zeros(3))

    eta_scale = -0.5 * r if orientation == "inward" else 0.5 * r
    return ParametrizedSurface(
        immersion, domain, derivative=derivative, second_derivative=second,
        normal_sign=sign, name=f"cylinder(r={r},{orientation})",
        eta_scale=eta_scale,
    )


SURFACE_ZOO = {"cylinder": cylinder}


def surface_by_name(name: str, **params) -> ParametrizedSurface:
    try:
        factory = SURFACE_ZOO[name]
    except KeyError:
        raise ValueError(f"unknown surface {name!r}; available: {sorted(SURFACE_ZOO)}")
    return factory(**params)
