"""Polynomial conserved quantities and Darboux/Bäcklund transforms.

A conserved quantity of the connection family d + t*eta is a polynomial
p(t) = p0 + p1 t + ... + pd t^d of vector fields with Gamma(t) p(t) = 0 for
every t.  Darboux transforms arise as Gamma(mu)-parallel null line fields;
when the initial line is orthogonal to p(mu) the transform is a Bäcklund
transform and the boosted quantity stays polynomial of degree at most d.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .pseudo import (
    CONFORMAL_3D,
    GeometryError,
    NullLine,
    PseudoVector,
    Signature,
    boost_matrix_arr,
    einf,
    inner_arr,
)
from .smooth import (
    ConnectionFamily,
    ParametrizedSurface,
    SampleGrid,
    SpaceFormVector,
    connection_family,
    cylinder,
    lift_vector,
    transport_array,
)

log = logging.getLogger(__name__)

TOL_CQ = 1e-6        # finite-difference conservation residual
TOL_H = 1e-6         # constancy of the mean curvature for CMC validation
TOL_POLYFIT = 1e-7   # relative polynomial-fit residual of transformed quantities
TOL_SINGULAR = 1e-8  # |(fhat, f)| below this flags a Bianchi-type singularity
_COEFF_EPS = 1e-8    # relative threshold for the fitted degree


class NonCMCError(GeometryError):
    """Surface mean curvature is not constant at the requested value."""


class NonPolynomialError(GeometryError):
    """Transformed conserved quantity failed the polynomial fit."""


class EmptyAdmissibleSetError(GeometryError):
    """No admissible Bäcklund initial lines exist for this parameter."""


class BianchiSingularityError(GeometryError):
    """Transport reached a point where the transform touches f^perp."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class PolyConservedQuantity:
    """Interface: coefficient fields of a polynomial parallel family."""

    degree: int
    sig: Signature

    def coeffs_at(self, u, v) -> np.ndarray:
        raise NotImplementedError

    def value(self, u, v, t: float) -> np.ndarray:
        coeffs = self.coeffs_at(u, v)
        powers = float(t) ** np.arange(self.degree + 1)
        return powers @ coeffs

    def values_on(self, grid: SampleGrid) -> np.ndarray:
        nu, nv = grid.shape
        out = np.empty((nu, nv, self.degree + 1, self.sig.dim))
        for iu in range(nu):
            for iv in range(nv):
                out[iu, iv] = self.coeffs_at(*grid.point(iu, iv))
        return out


class CallableConservedQuantity(PolyConservedQuantity):
    """Coefficients given by point evaluators (analytic quantities)."""

    def __init__(self, coeff_funcs, sig: Signature = CONFORMAL_3D):
        if not coeff_funcs:
            raise ValueError("need at least the degree-0 coefficient")
        self._funcs = list(coeff_funcs)
        self.degree = len(coeff_funcs) - 1
        self.sig = sig

    def coeffs_at(self, u, v) -> np.ndarray:
        return np.stack([np.asarray(f(u, v), dtype=float) for f in self._funcs])


class GridConservedQuantity(PolyConservedQuantity):
    """Coefficients known at the nodes of a sample grid only."""

    def __init__(self, grid: SampleGrid, values: np.ndarray,
                 sig: Signature = CONFORMAL_3D):
        values = np.asarray(values, dtype=float)
        nu, nv = grid.shape
        if values.ndim != 4 or values.shape[0] != nu or values.shape[1] != nv \
                or values.shape[3] != sig.dim:
            raise ValueError(f"bad coefficient array shape {values.shape}")
        self.grid = grid
        self.values = values
        self.degree = values.shape[2] - 1
        self.sig = sig

    def coeffs_at(self, u, v) -> np.ndarray:
        iu, iv = self.grid.index_of(u, v)
        return self.values[iu, iv]

    def values_on(self, grid: SampleGrid) -> np.ndarray:
        if grid is not self.grid and (
                not np.array_equal(grid.u_nodes, self.grid.u_nodes)
                or not np.array_equal(grid.v_nodes, self.grid.v_nodes)):
            raise ValueError("grid-backed quantity evaluated on a different grid")
        return self.values


def cmc_linear_cq(surface: ParametrizedSurface, mean_curvature: float,
                  q: SpaceFormVector, validate: bool = True, n_check: int = 7,
                  tol_h: float = TOL_H) -> CallableConservedQuantity:
    """Linear conserved quantity q + t Y of a CMC surface in the Euclidean
    chart.

    Y = nu + H sigma with nu = N + 2 (f, N) einf the normal lift; then
    (Y, Y) = 1, (Y, sigma) = 0 and (q, Y) = -H.  Requires q = 2 einf and a
    surface of constant mean curvature `mean_curvature` for its own normal.
    """
    sig = q.q_vec.sig
    if not np.allclose(q.q_vec.coords, 2.0 * einf(sig).coords):
        raise ValueError("the CMC quantity is defined in the Euclidean chart q = 2 einf")
    h_target = float(mean_curvature)
    if validate:
        u0, u1, v0, v1 = surface.domain
        for u in np.linspace(u0, u1, n_check):
            for v in np.linspace(v0, v1, n_check):
                h_val = surface.mean_curvature(u, v)
                if abs(h_val - h_target) > tol_h:
                    raise NonCMCError(
                        f"mean curvature {h_val:.8g} at {(u, v)} differs from "
                        f"{h_target:.8g} beyond {tol_h:.1e}"
                    )
    einf_coords = einf(sig).coords
    q_coords = q.q_vec.coords.copy()

    def p0(u, v):
        return q_coords

    def p1(u, v):
        f = surface.point(u, v)
        n = surface.normal(u, v)
        nu_lift = np.zeros(sig.dim)
        nu_lift[:3] = n
        nu_lift += 2.0 * float(np.dot(f, n)) * einf_coords
        return nu_lift + h_target * lift_vector(f, sig).coords

    return CallableConservedQuantity([p0, p1], sig)


def check_conserved(quantity: PolyConservedQuantity, connection: ConnectionFamily,
                    grid: SampleGrid, h_fd: float | None = None) -> float:
    """Max residual of the coefficient-wise conservation conditions on a grid.

    Checks d p0 = 0, d p_i + eta p_{i-1} = 0 and eta p_d = 0 by central
    differences with a small step at every grid node (both coordinate
    directions).
    """
    h = h_fd if h_fd is not None else connection.base.h_fd
    eta = connection.eta
    d = quantity.degree
    worst = 0.0
    for iu in range(grid.shape[0]):
        for iv in range(grid.shape[1]):
            u, v = grid.point(iu, iv)
            c0 = quantity.coeffs_at(u, v)
            cup = quantity.coeffs_at(u + h, v)
            cum = quantity.coeffs_at(u - h, v)
            cvp = quantity.coeffs_at(u, v + h)
            cvm = quantity.coeffs_at(u, v - h)
            du = (cup - cum) / (2.0 * h)
            dv = (cvp - cvm) / (2.0 * h)
            eu, ev = eta.matrices(u, v)
            for direction, diff in ((eu, du), (ev, dv)):
                worst = max(worst, float(np.max(np.abs(diff[0]))))
                for i in range(1, d + 1):
                    worst = max(worst, float(np.max(np.abs(diff[i] + direction @ c0[i - 1]))))
                worst = max(worst, float(np.max(np.abs(direction @ c0[d]))))
    return worst


@dataclass
class DarbouxTransform:
    """Gamma(mu)-parallel null line field seeded at a base point.

    `line_at` transports the initial line along the straight segment from
    the base point (path-independent by flatness) and caches results.
    Transport aborts with a located error when the line meets f^perp.
    """

    connection: ConnectionFamily
    mu: float
    line0: NullLine
    x0: tuple

    def __post_init__(self):
        if self.mu == 0.0 or not np.isfinite(self.mu):
            raise GeometryError("Darboux parameter must be finite and nonzero")
        base = self.connection.line_at(*self.x0)
        val = abs(inner_arr(self.line0.rep.coords, base.rep.coords, self.line0.sig))
        if val < TOL_SINGULAR:
            raise GeometryError("initial line is orthogonal to the surface at the base point")
        self._cache = {(float(self.x0[0]), float(self.x0[1])): self.line0}

    def line_at(self, u, v, n_chunks: int = 8) -> NullLine:
        key = (float(u), float(v))
        if key in self._cache:
            return self._cache[key]
        p0 = np.array(self.x0, dtype=float)
        p1 = np.array([u, v], dtype=float)
        rep = self.line0.rep.coords
        sig = self.line0.sig
        for k in range(n_chunks):
            a = p0 + (k / n_chunks) * (p1 - p0)
            b = p0 + ((k + 1) / n_chunks) * (p1 - p0)
            if np.linalg.norm(b - a) == 0.0:
                continue
            rep = transport_array(self.connection, self.mu, np.stack([a, b]), rep,
                                  renormalize=True)
            rep = rep / np.linalg.norm(rep)
            sigma = self.connection.line_at(*b)
            if abs(inner_arr(rep, sigma.rep.coords, sig)) < TOL_SINGULAR:
                raise BianchiSingularityError(
                    f"transform touches f^perp near {tuple(b)}", location=tuple(b))
        line = NullLine(PseudoVector(rep, sig), tol=1e-6)
        self._cache[key] = line
        return line


def darboux_transform(connection: ConnectionFamily, mu: float, fhat0: NullLine,
                      x0) -> DarbouxTransform:
    """Darboux transform of the connection's surface at parameter mu with
    initial line fhat0 at x0."""
    return DarbouxTransform(connection, float(mu), fhat0, tuple(x0))


class BacklundLineFamily:
    """Admissible initial lines {L null : (p(mu)(x0), L) = 0, (L, f(x0)) != 0}.

    The orthogonal complement of p(mu)(x0) is diagonalized once; sampling
    balances a random spacelike direction against a random timelike one.
    When p(mu)(x0) is null, the only orthogonal null line is its own span.
    """

    def __init__(self, anchor: np.ndarray, base_rep: np.ndarray,
                 sig: Signature = CONFORMAL_3D):
        anchor = np.asarray(anchor, dtype=float)
        norm = float(np.linalg.norm(anchor))
        if norm == 0.0:
            raise GeometryError("p(mu) vanishes at the base point")
        self.anchor = anchor
        self.base_rep = np.asarray(base_rep, dtype=float)
        self.sig = sig
        g = sig.metric
        _, _, vt = np.linalg.svd((anchor * g)[None, :])
        perp = vt[1:]
        gram = perp @ (perp * g).T
        w, vecs = np.linalg.eigh(gram)
        scale = float(np.max(np.abs(w)))
        band = 1e-10 * scale
        self._pos = np.stack([(vecs[:, i] @ perp) / np.sqrt(w[i])
                              for i in range(len(w)) if w[i] > band]) \
            if np.any(w > band) else np.empty((0, sig.dim))
        self._neg = np.stack([(vecs[:, i] @ perp) / np.sqrt(-w[i])
                              for i in range(len(w)) if w[i] < -band]) \
            if np.any(w < -band) else np.empty((0, sig.dim))
        self._null_dim = int(np.sum(np.abs(w) <= band))
        self.anchor_square = inner_arr(anchor, anchor, sig) / (norm * norm)

    @property
    def is_empty(self) -> bool:
        if len(self._pos) >= 1 and len(self._neg) >= 1:
            return False
        if self._null_dim >= 1:
            # span of the (null) anchor itself, admissible iff not orthogonal
            # to the base line
            return abs(inner_arr(self.anchor, self.base_rep, self.sig)) < TOL_SINGULAR
        return True

    def orthogonality(self, line: NullLine) -> float:
        return abs(inner_arr(self.anchor, line.rep.coords, self.sig)) / (
            np.linalg.norm(self.anchor))

    def sample(self, rng: np.random.Generator, min_base_pairing: float = 0.05,
               max_tries: int = 64) -> NullLine:
        """Draw an admissible initial line (deterministic given the rng)."""
        if len(self._pos) >= 1 and len(self._neg) >= 1:
            for _ in range(max_tries):
                c = rng.normal(size=len(self._pos))
                d = rng.normal(size=len(self._neg))
                cn = np.linalg.norm(c)
                dn = np.linalg.norm(d)
                if cn == 0.0 or dn == 0.0:
                    continue
                rep = (c / cn) @ self._pos + (d / dn) @ self._neg
                pairing = abs(inner_arr(rep, self.base_rep, self.sig)) / (
                    np.linalg.norm(rep) * np.linalg.norm(self.base_rep))
                if pairing > min_base_pairing:
                    return NullLine(PseudoVector(rep, self.sig))
            raise EmptyAdmissibleSetError(
                "no sampled line pairs against the base point; admissible set "
                "may be (numerically) empty")
        if self._null_dim >= 1:
            if abs(inner_arr(self.anchor, self.base_rep, self.sig)) >= TOL_SINGULAR:
                return NullLine(PseudoVector(self.anchor, self.sig))
        raise EmptyAdmissibleSetError(
            f"p(mu)^perp contains no null lines (anchor square "
            f"{self.anchor_square:.6g})")

    def sample_violating(self, rng: np.random.Generator, min_defect: float = 0.1,
                         max_tries: int = 256) -> NullLine:
        """Deliberately non-Bäcklund initial line: null, non-orthogonal to the
        base point, with a bounded-below pairing against p(mu)."""
        anchor_norm = np.linalg.norm(self.anchor)
        base_norm = np.linalg.norm(self.base_rep)
        n_chart = self.sig.dim - 2
        for _ in range(max_tries):
            rep = lift_vector(rng.normal(size=n_chart), self.sig).coords
            rep = rep / np.linalg.norm(rep)
            defect = abs(inner_arr(self.anchor, rep, self.sig)) / anchor_norm
            pairing = abs(inner_arr(rep, self.base_rep, self.sig)) / base_norm
            if defect > min_defect and pairing > 0.05:
                return NullLine(PseudoVector(rep, self.sig))
        raise GeometryError("could not draw a violating line")


def backlund_initial_lines(quantity: PolyConservedQuantity, mu: float, x0,
                           base_line: NullLine) -> BacklundLineFamily:
    """Admissible-set description and sampler for Bäcklund initial lines at x0.

    `base_line` is the surface's light-cone point f(x0); orthogonality seeded
    here propagates to every point because p(mu) and the transform are both
    Gamma(mu)-parallel.
    """
    anchor = quantity.value(x0[0], x0[1], float(mu))
    return BacklundLineFamily(anchor, base_line.rep.coords, quantity.sig)


# ---------------------------------------------------------------------------
# Gauge transform of conserved quantities


def fit_t_samples(mu: float, degree: int) -> np.ndarray:
    """Deterministic t-sample set for the polynomial fit, avoiding the pole
    at t = mu by at least 10% of |mu|."""
    base = [0.0, 0.25, -0.25, 0.5, -0.5, 0.75 * mu]
    extras = [0.35 * mu, -0.75 * mu, 1.5 * mu, -0.35 * mu]
    out = []
    for t in base + extras:
        if abs(t - mu) < 0.1 * abs(mu):
            continue
        if any(abs(t - s) < 1e-12 for s in out):
            continue
        out.append(t)
        if len(out) >= max(degree + 2, 6):
            break
    if len(out) < degree + 2:
        raise GeometryError(f"could not place {degree + 2} fit samples for mu={mu}")
    return np.array(out)


def boost_fit_point(coeffs: np.ndarray, f_rep: np.ndarray, fhat_rep: np.ndarray,
                    mu: float, sig: Signature, ts: np.ndarray | None = None):
    """Boost p(t) pointwise by the gauge (1 - t/mu) and refit a polynomial.

    Returns (new_coeffs, relative_residual, fitted_degree).  The residual is
    measured against the coefficient scale; a rational (non-Bäcklund) result
    shows up as a large residual.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    degree = coeffs.shape[0] - 1
    if ts is None:
        ts = fit_t_samples(mu, degree)
    powers = ts[:, None] ** np.arange(degree + 1)[None, :]
    samples = np.empty((len(ts), sig.dim))
    for i, t in enumerate(ts):
        lam = 1.0 - t / mu
        y = powers[i] @ coeffs
        samples[i] = boost_matrix_arr(f_rep, fhat_rep, lam, sig) @ y
    fit, *_ = np.linalg.lstsq(powers, samples, rcond=None)
    resid = float(np.max(np.abs(powers @ fit - samples)))
    coeff_scale = float(np.max(np.linalg.norm(fit, axis=1)))
    scale = max(coeff_scale, 1e-30)
    fitted_degree = 0
    for i in range(degree, -1, -1):
        if np.linalg.norm(fit[i]) > _COEFF_EPS * scale:
            fitted_degree = i
            break
    return fit, resid / scale, fitted_degree


class TransformedConservedQuantity(PolyConservedQuantity):
    """Conserved quantity of a Darboux transform, fitted pointwise."""

    def __init__(self, source: PolyConservedQuantity, transform: DarbouxTransform,
                 strict: bool = True, tol: float = TOL_POLYFIT):
        self.source = source
        self.transform = transform
        self.strict = strict
        self.tol = tol
        self.degree = source.degree
        self.sig = source.sig
        self.worst_residual = 0.0
        self.max_fitted_degree = 0

    def fit_info(self, u, v):
        f_rep = self.transform.connection.line_at(u, v).rep.coords
        fhat_rep = self.transform.line_at(u, v).rep.coords
        coeffs, resid, fdeg = boost_fit_point(
            self.source.coeffs_at(u, v), f_rep, fhat_rep, self.transform.mu, self.sig)
        self.worst_residual = max(self.worst_residual, resid)
        self.max_fitted_degree = max(self.max_fitted_degree, fdeg)
        if self.strict and resid > self.tol:
            raise NonPolynomialError(
                f"transformed quantity is not polynomial at {(u, v)}: fit "
                f"residual {resid:.3e} (initial line not orthogonal to p(mu)?)")
        return coeffs, resid, fdeg

    def coeffs_at(self, u, v) -> np.ndarray:
        return self.fit_info(u, v)[0]


def transform_cq(quantity: PolyConservedQuantity, transform: DarbouxTransform,
                 strict: bool = True,
                 tol: float = TOL_POLYFIT) -> TransformedConservedQuantity:
    """Conserved quantity of the Darboux transform via the pointwise boost.

    Verifies polynomiality (degree <= d) at the transform's base point right
    away; further points are checked as they are evaluated.  With `strict`
    the nonpolynomial case raises; otherwise residuals are recorded on the
    returned object.
    """
    out = TransformedConservedQuantity(quantity, transform, strict=strict, tol=tol)
    out.fit_info(*transform.x0)
    return out


def calibrate_eta_scale(surface: ParametrizedSurface | None = None,
                        mean_curvature: float | None = None,
                        candidates=(1.0, -1.0, 0.5, -0.5),
                        n_grid: int = 7) -> float:
    """Pick the retraction-form scale whose CMC quantity is best conserved.

    The self-test surface is the unit inward cylinder (H = 1/2); the scale
    found there is frozen as smooth.ETA_SCALE.
    """
    if surface is None:
        surface = cylinder()
        mean_curvature = 0.5
    if mean_curvature is None:
        raise ValueError("mean curvature required for a custom calibration surface")
    q = SpaceFormVector.euclidean(CONFORMAL_3D)
    quantity = cmc_linear_cq(surface, mean_curvature, q)
    u0, u1, v0, v1 = surface.domain
    pad_u = 0.05 * (u1 - u0)
    pad_v = 0.05 * (v1 - v0)
    grid = SampleGrid.regular((u0 + pad_u, u1 - pad_u), (v0 + pad_v, v1 - pad_v),
                              n_grid, n_grid)
    best = None
    best_res = np.inf
    for cand in candidates:
        conn = connection_family(surface, scale=cand)
        res = check_conserved(quantity, conn, grid)
        log.debug("eta scale candidate %s: conservation residual %.3e", cand, res)
        if res < best_res:
            best, best_res = cand, res
    return float(best)
