"""Discrete nets of light-cone points and their type-d certification.

A discrete surface is a map from a rectangle in Z^2 to the projective light
cone with a nonzero label per unoriented edge, constant across opposite
edges of every quad.  The edge connections are Lorentz boosts with
parameter 1 - t/label; isothermicity is flatness of those connections for
every t, and a degree-d polynomial conserved quantity propagating along all
edges certifies the net as special isothermic of type d.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .pseudo import (
    CONFORMAL_3D,
    GeometryError,
    NullLine,
    PseudoVector,
    Signature,
    boost_matrix_arr,
    inner_arr,
)
from .smooth import SpaceFormVector

log = logging.getLogger(__name__)

TOL_FLAT = 1e-6        # frame deviation of the two quad transports
TOL_EDGE_FIT = 1e-7    # relative polynomial-fit residual per edge
TOL_EDGE_MATCH = 1e-6  # relative coefficient agreement per edge
TOL_POLE = 1e-7        # relative pole-cancellation pairing per edge
TOL_CMC_CONST = 1e-6   # spread of the per-vertex mean curvature readout
FLATNESS_T_BASE = (0.31, 0.97, 1.73)

_EDGE_T_FACTORS = (0.0, 0.33, -0.5, 2.1, -1.7, 0.71, 3.3, -2.9)


class PoleError(GeometryError):
    """Connection evaluated at the pole t = m_ij of an edge."""


class MissingQuantityError(GeometryError):
    """Net carries no conserved quantity where one is required."""


class NonNormalizableError(GeometryError):
    """Conserved-quantity coefficients cannot be brought to the CMC form."""


class DiscreteNet:
    """Discrete surface on a full rectangle of Z^2 with edge labels.

    `reps` has shape (M+1, N+1, dim): normalized null representatives.
    `label_u[m]` labels every horizontal edge between columns m and m+1;
    `label_v[n]` labels every vertical edge between rows n and n+1 (so the
    unoriented labeling is constant across opposite edges of each quad by
    construction).  `cq` optionally holds per-vertex polynomial coefficients
    of shape (M+1, N+1, d+1, dim).
    """

    def __init__(self, reps, label_u, label_v, cq=None,
                 sig: Signature = CONFORMAL_3D, metadata: dict | None = None,
                 strict: bool = True):
        reps = np.asarray(reps, dtype=float)
        if reps.ndim != 3 or reps.shape[2] != sig.dim:
            raise ValueError(f"vertex array must be (M+1, N+1, {sig.dim})")
        self.reps = reps
        self.label_u = np.asarray(label_u, dtype=float)
        self.label_v = np.asarray(label_v, dtype=float)
        if self.label_u.shape != (reps.shape[0] - 1,):
            raise ValueError("horizontal label count must be M for M+1 columns")
        if self.label_v.shape != (reps.shape[1] - 1,):
            raise ValueError("vertical label count must be N for N+1 rows")
        self.cq = None if cq is None else np.asarray(cq, dtype=float)
        if self.cq is not None and self.cq.shape[:2] != reps.shape[:2]:
            raise ValueError("conserved-quantity array does not match the vertex grid")
        self.sig = sig
        self.metadata = dict(metadata or {})
        violations = self.validate_basic()
        if strict and violations:
            raise GeometryError("invalid net: " + "; ".join(violations))
        elif violations:
            self.metadata["violations"] = violations

    @property
    def shape(self):
        return self.reps.shape[:2]

    @property
    def degree(self):
        return None if self.cq is None else self.cq.shape[2] - 1

    def vertex(self, m: int, n: int) -> NullLine:
        return NullLine(PseudoVector(self.reps[m, n], self.sig), tol=1e-6)

    def edge_label(self, i, j) -> float:
        (m1, n1), (m2, n2) = i, j
        if abs(m1 - m2) + abs(n1 - n2) != 1:
            raise ValueError(f"{i}-{j} is not a grid edge")
        if n1 == n2:
            return float(self.label_u[min(m1, m2)])
        return float(self.label_v[min(n1, n2)])

    def edges(self):
        """Yield ((i, j), label) over all unoriented edges, i < j."""
        mp, np_ = self.shape
        for m in range(mp):
            for n in range(np_):
                if m + 1 < mp:
                    yield ((m, n), (m + 1, n)), float(self.label_u[m])
                if n + 1 < np_:
                    yield ((m, n), (m, n + 1)), float(self.label_v[n])

    def quads(self):
        """Yield ((i, j, k, l), a, b) with i=(m,n), j=(m+1,n), k=(m+1,n+1),
        l=(m,n+1)."""
        mp, np_ = self.shape
        for m in range(mp - 1):
            for n in range(np_ - 1):
                yield (((m, n), (m + 1, n), (m + 1, n + 1), (m, n + 1)),
                       float(self.label_u[m]), float(self.label_v[n]))

    def validate_basic(self) -> list[str]:
        """Invariant violations as human-readable strings (empty if none)."""
        out = []
        g = self.sig.metric
        norms = np.linalg.norm(self.reps, axis=2)
        if np.any(norms == 0.0):
            out.append("zero vertex representative")
            return out
        nullity = np.abs(np.einsum("mni,i,mni->mn", self.reps, g, self.reps))
        worst_null = float(np.max(nullity / norms**2))
        if worst_null > 1e-6:
            out.append(f"vertex representative off the light cone by {worst_null:.2e}")
        if np.any(self.label_u == 0.0) or np.any(self.label_v == 0.0):
            out.append("zero edge label")
        if not (np.all(np.isfinite(self.label_u)) and np.all(np.isfinite(self.label_v))):
            out.append("non-finite edge label")
        for (i, j), _ in self.edges():
            pairing = abs(inner_arr(self.reps[i], self.reps[j], self.sig))
            scale = norms[i] * norms[j]
            if pairing < 1e-10 * scale:
                out.append(f"adjacent vertices {i} and {j} are orthogonal")
        return out


def discrete_connection(net: DiscreteNet, edge, t: float) -> np.ndarray:
    """Matrix of the edge connection from i to j at parameter t.

    The Lorentz boost scaling F_j by 1 - t/m_ij and F_i by its inverse;
    identity at t = 0, and the reverse edge gives the inverse map.
    """
    i, j = edge
    m = net.edge_label(i, j)
    lam = 1.0 - t / m
    if abs(lam) < 1e-12:
        raise PoleError(f"connection on edge {i}-{j} has a pole at t = {m}")
    return boost_matrix_arr(net.reps[i], net.reps[j], lam, net.sig)


def pick_t_samples(labels, base=FLATNESS_T_BASE, frac: float = 0.1,
                   count: int | None = None) -> np.ndarray:
    """Scale the base t-sample set so every sample keeps a distance of at
    least `frac` times the smallest label gap from every pole."""
    labels = sorted(set(float(x) for x in np.atleast_1d(labels)))
    if not labels:
        return np.array(base)
    if len(labels) > 1:
        gap = min(b - a for a, b in zip(labels, labels[1:]))
    else:
        gap = abs(labels[0])
    margin = frac * gap
    base = np.array(base if count is None else base[:count])
    for k in range(200):
        ts = base * (1.0 + 0.037 * k)
        if all(min(abs(t - m) for m in labels) >= margin for t in ts):
            return ts
    raise GeometryError("could not place flatness t-samples away from the poles")


def quad_flatness_residual(ri, rj, rk, rl, a: float, b: float, ts,
                           sig: Signature = CONFORMAL_3D) -> float:
    """Max frame deviation of the two path compositions around one quad."""
    worst = 0.0
    for t in np.atleast_1d(ts):
        p1 = boost_matrix_arr(rj, rk, 1.0 - t / b, sig) @ \
            boost_matrix_arr(ri, rj, 1.0 - t / a, sig)
        p2 = boost_matrix_arr(rl, rk, 1.0 - t / a, sig) @ \
            boost_matrix_arr(ri, rl, 1.0 - t / b, sig)
        worst = max(worst, float(np.linalg.norm(p1 - p2) /
                                 max(1.0, np.linalg.norm(p1))))
    return worst


@dataclass
class FlatnessReport:
    t_samples: np.ndarray
    residuals: np.ndarray        # (M, N) per-quad max residual
    max_residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.max_residual <= self.tol)


def check_flatness(net: DiscreteNet, t_samples=None,
                   tol: float = TOL_FLAT) -> FlatnessReport:
    """Per-quad flatness of the discrete connections.

    Both path compositions around each quad are compared on a full frame at
    every t-sample; both sides are rational in t with poles only at the
    labels, so agreement at generic samples certifies agreement for all t.
    A net without quads is vacuously flat.
    """
    labels = np.concatenate([net.label_u, net.label_v])
    if t_samples is None:
        t_samples = pick_t_samples(labels) if labels.size else np.array(FLATNESS_T_BASE)
    t_samples = np.atleast_1d(np.asarray(t_samples, dtype=float))
    mp, np_ = net.shape
    residuals = np.zeros((max(mp - 1, 0), max(np_ - 1, 0)))
    for (i, j, k, l), a, b in net.quads():
        residuals[i[0], i[1]] = quad_flatness_residual(
            net.reps[i], net.reps[j], net.reps[k], net.reps[l], a, b,
            t_samples, net.sig)
    max_res = float(residuals.max()) if residuals.size else 0.0
    return FlatnessReport(t_samples, residuals, max_res, tol)


@dataclass
class EdgeReport:
    edge: tuple
    label: float
    fit_residual: float      # relative residual of the degree-d fit
    coeff_mismatch: float    # relative coefficient difference against P_j
    pole_residual: float     # |(P_i(m), F_j)| / |P_i(m)|
    fitted_degree: int

    def passed(self, tol_fit: float = TOL_EDGE_FIT,
               tol_match: float = TOL_EDGE_MATCH) -> bool:
        return self.fit_residual <= tol_fit and self.coeff_mismatch <= tol_match


@dataclass
class EdgePropertyReport:
    edges: list[EdgeReport] = field(default_factory=list)
    tol_fit: float = TOL_EDGE_FIT
    tol_match: float = TOL_EDGE_MATCH

    @property
    def passed(self) -> bool:
        return all(e.passed(self.tol_fit, self.tol_match) for e in self.edges)

    @property
    def max_fit_residual(self) -> float:
        return max((e.fit_residual for e in self.edges), default=0.0)

    @property
    def max_coeff_mismatch(self) -> float:
        return max((e.coeff_mismatch for e in self.edges), default=0.0)

    @property
    def max_pole_residual(self) -> float:
        return max((e.pole_residual for e in self.edges), default=0.0)

    @property
    def fitted_degree(self) -> int:
        return max((e.fitted_degree for e in self.edges), default=0)


def _edge_t_samples(m: float, degree: int) -> np.ndarray:
    n_needed = max(degree + 2, 4)
    ts = [m * f for f in _EDGE_T_FACTORS[:n_needed]]
    return np.array(ts)


def check_edge_property(net: DiscreteNet, tol_fit: float = TOL_EDGE_FIT,
                        tol_match: float = TOL_EDGE_MATCH) -> EdgePropertyReport:
    """Propagation of the conserved quantity across every edge.

    For each edge (i, j), evaluates the boosted polynomial at degree+2 or
    more t-samples away from the pole, fits a degree-d polynomial, and
    compares the fitted coefficients with the stored P_j.  Additionally
    reports the pole-cancellation pairing (P_i(m_ij), F_j), whose vanishing
    is the condition for the boosted quantity to stay polynomial.
    """
    if net.cq is None:
        raise MissingQuantityError("net carries no conserved quantity")
    d = net.degree
    report = EdgePropertyReport(tol_fit=tol_fit, tol_match=tol_match)
    g = net.sig.metric
    for (i, j), m in net.edges():
        ci = net.cq[i]
        cj = net.cq[j]
        ts = _edge_t_samples(m, d)
        powers = ts[:, None] ** np.arange(d + 1)[None, :]
        samples = np.empty((len(ts), net.sig.dim))
        for row, t in enumerate(ts):
            y = powers[row] @ ci
            samples[row] = boost_matrix_arr(net.reps[i], net.reps[j],
                                            1.0 - t / m, net.sig) @ y
        fit, *_ = np.linalg.lstsq(powers, samples, rcond=None)
        scale = max(float(np.max(np.linalg.norm(fit, axis=1))),
                    float(np.max(np.linalg.norm(cj, axis=1))), 1e-30)
        fit_res = float(np.max(np.abs(powers @ fit - samples))) / scale
        mismatch = float(np.max(np.abs(fit - cj))) / scale
        pim = (m ** np.arange(d + 1)) @ ci
        pole = abs(float(np.dot(pim * g, net.reps[j]))) / max(
            float(np.linalg.norm(pim)), 1e-30)
        fitted_degree = 0
        for k in range(d, -1, -1):
            if np.linalg.norm(fit[k]) > 1e-8 * scale:
                fitted_degree = k
                break
        report.edges.append(EdgeReport(
            (i, j), float(m), fit_res, mismatch, pole, fitted_degree))
    return report


@dataclass
class TypeDCertificate:
    """Machine-readable certification of a net as special isothermic."""

    flat: bool
    edge_property: bool | None      # None when no quantity is attached
    degree: int | None
    worst_residuals: dict
    tolerances: dict
    details: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.flat and bool(self.edge_property)

    def to_json_dict(self) -> dict:
        return {
            "flat": self.flat,
            "edge_property": self.edge_property,
            "degree": self.degree,
            "certified": self.certified,
            "worst_residuals": self.worst_residuals,
            "tolerances": self.tolerances,
            "details": self.details,
        }


def certify_type_d(net: DiscreteNet, t_samples=None, tol_flat: float = TOL_FLAT,
                   tol_fit: float = TOL_EDGE_FIT,
                   tol_match: float = TOL_EDGE_MATCH) -> TypeDCertificate:
    """Conjunction of the flatness and edge-property checks."""
    flat_report = check_flatness(net, t_samples=t_samples, tol=tol_flat)
    worst = {"flatness": flat_report.max_residual}
    tolerances = {"flatness": tol_flat}
    details = {
        "n_quads": int(flat_report.residuals.size),
        "t_samples": [float(t) for t in flat_report.t_samples],
        "shape": [int(s) for s in net.shape],
    }
    if net.cq is None:
        details["note"] = "no conserved quantity attached; type undetermined"
        return TypeDCertificate(flat_report.passed, None, None, worst,
                                tolerances, details)
    edge_report = check_edge_property(net, tol_fit=tol_fit, tol_match=tol_match)
    worst.update({
        "edge_fit": edge_report.max_fit_residual,
        "edge_coeff_mismatch": edge_report.max_coeff_mismatch,
        "pole_pairing": edge_report.max_pole_residual,
    })
    tolerances.update({"edge_fit": tol_fit, "edge_coeff_mismatch": tol_match})
    details["n_edges"] = len(edge_report.edges)
    details["failed_edges"] = [
        {"edge": [list(e.edge[0]), list(e.edge[1])], "fit_residual": e.fit_residual,
         "coeff_mismatch": e.coeff_mismatch}
        for e in edge_report.edges if not e.passed(tol_fit, tol_match)
    ]
    return TypeDCertificate(flat_report.passed, edge_report.passed,
                            edge_report.fitted_degree, worst, tolerances, details)


def discrete_cmc_readout(net: DiscreteNet, q: SpaceFormVector,
                         norm_tol: float = 1e-3) -> np.ndarray:
    """Per-vertex mean curvature -(q, P1) after CMC normalization.

    Each vertex's coefficients are rescaled so the degree-0 coefficient is
    exactly q; the degree-1 coefficient must then be a unit vector (checked
    within `norm_tol`).  For a valid discrete CMC net the returned values
    are constant.  Invariant under per-vertex rescaling of the quantity.
    """
    if net.cq is None:
        raise MissingQuantityError("net carries no conserved quantity")
    if net.degree != 1:
        raise GeometryError(f"CMC readout needs a degree-1 quantity, got {net.degree}")
    qc = q.q_vec.coords
    qq = float(np.dot(qc, qc))
    g = net.sig.metric
    mp, np_ = net.shape
    out = np.empty((mp, np_))
    for m in range(mp):
        for n in range(np_):
            c0 = net.cq[m, n, 0]
            s = float(np.dot(c0, qc)) / qq
            if abs(s) < 1e-12 or np.linalg.norm(c0 - s * qc) > 1e-6 * abs(s) * np.linalg.norm(qc):
                raise NonNormalizableError(
                    f"degree-0 coefficient at {(m, n)} is not proportional to q")
            p1 = net.cq[m, n, 1] / s
            p1_sq = inner_arr(p1, p1, net.sig)
            if abs(p1_sq - 1.0) > norm_tol:
                raise NonNormalizableError(
                    f"degree-1 coefficient at {(m, n)} has square {p1_sq:.6g}, "
                    "cannot normalize to the CMC form")
            out[m, n] = -inner_arr(qc, p1, net.sig)
    return out
