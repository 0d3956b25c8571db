"""Bianchi permutability and lattices of Bäcklund transforms.

The first row and column of the lattice are built by parallel transport of
admissible initial lines (the ODE route); every interior surface is closed
up algebraically from three known neighbors by the permutability solve, and
carries its conserved quantity across either leg by the pointwise gauge
boost.  Sampling every lattice surface at one parameter point yields a
discrete net ready for type-d certification.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .discrete import DiscreteNet, pick_t_samples, quad_flatness_residual
from .pseudo import (
    CONFORMAL_3D,
    GeometryError,
    NullLine,
    OrthogonalLinesError,
    PseudoVector,
    projective_distance_arr,
    Signature,
    boost_matrix_arr,
    cross_ratio,
    inner_arr,
)
from .smooth import ConnectionFamily, GridTransport, SampleGrid
from .transforms import (
    BacklundLineFamily,
    BianchiSingularityError,
    NonPolynomialError,
    PolyConservedQuantity,
    boost_fit_point,
    TOL_POLYFIT,
    TOL_SINGULAR,
)

log = logging.getLogger(__name__)

TOL_FOURTH = 1e-9      # flatness/cross-ratio residuals of the fourth point
TOL_SELECT = 1e-5      # root selection threshold (flatness at one t)


class FourthPointDegenerateError(GeometryError):
    """The permutability solve has no admissible root."""


@dataclass(frozen=True)
class EdgeParams:
    """Spectral parameters per lattice direction.

    a[m] labels every horizontal edge between columns m and m+1, b[n] every
    vertical edge between rows n and n+1.  All labels are nonzero and no
    horizontal label equals a vertical one (each pair shares a quad).
    """

    a: tuple
    b: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        if not self.a or not self.b:
            raise ValueError("need at least one parameter per direction")
        for x in self.a + self.b:
            if x == 0.0 or not np.isfinite(x):
                raise ValueError("edge parameters must be finite and nonzero")
        for am in self.a:
            for bn in self.b:
                if am == bn:
                    raise ValueError(
                        f"horizontal parameter {am} equals vertical parameter "
                        f"{bn}; the quad cross-ratio would degenerate")

    @property
    def m_cols(self) -> int:
        return len(self.a)

    @property
    def n_rows(self) -> int:
        return len(self.b)


def _fourth_point_arr(ri, rj, rl, m_ij: float, m_il: float, sig: Signature,
                      t_checks=None, tol_select: float = TOL_SELECT):
    """Permutability solve on raw representatives; returns (rep_k, info).

    Solves the two-equation algebraic system in the projective coefficients
    of F_k = alpha F_i + beta F_j + gamma F_l: the nullity quadric and the
    linear cross-ratio-square equation, then keeps the root satisfying the
    flatness identity and discards the spurious one.
    """
    a_ = float(inner_arr(ri, rj, sig))
    b_ = float(inner_arr(ri, rl, sig))
    c_ = float(inner_arr(rj, rl, sig))
    scale = max(abs(a_), abs(b_), abs(c_))
    if min(abs(a_), abs(b_), abs(c_)) < 1e-12 * max(scale, 1e-30):
        raise OrthogonalLinesError("fourth point needs pairwise non-orthogonal inputs")
    if m_ij == m_il:
        raise GeometryError("equal edge parameters make the quad degenerate")

    # Linear equation: m_ij^2 * A * (F_k, F_l) = m_il^2 * B * (F_k, F_j),
    # i.e. the squared cross-ratio equals (m_ij/m_il)^2.
    row = np.array([
        a_ * b_ * (m_ij**2 - m_il**2),
        a_ * c_ * m_ij**2,
        -b_ * c_ * m_il**2,
    ])
    _, _, vt = np.linalg.svd(row[None, :])
    u1, u2 = vt[1], vt[2]

    def quad_form(x, y):
        return 0.5 * ((x[0] * y[1] + x[1] * y[0]) * a_
                      + (x[0] * y[2] + x[2] * y[0]) * b_
                      + (x[1] * y[2] + x[2] * y[1]) * c_)

    quu = quad_form(u1, u1)
    quv = quad_form(u1, u2)
    qvv = quad_form(u2, u2)
    disc = quv * quv - quu * qvv
    if disc < 0.0:
        raise FourthPointDegenerateError("no real fourth point (negative discriminant)")
    sq = float(np.sqrt(disc))
    candidates = []
    if abs(quu) >= abs(qvv):
        if abs(quu) < 1e-14 * max(abs(quv), 1e-30):
            candidates.append(1.0 * u2)  # quadric degenerates to a linear factor
        else:
            for sgn in (1.0, -1.0):
                x = (-quv + sgn * sq) / quu
                candidates.append(x * u1 + u2)
    else:
        for sgn in (1.0, -1.0):
            y = (-quv + sgn * sq) / qvv
            candidates.append(u1 + y * u2)

    basis = np.stack([ri, rj, rl])
    t1 = float(pick_t_samples([m_ij, m_il], count=1)[0])
    best = None
    best_res = np.inf
    survivors = 0
    for combo in candidates:
        rep = combo @ basis
        norm = np.linalg.norm(rep)
        if norm < 1e-12:
            continue
        rep = rep / norm
        # discard the trivial/spurious branch
        if abs(np.dot(rep, ri)) / np.linalg.norm(ri) > 1.0 - 1e-12:
            continue
        res = quad_flatness_residual(ri, rj, rep, rl, m_ij, m_il, [t1], sig)
        if res < tol_select:
            survivors += 1
        if res < best_res:
            best, best_res = rep, res
    if best is None or best_res >= tol_select:
        raise FourthPointDegenerateError(
            f"no admissible fourth point (best flatness residual {best_res:.3e})")
    if survivors > 1:
        raise FourthPointDegenerateError("both roots satisfy the flatness identity")
    if t_checks is None:
        t_checks = pick_t_samples([m_ij, m_il])
    verify_res = quad_flatness_residual(ri, rj, best, rl, m_ij, m_il, t_checks, sig)
    info = {"flatness_residual": verify_res, "selection_residual": best_res}
    return best, info


def fourth_point(fi: NullLine, fj: NullLine, fl: NullLine, m_ij: float,
                 m_il: float, t_checks=None) -> NullLine:
    """Fourth point of the Bianchi quadrilateral through three light-cone
    points with the given edge parameters.

    The result is null, concircular with the inputs, satisfies the discrete
    flatness identity for all t (checked at generic samples), and has quad
    cross-ratio m_ij/m_il.
    """
    rep, _ = _fourth_point_arr(fi.rep.coords, fj.rep.coords, fl.rep.coords,
                               float(m_ij), float(m_il), fi.sig,
                               t_checks=t_checks)
    return NullLine(PseudoVector(rep, fi.sig), tol=1e-8)


def fourth_point_diagnostics(fi: NullLine, fj: NullLine, fl: NullLine,
                             m_ij: float, m_il: float):
    """Fourth point together with its residuals and quad cross-ratio."""
    rep, info = _fourth_point_arr(fi.rep.coords, fj.rep.coords, fl.rep.coords,
                                  float(m_ij), float(m_il), fi.sig)
    fk = NullLine(PseudoVector(rep, fi.sig), tol=1e-8)
    info["cross_ratio"] = cross_ratio(fi, fj, fk, fl)
    info["target_ratio"] = float(m_ij) / float(m_il)
    return fk, info


@dataclass
class LatticeNode:
    """Pointwise data of one lattice surface over the sample grid."""

    index: tuple
    reps: np.ndarray                 # (nu, nv, dim) normalized representatives
    cq: np.ndarray | None            # (nu, nv, d+1, dim)
    provenance: str                  # "base" | "ode" | "algebraic"
    parent_index: tuple | None = None
    mu: float | None = None          # Darboux parameter against the parent


@dataclass
class EdgeRecord:
    """Residual bookkeeping of one lattice edge."""

    edge: tuple
    param: float
    kind: str                        # "ode" | "algebraic"
    backlund_orthogonality: float = np.nan
    cq_fit_residual: float = np.nan
    extra: dict = field(default_factory=dict)


class SurfaceLattice:
    """Grid of Bäcklund transforms of one seed surface.

    Nodes are indexed by (m, n); node (0, 0) is the seed.  Every node with
    m >= 1 is a Darboux transform of its west neighbor, every node (0, n) of
    its south neighbor, which chains the gauge relation between connection
    families: transports of deeper nodes are boost-conjugated transports of
    the seed connection.
    """

    def __init__(self, connection: ConnectionFamily, grid: SampleGrid,
                 params: EdgeParams, base_index, transport: GridTransport):
        self.connection = connection
        self.grid = grid
        self.params = params
        self.base_index = tuple(base_index)
        self.transport = transport
        self.nodes: dict[tuple, LatticeNode] = {}
        self.edges: dict[tuple, EdgeRecord] = {}
        self._frame_cache: dict[tuple, np.ndarray] = {}

    @property
    def sig(self) -> Signature:
        return self.connection.sig

    @property
    def shape(self):
        return (self.params.m_cols + 1, self.params.n_rows + 1)

    def node(self, m: int, n: int) -> LatticeNode:
        return self.nodes[(m, n)]

    def frames(self, index: tuple, t: float) -> np.ndarray:
        """Transports of the node's connection family from the base grid
        point to every grid node, at parameter t."""
        key = (tuple(index), float(t))
        if key in self._frame_cache:
            return self._frame_cache[key]
        node = self.nodes[tuple(index)]
        if node.parent_index is None:
            out = self.transport.frames(t)
        else:
            parent = self.nodes[node.parent_index]
            lam = 1.0 - t / node.mu
            if abs(lam) < 1e-12:
                raise GeometryError(
                    f"transport of node {index} has a pole at t = {node.mu}")
            parent_frames = self.frames(node.parent_index, t)
            nu, nv = self.grid.shape
            out = np.empty_like(parent_frames)
            gauge0 = boost_matrix_arr(parent.reps[self.base_index],
                                      node.reps[self.base_index], lam, self.sig)
            gauge0_inv = np.linalg.inv(gauge0)
            for iu in range(nu):
                for iv in range(nv):
                    gauge = boost_matrix_arr(parent.reps[iu, iv],
                                             node.reps[iu, iv], lam, self.sig)
                    out[iu, iv] = gauge @ parent_frames[iu, iv] @ gauge0_inv
        self._frame_cache[key] = out
        return out

    def record_edge(self, rec: EdgeRecord):
        self.edges[rec.edge] = rec

    def worst_residuals(self) -> dict:
        out = {"backlund_orthogonality": 0.0, "cq_fit": 0.0}
        for rec in self.edges.values():
            if np.isfinite(rec.backlund_orthogonality):
                out["backlund_orthogonality"] = max(out["backlund_orthogonality"],
                                                    rec.backlund_orthogonality)
            if np.isfinite(rec.cq_fit_residual):
                out["cq_fit"] = max(out["cq_fit"], rec.cq_fit_residual)
            for key, val in rec.extra.items():
                out[key] = max(out.get(key, 0.0), val)
        return out


def _poly_eval(coeffs: np.ndarray, t: float) -> np.ndarray:
    return (float(t) ** np.arange(coeffs.shape[0])) @ coeffs


def _boost_fit_grid(parent_cq: np.ndarray, parent_reps: np.ndarray,
                    child_reps: np.ndarray, mu: float, sig: Signature,
                    strict: bool, tol: float, context: str):
    """Pointwise gauge transform of the conserved quantity over the grid."""
    nu, nv = parent_reps.shape[:2]
    out = np.empty_like(parent_cq)
    worst = 0.0
    for iu in range(nu):
        for iv in range(nv):
            coeffs, resid, _ = boost_fit_point(
                parent_cq[iu, iv], parent_reps[iu, iv], child_reps[iu, iv],
                mu, sig)
            if strict and resid > tol:
                raise NonPolynomialError(
                    f"{context}: transformed quantity not polynomial at grid "
                    f"node {(iu, iv)} (fit residual {resid:.3e})")
            worst = max(worst, resid)
            out[iu, iv] = coeffs
    return out, worst


def _orthogonality_residual(anchor_cq: np.ndarray, mu: float,
                            child_reps: np.ndarray, sig: Signature) -> float:
    """Max |(p(mu)(x), fhat(x))| / |p(mu)(x)| over the grid."""
    nu, nv = child_reps.shape[:2]
    g = sig.metric
    worst = 0.0
    for iu in range(nu):
        for iv in range(nv):
            anchor = _poly_eval(anchor_cq[iu, iv], mu)
            val = abs(float(np.dot(anchor * g, child_reps[iu, iv])))
            worst = max(worst, val / max(np.linalg.norm(anchor), 1e-30))
    return worst


def _check_adjacent(parent_reps, child_reps, sig, where: str):
    nu, nv = child_reps.shape[:2]
    for iu in range(nu):
        for iv in range(nv):
            if abs(inner_arr(parent_reps[iu, iv], child_reps[iu, iv], sig)) < TOL_SINGULAR:
                raise BianchiSingularityError(
                    f"{where}: transform touches f^perp at grid node {(iu, iv)}",
                    location=(iu, iv))


def fourth_surface(node_i: LatticeNode, node_j: LatticeNode, node_l: LatticeNode,
                   m_ij: float, m_il: float, sig: Signature = CONFORMAL_3D,
                   strict_cq: bool = True, tol_cq: float = TOL_POLYFIT):
    """Pointwise fourth surface of two Bäcklund legs, with its quantity.

    Applies the permutability solve at every grid sample and carries the
    conserved quantity across both legs (west leg stored, the two fits'
    agreement recorded).  Returns (reps, cq, info).
    """
    nu, nv = node_i.reps.shape[:2]
    reps = np.empty_like(node_i.reps)
    worst_flat = 0.0
    failures = []
    for iu in range(nu):
        for iv in range(nv):
            try:
                rep, info = _fourth_point_arr(
                    node_i.reps[iu, iv], node_j.reps[iu, iv],
                    node_l.reps[iu, iv], m_ij, m_il, sig)
            except GeometryError as exc:
                failures.append(((iu, iv), str(exc)))
                continue
            reps[iu, iv] = rep
            worst_flat = max(worst_flat, info["flatness_residual"])
    if failures:
        locs = ", ".join(str(loc) for loc, _ in failures[:5])
        raise FourthPointDegenerateError(
            f"fourth point failed at {len(failures)} grid nodes ({locs}): "
            f"{failures[0][1]}")
    cq = None
    info = {"flatness_residual": worst_flat}
    if node_i.cq is not None and node_j.cq is not None and node_l.cq is not None:
        cq_west, fit_w = _boost_fit_grid(node_l.cq, node_l.reps, reps, m_ij,
                                         sig, strict_cq, tol_cq, "west leg")
        cq_south, fit_s = _boost_fit_grid(node_j.cq, node_j.reps, reps, m_il,
                                          sig, strict_cq, tol_cq, "south leg")
        scale = max(float(np.max(np.abs(cq_west))), 1e-30)
        info["cq_fit_residual"] = max(fit_w, fit_s)
        info["cq_two_leg_agreement"] = float(np.max(np.abs(cq_west - cq_south))) / scale
        cq = cq_west
    return reps, cq, info


def build_lattice(connection: ConnectionFamily, quantity: PolyConservedQuantity,
                  params: EdgeParams, grid: SampleGrid, *, seed: int = 0,
                  seeds: dict | None = None, base_index=None,
                  non_backlund: bool = False, h_step: float | None = None,
                  tol_cq_fit: float = TOL_POLYFIT) -> SurfaceLattice:
    """Construct the full lattice of Bäcklund transforms of a seed surface.

    The first row and column are grown by parallel transport of initial
    lines drawn from the admissible set at the base grid point (ODE route,
    deterministic for a fixed integer seed; explicit lines may be supplied
    in `seeds` keyed by lattice index).  The interior is filled strictly by
    the algebraic permutability solve.  With `non_backlund`, leg seeds
    deliberately violate the orthogonality condition (negative control);
    conserved quantities are then attached as best fits without strictness.
    """
    sig = connection.sig
    base_index = tuple(base_index) if base_index is not None else grid.center_index
    transport = GridTransport(connection, grid, base_index=base_index, h_step=h_step)
    lattice = SurfaceLattice(connection, grid, params, base_index, transport)
    nu, nv = grid.shape

    base_reps = np.empty((nu, nv, sig.dim))
    for iu in range(nu):
        for iv in range(nv):
            base_reps[iu, iv] = connection.line_at(*grid.point(iu, iv)).rep.coords
    lattice.nodes[(0, 0)] = LatticeNode((0, 0), base_reps,
                                        quantity.values_on(grid), "base")

    rng = np.random.default_rng(seed)
    strict = not non_backlund

    def grow_leg(child_idx: tuple, parent_idx: tuple, mu: float, kind_edge: tuple):
        parent = lattice.nodes[parent_idx]
        anchor = _poly_eval(parent.cq[base_index], mu)
        base_line = NullLine(PseudoVector(parent.reps[base_index], sig), tol=1e-6)
        family = BacklundLineFamily(anchor, base_line.rep.coords, sig)
        if seeds and child_idx in seeds:
            line0 = seeds[child_idx]
        elif non_backlund:
            line0 = family.sample_violating(rng)
        else:
            line0 = family.sample(rng)
        frames = lattice.frames(parent_idx, mu)
        reps = np.einsum("uvij,j->uvi", frames, line0.rep.coords)
        reps /= np.linalg.norm(reps, axis=2)[..., None]
        _check_adjacent(parent.reps, reps, sig,
                        f"leg {parent_idx}->{child_idx} (mu={mu})")
        cq, fit_res = _boost_fit_grid(parent.cq, parent.reps, reps, mu, sig,
                                      strict, tol_cq_fit,
                                      f"leg {parent_idx}->{child_idx}")
        lattice.nodes[child_idx] = LatticeNode(child_idx, reps, cq, "ode",
                                               parent_idx, mu)
        orth = _orthogonality_residual(parent.cq, mu, reps, sig)
        lattice.record_edge(EdgeRecord(kind_edge, mu, "ode",
                                       backlund_orthogonality=orth,
                                       cq_fit_residual=fit_res))

    for m in range(1, params.m_cols + 1):
        grow_leg((m, 0), (m - 1, 0), params.a[m - 1], ((m - 1, 0), (m, 0)))
    for n in range(1, params.n_rows + 1):
        grow_leg((0, n), (0, n - 1), params.b[n - 1], ((0, n - 1), (0, n)))

    for m in range(1, params.m_cols + 1):
        for n in range(1, params.n_rows + 1):
            node_i = lattice.nodes[(m - 1, n - 1)]
            node_j = lattice.nodes[(m, n - 1)]
            node_l = lattice.nodes[(m - 1, n)]
            a_m = params.a[m - 1]
            b_n = params.b[n - 1]
            try:
                reps, cq, info = fourth_surface(node_i, node_j, node_l, a_m, b_n,
                                                sig, strict_cq=strict,
                                                tol_cq=tol_cq_fit)
            except GeometryError as exc:
                raise type(exc)(f"lattice node {(m, n)}: {exc}") from exc
            _check_adjacent(node_l.reps, reps, sig, f"edge {(m - 1, n)}->{(m, n)}")
            _check_adjacent(node_j.reps, reps, sig, f"edge {(m, n - 1)}->{(m, n)}")
            lattice.nodes[(m, n)] = LatticeNode((m, n), reps, cq, "algebraic",
                                                (m - 1, n), a_m)
            orth_w = _orthogonality_residual(node_l.cq, a_m, reps, sig)
            orth_s = _orthogonality_residual(node_j.cq, b_n, reps, sig)
            lattice.record_edge(EdgeRecord(
                ((m - 1, n), (m, n)), a_m, "algebraic",
                backlund_orthogonality=orth_w,
                cq_fit_residual=info.get("cq_fit_residual", np.nan),
                extra={"quad_flatness": info["flatness_residual"],
                       "cq_two_leg_agreement": info.get("cq_two_leg_agreement", 0.0)}))
            lattice.record_edge(EdgeRecord(
                ((m, n - 1), (m, n)), b_n, "algebraic",
                backlund_orthogonality=orth_s,
                cq_fit_residual=info.get("cq_fit_residual", np.nan)))
    return lattice


def extract_discrete(lattice: SurfaceLattice, x_index) -> DiscreteNet:
    """Discrete net of the lattice surfaces sampled at one grid node.

    F_{m,n} is the value of surface (m, n) at the sample point; horizontal
    edges in column m are labeled a[m], vertical edges in row n are labeled
    b[n]; the per-vertex quantity is the lattice quantity at the point.
    Only exact grid nodes are sampled (no interpolation of projective data).
    """
    iu, iv = (int(x_index[0]), int(x_index[1]))
    nu, nv = lattice.grid.shape
    if not (0 <= iu < nu and 0 <= iv < nv):
        raise GeometryError(f"sample index {(iu, iv)} outside the {nu}x{nv} grid")
    mp, np_ = lattice.shape
    dim = lattice.sig.dim
    reps = np.empty((mp, np_, dim))
    degree = None
    cq = None
    for (m, n), node in lattice.nodes.items():
        reps[m, n] = node.reps[iu, iv]
        if node.cq is not None:
            if cq is None:
                degree = node.cq.shape[2] - 1
                cq = np.empty((mp, np_, degree + 1, dim))
            cq[m, n] = node.cq[iu, iv]
    provenance = {str(idx): node.provenance for idx, node in sorted(lattice.nodes.items())}
    metadata = {
        "sample_index": [iu, iv],
        "sample_point": list(lattice.grid.point(iu, iv)),
        "provenance": provenance,
        "lattice_residuals": lattice.worst_residuals(),
    }
    return DiscreteNet(reps, lattice.params.a, lattice.params.b, cq=cq,
                       sig=lattice.sig, metadata=metadata)


def ode_route_check(lattice: SurfaceLattice, index=(1, 1)) -> float:
    """Cross-validate an algebraic interior node against the ODE route.

    The interior node is a Darboux transform of its south neighbor with the
    row parameter; transporting its base-point line under the neighbor's
    connection family must reproduce the whole field.  Returns the max
    projective distance over the grid.
    """
    m, n = index
    node_k = lattice.nodes[(m, n)]
    if node_k.provenance != "algebraic":
        raise ValueError(f"node {index} was not built algebraically")
    south = (m, n - 1)
    mu = lattice.params.b[n - 1]
    frames = lattice.frames(south, mu)
    rep0 = node_k.reps[lattice.base_index]
    nu, nv = lattice.grid.shape
    worst = 0.0
    for iu in range(nu):
        for iv in range(nv):
            transported = frames[iu, iv] @ rep0
            transported /= np.linalg.norm(transported)
            worst = max(worst, projective_distance_arr(transported,
                                                       node_k.reps[iu, iv]))
    return worst


def edge_parallelism_check(lattice: SurfaceLattice, parent_idx, child_idx) -> float:
    """Darboux parallelism of a lattice edge via the transport oracle.

    Transports the child's base-point line under the parent's connection at
    the edge parameter and compares with the stored child field (max
    projective distance over the grid).
    """
    edge = (tuple(parent_idx), tuple(child_idx))
    rec = lattice.edges.get(edge) or lattice.edges.get((edge[1], edge[0]))
    if rec is None:
        raise ValueError(f"no lattice edge {edge}")
    child = lattice.nodes[tuple(child_idx)]
    frames = lattice.frames(tuple(parent_idx), rec.param)
    rep0 = child.reps[lattice.base_index]
    nu, nv = lattice.grid.shape
    worst = 0.0
    for iu in range(nu):
        for iv in range(nv):
            transported = frames[iu, iv] @ rep0
            transported /= np.linalg.norm(transported)
            worst = max(worst, projective_distance_arr(transported,
                                                       child.reps[iu, iv]))
    return worst
