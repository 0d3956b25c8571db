"""Pseudo-Euclidean linear algebra over R^{p+1,q+1}.

The projectivized light cone of an indefinite inner-product space models the
conformal (p,q)-sphere: points are null lines, circles are the projectivized
null vectors of 3-dimensional Lorentzian subspaces, and the isometry fixing
the common orthogonal complement of two non-orthogonal null lines is a
Lorentz boost.  This module provides those primitives for any signature
diag(+..+, -..-) with dimension >= 4.

Convention: the metric is diagonal with ``p_plus`` leading +1 entries and
``q_minus`` trailing -1 entries.  The last two slots host the null basis
pair e0 = (0,..,0, 1/2, 1/2) and einf = (0,..,0, -1/2, 1/2), so that
(e0, e0) = (einf, einf) = 0 and (e0, einf) = -1/2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Tolerance bands.  Exact statements about null vectors and projective
# equality need explicit widths in floating point; transport drift elsewhere
# is controlled against these same constants.
TOL_NULL = 1e-10   # |(r,r)| <= TOL_NULL * |r|_E^2 for light-cone membership
TOL_PROJ = 1e-9    # projective coincidence of unit representatives
TOL_ORTH = 1e-12   # orthogonality guard for boost denominators (scaled)
TOL_SPAN = 1e-8    # rank decisions for circle spans / concircularity

_SIGN_EPS = 1e-9   # band for the deterministic sign convention


class GeometryError(ValueError):
    """A geometric precondition failed."""


class SignatureMismatchError(GeometryError):
    """Operands live in different pseudo-Euclidean spaces."""


class OrthogonalLinesError(GeometryError):
    """Two null lines are (numerically) orthogonal where they must not be."""


class DegenerateSpanError(GeometryError):
    """Vectors that should span a 3-space are linearly dependent."""


class NonConcircularError(GeometryError):
    """Four points do not lie on a common circle within tolerance."""


class CoincidentPointsError(GeometryError):
    """Projective points coincide where distinct points are required."""


@lru_cache(maxsize=None)
def _metric_diag(p_plus: int, q_minus: int) -> np.ndarray:
    g = np.ones(p_plus + q_minus)
    g[p_plus:] = -1.0
    g.setflags(write=False)
    return g


@dataclass(frozen=True)
class Signature:
    """Counts of +1 and -1 metric directions of diag(+..+, -..-)."""

    p_plus: int
    q_minus: int

    def __post_init__(self):
        if self.p_plus < 1 or self.q_minus < 1:
            raise ValueError("signature needs at least one direction of each sign")
        if self.p_plus + self.q_minus < 4:
            raise ValueError("total dimension must be at least 4")

    @property
    def dim(self) -> int:
        return self.p_plus + self.q_minus

    @property
    def metric(self) -> np.ndarray:
        return _metric_diag(self.p_plus, self.q_minus)


#: Ambient space of the conformal 3-sphere / Euclidean 3-space chart.
CONFORMAL_3D = Signature(4, 1)


class PseudoVector:
    """A coordinate vector of R^{p+1,q+1} with its signature attached."""

    __slots__ = ("coords", "sig")

    def __init__(self, coords, sig: Signature):
        arr = np.asarray(coords, dtype=float)
        if arr.shape != (sig.dim,):
            raise ValueError(
                f"expected {sig.dim} coordinates for signature "
                f"({sig.p_plus},{sig.q_minus}), got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("coordinates must be finite")
        self.coords = arr
        self.sig = sig

    def __add__(self, other: "PseudoVector") -> "PseudoVector":
        _check_sig(self, other)
        return PseudoVector(self.coords + other.coords, self.sig)

    def __sub__(self, other: "PseudoVector") -> "PseudoVector":
        _check_sig(self, other)
        return PseudoVector(self.coords - other.coords, self.sig)

    def __mul__(self, scalar: float) -> "PseudoVector":
        return PseudoVector(self.coords * float(scalar), self.sig)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "PseudoVector":
        return PseudoVector(self.coords / float(scalar), self.sig)

    def __neg__(self) -> "PseudoVector":
        return PseudoVector(-self.coords, self.sig)

    def euclidean_norm(self) -> float:
        return float(np.linalg.norm(self.coords))

    def __repr__(self) -> str:
        return f"PseudoVector({self.coords.tolist()}, sig=({self.sig.p_plus},{self.sig.q_minus}))"


def _check_sig(x, y):
    if x.sig != y.sig:
        raise SignatureMismatchError(f"signature mismatch: {x.sig} vs {y.sig}")


def inner(x: PseudoVector, y: PseudoVector) -> float:
    """Indefinite inner product sum(x_i y_i) - sum(x_j y_j) per the signature."""
    _check_sig(x, y)
    return float(np.dot(x.coords * x.sig.metric, y.coords))


def inner_arr(x: np.ndarray, y: np.ndarray, sig: Signature) -> float:
    """`inner` on raw coordinate arrays (hot-path variant)."""
    return float(np.dot(x * sig.metric, y))


def basis_vector(i: int, sig: Signature = CONFORMAL_3D) -> PseudoVector:
    c = np.zeros(sig.dim)
    c[i] = 1.0
    return PseudoVector(c, sig)


def e0(sig: Signature = CONFORMAL_3D) -> PseudoVector:
    """Null basis vector (0,..,0, 1/2, 1/2), the lift of the chart origin."""
    c = np.zeros(sig.dim)
    c[-2] = 0.5
    c[-1] = 0.5
    return PseudoVector(c, sig)


def einf(sig: Signature = CONFORMAL_3D) -> PseudoVector:
    """Null basis vector (0,..,0, -1/2, 1/2), the chart's point at infinity."""
    c = np.zeros(sig.dim)
    c[-2] = -0.5
    c[-1] = 0.5
    return PseudoVector(c, sig)


def projective_distance_arr(u: np.ndarray, v: np.ndarray) -> float:
    """Chordal projective distance of two unit vectors."""
    return float(min(np.linalg.norm(u - v), np.linalg.norm(u + v)))


def _normalized_rep(coords: np.ndarray) -> np.ndarray:
    """Unit Euclidean norm with the first non-small coordinate positive."""
    norm = np.linalg.norm(coords)
    out = coords / norm
    for c in out:
        if abs(c) > _SIGN_EPS:
            if c < 0.0:
                out = -out
            break
    return out


class NullLine:
    """A projective point of the light cone.

    The stored representative is deterministically normalized (Euclidean norm
    one, first non-small coordinate positive) so that repeated constructions
    of the same line compare stably.  Equality is projective within TOL_PROJ.
    """

    __slots__ = ("rep",)

    def __init__(self, rep: PseudoVector, tol: float = TOL_NULL):
        norm = rep.euclidean_norm()
        if norm == 0.0:
            raise GeometryError("null line representative must be nonzero")
        if abs(inner(rep, rep)) > tol * norm * norm:
            raise GeometryError(
                f"representative is not null: (r,r) = {inner(rep, rep):.3e} "
                f"against Euclidean norm^2 {norm * norm:.3e}"
            )
        self.rep = PseudoVector(_normalized_rep(rep.coords), rep.sig)

    @classmethod
    def from_coords(cls, coords, sig: Signature = CONFORMAL_3D, tol: float = TOL_NULL):
        return cls(PseudoVector(coords, sig), tol=tol)

    @property
    def sig(self) -> Signature:
        return self.rep.sig

    def projective_distance(self, other: "NullLine") -> float:
        """Chordal distance min(|u - v|, |u + v|) of the unit representatives
        (equals 2 sin(angle/2), so about the angle for nearby lines)."""
        _check_sig(self.rep, other.rep)
        return projective_distance_arr(self.rep.coords, other.rep.coords)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NullLine):
            return NotImplemented
        return self.projective_distance(other) < TOL_PROJ

    __hash__ = None

    def __repr__(self) -> str:
        return f"NullLine({self.rep.coords.tolist()})"


class Bivector:
    """A sum of wedges sum_k a_k ∧ b_k acting as a skew endomorphism.

    The action is (a∧b)Y = (a,Y) b - (b,Y) a, extended linearly over terms;
    this realizes the identification of 2-vectors with the pseudo-orthogonal
    Lie algebra.
    """

    __slots__ = ("terms", "sig")

    def __init__(self, terms, sig: Signature | None = None):
        terms = tuple((a, b) for a, b in terms)
        if not terms and sig is None:
            raise ValueError("empty bivector needs an explicit signature")
        self.sig = sig if sig is not None else terms[0][0].sig
        for a, b in terms:
            if a.sig != self.sig or b.sig != self.sig:
                raise SignatureMismatchError("bivector terms have mixed signatures")
        self.terms = terms

    def apply(self, y: PseudoVector) -> PseudoVector:
        _check_sig(self, y)
        out = np.zeros(self.sig.dim)
        g = self.sig.metric
        for a, b in self.terms:
            ay = np.dot(a.coords * g, y.coords)
            by = np.dot(b.coords * g, y.coords)
            out += ay * b.coords - by * a.coords
        return PseudoVector(out, self.sig)

    def matrix(self) -> np.ndarray:
        """Matrix of the action, sum_k (b_k a_k^T - a_k b_k^T) G."""
        g = self.sig.metric
        out = np.zeros((self.sig.dim, self.sig.dim))
        for a, b in self.terms:
            out += np.outer(b.coords, a.coords * g) - np.outer(a.coords, b.coords * g)
        return out

    def scaled(self, c: float) -> "Bivector":
        return Bivector(tuple((c * a, b) for a, b in self.terms), self.sig)

    def __add__(self, other: "Bivector") -> "Bivector":
        _check_sig(self, other)
        return Bivector(self.terms + other.terms, self.sig)


def wedge(a: PseudoVector, b: PseudoVector) -> Bivector:
    _check_sig(a, b)
    return Bivector(((a, b),))


def wedge_apply(bivec: Bivector, y: PseudoVector) -> PseudoVector:
    """Apply the skew endomorphism of a bivector to a vector."""
    return bivec.apply(y)


def lorentz_boost(src: NullLine, dst: NullLine, lam: float, y: PseudoVector) -> PseudoVector:
    """Boost scaling the dst line by lam, the src line by 1/lam, fixing their
    common orthogonal complement.

    Decomposes y = alpha a + beta b + w with a in src, b in dst, w
    orthogonal to both, and returns alpha/lam a + lam beta b + w.  The map
    preserves the inner product and is independent of the representatives.
    """
    mat = boost_matrix(src, dst, lam)
    return PseudoVector(mat @ y.coords, y.sig)


def boost_matrix(src: NullLine, dst: NullLine, lam: float) -> np.ndarray:
    _check_sig(src.rep, dst.rep)
    return boost_matrix_arr(src.rep.coords, dst.rep.coords, lam, src.sig)


def boost_matrix_arr(a: np.ndarray, b: np.ndarray, lam: float, sig: Signature) -> np.ndarray:
    """Boost matrix on raw representatives (hot-path variant)."""
    if lam == 0.0 or not np.isfinite(lam):
        raise GeometryError(f"boost parameter must be finite and nonzero, got {lam}")
    g = sig.metric
    ab = float(np.dot(a * g, b))
    scale = float(np.linalg.norm(a) * np.linalg.norm(b))
    if abs(ab) < TOL_ORTH * scale:
        raise OrthogonalLinesError(
            f"boost undefined for orthogonal null lines ((a,b) = {ab:.3e})"
        )
    out = np.eye(sig.dim)
    out += ((1.0 / lam - 1.0) / ab) * np.outer(a, b * g)
    out += ((lam - 1.0) / ab) * np.outer(b, a * g)
    return out


def circle_span(a: NullLine, b: NullLine, c: NullLine) -> list[PseudoVector]:
    """Euclidean-orthonormal basis of span{a, b, c}.

    Three pairwise distinct, pairwise non-orthogonal null lines span a
    3-dimensional subspace; the circle through the three points is the
    projectivized set of null vectors of that subspace.
    """
    sig = a.sig
    _check_sig(a.rep, b.rep)
    _check_sig(a.rep, c.rep)
    for x, y in ((a, b), (a, c), (b, c)):
        if x.projective_distance(y) < TOL_PROJ:
            raise CoincidentPointsError("circle span needs three distinct points")
        if abs(inner(x.rep, y.rep)) < TOL_ORTH:
            raise OrthogonalLinesError("circle span needs pairwise non-orthogonal points")
    rows = np.stack([a.rep.coords, b.rep.coords, c.rep.coords])
    u, s, vt = np.linalg.svd(rows, full_matrices=False)
    if s[2] <= TOL_SPAN * s[0]:
        raise DegenerateSpanError("representatives are linearly dependent")
    return [PseudoVector(vt[i], sig) for i in range(3)]


def _lorentz_basis(span_rows: np.ndarray, sig: Signature) -> np.ndarray:
    """Rows E1, E2 (spacelike, unit) and E3 (timelike, unit) spanning the
    given 3-space; raises if the induced metric is not of signature (2,1)."""
    g = sig.metric
    gram = span_rows @ (span_rows * g).T
    w, vecs = np.linalg.eigh(gram)
    if not (w[0] < 0.0 < w[1]):
        raise NonConcircularError(
            f"3-space has induced metric eigenvalues {w.tolist()}, not Lorentzian"
        )
    e3 = (vecs[:, 0] @ span_rows) / np.sqrt(-w[0])
    e1 = (vecs[:, 1] @ span_rows) / np.sqrt(w[1])
    e2 = (vecs[:, 2] @ span_rows) / np.sqrt(w[2])
    return np.stack([e1, e2, e3])


def _chart_point(rep: np.ndarray, basis: np.ndarray, sig: Signature) -> complex:
    """Unit-circle coordinate of a null vector of the charted 3-space."""
    g = sig.metric
    x = float(np.dot(rep * g, basis[0]))
    y = float(np.dot(rep * g, basis[1]))
    z = -float(np.dot(rep * g, basis[2]))
    if abs(z) < 1e-300:
        raise NonConcircularError("null vector charts to the cone vertex")
    zeta = complex(x / z, y / z)
    return zeta


def cross_ratio(fi: NullLine, fj: NullLine, fk: NullLine, fl: NullLine,
                tol_span: float = TOL_SPAN) -> float:
    """Real cross-ratio of four concircular points of the light cone.

    Computed sign-correctly in a chart of the circle through the points:
    the circle's 3-space is charted onto the unit circle, and the value is
    (zj - zk)(zl - zi) / ((zi - zj)(zk - zl)), so that the conformal square
    1, i, -1, -i has cross-ratio -1 and the quadrilateral closed by the
    discrete flatness identity with edge labels (a, b) has cross-ratio a/b.
    The result is invariant under isometries and under rescaling of the
    representatives.
    """
    span = circle_span(fi, fj, fl)
    rows = np.stack([v.coords for v in span])
    rk = fk.rep.coords
    proj = (rows @ rk) @ rows
    if np.linalg.norm(rk - proj) > tol_span:
        raise NonConcircularError("fourth point is not on the circle of the other three")
    basis = _lorentz_basis(rows, fi.sig)
    zs = [_chart_point(f.rep.coords, basis, fi.sig) for f in (fi, fj, fk, fl)]
    zi, zj, zk, zl = zs
    num = (zj - zk) * (zl - zi)
    den = (zi - zj) * (zk - zl)
    scale = max(abs(zi - zj), abs(zk - zl), abs(zj - zk), abs(zl - zi))
    if min(abs(zi - zj), abs(zk - zl)) < 1e-12 * max(scale, 1.0):
        raise CoincidentPointsError("cross-ratio degenerates for coincident points")
    cr = num / den
    if abs(cr.imag) > 1e-6 * max(1.0, abs(cr)):
        raise NonConcircularError(f"cross-ratio is not real: {cr}")
    return float(cr.real)
