"""Experiment configs, net files, certificates, and mesh export.

The pipeline command realizes the whole construction: surface -> conserved
quantity -> lattice of Bäcklund transforms -> sampled discrete net ->
type-d certificate -> OBJ mesh.  Net files are JSON documents that
round-trip losslessly (floats are written with shortest round-trip decimal
representation); pipeline outputs are byte-deterministic for a fixed config.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .discrete import (
    DiscreteNet,
    TOL_CMC_CONST,
    TOL_EDGE_FIT,
    TOL_EDGE_MATCH,
    TOL_FLAT,
    certify_type_d,
    discrete_cmc_readout,
)
from .lattice import EdgeParams, SurfaceLattice, build_lattice, extract_discrete
from .pseudo import GeometryError, Signature
from .smooth import SampleGrid, SpaceFormVector, connection_family, surface_by_name
from .transforms import TOL_POLYFIT, cmc_linear_cq

log = logging.getLogger(__name__)

NET_FORMAT = "isolattice-net"
NET_VERSION = 1


class NetFormatError(GeometryError):
    """Net file violates the expected schema."""


class PipelineStageError(RuntimeError):
    """An upstream failure, annotated with the pipeline stage."""

    def __init__(self, stage: str, original: Exception):
        super().__init__(f"stage '{stage}': {original}")
        self.stage = stage
        self.original = original


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one lattice experiment."""

    surface: str = "cylinder"
    surface_params: dict = field(default_factory=dict)
    space_form: str = "euclidean"
    mean_curvature: float | None = None
    a: tuple = (0.8, 1.4, 2.2)
    b: tuple = (2.0, 2.6, 3.2)
    seed: int = 0
    grid_nu: int = 11
    grid_nv: int = 11
    grid_u: tuple = (-1.0, 1.0)
    grid_v: tuple = (-1.0, 1.0)
    base_index: tuple | None = None     # grid node seeding the transports
    sample_index: tuple | None = None   # grid node sampled into the net
    non_backlund_seeds: bool = False
    eta_scale: float | None = None
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        self.a = tuple(float(x) for x in self.a)
        self.b = tuple(float(x) for x in self.b)
        EdgeParams(self.a, self.b)  # validates labels
        if self.space_form != "euclidean":
            raise ValueError("only the euclidean space form chart is supported")
        if self.grid_nu < 2 or self.grid_nv < 2:
            raise ValueError("grid needs at least 2 nodes per direction")
        for rng in (self.grid_u, self.grid_v):
            if not (len(rng) == 2 and float(rng[0]) < float(rng[1])):
                raise ValueError(f"bad grid range {rng}")
        self.grid_u = (float(self.grid_u[0]), float(self.grid_u[1]))
        self.grid_v = (float(self.grid_v[0]), float(self.grid_v[1]))
        for idx in (self.base_index, self.sample_index):
            if idx is not None:
                iu, iv = int(idx[0]), int(idx[1])
                if not (0 <= iu < self.grid_nu and 0 <= iv < self.grid_nv):
                    raise ValueError(f"index {idx} outside the sample grid")
        self.tolerances = {str(k): float(v) for k, v in dict(self.tolerances).items()}
        unknown = set(self.tolerances) - {"flatness", "edge_fit", "edge_match",
                                          "cq_fit", "cmc_const"}
        if unknown:
            raise ValueError(f"unknown tolerance overrides: {sorted(unknown)}")

    def tol(self, key: str, default: float) -> float:
        return self.tolerances.get(key, default)

    def to_dict(self) -> dict:
        return {
            "surface": self.surface,
            "surface_params": dict(self.surface_params),
            "space_form": self.space_form,
            "mean_curvature": self.mean_curvature,
            "a": list(self.a),
            "b": list(self.b),
            "seed": self.seed,
            "grid": {"nu": self.grid_nu, "nv": self.grid_nv,
                     "u": list(self.grid_u), "v": list(self.grid_v)},
            "base_index": None if self.base_index is None else list(self.base_index),
            "sample_index": None if self.sample_index is None else list(self.sample_index),
            "non_backlund_seeds": self.non_backlund_seeds,
            "eta_scale": self.eta_scale,
            "tolerances": dict(self.tolerances),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        grid = data.pop("grid", {})
        kwargs = {
            "surface": data.pop("surface", "cylinder"),
            "surface_params": data.pop("surface_params", {}),
            "space_form": data.pop("space_form", "euclidean"),
            "mean_curvature": data.pop("mean_curvature", None),
            "a": data.pop("a"),
            "b": data.pop("b"),
            "seed": int(data.pop("seed", 0)),
            "grid_nu": int(grid.get("nu", 11)),
            "grid_nv": int(grid.get("nv", 11)),
            "grid_u": tuple(grid.get("u", (-1.0, 1.0))),
            "grid_v": tuple(grid.get("v", (-1.0, 1.0))),
            "base_index": data.pop("base_index", None),
            "sample_index": data.pop("sample_index", None),
            "non_backlund_seeds": bool(data.pop("non_backlund_seeds", False)),
            "eta_scale": data.pop("eta_scale", None),
            "tolerances": data.pop("tolerances", {}),
        }
        if data:
            raise ValueError(f"unknown config keys: {sorted(data)}")
        return cls(**kwargs)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def preset_config(name: str) -> ExperimentConfig:
    """Bundled experiment configs shipped with the package."""
    try:
        text = resources.files("isolattice.data").joinpath(f"{name}.json").read_text()
    except FileNotFoundError:
        raise ValueError(f"no bundled config named {name!r}")
    return ExperimentConfig.from_dict(json.loads(text))


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    return value


def _dump_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n",
                    encoding="utf-8")
    return path


def net_to_dict(net: DiscreteNet) -> dict:
    mp, np_ = net.shape
    vertices = [[m, n, net.reps[m, n].tolist()]
                for m in range(mp) for n in range(np_)]
    cq = None
    if net.cq is not None:
        cq = {"degree": int(net.degree),
              "coeffs": [[m, n, net.cq[m, n].tolist()]
                         for m in range(mp) for n in range(np_)]}
    return {
        "format": NET_FORMAT,
        "version": NET_VERSION,
        "signature": {"p_plus": net.sig.p_plus, "q_minus": net.sig.q_minus},
        "shape": [mp, np_],
        "vertices": vertices,
        "edge_labels": {"horizontal": net.label_u.tolist(),
                        "vertical": net.label_v.tolist()},
        "cq": cq,
        "metadata": _jsonable(net.metadata),
    }


def save_net(net: DiscreteNet, path) -> Path:
    """Write a net as a deterministic JSON document (lossless round-trip)."""
    return _dump_json(net_to_dict(net), path)


def net_from_dict(data: dict) -> DiscreteNet:
    try:
        if data["format"] != NET_FORMAT:
            raise NetFormatError(f"unknown format {data.get('format')!r}")
        if data["version"] != NET_VERSION:
            raise NetFormatError(f"unsupported version {data['version']}")
        sig = Signature(int(data["signature"]["p_plus"]),
                        int(data["signature"]["q_minus"]))
        mp, np_ = (int(x) for x in data["shape"])
        reps = np.empty((mp, np_, sig.dim))
        seen = np.zeros((mp, np_), dtype=bool)
        for m, n, coords in data["vertices"]:
            reps[m, n] = np.asarray(coords, dtype=float)
            seen[m, n] = True
        if not seen.all():
            raise NetFormatError("vertex list does not cover the grid")
        labels = data["edge_labels"]
        cq = None
        if data.get("cq") is not None:
            degree = int(data["cq"]["degree"])
            cq = np.empty((mp, np_, degree + 1, sig.dim))
            for m, n, coeffs in data["cq"]["coeffs"]:
                cq[m, n] = np.asarray(coeffs, dtype=float)
        metadata = data.get("metadata", {})
    except (KeyError, TypeError, IndexError) as exc:
        raise NetFormatError(f"malformed net document: {exc!r}") from exc
    net = DiscreteNet(reps, labels["horizontal"], labels["vertical"], cq=cq,
                      sig=sig, metadata=metadata, strict=False)
    if net.metadata.get("violations"):
        net.metadata["verified"] = False
        log.warning("loaded net violates invariants: %s",
                    "; ".join(net.metadata["violations"]))
    return net


def load_net(path) -> DiscreteNet:
    """Load a net file; invariant violations are flagged, not fatal."""
    with open(path, "r", encoding="utf-8") as fh:
        return net_from_dict(json.load(fh))


def export_mesh(net: DiscreteNet, q: SpaceFormVector, path):
    """Write the net's space-form projection as an OBJ quad mesh.

    Vertices appear in grid order; each unit square becomes one quad face.
    Vertices orthogonal to q (points at infinity of the chart) are skipped
    with a warning, along with their faces.  Output is deterministic.
    """
    from .smooth import project_to_spaceform, PointAtInfinityError

    mp, np_ = net.shape
    index = {}
    lines = [f"# quad net {mp}x{np_}, space-form projection"]
    warnings = []
    count = 0
    for m in range(mp):
        for n in range(np_):
            try:
                xyz = project_to_spaceform(net.vertex(m, n), q)
            except PointAtInfinityError:
                warnings.append(f"vertex ({m},{n}) is a point at infinity; skipped")
                continue
            count += 1
            index[(m, n)] = count
            lines.append("v " + " ".join(format(c, ".17g") for c in xyz))
    n_faces = 0
    for m in range(mp - 1):
        for n in range(np_ - 1):
            quad = [(m, n), (m + 1, n), (m + 1, n + 1), (m, n + 1)]
            if all(v in index for v in quad):
                lines.append("f " + " ".join(str(index[v]) for v in quad))
                n_faces += 1
            else:
                warnings.append(f"face at ({m},{n}) dropped (missing vertex)")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    for w in warnings:
        log.warning("%s", w)
    return count, n_faces, warnings


@dataclass
class PipelineResult:
    config: ExperimentConfig
    lattice: SurfaceLattice
    net: DiscreteNet
    certificate: dict
    readout: np.ndarray | None

    @property
    def certified(self) -> bool:
        return bool(self.certificate["certified"])


def run_pipeline(config: ExperimentConfig) -> PipelineResult:
    """Surface -> quantity -> lattice -> sampled net -> certificate.

    Every stage failure is re-raised with the stage name; lattice errors
    already carry lattice/grid coordinates.
    """
    def stage(name, fn):
        try:
            return fn()
        except (GeometryError, ValueError) as exc:
            raise PipelineStageError(name, exc) from exc

    surface = stage("surface", lambda: surface_by_name(
        config.surface, **config.surface_params))
    q = SpaceFormVector.euclidean()
    if config.mean_curvature is not None:
        h_val = float(config.mean_curvature)
    else:
        u0, u1, v0, v1 = surface.domain
        h_val = surface.mean_curvature(0.5 * (u0 + u1), 0.5 * (v0 + v1))
    quantity = stage("conserved-quantity",
                     lambda: cmc_linear_cq(surface, h_val, q))
    connection = stage("connection", lambda: connection_family(
        surface, scale=config.eta_scale))
    grid = SampleGrid.regular(config.grid_u, config.grid_v,
                              config.grid_nu, config.grid_nv)
    params = EdgeParams(config.a, config.b)
    lattice = stage("lattice", lambda: build_lattice(
        connection, quantity, params, grid, seed=config.seed,
        base_index=config.base_index, non_backlund=config.non_backlund_seeds,
        tol_cq_fit=config.tol("cq_fit", TOL_POLYFIT)))
    sample_index = config.sample_index or lattice.base_index
    net = stage("extract", lambda: extract_discrete(lattice, sample_index))

    cert = certify_type_d(
        net,
        tol_flat=config.tol("flatness", TOL_FLAT),
        tol_fit=config.tol("edge_fit", TOL_EDGE_FIT),
        tol_match=config.tol("edge_match", TOL_EDGE_MATCH),
    )
    certificate = cert.to_json_dict()
    certificate["config_hash"] = config.hash()
    certificate["worst_residuals"].update(
        {f"lattice_{k}": v for k, v in lattice.worst_residuals().items()})

    readout = None
    tol_const = config.tol("cmc_const", TOL_CMC_CONST)
    if net.cq is not None and net.degree == 1:
        try:
            readout = discrete_cmc_readout(net, q)
            spread = float(readout.max() - readout.min())
            certificate["cmc_readout"] = {
                "value": float(np.mean(readout)),
                "spread": spread,
                "constant": spread <= tol_const,
                "tolerance": tol_const,
            }
        except GeometryError as exc:
            certificate["cmc_readout"] = {"error": str(exc)}
    return PipelineResult(config, lattice, net, certificate, readout)


def write_pipeline_outputs(result: PipelineResult, out_dir) -> dict:
    """Write net.json, certificate.json and mesh.obj; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    net_path = save_net(result.net, out / "net.json")
    cert_path = _dump_json(result.certificate, out / "certificate.json")
    q = SpaceFormVector.euclidean()
    export_mesh(result.net, q, out / "mesh.obj")
    return {"net": net_path, "certificate": cert_path, "mesh": out / "mesh.obj"}
