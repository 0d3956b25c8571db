"""Command-line driver.

Subcommands: `pipeline` runs the end-to-end experiment from a config,
`verify` re-certifies a saved net, `export` writes its OBJ mesh, and
`fourth-point` solves a single Bianchi quadrilateral for debugging.
Exit codes: 0 = certified / ok, 1 = verification failure, 2 = construction
or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .discrete import TOL_CMC_CONST, TOL_EDGE_FIT, TOL_EDGE_MATCH, TOL_FLAT, \
    certify_type_d, discrete_cmc_readout
from .lattice import fourth_point_diagnostics
from .netio import (
    ExperimentConfig,
    NetFormatError,
    PipelineStageError,
    _dump_json,
    export_mesh,
    load_config,
    load_net,
    preset_config,
    run_pipeline,
    write_pipeline_outputs,
)
from .pseudo import CONFORMAL_3D, GeometryError, NullLine, PseudoVector
from .smooth import SpaceFormVector, euclidean_lift

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_ERROR = 2


def _add_tolerance_args(parser: argparse.ArgumentParser):
    parser.add_argument("--tol-flat", type=float, help="quad flatness tolerance")
    parser.add_argument("--tol-edge-fit", type=float,
                        help="edge polynomial-fit tolerance (relative)")
    parser.add_argument("--tol-edge-match", type=float,
                        help="edge coefficient-match tolerance (relative)")
    parser.add_argument("--tol-cq-fit", type=float,
                        help="lattice conserved-quantity fit tolerance")
    parser.add_argument("--tol-cmc-const", type=float,
                        help="CMC readout constancy tolerance")


def _tolerance_overrides(args) -> dict:
    mapping = {"flatness": args.tol_flat, "edge_fit": args.tol_edge_fit,
               "edge_match": args.tol_edge_match, "cq_fit": args.tol_cq_fit,
               "cmc_const": args.tol_cmc_const}
    return {k: v for k, v in mapping.items() if v is not None}


def _cmd_pipeline(args) -> int:
    if args.config:
        config = load_config(args.config)
    else:
        config = preset_config(args.preset)
    overrides = _tolerance_overrides(args)
    data = config.to_dict()
    if args.seed is not None:
        data["seed"] = args.seed
    if args.non_backlund:
        data["non_backlund_seeds"] = True
    if overrides:
        data["tolerances"] = {**data["tolerances"], **overrides}
    config = ExperimentConfig.from_dict(data)

    result = run_pipeline(config)
    paths = write_pipeline_outputs(result, args.out_dir)
    cert = result.certificate
    print(f"net: {paths['net']}")
    print(f"certificate: {paths['certificate']}")
    print(f"mesh: {paths['mesh']}")
    print(f"flat: {cert['flat']}  edge_property: {cert['edge_property']}  "
          f"degree: {cert['degree']}")
    if "cmc_readout" in cert and "value" in cert.get("cmc_readout", {}):
        r = cert["cmc_readout"]
        print(f"cmc readout: {r['value']:.9g} (spread {r['spread']:.3e}, "
              f"constant: {r['constant']})")
    print(f"certified: {cert['certified']}")
    return EXIT_OK if cert["certified"] else EXIT_VERIFICATION


def _cmd_verify(args) -> int:
    net = load_net(args.net)
    kwargs = {}
    if args.tol_flat is not None:
        kwargs["tol_flat"] = args.tol_flat
    if args.tol_edge_fit is not None:
        kwargs["tol_fit"] = args.tol_edge_fit
    if args.tol_edge_match is not None:
        kwargs["tol_match"] = args.tol_edge_match
    cert = certify_type_d(net, **kwargs).to_json_dict()
    if net.metadata.get("violations"):
        cert["violations"] = net.metadata["violations"]
    if net.cq is not None and net.degree == 1:
        try:
            readout = discrete_cmc_readout(net, SpaceFormVector.euclidean())
            spread = float(readout.max() - readout.min())
            tol_const = args.tol_cmc_const if args.tol_cmc_const is not None \
                else TOL_CMC_CONST
            cert["cmc_readout"] = {"value": float(np.mean(readout)),
                                   "spread": spread,
                                   "constant": spread <= tol_const}
        except GeometryError as exc:
            cert["cmc_readout"] = {"error": str(exc)}
    if args.out:
        _dump_json(cert, args.out)
        print(f"certificate: {args.out}")
    else:
        print(json.dumps(cert, sort_keys=True, indent=1, default=float))
    return EXIT_OK if cert["certified"] else EXIT_VERIFICATION


def _cmd_export(args) -> int:
    net = load_net(args.net)
    n_vertices, n_faces, warnings = export_mesh(
        net, SpaceFormVector.euclidean(), args.out)
    print(f"mesh: {args.out} ({n_vertices} vertices, {n_faces} faces)")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def _parse_point(coords) -> NullLine:
    coords = [float(c) for c in coords]
    if len(coords) == 3:
        return euclidean_lift(np.array(coords))
    if len(coords) == CONFORMAL_3D.dim:
        return NullLine(PseudoVector(np.array(coords), CONFORMAL_3D), tol=1e-8)
    raise ValueError("points must have 3 (chart) or 5 (light cone) coordinates")


def _cmd_fourth_point(args) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    fi = _parse_point(data["f_i"])
    fj = _parse_point(data["f_j"])
    fl = _parse_point(data["f_l"])
    fk, info = fourth_point_diagnostics(fi, fj, fl,
                                        float(data["m_ij"]), float(data["m_il"]))
    out = {
        "f_k": fk.rep.coords.tolist(),
        "flatness_residual": info["flatness_residual"],
        "cross_ratio": info["cross_ratio"],
        "target_ratio": info["target_ratio"],
    }
    print(json.dumps(out, sort_keys=True, indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isolattice",
        description="Bäcklund-transform lattices of isothermic surfaces and "
                    "certification of the discrete nets they sample.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run the end-to-end experiment")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="experiment config JSON")
    src.add_argument("--preset", default="cylinder",
                     help="bundled config name (default: cylinder)")
    p.add_argument("--out-dir", type=Path, default=Path("."),
                   help="output directory (net.json, certificate.json, mesh.obj)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--non-backlund", action="store_true",
                   help="seed legs violating the orthogonality condition "
                        "(negative control)")
    _add_tolerance_args(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("verify", help="re-certify a saved net")
    p.add_argument("--net", type=Path, required=True)
    p.add_argument("--out", type=Path, help="write the certificate JSON here")
    _add_tolerance_args(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("export", help="write the OBJ mesh of a saved net")
    p.add_argument("--net", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("fourth-point", help="solve one Bianchi quadrilateral")
    p.add_argument("--input", type=Path, required=True,
                   help="JSON with f_i, f_j, f_l (chart or light-cone coords) "
                        "and labels m_ij, m_il")
    p.set_defaults(func=_cmd_fourth_point)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PipelineStageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (GeometryError, NetFormatError, ValueError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
