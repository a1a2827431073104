"""Command-line front end: mesh generation, single solves, convergence runs.

Exit codes: 0 on success, 1 on usage errors (bad flags, missing files,
invalid parameters), 2 on numerical failures, which also emit a
machine-readable JSON object on stderr.

A config file of ``key=value`` lines (# comments allowed) can pre-set any
long option of the chosen subcommand; explicit flags override it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from . import mesh as mesh_mod
from . import verify
from .errors import NumericalError, PolyVemError
from .physics import solve_brinkman, solve_brinkman_reduced, solve_darcy

_SCHEME_ALIASES = {
    "div-free": "div_free",
    "div_free": "div_free",
    "reduced": "reduced",
    "non-div-free": "non_div_free",
    "non_div_free": "non_div_free",
}

_CASE_ALIASES = {
    "test1": "test1_darcy",
    "test1_darcy": "test1_darcy",
    "test1-as-printed": "test1_darcy_as_printed",
    "test1_darcy_as_printed": "test1_darcy_as_printed",
    "test2": "test2_brinkman",
    "test2_brinkman": "test2_brinkman",
    "patch-darcy": "poly_patch_darcy",
    "poly_patch_darcy": "poly_patch_darcy",
    "patch-brinkman": "poly_patch_brinkman",
    "poly_patch_brinkman": "poly_patch_brinkman",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_fraction(text: str) -> float:
    """Accept mesh sizes as plain floats or fraction literals like 1/16."""
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"invalid number {text!r} for --h") from exc


def _parse_scheme(text: str) -> str:
    key = text.strip()
    if key not in _SCHEME_ALIASES:
        raise UsageError(f"invalid --scheme {text!r}; choose from {sorted(set(_SCHEME_ALIASES))}")
    return _SCHEME_ALIASES[key]


def _resolve_case(name: str, k: int, seed: int):
    key = name.strip()
    if key not in _CASE_ALIASES:
        raise UsageError(f"invalid --case {name!r}; choose from {sorted(set(_CASE_ALIASES))}")
    case = verify.builtin_cases()[_CASE_ALIASES[key]]
    if callable(case) and not isinstance(case, verify.ManufacturedCase):
        case = case(k, seed=seed)
    return case


def _load_config(path) -> dict:
    if not os.path.exists(path):
        raise UsageError(f"config file {path!r} not found")
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _merge_config(args, config: dict):
    for key, value in config.items():
        if not hasattr(args, key):
            raise UsageError(f"config key {key!r} does not match any option")
        if getattr(args, key) is None:
            setattr(args, key, value)
    return args


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"missing required option --{name.replace('_', '-')}")


def _get_mesh(args, seed_default=0):
    if getattr(args, "mesh_file", None):
        return mesh_mod.load_mesh(args.mesh_file), {"file": args.mesh_file}
    if getattr(args, "mesh", None):
        parts = str(args.mesh).split(":")
        family = parts[0]
        if len(parts) < 2:
            raise UsageError("--mesh expects family:h[:seed=N]")
        h = parse_fraction(parts[1])
        seed = seed_default
        for extra in parts[2:]:
            if extra.startswith("seed="):
                seed = int(extra[5:])
            else:
                raise UsageError(f"unknown mesh option {extra!r}")
        return mesh_mod.generate_mesh(family, h, seed), {
            "family": family,
            "h": h,
            "seed": seed,
        }
    raise UsageError("missing --mesh or --mesh-file")


def build_parser() -> _Parser:
    parser = _Parser(prog="polyvem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")

    pm = sub.add_parser("mesh", help="generate or validate polygonal meshes")
    pm.add_argument("--config")
    pm.add_argument("--family", choices=mesh_mod.MESH_FAMILIES)
    pm.add_argument("--h", dest="h")
    pm.add_argument("--seed", type=int, default=None)
    pm.add_argument("--out")
    pm.add_argument("--validate", metavar="PATH", help="validate an existing mesh file")

    ps = sub.add_parser("solve", help="run one Darcy or Brinkman solve")
    ps.add_argument("equation", choices=["darcy", "brinkman"])
    ps.add_argument("--config")
    ps.add_argument("--case")
    ps.add_argument("--k", type=int, default=None)
    ps.add_argument("--scheme")
    ps.add_argument("--mu")
    ps.add_argument("--mesh", help="family:h[:seed=N]")
    ps.add_argument("--mesh-file")
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--out")
    ps.add_argument("--dump-system", metavar="PATH")

    pc = sub.add_parser("convergence", help="run a refinement study and emit CSV")
    pc.add_argument("--config")
    pc.add_argument("--case")
    pc.add_argument("--family", choices=mesh_mod.MESH_FAMILIES)
    pc.add_argument("--k", type=int, default=None)
    pc.add_argument("--scheme", help="comma-separated scheme list")
    pc.add_argument("--h", dest="h", help="comma-separated h list, fractions allowed")
    pc.add_argument("--mu", help="comma-separated viscosity list (brinkman cases)")
    pc.add_argument("--seed", type=int, default=None)
    pc.add_argument("--out")
    pc.add_argument("--plot", metavar="SVG")
    pc.add_argument("--threads", type=int, default=None)
    return parser


def _cmd_mesh(args) -> int:
    if args.validate:
        mesh = mesh_mod.load_mesh(args.validate)
        report = mesh_mod.validate_mesh(mesh)
        print(
            json.dumps(
                {
                    "cells": mesh.n_cells,
                    "vertices": mesh.n_vertices,
                    "edges": mesh.n_edges,
                    "total_area": mesh_mod.total_area(mesh),
                    "min_edge_to_diameter": report.min_edge_to_diameter,
                    "min_area_to_diameter_sq": report.min_area_to_diameter_sq,
                    "nonconvex_cells": report.n_nonconvex,
                    "orientation_violations": len(report.orientation_violations),
                }
            )
        )
        return 0
    _require(args, "family", "h", "out")
    mesh = mesh_mod.generate_mesh(args.family, parse_fraction(args.h), int(args.seed or 0))
    mesh_mod.save_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_cells} cells, {mesh.n_vertices} vertices")
    return 0


def _cmd_solve(args) -> int:
    _require(args, "case")
    k = int(args.k or 2)
    scheme = _parse_scheme(args.scheme or "div-free")
    seed = int(args.seed or 0)
    case = _resolve_case(args.case, k, seed)
    mesh, mesh_info = _get_mesh(args, seed_default=seed)
    if args.equation == "darcy":
        spec = case.darcy_spec(k=k, scheme=scheme)
        solution = solve_darcy(mesh, spec)
        mu = None
    else:
        mu = parse_fraction(args.mu) if args.mu else 1.0
        spec = case.brinkman_spec(mu, k=k, scheme=scheme)
        if scheme == "reduced":
            solution = solve_brinkman_reduced(mesh, spec)
        else:
            solution = solve_brinkman(mesh, spec)
    report = verify.compute_errors(solution, case)
    payload = {
        "equation": args.equation,
        "case": case.name,
        "scheme": scheme,
        "k": k,
        "mu": mu,
        "mesh": mesh_info,
        "velocity_dofs": solution.velocity.tolist(),
        "pressure_coeffs": solution.pressure.tolist(),
        "diagnostics": solution.diagnostics,
        "errors": report.as_dict(),
    }
    if args.dump_system:
        from . import assembly as asm

        elements = solution.elements
        dof_map = solution.dof_map
        if args.equation == "darcy":
            mats = [el.darcy_form(spec.inverse_permeability(c))[0] for c, el in enumerate(elements)]
            loads = (
                [el.load_vector(spec.momentum_source) for el in elements]
                if spec.momentum_source
                else None
            )
            prhs = [el.scalar_moments(spec.mass_source) for el in elements]
            system = asm.assemble(dof_map, elements, mats, loads, prhs)
        else:
            mats = [
                el.brinkman_form(spec.mu, spec.inverse_permeability(c))
                for c, el in enumerate(elements)
            ]
            loads = [el.load_vector(spec.momentum_source) for el in elements]
            system = asm.assemble(dof_map, elements, mats, loads, None, dirichlet=spec.dirichlet)
        system.dump(args.dump_system)
        payload["dumped_system"] = args.dump_system
    text = json.dumps(payload)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_convergence(args) -> int:
    _require(args, "case", "family", "h", "out")
    k = int(args.k or 2)
    seed = int(args.seed or 0)
    schemes = [_parse_scheme(s) for s in str(args.scheme or "div-free").split(",")]
    hs = [parse_fraction(tok) for tok in str(args.h).split(",")]
    mus = [parse_fraction(tok) for tok in str(args.mu).split(",")] if args.mu else None
    case = _resolve_case(args.case, k, seed)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("POLYVEM_THREADS", "1"))
    tables = verify.run_convergence(
        case, args.family, k, schemes, hs, mu_values=mus, seed=seed, threads=threads
    )
    with open(args.out, "w") as fh:
        verify.tables_to_csv(tables, stream=fh)
    if args.plot:
        verify.plot_tables(tables, args.plot)
    print(f"wrote {args.out}: {sum(len(t.rows) for t in tables)} rows")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand (mesh | solve | convergence)")
        if getattr(args, "config", None):
            _merge_config(args, _load_config(args.config))
        if args.command == "mesh":
            return _cmd_mesh(args)
        if args.command == "solve":
            return _cmd_solve(args)
        return _cmd_convergence(args)
    except UsageError as exc:
        print(f"polyvem: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"polyvem: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        payload["diagnostics"] = getattr(exc, "diagnostics", {})
        print(json.dumps(payload), file=sys.stderr)
        return 2
    except PolyVemError as exc:
        print(f"polyvem: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
