"""Command-line front end: scene files in, verdict reports and curve data out.

Scenes are either built-in ("section6-coincident", "section6-generic:0.7") or
JSON documents carrying explicit per-node spanning vectors for named Legendre
fields.  Reports are deterministic JSON with one entry per executed check;
exit code 0 means every check passed, 1 means a mathematical check failed,
2 means the input was unusable.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from .errors import GeometryInputError
from .grids import Axis, Grid, SectionField, SubbundleField, flatness_report
from .pseudo import MetricSpace
from .ribaucour import build_v, demoulin, ribaucour_verdict, validate_legendre

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


def _max_workers() -> int:
    raw = os.environ.get("LSL_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return max(1, os.cpu_count() or 1)


class SceneInput:
    """Resolved scene: named Legendre fields plus optional built-in extras."""

    def __init__(self, fields, tolerances, builtin=None, descriptor=""):
        self.fields = fields
        self.tolerances = tolerances
        self.builtin = builtin  # the dupin Scene object when built in
        self.descriptor = descriptor

    def digest(self) -> str:
        return hashlib.sha256(self.descriptor.encode()).hexdigest()[:16]

    def field(self, name: str):
        if name not in self.fields:
            raise GeometryInputError(f"unknown field {name!r}; have {sorted(self.fields)}")
        return self.fields[name]


def _load_builtin(name: str, resolution) -> SceneInput:
    from . import dupin

    n_u, n_v = resolution
    if name == "section6-coincident":
        scene = dupin.build_scene(dupin.coincident_params(n_u, n_v))
    elif name.startswith("section6-generic"):
        rotation = 0.7
        if ":" in name:
            rotation = float(name.split(":", 1)[1])
        scene = dupin.build_scene(dupin.generic_params(rotation, n_u, n_v))
    else:
        raise GeometryInputError(f"unknown built-in scene {name!r}")
    fields = {"f0": scene.f0, "fhat0": scene.fhat0, "fhat1": scene.fhat1}
    tolerances = {
        "legendre": scene.thresholds.legendre,
        "n_floor": scene.thresholds.n_flat,
        "v_flat": scene.thresholds.v_flat,
    }
    return SceneInput(fields, tolerances, builtin=scene, descriptor=f"{name}@{n_u}x{n_v}")


def _load_scene_file(path: str) -> SceneInput:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise GeometryInputError("scene document must be a JSON object")
    if "scene" in doc:
        res = doc.get("resolution", [64, 64])
        return _load_builtin(doc["scene"], res)
    for key in ("ambient", "grid", "fields"):
        if key not in doc:
            raise GeometryInputError(f"scene document misses {key!r}")
    amb = doc["ambient"]
    p, q = amb["signature"]
    space = MetricSpace(int(p), int(q))
    if space.dim != int(amb["dim"]):
        raise GeometryInputError("ambient dim does not match the signature")
    axes = [
        Axis(float(a["lo"]), float(a["hi"]), int(a["n"]), bool(a.get("periodic", False)))
        for a in doc["grid"]["axes"]
    ]
    excluded = [tuple(z) for z in doc["grid"].get("excluded", [])]
    grid = Grid(axes, excluded)
    tolerances = {"legendre": 1e-2, "n_floor": 1e-8, "v_flat": 1e-6}
    tolerances.update(doc.get("tolerances", {}))
    fields = {}
    for name, spec in doc["fields"].items():
        if spec.get("type", "legendre") != "legendre":
            raise GeometryInputError(f"unsupported field type for {name!r}")
        vectors = [np.asarray(v, dtype=float) for v in spec["vectors"]]
        if len(vectors) != 2:
            raise GeometryInputError("a legendre field needs exactly two spanning arrays")
        secs = [SectionField(grid, space, v) for v in vectors]
        fields[name] = validate_legendre(
            SubbundleField.from_sections(secs),
            legendre_tol=tolerances["legendre"],
            iso_tol=tolerances.get("iso", 1e-6),
        )
    return SceneInput(fields, tolerances, descriptor=json.dumps(doc, sort_keys=True)[:4096])


def _resolve_scene(arg: str) -> SceneInput:
    if arg.startswith("section6"):
        return _load_builtin(arg, [64, 64])
    return _load_scene_file(arg)


def _emit(report: dict, out: str | None):
    text = json.dumps(report, indent=2, sort_keys=True, default=float) + "\n"
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report(command: str, scene: SceneInput, checks: list, t0: float) -> dict:
    return {
        "command": command,
        "inputs": scene.digest(),
        "checks": checks,
        "elapsed_seconds": time.time() - t0,
    }


def cmd_check(args) -> int:
    t0 = time.time()
    scene = _resolve_scene(args.scene)
    f = scene.field(args.pair[0])
    fhat = scene.field(args.pair[1])
    verdict = ribaucour_verdict(
        f, fhat, threshold=args.tol, floor=scene.tolerances["n_floor"], with_sections=False
    )
    checks = [
        {
            "name": "ribaucour_pair",
            "verdict": bool(verdict.is_pair),
            "residual": verdict.curvature.max_defect,
            "worst_node": list(verdict.curvature.worst_node),
        }
    ]
    _emit(_report("check", scene, checks, t0), args.out)
    return EXIT_OK if verdict.is_pair else EXIT_CHECK_FAILED


def cmd_demoulin(args) -> int:
    t0 = time.time()
    scene = _resolve_scene(args.scene)
    f0 = scene.field(args.names[0])
    fhat0 = scene.field(args.names[1])
    fhat1 = scene.field(args.names[2])
    checks = []
    code = EXIT_OK
    try:
        v = build_v(fhat0, fhat1)
    except Exception as exc:
        checks.append({"name": "v_bundle", "verdict": False, "error": str(exc)})
        _emit(_report("demoulin", scene, checks, t0), args.out)
        return EXIT_CHECK_FAILED
    rep = flatness_report(v)
    v_threshold = args.tol if args.tol is not None else scene.tolerances["v_flat"]
    flat = rep.max_defect <= v_threshold
    checks.append(
        {
            "name": "v_flat",
            "verdict": bool(flat),
            "residual": rep.max_defect,
            "threshold": v_threshold,
            "worst_node": list(rep.worst_node),
        }
    )
    families_dump = None
    if flat:
        frame_sections = scene.builtin.frame_sections if (
            scene.builtin is not None and scene.builtin.coincident
        ) else None
        fam = demoulin(
            v, f0, fhat0, fhat1,
            frame_sections=frame_sections,
            legendre_tol=scene.tolerances["legendre"],
            iso_tol=1e-6,
        )
        spheres = {
            family: [
                {"theta": th, "vector": list(vec)}
                for th, vec in fam.constant_sphere_members(family)
            ]
            for family in ("alpha", "beta")
        }
        checks.append(
            {
                "name": "alpha_constant_sphere_members",
                "verdict": len(spheres["alpha"]) == 2,
                "count": len(spheres["alpha"]),
            }
        )
        samples = args.samples
        sample_results = []
        if samples > 0:
            thetas = np.linspace(0.2, 2.8, samples)
            for ta in thetas:
                for tb in thetas:
                    ver = ribaucour_verdict(
                        fam.member("alpha", ta),
                        fam.member("beta", tb),
                        floor=scene.tolerances["n_floor"],
                        with_sections=False,
                    )
                    sample_results.append(bool(ver.is_pair))
            checks.append(
                {
                    "name": "cross_family_pairs",
                    "verdict": all(sample_results),
                    "samples": len(sample_results),
                }
            )
        else:
            checks.append({"name": "cross_family_pairs", "verdict": True, "skipped": True})
        families_dump = {
            "tags": {k: [fam_name, theta] for k, (fam_name, theta) in fam.tags.items()},
            "gram": [list(row) for row in fam.frame_gram],
            "spheres": spheres,
        }
    else:
        code = EXIT_CHECK_FAILED
        checks.append({"name": "families", "verdict": False, "error": "V not flat"})
    report = _report("demoulin", scene, checks, t0)
    if families_dump is not None:
        report["families"] = families_dump
    _emit(report, args.out)
    if not all(c["verdict"] for c in checks):
        code = EXIT_CHECK_FAILED
    return code


def cmd_cube(args) -> int:
    from . import cube as cube_mod

    t0 = time.time()
    checks = []
    if args.random is not None:
        rng = np.random.default_rng(args.random)
        cfg = cube_mod.random_single_node_config(rng)
        scene = SceneInput({}, {}, descriptor=f"random:{args.random}")
    else:
        scene = _resolve_scene(args.scene)
        if scene.builtin is None or not scene.builtin.coincident:
            raise GeometryInputError("cube pipeline mode needs the coincident built-in scene")
        cfg = cube_mod.pipeline_cube(scene.builtin)
    gen = cube_mod.check_genericity(cfg)
    checks.append({"name": "genericity", "verdict": bool(gen["ok"]),
                   "violations": [list(map(str, v)) for v in gen["violations"]]})
    if not gen["ok"]:
        _emit(_report("cube", scene, checks, t0), args.out)
        return EXIT_CHECK_FAILED
    faces = cube_mod.face_planes(cfg)
    legendre_tol = scene.tolerances.get("legendre") if scene.fields else None
    ev = cube_mod.eighth_vertex(cfg, legendre_tol=legendre_tol)
    checks.append({"name": "eighth_vertex", "verdict": ev.assembly_gap < 1e-8,
                   "assembly_gap": ev.assembly_gap, "isotropy": ev.isotropy})
    if ev.legendre is not None:
        checks.append({"name": "eighth_legendre", "verdict": True,
                       "residual": ev.legendre.legendre_residual})
    assign = cube_mod.normalize_normals(cfg, faces)
    checks.append({"name": "epsilon_normalized",
                   "verdict": all(v == 1 for v in assign.epsilon.values()),
                   "raw": assign.raw_epsilon})
    secs = cube_mod.vertex_sections(cfg, assign)
    checks.append({"name": "vertex_sections", "verdict": secs.membership_residual < 1e-6,
                   "membership": secs.membership_residual, "sums": secs.vertex_sum_residual})
    if cfg.grid is not None:
        eq = cube_mod.verify_eq13(cfg, secs)
        checks.append({"name": "eq13", "verdict": eq["rearranged_gap"] < 1e-8, **eq})
    _emit(_report("cube", scene, checks, t0), args.out)
    return EXIT_OK if all(c["verdict"] for c in checks) else EXIT_CHECK_FAILED


def cmd_meridians(args) -> int:
    from . import dupin
    from .spaceform import cross_ratio_constancy  # noqa: F401  (re-export convenience)
    from concurrent.futures import ThreadPoolExecutor

    t0 = time.time()
    if args.variant != "coincident":
        raise GeometryInputError("meridian export needs the coincident variant")
    n_u, n_v = args.grid
    scene = dupin.build_scene(dupin.coincident_params(n_u, n_v))
    d6 = dupin.demoulin_section6(scene, check_transported_frame=False)
    alpha_thetas = list(np.linspace(0.0, np.pi, args.samples, endpoint=False))
    beta_thetas = list(np.linspace(0.0, np.pi, max(args.samples // 2, 2), endpoint=False))
    curves = dupin.export_meridians(scene, d6.families, alpha_thetas, beta_thetas, args.out)
    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        residuals = list(
            pool.map(
                lambda th: dupin.rotation_invariance_residual(
                    scene, d6.families.member("alpha", th)
                ),
                alpha_thetas,
            )
        )
    ok = max(residuals) < 1e-6
    sys.stderr.write(
        f"exported {len(curves)} meridian curves; rotation residual {max(residuals):.3e}; "
        f"elapsed {time.time() - t0:.1f}s\n"
    )
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="liesphere", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="Ribaucour-pair verdict for two named fields")
    p.add_argument("scene", help="built-in scene name or scene JSON path")
    p.add_argument("pair", nargs=2, help="two Legendre field names")
    p.add_argument("--tol", type=float, default=None, help="explicit flatness threshold")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("demoulin", help="flatness of the spanned bundle and its families")
    p.add_argument("scene")
    p.add_argument("names", nargs=3, help="base map and its two transforms")
    p.add_argument("--samples", type=int, default=3)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_demoulin)

    p = sub.add_parser("cube", help="cube construction checks")
    p.add_argument("scene", nargs="?", default="section6-coincident")
    p.add_argument("--random", type=int, default=None, help="single-node mode with a seed")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_cube)

    p = sub.add_parser("meridians", help="export meridian curves as CSV")
    p.add_argument("--variant", default="coincident")
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=lambda s: [int(x) for x in s.split("x")], default=[48, 48])
    p.add_argument("--samples", type=int, default=8)
    p.set_defaults(fn=cmd_meridians)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        return args.fn(args)
    except SystemExit as exc:  # argparse errors
        return EXIT_INPUT_ERROR if exc.code not in (0, None) else 0
    except (GeometryInputError, FileNotFoundError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
