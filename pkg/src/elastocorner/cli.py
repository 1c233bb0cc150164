"""Command-line entry point.

Subcommands: ``simulate``, ``farfield``, ``cgo-verify``, ``probe``,
``compare`` and ``admissibility``. Scenes are YAML or JSON documents
whose field names carry units; see ``SceneConfig.from_mapping``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import __version__
from .corner_probe import (
    CornerData,
    CornerProbeError,
    ManufacturedCorner,
    TraceMismatch,
    admissibility_check,
    corner_vanishing_probe,
    probe_corner,
    write_probe_report,
)
from .dtn_farfield import (
    BesselFailure,
    GridMismatch,
    ModeSingular,
    build_dtn,
    far_field_from_solution,
    farfield_distance,
    farfield_project,
    read_farfield,
    write_farfield,
)
from .elastic_core import (
    CGOProbe,
    InvalidSector,
    PlaneWave,
    cgo_boundary_integral_exact,
    cgo_boundary_integral_quadrature,
    cgo_moment_bound,
    cgo_moment_quadrature,
    cgo_norm_bounds,
    cgo_arc_norms_quadrature,
    cgo_sector_integral_exact,
    cgo_sector_integral_quadrature,
    cgo_tail_bound,
    cgo_tail_quadrature,
)
from .fem_solver import (
    MeshError,
    ResidualTooLarge,
    SingularSystem,
    assemble,
    circle_trace_modes,
    default_radius,
    generate_mesh,
    rhs_from_incident,
    solve,
    write_field_dump,
    write_mesh_dump,
)
from .geometry import (
    GeometryError,
    SectorGeometry,
    SimplePolygon,
    build_cell_partition,
    build_nest_partition,
    extract_corners,
)
from .materials import LameParameters, MaterialError, MediumConfig
from .quadrature import QuadratureFailure

__all__ = ["ConfigError", "SceneConfig", "RunManifest", "config_hash", "load_config", "main"]

log = logging.getLogger("elastocorner")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4
NUMERIC_ERRORS = (
    SingularSystem, ResidualTooLarge, ModeSingular, BesselFailure, QuadratureFailure, MeshError,
    ArithmeticError,
)


class ConfigError(ValueError):
    """Invalid scene description; the message names the offending field."""


class VerificationFailed(RuntimeError):
    pass


# ---------------------------------------------------------------- parsing


class _LineLoader(yaml.SafeLoader):
    pass


def _mapping_with_lines(loader, node, deep=False):
    mapping = loader.construct_mapping(node, deep=True)
    lines = {k.value: k.start_mark.line + 1 for k, _ in node.value if hasattr(k, "value")}
    mapping["__lines__"] = lines
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _mapping_with_lines)


def _strip_lines(obj):
    if isinstance(obj, dict):
        return {k: _strip_lines(v) for k, v in obj.items() if k != "__lines__"}
    if isinstance(obj, list):
        return [_strip_lines(v) for v in obj]
    return obj


def load_config(path) -> tuple[dict, dict]:
    """Parse a YAML or JSON scene; returns ``(document, line_index)``."""
    text = Path(path).read_text()
    try:
        raw = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return _strip_lines(raw), _collect_lines(raw)


def _collect_lines(raw, prefix=""):
    out = {}
    if isinstance(raw, dict):
        for k, line in raw.get("__lines__", {}).items():
            out[prefix + k] = line
        for k, v in raw.items():
            if k != "__lines__":
                out.update(_collect_lines(v, prefix + k + "."))
    return out


class _Reader:
    def __init__(self, doc: dict, lines: dict):
        self.doc, self.lines = doc, lines

    def _where(self, path: str) -> str:
        line = self.lines.get(path) or self.lines.get(path.rsplit(".", 1)[0])
        return f"{path} (line {line})" if line else path

    def get(self, path: str, default: Any = ..., kind=None):
        node: Any = self.doc
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                if default is ...:
                    raise ConfigError(f"missing field {path}")
                return default
            node = node[part]
        if node is None and default is not ...:
            return default
        if kind is not None:
            try:
                return kind(node)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{self._where(path)}: {exc}") from exc
        return node

    def fail(self, path: str, msg: str):
        raise ConfigError(f"{self._where(path)}: {msg}")


def _floats(v) -> list[float]:
    return [float(x) for x in (v if isinstance(v, (list, tuple)) else [v])]


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(v)


@dataclass(frozen=True)
class SceneConfig:
    """Validated scene: partition, media, incident wave, solver and output settings."""

    document: dict
    partition: Any
    lame: LameParameters
    omega: float
    medium: MediumConfig
    wave: PlaneWave
    R: float
    h_mesh: float
    N: int | None
    corner_grading: float
    far_field_M: int
    output_dir: Path
    medium_alt: MediumConfig | None = None
    probe: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, doc: dict, lines: dict | None = None, base: Path | None = None) -> "SceneConfig":
        r = _Reader(doc, lines or {})
        kind = r.get("partition.kind", kind=str)
        polys = r.get("partition.polygons")
        try:
            shapes = [SimplePolygon.from_coords(p) for p in polys]
            if kind == "nest":
                part = build_nest_partition(shapes)
            elif kind == "cell":
                part = build_cell_partition(shapes)
            else:
                r.fail("partition.kind", f"expected 'nest' or 'cell', got {kind!r}")
        except GeometryError as exc:
            r.fail("partition.polygons", str(exc))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            r.fail("partition.polygons", str(exc))
        try:
            lame = LameParameters(r.get("material.lambda_Pa", kind=float), r.get("material.mu_Pa", kind=float))
        except MaterialError as exc:
            r.fail("material", str(exc))
        omega = r.get("material.omega_rad_per_s", kind=float)
        if not omega > 0:
            r.fail("material.omega_rad_per_s", "must be positive")

        def medium(prefix):
            try:
                return MediumConfig.build(
                    part, r.get(f"{prefix}.q", kind=_floats), r.get(f"{prefix}.eta_Pa_per_m", kind=_floats)
                )
            except MaterialError as exc:
                r.fail(prefix, str(exc))

        med = medium("material")
        alt = medium("material_alt") if "material_alt" in doc else None
        wkind = r.get("incident.kind", "p", kind=str)
        if wkind not in ("p", "s"):
            r.fail("incident.kind", f"expected 'p' or 's', got {wkind!r}")
        wave = PlaneWave.of(wkind, r.get("incident.angle_rad", 0.0, kind=float), lame, omega)
        R = r.get("solver.R_m", None)
        R = default_radius(part) if R is None else float(R)
        h = r.get("solver.h_mesh_m", 0.1, kind=float)
        if not h > 0:
            r.fail("solver.h_mesh_m", "must be positive")
        N = r.get("solver.N_modes", None)
        out = Path(r.get("output.dir", "out", kind=str))
        if base is not None and not out.is_absolute():
            out = base / out
        return cls(
            doc, part, lame, omega, med, wave, R, h, None if N is None else int(N),
            r.get("solver.corner_grading", 0.5, kind=float),
            r.get("output.far_field_M", 360, kind=int), out, alt, r.get("probe", {}) or {},
        )


def config_hash(doc: dict) -> str:
    """sha256 of the canonical JSON form (sorted keys, no whitespace)."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    version: str = __version__
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished: str = ""
    files: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)

    def add_file(self, path: Path) -> None:
        self.files[str(path.name)] = hashlib.sha256(Path(path).read_bytes()).hexdigest()

    def write(self, directory: Path) -> Path:
        self.finished = datetime.now(timezone.utc).isoformat()
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True, default=str) + "\n")
        return path


# ---------------------------------------------------------------- pipelines


def _scene(args) -> tuple[SceneConfig, str]:
    doc, lines = load_config(args.config)
    scene = SceneConfig.from_mapping(doc, lines, Path(args.config).resolve().parent)
    if getattr(args, "out", None):
        scene = SceneConfig(**{**scene.__dict__, "output_dir": Path(args.out)})
    scene.output_dir.mkdir(parents=True, exist_ok=True)
    return scene, config_hash(doc)


def _solve(scene: SceneConfig, medium: MediumConfig | None = None):
    medium = medium or scene.medium
    mesh = generate_mesh(scene.partition, scene.R, scene.h_mesh, scene.corner_grading)
    dtn = build_dtn(scene.lame, scene.omega, scene.R, scene.N)
    system = assemble(mesh, medium, scene.lame, scene.omega, dtn)
    field_ = solve(system.with_rhs(rhs_from_incident(mesh, medium, scene.wave)), scene.wave)
    return mesh, dtn, field_


def cmd_simulate(args) -> int:
    scene, digest = _scene(args)
    man = RunManifest("simulate", digest)
    mesh, _, f = _solve(scene)
    dump = scene.output_dir / "field.csv"
    write_field_dump(dump, f, total=True)
    man.add_file(dump)
    for p in write_mesh_dump(scene.output_dir / "mesh", mesh):
        man.add_file(p)
    man.results = {"vertices": mesh.n_vertices, "residual": f.residual, **f.stability}
    man.write(scene.output_dir)
    print(f"wrote {dump} ({mesh.n_vertices} vertices, residual {f.residual:.2e})")
    return EXIT_OK


def write_component(path, pattern, beta: str) -> None:
    """Table of one far-field component: ``t`` (Cartesian u_t), ``p`` or ``s``."""
    rows = ["# convention = " + pattern.convention, f"# beta = {beta}"]
    if beta == "t":
        u = pattern.vector()
        rows.append("theta, Re u_t1, Im u_t1, Re u_t2, Im u_t2")
        rows += [
            f"{t:.16e}, {a.real:.16e}, {a.imag:.16e}, {b.real:.16e}, {b.imag:.16e}"
            for t, (a, b) in zip(pattern.angles, u)
        ]
    else:
        up, us = farfield_project(pattern.vector(), pattern.angles)
        vals = up if beta == "p" else us
        rows.append(f"theta, Re u_{beta}, Im u_{beta}")
        rows += [f"{t:.16e}, {v.real:.16e}, {v.imag:.16e}" for t, v in zip(pattern.angles, vals)]
    Path(path).write_text("\n".join(rows) + "\n")


def _farfield_pattern(scene):
    mesh, dtn, f = _solve(scene)
    return far_field_from_solution(circle_trace_modes(f, dtn), scene.far_field_M), f


def cmd_farfield(args) -> int:
    scene, digest = _scene(args)
    man = RunManifest("farfield", digest)
    pattern, f = _farfield_pattern(scene)
    path = scene.output_dir / "farfield.csv"
    write_farfield(path, pattern, scene.R)
    man.add_file(path)
    for beta in args.beta:
        p = scene.output_dir / f"farfield_{beta}.csv"
        write_component(p, pattern, beta)
        man.add_file(p)
    man.results = {"l2_norm": pattern.l2_norm(), "residual": f.residual}
    man.write(scene.output_dir)
    print(f"wrote {path} (L2 norm {pattern.l2_norm():.6e})")
    return EXIT_OK


def cgo_rows(sector: SectorGeometry, s_values: Sequence[float], lame: LameParameters, alpha: float = 0.5):
    """Rows ``(s, quantity, closed_or_bound, quadrature, passed)`` for one sector."""
    rows = []
    for s in s_values:
        p = CGOProbe.for_sector(sector, s)
        ex, qu = cgo_sector_integral_exact(p), cgo_sector_integral_quadrature(p)
        rows.append((s, "sector_integral", ex, qu, abs(ex - qu) <= 1e-8 * abs(ex)))
        for edge in ("plus", "minus"):
            bi = cgo_boundary_integral_exact(p, edge)
            q = cgo_boundary_integral_quadrature(p, edge)
            rows.append((s, f"edge_integral_{edge}", bi.exact, q, abs(bi.exact - q) <= 1e-8 * abs(bi.exact)))
        if not p.asymptotic:
            continue
        for edge in ("plus", "minus"):
            bi = cgo_boundary_integral_exact(p, edge)
            rows.append((s, f"edge_remainder_bound_{edge}", bi.remainder_bound, abs(bi.remainder),
                         abs(bi.remainder) <= bi.remainder_bound))
        b = cgo_moment_bound(p, alpha)
        q = cgo_moment_quadrature(p, alpha)
        rows.append((s, "moment_bound", b, q, q <= b))
        b = cgo_tail_bound(p)
        q = cgo_tail_quadrature(p, alpha)
        rows.append((s, "tail_bound", b, q, q <= b))
        rep = cgo_norm_bounds(p, lame)
        h1, tr = cgo_arc_norms_quadrature(p, lame)
        rows.append((s, "h1_arc_bound", rep.h1_bound, h1, h1 <= rep.h1_bound))
        rows.append((s, "traction_arc_bound", rep.traction_bound, tr, tr <= rep.traction_bound))
    return rows


def cmd_cgo_verify(args) -> int:
    sector = SectorGeometry.from_angles(args.theta_m, args.theta_M, h=args.h)
    if not sector.is_convex:
        raise InvalidSector(f"opening {sector.opening} is not in (0, pi)")
    lame = LameParameters(args.lam, args.mu)
    s_values = args.s or [5.0, 10.0, 20.0, 40.0]
    rows = cgo_rows(sector, s_values, lame)
    lines = ["s, quantity, reference, quadrature, pass"]
    for s, name, ref, q, ok in rows:
        lines.append(f"{s:.6g}, {name}, {_fmt(ref)}, {_fmt(q)}, {'PASS' if ok else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_VERIFY


def _fmt(v) -> str:
    if isinstance(v, complex):
        return f"{v.real:.16e}{v.imag:+.16e}j"
    return f"{float(v):.16e}"


def _manufactured(scene_probe: dict) -> CornerData:
    m = scene_probe.get("manufactured")
    if not isinstance(m, dict):
        raise ConfigError("missing field probe.manufactured")
    r = _Reader(m, {})
    sector = SectorGeometry.from_angles(
        r.get("theta_m_rad", kind=float), r.get("theta_M_rad", kind=float), h=r.get("h_m", kind=float)
    )
    fx = ManufacturedCorner(
        sector,
        tuple(_complex(v) for v in r.get("c")),
        tuple(tuple(_complex(v) for v in row) for row in r.get("G", [[0, 0], [0, 0]])),
        tuple(_complex(v) for v in r.get("cv", [1, 0])),
        _complex(r.get("sigma1", 0.0)),
        _complex(r.get("sigma2", 0.0)),
    )
    return CornerData.manufactured(
        fx,
        r.get("q1", kind=float),
        r.get("q2", kind=float),
        r.get("eta1_Pa_per_m", kind=float),
        r.get("eta2_Pa_per_m", kind=float),
        r.get("omega_rad_per_s", 1.0, kind=float),
    )


def cmd_probe(args) -> int:
    doc, lines = load_config(args.config)
    out = Path(args.out) if args.out else Path(args.config).resolve().parent / "out"
    out.mkdir(parents=True, exist_ok=True)
    pr = doc.get("probe") or {}
    man = RunManifest("probe", config_hash(doc))
    s_list = pr.get("s_list_per_m")
    alpha = float(pr.get("alpha", 1.0))
    report = out / "probe.json"
    if pr.get("mode", "manufactured") == "manufactured":
        data = _manufactured(pr)
        if s_list is None and "s_list_h_units" in pr:
            s_list = [float(v) / data.sector.h for v in pr["s_list_h_units"]]
        res = probe_corner(data, s_list, alpha)
        write_probe_report(report, res, {"mode": "manufactured"})
        man.results = {"eta_diff_hat": res.eta_diff_hat, "q_diff_hat": res.q_diff_hat,
                       "max_relative_balance": res.max_relative_balance}
        print(f"eta2 - eta1 = {res.eta_diff_hat:.6g}, q2 - q1 = {res.q_diff_hat:.6g}")
    else:
        scene = SceneConfig.from_mapping(doc, lines, Path(args.config).resolve().parent)
        if scene.medium_alt is None:
            raise ConfigError("solver probe needs material_alt")
        corner = extract_corners(scene.partition)[int(pr.get("corner", 0))]
        _, _, f1 = _solve(scene)
        _, _, f2 = _solve(scene, scene.medium_alt)
        data = CornerData.from_solutions(
            corner, f1, f2, q1=scene.medium.q_values[corner.owner], q2=scene.medium_alt.q_values[corner.owner]
        )
        van = corner_vanishing_probe(data.v, data.u2_minus, corner, levels=6)
        extra = {"mode": "solver", "vanishing": van.__dict__,
                 "v_decays": van.v_decays, "w_decays": van.w_decays}
        try:
            res = probe_corner(data, s_list, alpha, with_identity=False)
            write_probe_report(report, res, extra)
        except (TraceMismatch, CornerProbeError) as exc:
            extra["recovery"] = f"skipped: {exc}"
            report.write_text(json.dumps(extra, indent=2, sort_keys=True, default=str) + "\n")
        man.results = {"v_order": van.v_order}
        print(f"difference field decay order {van.v_order:.3g} +- {van.v_ci:.2g}")
    man.add_file(report)
    man.write(out)
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = read_farfield(args.a), read_farfield(args.b)
    d = farfield_distance(a, b)
    print(f"{d:.16e}")
    if args.max_distance is not None and d > args.max_distance:
        return EXIT_VERIFY
    return EXIT_OK


def cmd_admissibility(args) -> int:
    scene, digest = _scene(args)
    man = RunManifest("admissibility", digest)
    _, _, f = _solve(scene)
    corners = extract_corners(scene.partition)
    rep = admissibility_check(f, corners, args.tol)
    path = scene.output_dir / "admissibility.json"
    path.write_text(json.dumps(
        {"corner_values": rep.corner_values, "incident_sup": rep.incident_sup, "tol": rep.tol,
         "passed": rep.passed, "admissible": rep.admissible, "floor": rep.floor},
        indent=2, sort_keys=True) + "\n")
    man.add_file(path)
    man.results = {"admissible": rep.admissible, "floor": rep.floor}
    man.write(scene.output_dir)
    print(f"admissible = {rep.admissible} (floor {rep.floor:.4f}, tol {rep.tol})")
    return EXIT_OK if rep.admissible else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastocorner", description="Elastic scattering with conductive interfaces and CGO corner probes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scene_cmd(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="YAML or JSON scene file")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.set_defaults(func=fn)
        return sp

    scene_cmd("simulate", cmd_simulate, "solve and write the total-field and mesh dumps")
    ff = scene_cmd("farfield", cmd_farfield, "solve and write the far-field pattern")
    ff.add_argument("--beta", nargs="*", default=[], choices=["t", "p", "s"])
    scene_cmd("probe", cmd_probe, "run the corner probe on a manufactured or solver fixture")
    ad = scene_cmd("admissibility", cmd_admissibility, "check the total field at every corner")
    ad.add_argument("--tol", type=float, default=0.5)

    cg = sub.add_parser("cgo-verify", help="closed forms and bounds of the CGO probe against quadrature")
    cg.add_argument("--theta-m", type=float, default=-math.pi / 4)
    cg.add_argument("--theta-M", type=float, default=math.pi / 4)
    cg.add_argument("--h", type=float, default=1.0)
    cg.add_argument("--s", type=float, nargs="*")
    cg.add_argument("--lam", type=float, default=1.0)
    cg.add_argument("--mu", type=float, default=1.0)
    cg.add_argument("--out")
    cg.set_defaults(func=cmd_cgo_verify)

    cm = sub.add_parser("compare", help="L2 distance of two far-field files")
    cm.add_argument("a")
    cm.add_argument("b")
    cm.add_argument("--max-distance", type=float)
    cm.set_defaults(func=cmd_compare)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GeometryError, MaterialError, InvalidSector, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GridMismatch as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (VerificationFailed, CornerProbeError) as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
