"""Command-line front end: ``converge``, ``adapt`` and ``solve``.

Configuration is a flat INI-style key/value file. Section headers are
optional for the main keys; custom cases add ``[custom]`` plus term sections
``[psi.*]``, ``[p.*]`` and ``[nu.*]``.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .adaptivity import AdaptiveStepError, adaptive_loop, initial_mesh
from .assembly import assemble
from .error_analysis import ErrorReport, evaluate_level
from .export import export_solution, write_coo, write_vtk
from .mesh import MeshError, refine_uniform
from .problem_data import UnknownCaseError, check_wellposedness, custom_case, manufactured_case
from .solver import SolverError, solve
from .spaces import ElementFamily, SpaceError, build_space_set

log = logging.getLogger("oseen_vvp")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

MAIN_SECTION = "run"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    case: str = "Example1-nu_a"
    family: str = "taylor_hood"
    k: int = 1
    vorticity: str = "discontinuous"
    levels: int = 5
    steps: int = 10
    n0: int = 2
    n: int = 8
    sigma: float | None = None
    kappa1: float | None = None
    kappa2: float | None = None
    nu0: float | None = None
    nu1: float | None = None
    quadrature_degree: int | None = None
    max_dofs: int | None = None
    estimate: bool = False
    export_fields: bool = False
    export_mesh: bool = False
    dump_matrix: bool = False
    threads: int = 1
    custom: dict = field(default_factory=dict)


_INT_KEYS = {"k", "levels", "steps", "n0", "n", "quadrature_degree", "max_dofs", "threads"}
_FLOAT_KEYS = {"sigma", "kappa1", "kappa2", "nu0", "nu1"}
_BOOL_KEYS = {"estimate", "export_fields", "export_mesh", "dump_matrix"}
_STR_KEYS = {"case", "family", "vorticity"}
_TERM_KEYS = {"amp", "x_width", "x_center", "y_width", "y_center"}


def _read_parser(path) -> configparser.ConfigParser:
    text = Path(path).read_text()
    content = [s for s in (ln.strip() for ln in text.splitlines()) if s and s[0] not in "#;"]
    if not content or not content[0].startswith("["):
        text = f"[{MAIN_SECTION}]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parser


def _convert(key, raw, parser_section):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            return parser_section.getboolean(key)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return raw.strip()


def _parse_terms(parser, prefix):
    terms = []
    for name in sorted(s for s in parser.sections() if s.startswith(prefix + ".")):
        sec = parser[name]
        term = {}
        for key, raw in sec.items():
            try:
                if key in ("x_poly", "y_poly"):
                    term[key] = [float(t) for t in raw.replace(",", " ").split()]
                elif key in _TERM_KEYS:
                    term[key] = float(raw)
                else:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
            except ValueError as exc:
                raise ConfigError(f"bad value in [{name}] {key}: {raw!r}") from exc
        terms.append(term)
    return terms


def load_config(path) -> RunConfig:
    parser = _read_parser(path)
    cfg = RunConfig()
    if parser.has_section(MAIN_SECTION):
        sec = parser[MAIN_SECTION]
        known = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS
        for key, raw in sec.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, _convert(key, raw, sec))
    if parser.has_section("custom"):
        c = dict(parser["custom"])
        c["psi_terms"] = _parse_terms(parser, "psi")
        c["p_terms"] = _parse_terms(parser, "p")
        c["nu_terms"] = _parse_terms(parser, "nu")
        cfg.custom = c
    return cfg


def build_case(cfg: RunConfig):
    over = {
        k: getattr(cfg, k)
        for k in ("sigma", "kappa1", "kappa2", "nu0", "nu1")
        if getattr(cfg, k) is not None
    }
    if cfg.case == "custom":
        c = cfg.custom
        if not c:
            raise ConfigError("case = custom needs a [custom] section")
        try:
            return custom_case(
                c.get("domain", "unit_square"),
                c["psi_terms"],
                c["p_terms"],
                nu=c.get("nu", "constant"),
                nu_value=float(c.get("nu_value", 1.0)),
                nu_terms=c["nu_terms"],
                sigma=over.get("sigma", float(c.get("sigma", 1.0))),
                kappa1=over.get("kappa1"),
                kappa2=over.get("kappa2"),
                nu0=over.get("nu0"),
                nu1=over.get("nu1"),
            )
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"invalid custom case: {exc}") from exc
    return manufactured_case(cfg.case, **over)


def build_family(cfg: RunConfig) -> ElementFamily:
    try:
        return ElementFamily(cfg.family, cfg.k, cfg.vorticity)
    except (ValueError, SpaceError) as exc:
        raise ConfigError(f"invalid element family: {exc}") from exc


def _write_report(out: Path, report: ErrorReport) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.csv"
    path.write_text(report.to_csv())
    return path


def _print_rates(report: ErrorReport):
    last = report.rows[-1]
    if last.r_u is None:
        print("rates: need at least two levels")
        return
    print(f"final rates: r_u={last.r_u:.2f} r_w={last.r_w:.2f} r_p={last.r_p:.2f}")


def cmd_converge(cfg: RunConfig, out: Path, export_fields=False, threads=1) -> int:
    case = build_case(cfg)
    family = build_family(cfg)
    if cfg.levels < 1:
        raise ConfigError("levels must be at least 1")
    mesh = initial_mesh(case.domain, cfg.n0)
    report = ErrorReport(rate_by="h")
    for level in range(cfg.levels):
        t0 = time.perf_counter()
        spaces = build_space_set(mesh, family, cfg.quadrature_degree)
        system = assemble(spaces, case.data, threads=threads)
        solution = solve(system)
        row, _ = evaluate_level(case, spaces, solution, level, with_estimator=cfg.estimate)
        report.add(row)
        log.info("level %d: N=%d (%.1fs)", level, row.n_dofs, time.perf_counter() - t0)
        if export_fields or cfg.export_fields:
            export_solution(out, spaces, solution, stem=f"level_{level}")
        if export_fields or cfg.export_fields or cfg.export_mesh:
            out.mkdir(parents=True, exist_ok=True)
            write_vtk(out / f"mesh_step_{level}.vtk", mesh)
        if level + 1 < cfg.levels:
            mesh = refine_uniform(mesh)
    path = _write_report(out, report)
    print(f"wrote {path}")
    _print_rates(report)
    return EXIT_OK


def cmd_adapt(cfg: RunConfig, out: Path, export_fields=False, threads=1) -> int:
    case = build_case(cfg)
    family = build_family(cfg)
    fields_on = export_fields or cfg.export_fields
    mesh_on = fields_on or cfg.export_mesh
    if mesh_on:
        out.mkdir(parents=True, exist_ok=True)

    def on_step(step, mesh, spaces, solution):
        if mesh_on:
            write_vtk(out / f"mesh_step_{step}.vtk", mesh)
        if fields_on:
            export_solution(out, spaces, solution, stem=f"step_{step}")

    result = adaptive_loop(
        case, family, cfg.steps, max_dofs=cfg.max_dofs, n0=cfg.n0,
        threads=threads, quadrature_degree=cfg.quadrature_degree, on_step=on_step,
    )
    path = _write_report(out, result.report)
    print(f"wrote {path} ({len(result.report)} steps, stop: {result.stop_reason})")
    _print_rates(result.report)
    return EXIT_OK


def cmd_solve(cfg: RunConfig, out: Path, export_fields=True, threads=1) -> int:
    case = build_case(cfg)
    family = build_family(cfg)
    report = check_wellposedness(case.data, beta_solenoidal=True, domain=case.domain)
    print("hypothesis report:")
    for line in report.lines():
        print("  " + line)
    mesh = initial_mesh(case.domain, cfg.n)
    spaces = build_space_set(mesh, family, cfg.quadrature_degree)
    system = assemble(spaces, case.data, threads=threads)
    solution = solve(system)
    print(f"N = {spaces.n_dofs}, relative residual = {solution.diagnostics['residual']:.3e}")
    row, _ = evaluate_level(case, spaces, solution, 0, with_estimator=True)
    rep = ErrorReport(rate_by="h")
    rep.add(row)
    _write_report(out, rep)
    paths = export_solution(out, spaces, solution)
    write_vtk(out / "mesh_step_0.vtk", mesh)
    if cfg.dump_matrix:
        write_coo(out / "matrix.coo", system.matrix)
    print(f"e_u={row.e_u:.4g} e_w={row.e_w:.4g} e_p={row.e_p:.4g} theta={row.theta:.4g}")
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


COMMANDS = {"converge": cmd_converge, "adapt": cmd_adapt, "solve": cmd_solve}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oseen-vvp",
        description="Velocity-vorticity-pressure Oseen solver with variable viscosity.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="INI-style config file")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--export-fields", action="store_true",
                        help="write mesh and u/omega/p VTK files per level or step")
    parser.add_argument("--threads", type=int, default=None, help="assembly threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        threads = args.threads if args.threads is not None else cfg.threads
        if threads < 1:
            raise ConfigError("threads must be positive")
        kwargs = {"threads": threads}
        if args.command != "solve" or args.export_fields:
            kwargs["export_fields"] = args.export_fields
        return COMMANDS[args.command](cfg, args.out, **kwargs)
    except UnknownCaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, MeshError, SpaceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, AdaptiveStepError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
