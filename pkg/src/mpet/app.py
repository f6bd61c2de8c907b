"""Experiment configuration, reproduction campaigns and the ``mpet`` command line.

Config files are INI style::

    [mesh]
    kind = unit_square        ; unit_square | annulus | file
    n = 16                    ; or: sizes = 4, 8, 16, 32 (conv-space)
    k = 2
    l = 1
    [params]
    case = case1              ; case1 | case2 | time | brain | custom
    [time]
    dt = 1/8, 1/16, 1/32
    T = 0.5
    [schemes]
    list = parallel_split
    workers = 1
    [output]
    dir = results

Every campaign returns its table rows and writes them as CSV into the
output directory. Only the ``bench`` table carries wall-clock columns; all
other tables are bitwise reproducible.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .analysis import ERROR_FIELDS, energy_proxy, eoc, field_difference, first_step_reference, mms_errors
from .assembly import MpetParameters
from .brain import brain_parameters, brain_problem
from .linalg import SolverError
from .mesh import Mesh, annulus_mesh, read_mesh, unit_square_mesh, write_mesh
from .mms import CASES, ManufacturedCase, case_parameters
from .output import state_fields, write_csv, write_vtk
from .schemes import SCHEMES, Discretization, Integrator, MpetProblem, SchemeConfig, run_simulation

KINDS = ("conv-time", "conv-space", "stability", "bench", "compare", "brain", "mesh-gen")
WORKERS_ENV = "MPET_WORKERS"


class ConfigError(ValueError):
    pass


# --- configuration -----------------------------------------------------------


@dataclass
class MeshSpec:
    kind: str = "unit_square"
    n: int = 8
    sizes: tuple = ()
    r_in: float = 30.0
    r_out: float = 70.0
    n_r: int = 8
    n_t: int = 64
    path: str = ""

    def build(self, n: int | None = None) -> Mesh:
        if self.kind == "unit_square":
            return unit_square_mesh(self.n if n is None else n)
        if self.kind == "annulus":
            return annulus_mesh(self.r_in, self.r_out, self.n_r, self.n_t)
        if self.kind == "file":
            return read_mesh(self.path)
        raise ConfigError(f"unknown mesh kind {self.kind!r}")


@dataclass
class ExperimentConfig:
    kind: str
    mesh: MeshSpec = field(default_factory=MeshSpec)
    k: int = 2
    l: int = 1
    case: str = "case1"
    params: MpetParameters | None = None
    dt: tuple = (0.1,)
    T: float = 1.0
    steps: int = 100
    schemes: tuple = ("parallel_split",)
    workers: int = 1
    solver: str = "direct"
    tol: float = 1e-10
    repeats: int = 1
    seed: int = 1234
    out_dir: str = "results"
    vtk: bool = False
    csv_name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.dt:
            raise ConfigError("the time-step schedule is empty")
        if self.k not in (2, 3) or self.l not in (1, 2):
            raise ConfigError("degrees must satisfy k in {2, 3} and l in {1, 2}")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}")
        if self.workers not in (1, 2):
            raise ConfigError("workers must be 1 or 2")

    def parameters(self) -> MpetParameters:
        if self.params is not None:
            return self.params
        if self.case == "brain":
            return brain_parameters()
        return case_parameters(self.case)

    def scheme_config(self, scheme: str, dt: float, T: float | None = None, **kw) -> SchemeConfig:
        return SchemeConfig(
            scheme, dt, self.T if T is None else T, self.k, self.l, solver=self.solver,
            tol=self.tol, workers=self.workers if scheme == "parallel_split" else 1, **kw,
        )

    def csv_path(self, default: str) -> Path:
        return Path(self.out_dir) / (self.csv_name or default)


def _number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def _numbers(text: str) -> list[float]:
    return [_number(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _words(text: str) -> tuple:
    return tuple(t.strip() for t in text.replace(";", ",").split(",") if t.strip())


def _custom_params(sec) -> MpetParameters:
    c = _numbers(sec.get("c", ""))
    if not c:
        raise ConfigError("custom parameters need a 'c' list")
    A = len(c)
    per = lambda key, default: _numbers(sec[key]) if key in sec else [default]  # noqa: E731
    s_vals = per("s", 0.0)
    if len(s_vals) == 1:
        s = s_vals[0] * (1.0 - np.eye(A))
    elif len(s_vals) == A * A:
        s = np.array(s_vals).reshape(A, A)
    else:
        raise ConfigError("'s' needs one value or A*A values")
    kw = dict(c=c, alpha=per("alpha", 1.0), kappa=per("kappa", 1.0), s=s,
              L_multiplier=_number(sec.get("L_multiplier", "1")))
    if "mu" in sec and "lam" in sec:
        return MpetParameters(_number(sec["mu"]), _number(sec["lam"]), **kw)
    return MpetParameters.from_young(_number(sec.get("E", "1")), _number(sec.get("nu", "0.3")), **kw)


def parse_config(text: str, kind: str) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from INI text."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keys such as T and L_multiplier are case sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    get = lambda sec: cp[sec] if cp.has_section(sec) else {}  # noqa: E731
    m, p, t, s, o = (get(x) for x in ("mesh", "params", "time", "schemes", "output"))

    mesh = MeshSpec(kind=m.get("kind", "annulus" if kind == "brain" else "unit_square"))
    for key in ("n", "n_r", "n_t"):
        if key in m:
            setattr(mesh, key, int(_number(m[key])))
    for key in ("r_in", "r_out"):
        if key in m:
            setattr(mesh, key, _number(m[key]))
    if "sizes" in m:
        mesh.sizes = tuple(int(v) for v in _numbers(m["sizes"]))
    mesh.path = m.get("path", "")

    case = p.get("case", "brain" if kind == "brain" else "case1")
    if case not in CASES and case not in ("brain", "custom"):
        raise ConfigError(f"unknown parameter case {case!r}")
    params = _custom_params(p) if case == "custom" else None
    if "L_multiplier" in p and params is None:
        base = brain_parameters() if case == "brain" else case_parameters(case)
        params = replace(base, L_multiplier=_number(p["L_multiplier"]))

    defaults = {
        "brain": ("monolithic", "parallel_split"),
        "bench": ("monolithic", "sequential", "parallel_split"),
        "compare": ("monolithic", "parallel_split"),
    }
    schemes = _words(s["list"]) if "list" in s else defaults.get(kind, ("parallel_split",))
    try:
        return ExperimentConfig(
            kind=kind,
            mesh=mesh,
            k=int(_number(m.get("k", "2"))),
            l=int(_number(m.get("l", "1"))),
            case=case,
            params=params,
            dt=tuple(_numbers(t["dt"])) if "dt" in t else ((0.0125,) if kind == "brain" else (0.1,)),
            T=_number(t.get("T", "3" if kind == "brain" else "1")),
            steps=int(_number(t.get("steps", "100"))),
            schemes=schemes,
            workers=int(_number(s.get("workers", "1"))),
            solver=s.get("solver", "direct"),
            tol=_number(s.get("tol", "1e-10")),
            repeats=int(_number(s.get("repeats", "1"))),
            seed=int(_number(s.get("seed", "1234"))),
            out_dir=o.get("dir", "results"),
            vtk=o.get("vtk", "no").strip().lower() in ("1", "yes", "true", "on"),
            csv_name=o.get("csv", ""),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, kind: str) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return apply_worker_override(parse_config(text, kind))


def apply_worker_override(cfg: ExperimentConfig, environ=None) -> ExperimentConfig:
    """``MPET_WORKERS`` in {1, 2} replaces the configured worker count."""
    env = os.environ if environ is None else environ
    raw = env.get(WORKERS_ENV, "").strip()
    if not raw:
        return cfg
    if raw not in ("1", "2"):
        raise ConfigError(f"{WORKERS_ENV} must be 1 or 2, got {raw!r}")
    return replace(cfg, workers=int(raw))


# --- campaigns ---------------------------------------------------------------


def _mms_problem(cfg: ExperimentConfig, mesh: Mesh) -> tuple[MpetProblem, ManufacturedCase]:
    case = ManufacturedCase(cfg.parameters())
    return case.problem(mesh, name=cfg.case), case


def _with_rates(reports, steps) -> list[dict]:
    rows = [{"h": r.h, "dt": r.dt, **{f: getattr(r, f) for f in ERROR_FIELDS}} for r in reports]
    for f in ERROR_FIELDS:
        rates = eoc([getattr(r, f) for r in reports], steps) if len(reports) > 1 else []
        for i, row in enumerate(rows):
            row[f + "_rate"] = rates[i - 1] if i > 0 else None
    return rows


def _columns(lead) -> list[str]:
    return list(lead) + [c for f in ERROR_FIELDS for c in (f, f + "_rate")]


def run_conv_time(cfg: ExperimentConfig, write: bool = True) -> list[dict]:
    """Fixed mesh, refined time step: errors at ``T`` and temporal rates."""
    mesh = cfg.mesh.build()
    problem, case = _mms_problem(cfg, mesh)
    disc = Discretization(problem, cfg.k, cfg.l)
    h = 1.0 / cfg.mesh.n if cfg.mesh.kind == "unit_square" else None
    rows = []
    for scheme in cfg.schemes:
        reports = []
        for dt in cfg.dt:
            traj = run_simulation(cfg.scheme_config(scheme, dt), problem, disc)
            rep = mms_errors(disc, traj.final, case, h=h)
            rep.dt = dt
            reports.append(rep)
        for row in _with_rates(reports, cfg.dt):
            rows.append({"scheme": scheme, **row})
    if write:
        write_csv(rows, cfg.csv_path("conv_time.csv"), _columns(["scheme", "h", "dt"]))
    return rows


def run_conv_space(cfg: ExperimentConfig, write: bool = True) -> list[dict]:
    """Paired refinement of ``h = 1/n`` and ``dt``: errors and spatial rates."""
    sizes = cfg.mesh.sizes or (cfg.mesh.n,)
    dts = cfg.dt if len(cfg.dt) == len(sizes) else cfg.dt * len(sizes) if len(cfg.dt) == 1 else None
    if dts is None:
        raise ConfigError("[time] dt must list one value or one per mesh size")
    rows = []
    for scheme in cfg.schemes:
        reports = []
        for n, dt in zip(sizes, dts):
            problem, case = _mms_problem(cfg, unit_square_mesh(n))
            disc = Discretization(problem, cfg.k, cfg.l)
            traj = run_simulation(cfg.scheme_config(scheme, dt), problem, disc)
            rep = mms_errors(disc, traj.final, case, h=1.0 / n)
            rep.dt = dt
            reports.append(rep)
        for row in _with_rates(reports, [1.0 / n for n in sizes]):
            rows.append({"scheme": scheme, **row})
    if write:
        write_csv(rows, cfg.csv_path("conv_space.csv"), _columns(["scheme", "h", "dt"]))
    return rows


def random_initial_state(disc: Discretization, seed: int):
    """Zero displacement and seeded uniform(-1, 1) pressures, zero on Dirichlet nodes."""
    rng = np.random.default_rng(seed)
    p = rng.uniform(-1.0, 1.0, size=(disc.A, disc.Q.num_dofs))
    for j in range(disc.A):
        dofs, _ = disc.dirichlet_p(j, 0.0)
        p[j, dofs] = 0.0
    return disc.state_from(np.zeros(disc.V.num_dofs), p)


def run_stability(cfg: ExperimentConfig, write: bool = True) -> list[dict]:
    """Zero-load runs from random pressures; energy proxy relative to step 1."""
    prm = cfg.parameters()
    zero = ManufacturedCase(prm, zero=True)
    problem = MpetProblem(cfg.mesh.build(), prm, zero.loads(), name="stability")
    disc = Discretization(problem, cfg.k, cfg.l)
    start = random_initial_state(disc, cfg.seed)
    rows = []
    for scheme in cfg.schemes:
        for dt in cfg.dt:
            integ = Integrator(disc, cfg.scheme_config(scheme, dt, T=cfg.steps * dt))
            stab = integ.L if scheme == "parallel_split" else 0.0
            state, e1, ref = start, None, None
            try:
                for _ in range(cfg.steps):
                    state, _ = integ.step(state)
                    e = energy_proxy(disc, state)
                    if e1 is None:
                        e1, ref = e, first_step_reference(disc, start, state, stab)
                    rows.append({"scheme": scheme, "dt": dt, "step": state.n, "t": state.t,
                                 "energy": e, "ratio": e / e1 if e1 > 0 else 0.0,
                                 "reference_ratio": e / ref if ref > 0 else 0.0})
            finally:
                integ.close()
    if write:
        write_csv(rows, cfg.csv_path("stability.csv"),
                  ["scheme", "dt", "step", "t", "energy", "ratio", "reference_ratio"])
    return rows


def stability_summary(rows, column: str = "ratio") -> dict:
    """Largest ``column`` value per ``(scheme, dt)``.

    ``ratio`` is the energy relative to step 1; ``reference_ratio`` relative to
    the first-step reference including the increment terms.
    """
    out = {}
    for r in rows:
        key = (r["scheme"], r["dt"])
        out[key] = max(out.get(key, 0.0), r[column])
    return out


def run_bench(cfg: ExperimentConfig, write: bool = True) -> list[dict]:
    """Wall time of each scheme on one shared discretization.

    All schemes share the mesh, matrices, solver settings and warm-start
    policy; the wall time covers factorization and time stepping, and is
    the minimum over ``repeats`` runs.
    """
    problem, case = _mms_problem(cfg, cfg.mesh.build())
    disc = Discretization(problem, cfg.k, cfg.l)
    dt = cfg.dt[0]
    rows = []
    for scheme in cfg.schemes:
        best = None
        for _ in range(max(cfg.repeats, 1)):
            traj = run_simulation(cfg.scheme_config(scheme, dt), problem, disc)
            if best is None or traj.total_seconds < best.total_seconds:
                best = traj
        rep = mms_errors(disc, best.final, case, h=1.0 / cfg.mesh.n)
        tm = best.timing()
        rows.append({
            "scheme": scheme, "h": rep.h, "dt": dt,
            "workers": cfg.workers if scheme == "parallel_split" else 1,
            **{f: getattr(rep, f) for f in ERROR_FIELDS},
            "wall_seconds": tm["total"], "setup_seconds": tm["setup"],
            "assembly_seconds": tm["assembly"], "solve_seconds": tm["solve"],
        })
    ref = next((r["wall_seconds"] for r in rows if r["scheme"] == "monolithic"), None)
    for r in rows:
        r["reduction_pct"] = 100.0 * (1.0 - r["wall_seconds"] / ref) if ref else None
    if write:
        cols = ["scheme", "h", "dt", "workers", *ERROR_FIELDS, "wall_seconds", "reduction_pct",
                "setup_seconds", "assembly_seconds", "solve_seconds"]
        write_csv(rows, cfg.csv_path("bench.csv"), cols)
    return rows


def run_compare(cfg: ExperimentConfig, write: bool = True) -> list[dict]:
    """Relative distance at ``T`` of the second scheme from the first, per ``dt``.

    ``*_ratio`` columns hold the distance at the previous (coarser) step
    divided by the current one; first-order splitting gives about 2 under
    halving.
    """
    if len(cfg.schemes) != 2:
        raise ConfigError("compare needs exactly two schemes (reference first)")
    problem, _ = _mms_problem(cfg, cfg.mesh.build())
    disc = Discretization(problem, cfg.k, cfg.l)
    ref_name, other_name = cfg.schemes
    rows = []
    for dt in cfg.dt:
        a = run_simulation(cfg.scheme_config(ref_name, dt), problem, disc).final
        b = run_simulation(cfg.scheme_config(other_name, dt), problem, disc).final
        rows.append({"h": 1.0 / cfg.mesh.n, "dt": dt, **field_difference(b, a, disc)})
    fields = [k for k in rows[0] if k not in ("h", "dt")]
    for prev, row in zip(rows, rows[1:]):
        for f in fields:
            row[f + "_ratio"] = prev[f] / row[f] if row[f] > 0 else None
    if write:
        cols = ["h", "dt"] + [c for f in fields for c in (f, f + "_ratio")]
        write_csv(rows, cfg.csv_path("compare.csv"), cols)
    return rows


@dataclass
class BrainResult:
    rows: list
    final: dict
    initial: object
    disc: Discretization


def brain_benchmark(cfg: ExperimentConfig, write: bool = True, dt: float | None = None,
                    T: float | None = None) -> BrainResult:
    """Four-network annulus run with two schemes stepped in lockstep.

    Each row holds the relative field distance of the second scheme from
    the first after every step.
    """
    if len(cfg.schemes) != 2:
        raise ConfigError("the brain benchmark compares exactly two schemes")
    dt = cfg.dt[0] if dt is None else dt
    T = cfg.T if T is None else T
    problem = brain_problem(cfg.mesh.build(), cfg.parameters())
    disc = Discretization(problem, cfg.k, cfg.l)
    ref_name, other_name = cfg.schemes
    ref = Integrator(disc, cfg.scheme_config(ref_name, dt, T=T))
    other = Integrator(disc, cfg.scheme_config(other_name, dt, T=T))
    initial = disc.initial_state()
    a, b = initial, initial.copy()
    rows = []
    try:
        for _ in range(ref.cfg.num_steps):
            a, _ = ref.step(a)
            b, _ = other.step(b)
            rows.append({"step": a.n, "t": a.t, **field_difference(b, a, disc)})
    finally:
        ref.close()
        other.close()
    if write:
        cols = ["step", "t", "u", "xi"] + [f"p{j + 1}" for j in range(disc.A)]
        write_csv(rows, cfg.csv_path("brain_difference.csv"), cols)
        if cfg.vtk:
            out = Path(cfg.out_dir)
            for name, st in ((ref_name, a), (other_name, b)):
                write_vtk(disc.problem.mesh, state_fields(disc, st), out / f"brain_{name}_T.vtk",
                          title=f"{name} t={st.t:.6g}")
            write_vtk(disc.problem.mesh, state_fields(disc, initial), out / "brain_initial.vtk",
                      title="initial data")
    return BrainResult(rows, {ref_name: a, other_name: b}, initial, disc)


def run_mesh_gen(cfg: ExperimentConfig, write: bool = True) -> Mesh:
    mesh = cfg.mesh.build()
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_mesh(mesh, out / f"{cfg.mesh.kind}.mesh")
        if cfg.vtk:
            write_vtk(mesh, {}, out / f"{cfg.mesh.kind}.vtk")
    return mesh


CAMPAIGNS = {
    "conv-time": run_conv_time,
    "conv-space": run_conv_space,
    "stability": run_stability,
    "bench": run_bench,
    "compare": run_compare,
    "brain": brain_benchmark,
    "mesh-gen": run_mesh_gen,
}


# --- command line ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpet", description="MPET finite element experiments")
    sub = ap.add_subparsers(dest="command", metavar="command")
    helps = {
        "conv-time": "temporal convergence study on a manufactured solution",
        "conv-space": "spatial convergence study on a manufactured solution",
        "stability": "energy of zero-load runs from random initial pressures",
        "bench": "wall-time comparison of the three schemes",
        "compare": "distance between two schemes at T under time-step refinement",
        "brain": "four-network benchmark on an annulus, two schemes compared",
        "mesh-gen": "write a generated mesh to disk",
    }
    for name in KINDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="INI experiment file")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--vtk", action="store_true", help="also write VTK files")
    return ap


def _summary(kind, result) -> str:
    if kind == "brain":
        last = result.rows[-1] if result.rows else {}
        diffs = ", ".join(f"{k}={v:.3e}" for k, v in last.items() if k not in ("step", "t"))
        return f"brain: {len(result.rows)} steps; final relative differences {diffs}"
    if kind == "mesh-gen":
        return f"mesh: {result.num_vertices} vertices, {result.num_triangles} triangles"
    if kind == "stability":
        worst = stability_summary(result)
        ref = stability_summary(result, "reference_ratio")
        return "\n".join(
            f"{s} dt={d:g}: max energy ratio {r:.3g} (vs first-step reference {ref[s, d]:.3g})"
            for (s, d), r in worst.items()
        )
    return f"{kind}: {len(result)} rows"


def cli_main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports the problem itself
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.command)
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
        if args.vtk:
            cfg = replace(cfg, vtk=True)
        t0 = time.perf_counter()
        result = CAMPAIGNS[args.command](cfg)
    except ConfigError as exc:
        print(f"mpet: config error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"mpet: solver failure: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"mpet: {exc}", file=sys.stderr)
        return 1
    print(_summary(args.command, result))
    print(f"done in {time.perf_counter() - t0:.2f} s; output in {cfg.out_dir}")
    return 0


def main() -> None:  # console-script entry point
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
