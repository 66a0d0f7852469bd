"""Config-driven runs, the experiment presets and the ``kskit`` command line.

A run config is a JSON object::

    {
      "scheme": "bdf_pos2",
      "model": {"kind": "type1", "gamma": 1, "chi": 2, "mu": 1, "eps": 1,
                "M": null, "sigma": 1e-10},
      "grid": {"nx": 64, "ny": 64, "lx": 6.283185307179586, "ly": 6.283185307179586},
      "dt": 1e-4,
      "t_final": 0.01,
      "initial": {"rho": {"gaussians": [{"amplitude": 10, "inv_width": 10}]},
                  "c": {"gaussians": [{"amplitude": 10, "inv_width": 0.5}]}},
      "snapshots": [0.0, 0.01],
      "solver": {"picard_tol": 1e-12, "picard_max_iter": 200},
      "sweep": {"dts": [4e-5, 2e-5, 1e-5, 5e-6], "ref_dt": 1e-6},
      "out": "runs/example"
    }

Only ``scheme``, ``dt`` and ``t_final`` are required; everything else has a
default. Command-line flags override file fields.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .diagnostics import DiagRow, fit_order, l2_error, linf_error, record, write_csv
from .grid import Grid, write_snapshot
from .integrators import StepFailure, initial_state, parse_scheme, simulate
from .models import InitialCondition, ModelKind, ModelParams, build_initial

__all__ = [
    "ConfigError",
    "RunConfig",
    "RunSummary",
    "PRESETS",
    "preset",
    "load_config",
    "run",
    "converge",
    "reference_scheme",
    "main",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

_TOP_KEYS = {"scheme", "model", "grid", "dt", "t_final", "initial", "snapshots", "solver", "sweep", "out"}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    scheme: str
    params: ModelParams
    grid: Grid
    dt: float
    t_final: float
    initial: InitialCondition
    snapshots: tuple[float, ...] = ()
    picard_tol: float = 1e-12
    picard_max_iter: int = 200
    sweep_dts: tuple[float, ...] = ()
    ref_dt: float | None = None
    out: str | None = None

    def __post_init__(self) -> None:
        try:
            sch = parse_scheme(self.scheme)
        except ValueError as exc:
            raise ConfigError(f"scheme: {exc}") from None
        try:
            sch.check_model(self.params)
        except ValueError as exc:
            raise ConfigError(f"scheme/model: {exc}") from None
        object.__setattr__(self, "scheme", sch.name)
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt: must be positive, got {self.dt!r}")
        if not (np.isfinite(self.t_final) and self.t_final >= self.dt):
            raise ConfigError(f"t_final: must be >= dt, got {self.t_final!r}")
        n = round(self.t_final / self.dt)
        if abs(n * self.dt - self.t_final) > 1e-9 * self.t_final:
            raise ConfigError(f"t_final: {self.t_final!r} is not a multiple of dt={self.dt!r}")
        for i, ts in enumerate(self.snapshots):
            if not 0 <= ts <= self.t_final * (1 + 1e-12):
                raise ConfigError(f"snapshots[{i}]: {ts!r} outside [0, t_final]")
        if not self.picard_tol > 0:
            raise ConfigError(f"solver.picard_tol: must be positive, got {self.picard_tol!r}")
        if int(self.picard_max_iter) < 1:
            raise ConfigError(f"solver.picard_max_iter: must be >= 1, got {self.picard_max_iter!r}")

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)

    def snapshot_steps(self) -> dict[int, float]:
        """Map step index to requested time; requested times snap to the nearest step."""
        return {round(ts / self.dt): ts for ts in self.snapshots}

    def with_overrides(self, **kw) -> RunConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        if not isinstance(d, dict):
            raise ConfigError("config: top level must be a JSON object")
        unknown = set(d) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"config: unknown fields {sorted(unknown)}")
        for key in ("scheme", "dt", "t_final"):
            if key not in d:
                raise ConfigError(f"{key}: required field is missing")
        model = dict(d.get("model") or {})
        try:
            params = ModelParams(
                kind=ModelKind(model.pop("kind", "type1")),
                **{k: (float(v) if v is not None else None) for k, v in model.items()},
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model: {exc}") from None
        g = dict(d.get("grid") or {})
        try:
            nx = g.pop("nx", 64)
            grid = Grid(nx, g.pop("ny", nx), float(g.pop("lx", 2 * np.pi)), float(g.pop("ly", 2 * np.pi)))
            if g:
                raise ValueError(f"unknown fields {sorted(g)}")
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"grid: {exc}") from None
        try:
            initial = InitialCondition.from_dict(d.get("initial"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"initial: {exc}") from None
        solver = dict(d.get("solver") or {})
        sweep = dict(d.get("sweep") or {})
        bad = set(solver) - {"picard_tol", "picard_max_iter"}
        if bad:
            raise ConfigError(f"solver: unknown fields {sorted(bad)}")
        bad = set(sweep) - {"dts", "ref_dt"}
        if bad:
            raise ConfigError(f"sweep: unknown fields {sorted(bad)}")
        try:
            return cls(
                scheme=str(d["scheme"]),
                params=params,
                grid=grid,
                dt=float(d["dt"]),
                t_final=float(d["t_final"]),
                initial=initial,
                snapshots=tuple(float(t) for t in d.get("snapshots", ())),
                picard_tol=float(solver.get("picard_tol", 1e-12)),
                picard_max_iter=int(solver.get("picard_max_iter", 200)),
                sweep_dts=tuple(float(t) for t in sweep.get("dts", ())),
                ref_dt=float(sweep["ref_dt"]) if sweep.get("ref_dt") is not None else None,
                out=d.get("out"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"config: {exc}") from None

    def to_dict(self) -> dict:
        p = self.params
        return {
            "scheme": self.scheme,
            "model": {
                "kind": p.kind.value,
                "gamma": p.gamma,
                "chi": p.chi,
                "mu": p.mu,
                "eps": p.eps,
                "M": p.M,
                "sigma": p.sigma,
            },
            "grid": self.grid.to_dict(),
            "dt": self.dt,
            "t_final": self.t_final,
            "initial": self.initial.to_dict(),
            "snapshots": list(self.snapshots),
            "solver": {"picard_tol": self.picard_tol, "picard_max_iter": self.picard_max_iter},
            "sweep": {"dts": list(self.sweep_dts), "ref_dt": self.ref_dt},
            "out": self.out,
        }


# -- presets ------------------------------------------------------------------

_DESK_DTS = (4e-5, 2e-5, 1e-5, 5e-6)


def _preset_convergence_pos() -> list[RunConfig]:
    return [
        RunConfig(
            scheme="bdf_pos2",
            params=ModelParams(ModelKind.TYPE_I, gamma=1.0, chi=2.0, mu=1.0, eps=1.0),
            grid=Grid.square(64),
            dt=1e-4,
            t_final=0.01,
            initial=InitialCondition.gaussian(10.0, 10.0, 10.0, 0.5),
            snapshots=(0.0, 0.01),
            sweep_dts=_DESK_DTS,
            ref_dt=1e-6,
        )
    ]


def _preset_convergence_bound() -> list[RunConfig]:
    return [
        RunConfig(
            scheme="bdf_bound2",
            params=ModelParams(ModelKind.TYPE_II, gamma=1.0, chi=1.0, mu=1.0, eps=0.01, M=100.0),
            grid=Grid.square(64),
            dt=1e-4,
            t_final=0.01,
            initial=InitialCondition.gaussian(10.0, 10.0, 30.0, 0.5),
            snapshots=(0.0, 0.01),
            sweep_dts=_DESK_DTS,
            ref_dt=1e-6,
        )
    ]


def _preset_blowup() -> list[RunConfig]:
    return [
        RunConfig(
            scheme="bdf_pos2",
            params=ModelParams(ModelKind.TYPE_I, gamma=1.0, chi=1.0, mu=1.0, eps=0.01),
            grid=Grid.square(64),
            dt=1e-4,
            t_final=0.02,
            initial=InitialCondition.gaussian(80.0, 1.0, 30.0, 1.0),
            snapshots=(0.0, 0.005, 0.01, 0.02),
        )
    ]


def _preset_compare() -> list[RunConfig]:
    base = RunConfig(
        scheme="bdf_bound2",
        params=ModelParams(ModelKind.TYPE_II, gamma=1.0, chi=2.0, mu=1.0, eps=0.01, M=100.0),
        grid=Grid.square(128),
        dt=1e-4,
        t_final=1.0,
        initial=InitialCondition.gaussian(10.0, 0.5, 30.0, 0.5),
        snapshots=(0.0, 0.01, 0.05, 1.0),
    )
    return [base, replace(base, scheme="semi_implicit")]


PRESETS = {
    "convergence_pos": (_preset_convergence_pos, "type-I temporal order test, BDF2 positivity, t=0.01"),
    "convergence_bound": (_preset_convergence_bound, "type-II temporal order test, BDF2 bound, t=0.01"),
    "blowup": (_preset_blowup, "type-I blow-up, amplitudes (80, 30), eps=0.01, t=0.02"),
    "compare": (_preset_compare, "bdf_bound2 against the semi-implicit baseline, N=128, t=1"),
}


def preset(name: str) -> list[RunConfig]:
    """Return the run configs of a named preset (two for ``compare``)."""
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown name {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name][0]()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return RunConfig.from_dict(data)


# -- runs -----------------------------------------------------------------------


@dataclass
class RunSummary:
    status: str
    scheme: str
    steps: int
    final_time: float
    max_mass_rel_drift: float
    min_rho: float
    max_rho: float
    max_law_residual_rel: float
    max_lambda: float
    max_picard_iters: int
    wall_time: float
    rows: list[DiagRow] = field(default_factory=list, repr=False)
    message: str = ""

    def to_dict(self) -> dict:
        d = {k: v for k, v in vars(self).items() if k != "rows"}
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}


def _law_rel(row: DiagRow) -> float:
    return abs(row.law_residual) / max(1.0, abs(row.energy), abs(row.dissipation))


def _summarise(status, cfg, rows, wall, message="") -> RunSummary:
    last = rows[-1]
    return RunSummary(
        status=status,
        scheme=cfg.scheme,
        steps=last.step,
        final_time=last.time,
        max_mass_rel_drift=max(r.mass_rel_drift for r in rows),
        min_rho=min(r.min_rho for r in rows),
        max_rho=max(r.max_rho for r in rows),
        max_law_residual_rel=max(_law_rel(r) for r in rows),
        max_lambda=max(r.lambda_linf for r in rows),
        max_picard_iters=max(r.picard_iters for r in rows),
        wall_time=wall,
        rows=rows,
        message=message,
    )


def _snap(out, state, label=None):
    tag = label or f"step{state.n:07d}"
    write_snapshot(out / f"rho_{tag}", state.rho, state.grid, state.t, "rho")
    write_snapshot(out / f"c_{tag}", state.c, state.grid, state.t, "c")


def integrate(cfg: RunConfig, on_state=None):
    """Run ``cfg`` in memory; returns ``(rows, final_state)``.

    ``on_state`` is called with every state, the initial one included. A
    :class:`StepFailure` propagates with ``exc.last_state`` and ``exc.rows``
    attached.
    """
    rho0, c0 = build_initial(cfg.initial, cfg.grid)
    state = initial_state(cfg.grid, rho0, c0, cfg.params)
    rows = [record(state)]
    if on_state:
        on_state(state)
    solver = {"tol": cfg.picard_tol, "max_iter": cfg.picard_max_iter}
    stepper = simulate(state, cfg.params, cfg.dt, cfg.n_steps, cfg.scheme, **solver)
    try:
        for state in stepper:
            rows.append(record(state))
            if on_state:
                on_state(state)
    except StepFailure as exc:
        exc.last_state = state
        exc.rows = rows
        raise
    return rows, state


def run(cfg: RunConfig, out=None) -> RunSummary:
    """Run one config and write ``diagnostics.csv``, snapshots and ``summary.json`` to ``out``.

    With ``out=None`` nothing is written. On a step failure the last valid
    state is dumped as ``*_failed`` snapshots, the summary records the error
    and :class:`StepFailure` is re-raised.
    """
    out = Path(out) if out is not None else (Path(cfg.out) if cfg.out else None)
    snaps = cfg.snapshot_steps()
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")

    def on_state(state):
        if out is not None and state.n in snaps:
            _snap(out, state)

    t0 = _time.perf_counter()
    try:
        rows, _ = integrate(cfg, on_state)
    except StepFailure as exc:
        summary = _summarise("failed", cfg, exc.rows, _time.perf_counter() - t0, str(exc))
        if out is not None:
            _snap(out, exc.last_state, "failed")
            _write_run(out, summary)
        raise
    summary = _summarise("ok", cfg, rows, _time.perf_counter() - t0)
    if out is not None:
        _write_run(out, summary)
    return summary


def _write_run(out: Path, summary: RunSummary) -> None:
    write_csv(out / "diagnostics.csv", summary.rows)
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n")


# -- convergence sweeps ---------------------------------------------------------


def reference_scheme(scheme: str) -> str:
    """Second-order member of the scheme's family, used for reference solutions."""
    sch = parse_scheme(scheme)
    if sch.family in ("cn_pos", "bdf_pos"):
        return "bdf_pos2"
    if sch.family in ("cn_bound", "bdf_bound"):
        return "bdf_bound2"
    return sch.name


def _final_fields(cfg: RunConfig):
    _, state = integrate(cfg)
    return state.rho, state.c


def _threads() -> int:
    raw = os.environ.get("KSKIT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"KSKIT_THREADS: not an integer: {raw!r}") from None
    return max(1, n)


@dataclass
class ConvergenceTable:
    scheme: str
    reference: str
    ref_dt: float
    dts: list[float]
    err_rho: list[float]
    err_c: list[float]
    err_rho_l2: list[float]
    err_c_l2: list[float]
    order_rho: float
    order_c: float

    def to_csv(self) -> str:
        lines = ["dt,err_rho_linf,err_c_linf,err_rho_l2,err_c_l2"]
        for row in zip(self.dts, self.err_rho, self.err_c, self.err_rho_l2, self.err_c_l2):
            lines.append(",".join("%.17g" % v for v in row))
        return "\n".join(lines) + "\n"


def converge(cfg: RunConfig, dts=None, ref_dt=None, out=None, reference=None) -> ConvergenceTable:
    """Temporal convergence sweep at fixed ``t_final`` against a fine-step reference.

    The reference defaults to the second-order scheme of the same family.
    Sweep members run in parallel when ``KSKIT_THREADS`` > 1.
    """
    dts = tuple(float(d) for d in (dts if dts is not None else cfg.sweep_dts))
    ref_dt = ref_dt if ref_dt is not None else cfg.ref_dt
    if len(dts) < 3:
        raise ConfigError(f"sweep.dts: need at least 3 time steps, got {len(dts)}")
    if ref_dt is None or not ref_dt > 0:
        raise ConfigError(f"sweep.ref_dt: must be positive, got {ref_dt!r}")
    ref_name = reference or reference_scheme(cfg.scheme)
    members = [replace(cfg, dt=d) for d in dts]
    ref_cfg = replace(cfg, scheme=ref_name, dt=float(ref_dt))
    workers = _threads()
    jobs = [ref_cfg, *members]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_final_fields, jobs))
    else:
        results = [_final_fields(j) for j in jobs]
    (R, C), sols = results[0], results[1:]
    table = ConvergenceTable(
        scheme=cfg.scheme,
        reference=ref_name,
        ref_dt=float(ref_dt),
        dts=list(dts),
        err_rho=[linf_error(r, R) for r, _ in sols],
        err_c=[linf_error(c, C) for _, c in sols],
        err_rho_l2=[l2_error(r, R, cfg.grid) for r, _ in sols],
        err_c_l2=[l2_error(c, C, cfg.grid) for _, c in sols],
        order_rho=0.0,
        order_c=0.0,
    )
    table.order_rho = fit_order(table.dts, table.err_rho)
    table.order_c = fit_order(table.dts, table.err_c)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "convergence.csv").write_text(table.to_csv())
        meta = {k: v for k, v in vars(table).items()}
        (out / "convergence.json").write_text(json.dumps(meta, indent=2) + "\n")
    return table


# -- command line -----------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kskit", description="Structure-preserving Keller-Segel solvers")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run a simulation"), ("converge", "temporal convergence sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, help="JSON run config")
        p.add_argument("--preset", help="named preset (see preset-list)")
        p.add_argument("--scheme", help="cn_pos, bdf_posK, cn_bound, bdf_boundK (K = 1..4) or semi_implicit")
        p.add_argument("--dt", type=float, help="time step")
        p.add_argument("--tfinal", type=float, help="final time; drops snapshots beyond it")
        p.add_argument("--nx", type=int, help="grid points per axis (sets nx = ny)")
        p.add_argument("--out", type=Path, help="output directory")
        if name == "converge":
            p.add_argument("--dts", type=float, nargs="+", help="sweep time steps")
            p.add_argument("--ref-dt", type=float, help="reference time step")
    sub.add_parser("preset-list", help="list the presets")
    return ap


def _configs(args) -> list[RunConfig]:
    if args.config and args.preset:
        raise ConfigError("--config and --preset are mutually exclusive")
    if args.config:
        cfgs = [load_config(args.config)]
    elif args.preset:
        cfgs = preset(args.preset)
    else:
        raise ConfigError("one of --config or --preset is required")
    grid = None
    out = []
    for cfg in cfgs:
        if args.nx is not None:
            try:
                grid = Grid(args.nx, args.nx, cfg.grid.lx, cfg.grid.ly)
            except ValueError as exc:
                raise ConfigError(f"--nx: {exc}") from None
        snaps = None
        if args.tfinal is not None:
            # a shorter horizon drops the snapshots it no longer reaches
            snaps = tuple(t for t in cfg.snapshots if t <= args.tfinal)
        try:
            cfg = cfg.with_overrides(
                scheme=args.scheme, dt=args.dt, t_final=args.tfinal, grid=grid, snapshots=snaps
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        out.append(cfg)
    return out


def _out_dirs(args, cfgs) -> list[Path]:
    base = args.out or (Path(cfgs[0].out) if cfgs[0].out else Path("kskit_out"))
    if len(cfgs) == 1:
        return [base]
    return [base / cfg.scheme for cfg in cfgs]


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "preset-list":
        for name, (_, desc) in PRESETS.items():
            print(f"{name:18s} {desc}")
        return EXIT_OK
    try:
        cfgs = _configs(args)
        dirs = _out_dirs(args, cfgs)
        if args.command == "converge":
            _threads()
            for cfg, out in zip(cfgs, dirs):
                table = converge(cfg, args.dts, args.ref_dt, out=out)
                sys.stdout.write(table.to_csv())
                print(f"{cfg.scheme}: order rho {table.order_rho:.3f}, order c {table.order_c:.3f}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    status = EXIT_OK
    for cfg, out in zip(cfgs, dirs):
        try:
            s = run(cfg, out)
        except StepFailure as exc:
            print(f"solver failure ({cfg.scheme}): {exc}; last state dumped to {out}", file=sys.stderr)
            status = EXIT_SOLVER
            continue
        print(
            f"{cfg.scheme}: {s.steps} steps to t={s.final_time:g} in {s.wall_time:.1f}s, "
            f"rho in [{s.min_rho:.6g}, {s.max_rho:.6g}], mass drift {s.max_mass_rel_drift:.2e} -> {out}"
        )
    return status


if __name__ == "__main__":
    sys.exit(main())
