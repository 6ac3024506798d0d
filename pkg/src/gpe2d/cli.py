"""Command-line front end.

Configuration is an INI-style text file::

    [system]
    theta11 = 400
    theta22 = 200
    theta12 = 100
    center11 = 2
    center21 = -2

    [basis]
    L1 = 32

    [output]
    directory = run1

Every key is optional; see ``KEYS`` for the full list and defaults.
Component and axis indices in keys are 1-based.

Exit codes: 0 success, 1 configuration error, 2 non-convergence,
3 internal numerical failure, 4 singular coupling matrix.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .basis import BasisSpec, DegenerateBasis, TensorBasis2D, check_exactness
from .minimize import (
    CollapsedToGround,
    InitialGuess,
    LineSearchFailure,
    NonConvergence,
    SolverConfig,
    solve_excited,
    solve_ground,
)
from .model import (
    CoefficientField,
    StateReport,
    SystemParams,
    synthesize_on_grid,
    write_coefficients,
)

log = logging.getLogger("gpe2d")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_INTERNAL, EXIT_SINGULAR = 0, 1, 2, 3, 4

_SOLVER_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}

KEYS = {
    "system": {
        "m1": 1.0, "m2": 1.0,
        "theta11": 0.0, "theta22": 0.0, "theta12": 0.0,
        "omega11": 1.0, "omega12": 1.0, "omega21": 1.0, "omega22": 1.0,
        "center11": 0.0, "center12": 0.0, "center21": 0.0, "center22": 0.0,
        "N1": 1.0, "N2": 1.0,
        "rho": 1.0,
    },
    "basis": {"L1": 32, "L2": None, "beta1": 1.0, "beta2": None},
    "solver": {**{name: f.default for name, f in _SOLVER_FIELDS.items()},
               "modes": "1,0,0,0", "preserve_parity": True},
    "output": {"directory": ".", "grid_nx": 201, "grid_ny": 201,
               "grid_x0": -11.0, "grid_x1": 11.0, "grid_y0": -11.0, "grid_y1": 11.0},
}


class ConfigError(ValueError):
    pass


@dataclass
class GridSpec:
    nx: int = 201
    ny: int = 201
    x0: float = -11.0
    x1: float = 11.0
    y0: float = -11.0
    y1: float = 11.0

    @property
    def axes(self):
        return np.linspace(self.x0, self.x1, self.nx), np.linspace(self.y0, self.y1, self.ny)


@dataclass
class RunConfig:
    params: SystemParams = field(default_factory=SystemParams)
    L1: int = 32
    L2: int = 32
    beta1: float = 1.0
    beta2: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    modes: tuple = ((1, 0), (0, 0))
    preserve_parity: bool = True
    grid: GridSpec = field(default_factory=GridSpec)
    out_dir: Path = Path(".")

    def basis(self) -> TensorBasis2D:
        return TensorBasis2D(BasisSpec(self.L1, self.beta1), BasisSpec(self.L2, self.beta2))

    def to_text(self) -> str:
        p = self.params
        sysvals = {
            "m1": p.m[0], "m2": p.m[1],
            "theta11": p.theta[0, 0], "theta22": p.theta[1, 1], "theta12": p.theta[0, 1],
            "omega11": p.omega[0, 0], "omega12": p.omega[0, 1],
            "omega21": p.omega[1, 0], "omega22": p.omega[1, 1],
            "center11": p.centers[0, 0], "center12": p.centers[0, 1],
            "center21": p.centers[1, 0], "center22": p.centers[1, 1],
            "N1": p.N[0], "N2": p.N[1], "rho": p.rho,
        }
        sections = {
            "system": {k: repr(float(v)) for k, v in sysvals.items()},
            "basis": {"L1": str(self.L1), "L2": str(self.L2),
                      "beta1": repr(float(self.beta1)), "beta2": repr(float(self.beta2))},
            "solver": {**{k: repr(getattr(self.solver, k)) for k in _SOLVER_FIELDS},
                       "modes": ",".join(str(v) for m in self.modes for v in m),
                       "preserve_parity": str(self.preserve_parity).lower()},
            "output": {"directory": str(self.out_dir),
                       **{f"grid_{k}": repr(getattr(self.grid, k))
                          for k in ("nx", "ny", "x0", "x1", "y0", "y1")}},
        }
        lines = []
        for name, kv in sections.items():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in kv.items())
            lines.append("")
        return "\n".join(lines)


def _parse_bool(key, text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def parse_modes(text: str) -> tuple:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"modes: expected integers, got {text!r}") from exc
    if len(vals) == 2:
        vals += [0, 0]
    if len(vals) != 4 or any(v < 0 for v in vals):
        raise ConfigError(f"modes: expected l1,l2[,l1,l2] with nonnegative entries, got {text!r}")
    return ((vals[0], vals[1]), (vals[2], vals[3]))


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values = {sec: dict(defaults) for sec, defaults in KEYS.items()}
    for sec in cp.sections():
        if sec not in KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in KEYS[sec]:
                raise ConfigError(f"unknown key '{key}' in [{sec}]")
            values[sec][key] = raw

    def num(sec, key, kind=float):
        v = values[sec][key]
        if isinstance(v, str):
            try:
                return kind(v)
            except ValueError as exc:
                raise ConfigError(f"{key}: expected {kind.__name__}, got {v!r}") from exc
        return kind(v)

    s = "system"
    try:
        params = SystemParams(
            m=[num(s, "m1"), num(s, "m2")],
            theta=[[num(s, "theta11"), num(s, "theta12")], [num(s, "theta12"), num(s, "theta22")]],
            omega=[[num(s, "omega11"), num(s, "omega12")], [num(s, "omega21"), num(s, "omega22")]],
            centers=[[num(s, "center11"), num(s, "center12")],
                     [num(s, "center21"), num(s, "center22")]],
            N=[num(s, "N1"), num(s, "N2")],
            rho=num(s, "rho"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(_name_key(str(exc))) from exc

    L1 = num("basis", "L1", int)
    L2 = L1 if values["basis"]["L2"] is None else num("basis", "L2", int)
    beta1 = num("basis", "beta1")
    beta2 = beta1 if values["basis"]["beta2"] is None else num("basis", "beta2")
    for key, v in (("L1", L1), ("L2", L2)):
        if v < 1:
            raise ConfigError(f"{key}: must be at least 1, got {v}")
    for key, v in (("beta1", beta1), ("beta2", beta2)):
        if not v > 0:
            raise ConfigError(f"{key}: must be positive, got {v}")

    sv = {}
    for name, f in _SOLVER_FIELDS.items():
        sv[name] = num("solver", name, int if isinstance(f.default, int) else float)
    try:
        solver = SolverConfig(**sv)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    modes = parse_modes(str(values["solver"]["modes"]))
    parity = values["solver"]["preserve_parity"]
    if isinstance(parity, str):
        parity = _parse_bool("preserve_parity", parity)

    o = "output"
    grid = GridSpec(num(o, "grid_nx", int), num(o, "grid_ny", int), num(o, "grid_x0"),
                    num(o, "grid_x1"), num(o, "grid_y0"), num(o, "grid_y1"))
    if grid.nx < 2 or grid.ny < 2:
        raise ConfigError("grid_nx, grid_ny: need at least 2 points")
    if not (grid.x1 > grid.x0 and grid.y1 > grid.y0):
        raise ConfigError("grid_x1/grid_y1 must exceed grid_x0/grid_y0")
    return RunConfig(params, L1, L2, beta1, beta2, solver, modes, bool(parity), grid,
                     Path(str(values[o]["directory"])))


def _name_key(msg: str) -> str:
    """Map SystemParams validation messages onto config key names."""
    for name, keys in (("N ", "N1/N2"), ("m ", "m1/m2"), ("theta", "theta11/theta22/theta12"),
                       ("omega", "omega11..omega22"), ("centers", "center11..center22"),
                       ("rho", "rho")):
        if msg.startswith(name):
            return f"{keys}: {msg}"
    return msg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text, str(path))


# -- grid files -------------------------------------------------------------

GRID_MAGIC = "gpe2d-grid v1"


def write_grid(path, values: np.ndarray, grid: GridSpec, component: int) -> None:
    """``values`` has shape (ny, nx): row = fixed y, ascending x."""
    header = (f"{GRID_MAGIC} nx={grid.nx} ny={grid.ny} x0={grid.x0!r} x1={grid.x1!r} "
              f"y0={grid.y0!r} y1={grid.y1!r} component={component}")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, values, fmt="%.17g")


def read_grid(path):
    """Returns ``(values, grid, component)``."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith(GRID_MAGIC):
            raise ValueError(f"{path}: not a grid file")
        meta = dict(tok.split("=", 1) for tok in header[len(GRID_MAGIC):].split())
        values = np.loadtxt(fh, ndmin=2)
    grid = GridSpec(int(meta["nx"]), int(meta["ny"]), float(meta["x0"]), float(meta["x1"]),
                    float(meta["y0"]), float(meta["y1"]))
    if values.shape != (grid.ny, grid.nx):
        raise ValueError(f"{path}: expected {grid.ny}x{grid.nx} values, got {values.shape}")
    return values, grid, int(meta["component"])


# -- commands ---------------------------------------------------------------

def _write_state(out: Path, fields, report: StateReport, grid: GridSpec, extra=None):
    out.mkdir(parents=True, exist_ok=True)
    xs, ys = grid.axes
    for i, f in enumerate(fields, start=1):
        write_coefficients(f, out / f"phi{i}.coeffs")
        write_grid(out / f"phi{i}.grid", synthesize_on_grid(f, xs, ys), grid, i)
    data = report.to_dict()
    if extra:
        data.update(extra)
    (out / "report.json").write_text(json.dumps(data, indent=2) + "\n")


def cmd_solve(cfg: RunConfig) -> int:
    try:
        fields, report = solve_ground(cfg.params, cfg.basis(), cfg.solver)
        code = EXIT_OK
    except NonConvergence as exc:
        fields, report, code = exc.fields, exc.report, EXIT_NONCONVERGED
        print(f"not converged: {exc}", file=sys.stderr)
    _write_state(cfg.out_dir, fields, report, cfg.grid)
    print(json.dumps(report.to_dict()))
    return code


def cmd_excited(cfg: RunConfig) -> int:
    basis = cfg.basis()
    try:
        _, ground = solve_ground(cfg.params, basis, cfg.solver)
        ground_energy = ground.energy
    except NonConvergence as exc:
        ground_energy = exc.report.energy
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CollapsedToGround)
        try:
            fields, report = solve_excited(cfg.params, basis, cfg.solver, InitialGuess(cfg.modes),
                                           ground_energy=ground_energy,
                                           preserve_parity=cfg.preserve_parity)
            code = EXIT_OK
        except NonConvergence as exc:
            fields, report, code = exc.fields, exc.report, EXIT_NONCONVERGED
            print(f"not converged: {exc}", file=sys.stderr)
    collapsed = any(issubclass(w.category, CollapsedToGround) for w in caught)
    if collapsed:
        print("warning: excited run collapsed to the ground state", file=sys.stderr)
    _write_state(cfg.out_dir, fields, report, cfg.grid,
                 {"ground_energy": ground_energy, "collapsed": collapsed,
                  "modes": [list(m) for m in cfg.modes]})
    print(json.dumps(report.to_dict()))
    return code


def cmd_tf(cfg: RunConfig) -> int:
    from .thomasfermi import (
        NoSolution, SingularCoupling, UnsupportedAnisotropy, tf_density, tf_geometry,
        tf_report, tf_solve_mu,
    )
    try:
        mu = tf_solve_mu(cfg.params)
        geom = tf_geometry(cfg.params, mu)
    except SingularCoupling as exc:
        print(f"singular coupling: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except UnsupportedAnisotropy as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoSolution as exc:
        print(f"no Thomas-Fermi solution: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    xs, ys = cfg.grid.axes
    pts = np.stack(np.meshgrid(xs, ys, indexing="xy"), axis=-1)  # (ny, nx, 2)
    for i in range(2):
        write_grid(out / f"tf{i + 1}.grid", tf_density(geom, cfg.params, i, pts), cfg.grid, i + 1)
    text = tf_report(geom)
    (out / "tf_report.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, kappas) -> int:
    from .segregation import run_kappa_sweep, write_sweep_csv
    if not kappas:
        print("config error: empty kappa grid", file=sys.stderr)
        return EXIT_CONFIG
    try:
        records, kept = run_kappa_sweep(cfg.params, kappas, cfg.basis(), cfg.solver,
                                        keep_fields=True)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(records, out / "sweep.csv")
    xs, ys = cfg.grid.axes
    for i, f in enumerate(kept[-1], start=1):
        write_coefficients(f, out / f"phi{i}.coeffs")
        write_grid(out / f"phi{i}.grid", synthesize_on_grid(f, xs, ys), cfg.grid, i)
    for r in records:
        print(f"kappa={r.kappa:.6g} energy={r.energy:.12g} overlap={r.overlap:.6e} "
              f"converged={str(r.converged).lower()}")
    return EXIT_OK if all(r.converged for r in records) else EXIT_NONCONVERGED


def cmd_quadcheck(cfg: RunConfig) -> int:
    basis = cfg.basis()
    ok = True
    for name, spec, rule in (("x1", basis.spec_x, basis.rule_x), ("x2", basis.spec_y, basis.rule_y)):
        try:
            err = check_exactness(rule, 4 * spec.L - 3)
            status = "ok"
        except DegenerateBasis as exc:
            err, status, ok = float("nan"), f"FAILED ({exc})", False
        wsum = float(np.sum(rule.weights))
        exact = float(np.sqrt(np.pi / (2.0 * spec.beta**2)))
        print(f"{name}: L={spec.L} beta={spec.beta!r} nodes={len(rule.nodes)} "
              f"max_moment_rel_err={err:.3e} weight_sum_rel_err={abs(wsum / exact - 1):.3e} {status}")
    return EXIT_OK if ok else EXIT_INTERNAL


def _parse_kappas(text):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--kappas: expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpe2d", description="Two-component condensate solver.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, needs in (("solve", True), ("excited", True), ("tf", True), ("sweep", True),
                        ("quadcheck", False)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=needs)
        sp.add_argument("--out")
        if name == "sweep":
            sp.add_argument("--kappas", required=True, help="comma-separated kappa values")
        if name == "excited":
            sp.add_argument("--modes", help="l1,l2[,l1,l2] starting modes")
    return ap


def _threads() -> int | None:
    raw = os.environ.get("GPE2D_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"GPE2D_THREADS: expected an integer, got {raw!r}") from exc
    if n < 0:
        raise ConfigError("GPE2D_THREADS must be >= 0")
    return n or None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _threads()
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.out:
            cfg.out_dir = Path(args.out)
        if getattr(args, "modes", None):
            cfg.modes = parse_modes(args.modes)
        kappas = _parse_kappas(getattr(args, "kappas", None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with threadpool_limits(limits=threads):
            if args.command == "solve":
                return cmd_solve(cfg)
            if args.command == "excited":
                return cmd_excited(cfg)
            if args.command == "tf":
                return cmd_tf(cfg)
            if args.command == "sweep":
                return cmd_sweep(cfg, kappas)
            return cmd_quadcheck(cfg)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LineSearchFailure, ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"internal numerical failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
