"""Command-line front end: config parsing, dispatch and deterministic artifacts.

Exit codes: 0 success, 1 usage or config error, 2 numerical or IO failure,
3 tolerance breach under --strict.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import math
import os
import re
import sys
import tempfile
from pathlib import Path

from . import __version__

COMMANDS = ("params", "trajectory", "amap", "operators", "coherent", "husimi", "sbt")
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

# flow settings and default check tolerances for the non-operator commands
TRAJ_T_MAX, TRAJ_DT = 10.0, 1e-3
AMAP_POINTS = 1000
CHECK_TOLERANCES = {
    "flow_drift": 1e-9,
    "quadric": 1e-12,
    "coherent_residual": 1e-6,
    "sector": 1e-6,
    "isometry_l0": 1e-3,
    "isometry_twisted": 1e-2,
}


class ConfigError(ValueError):
    pass


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# Config


@dataclasses.dataclass(frozen=True)
class RunConfig:
    r: float = 1.0
    mass: float = 1.0
    alpha: float = 1.0
    hbar: float = 1.0
    twice_l: int = 0
    twice_j_max: int = 40
    tau_override: float | None = None
    seed: int = 0
    tolerances: tuple = ()

    @property
    def tolerance_map(self) -> dict:
        return dict(self.tolerances)

    def model_params(self):
        from .classical import params_from_twist

        p = params_from_twist(self.twice_l, self.r, self.mass, self.alpha, self.hbar)
        if self.tau_override is not None:
            p = dataclasses.replace(p, tau=self.tau_override)
        return p


_FLOAT_KEYS = ("r", "mass", "alpha", "hbar")
_INT_KEYS = ("twice_l", "twice_j_max", "seed")


def _line_of(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*{re.escape(key)}\s*=", line):
            return i
    return 0


def _positive(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v > 0


def config_from_mapping(data: dict, text: str = "", origin: str = "<config>") -> RunConfig:
    def fail(key, msg):
        raise ConfigError(f"{origin}:{_line_of(text, key)}: {key}: {msg}")

    values, tols = {}, {}
    for key, v in data.items():
        if key in _FLOAT_KEYS or key == "tau_override":
            if not _positive(v):
                fail(key, "must be a positive finite number")
            values[key] = float(v)
        elif key in _INT_KEYS:
            if not isinstance(v, int) or isinstance(v, bool):
                fail(key, "must be an integer")
            values[key] = v
        elif key.startswith("tol_"):
            if not _positive(v):
                fail(key, "must be a positive finite number")
            tols[key[4:]] = float(v)
        else:
            fail(key, "unknown key")
    for key in ("r", "mass", "alpha", "hbar", "twice_l"):
        if key not in values:
            raise ConfigError(f"{origin}:0: missing required key {key}")
    if values.get("seed", 0) < 0:
        fail("seed", "must be unsigned")
    cfg = RunConfig(**values, tolerances=tuple(sorted(tols.items())))
    if cfg.twice_j_max < abs(cfg.twice_l):
        fail("twice_j_max", "j_max must be at least |l|")
    if (cfg.twice_j_max - cfg.twice_l) % 2:
        fail("twice_j_max", "must have the parity of twice_l")
    try:
        cfg.model_params()
    except ValueError as exc:
        fail("twice_l", str(exc))
    return cfg


def parse_config_text(text: str, origin: str = "<config>") -> RunConfig:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{origin}:{_line_of(text, nested[0])}: config must be a flat table")
    return config_from_mapping(data, text, origin)


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config_text(text, str(path))


def emit_config(cfg: RunConfig) -> str:
    """Canonical flat TOML: fixed key order, shortest round-trip floats."""
    lines = [f"r = {cfg.r!r}", f"mass = {cfg.mass!r}", f"alpha = {cfg.alpha!r}", f"hbar = {cfg.hbar!r}",
             f"twice_l = {cfg.twice_l}", f"twice_j_max = {cfg.twice_j_max}"]
    if cfg.tau_override is not None:
        lines.append(f"tau_override = {cfg.tau_override!r}")
    lines.append(f"seed = {cfg.seed}")
    lines += [f"tol_{k} = {v!r}" for k, v in cfg.tolerances]
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(emit_config(cfg).encode()).hexdigest()


# --------------------------------------------------------------------------
# Emission


def _fmt(x) -> str:
    return format(float(x), ".17g")


def to_json(obj, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits and insertion-ordered keys."""
    import json

    import numpy as np

    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(inner + to_json(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj) if math.isfinite(obj) else "null"
    if obj is None:
        return "null"
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist(), indent)
    return json.dumps(str(obj))


def to_csv(header, rows) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check(name, value, tol) -> dict:
    return {"check": name, "value": float(value), "tolerance": float(tol), "breach": bool(not value <= tol)}


# --------------------------------------------------------------------------
# Commands: each returns (json_name, results, checks, csv_files)


def _tol(cfg, name):
    return cfg.tolerance_map.get(name, CHECK_TOLERANCES[name])


def cmd_params(cfg, args):
    p = cfg.model_params()
    res = {"r": p.r, "mass": p.m, "alpha": p.alpha, "hbar": p.hbar, "twice_l": p.twice_l, "B": p.B,
           "tau": p.tau, "flux": p.flux, "flux_integer": p.flux_integer}
    print(f"B = {_fmt(p.B)}\ntau = {_fmt(p.tau)}\nflux_integer = {p.flux_integer}")
    return "params.json", res, [], {}


def _rng(cfg):
    import numpy as np

    return np.random.default_rng(cfg.seed)


def cmd_trajectory(cfg, args):
    import numpy as np

    from .classical import TRAJECTORY_HEADER, PhasePoint, flow, random_phase_points, trajectory_rows

    p = cfg.model_params()
    x, mom = random_phase_points(1, p, _rng(cfg))
    traj = flow(PhasePoint(x[0], mom[0]), TRAJ_T_MAX, TRAJ_DT, p)
    rows = trajectory_rows(traj, p)
    J, H = rows[:, 7:10], rows[:, 10]
    dj = float(np.max(np.linalg.norm(J - J[0], axis=1)) / max(np.linalg.norm(J[0]), 1e-300))
    dh = float(np.max(np.abs(H - H[0])) / max(abs(H[0]), 1e-300))
    tol = _tol(cfg, "flow_drift")
    res = {"t_max": TRAJ_T_MAX, "dt": TRAJ_DT, "steps": len(rows) - 1, "J_drift": dj, "H_drift": dh}
    checks = [_check("J_drift", dj, tol), _check("H_drift", dh, tol)]
    return "trajectory.json", res, checks, {"trajectory.csv": (TRAJECTORY_HEADER, rows)}


def cmd_amap(cfg, args):
    import numpy as np

    from .classical import complexifier_map, random_phase_points

    p = cfg.model_params()
    x, mom = random_phase_points(AMAP_POINTS, p, _rng(cfg))
    a = complexifier_map((x, mom), p)
    resid = np.abs(np.sum(a * a, axis=-1) - p.r**2)
    header = ["x1", "x2", "x3", "p1", "p2", "p3", "a1_re", "a1_im", "a2_re", "a2_im", "a3_re", "a3_im",
              "quadric_residual"]
    rows = np.column_stack([x, mom, np.stack([a.real, a.imag], -1).reshape(-1, 6), resid])
    worst = float(resid.max() / p.r**2)
    res = {"points": AMAP_POINTS, "max_quadric_residual_rel": worst}
    return "amap.json", res, [_check("quadric", worst, _tol(cfg, "quadric"))], {"amap.csv": (header, rows)}


def _space(cfg):
    from .quantum import build_space

    return build_space(cfg.twice_l, cfg.twice_j_max, cfg.model_params())


def cmd_operators(cfg, args):
    from .quantum import relation_report

    report = relation_report(_space(cfg), cfg.tolerance_map)
    return "operators.json", {"relations": report}, report, {}


def _seed_point(cfg, s=0.3):
    import numpy as np

    rng = _rng(cfg)
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    v = rng.normal(size=3)
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    return cfg.r * (math.cosh(s) * u + 1j * math.sinh(s) * v)


def cmd_coherent(cfg, args):
    import numpy as np

    from .states import coherent_state, eigen_residual, expectations

    sp = _space(cfg)
    a = _seed_point(cfg)
    cs = coherent_state(a, sp, warn=False)
    rho = eigen_residual(cs, sp)
    ex, ej = expectations(cs, sp)
    top = sp.shell_slice(sp.twice_js[-1])
    tail = float(np.sum(np.abs(cs.vec[top]) ** 2) / np.sum(np.abs(cs.vec) ** 2))
    res = {"a_re": a.real, "a_im": a.imag, "norm": cs.norm, "eigen_residual": rho, "X_expectation": ex,
           "J_expectation": ej, "top_shell_fraction": tail}
    rows = np.column_stack([sp.twice_j_of, sp.twice_m_of, cs.vec.real, cs.vec.imag])
    checks = [_check("coherent_residual", float(rho.max()), _tol(cfg, "coherent_residual"))]
    return "coherent.json", res, checks, {"coherent.csv": (["twice_j", "twice_m", "re", "im"], rows)}


def _grid(spec: str):
    m = re.fullmatch(r"(\d+)x(\d+)", spec or "")
    if not m or int(m.group(1)) < 1 or int(m.group(2)) < 1:
        raise UsageError(f"--grid expects SxT with positive integers, got {spec!r}")
    return int(m.group(1)), int(m.group(2))


def cmd_husimi(cfg, args):
    import numpy as np

    from .states import HUSIMI_HEADER, coherent_state, husimi_grid, husimi_rows

    n_s, n_t = _grid(args.grid or "4x6")
    sp = _space(cfg)
    psi = coherent_state(_seed_point(cfg), sp, warn=False).vec
    s_values = np.linspace(0.0, 1.0, n_s)
    S, TH, PH, vals = husimi_grid(psi, sp, s_values, n_t, 2 * n_t)
    res = {"grid": {"s": n_s, "theta": n_t, "phi": 2 * n_t}, "s_values": s_values, "max": float(vals.max())}
    return "husimi.json", res, [], {"husimi.csv": (HUSIMI_HEADER, husimi_rows(S, TH, PH, vals))}


def cmd_sbt(cfg, args):
    import numpy as np

    from .sbt import isometry_check, nu_group, sector_isometry

    p = cfg.model_params()
    mode = args.mode or "sector"
    if mode == "sector":
        nu = nu_group(p.tau)
        tjs = list(range(0, cfg.twice_j_max + 1, 2))
        R = np.array([sector_isometry(tj, p.tau, nu) for tj in tjs])
        dev = float(np.max(np.abs(R - 1)))
        res = {"mode": "sector", "twice_l": 0, "tau": p.tau, "max_deviation": dev,
               "radial_coordinate": "s = log of the top eigenvalue of g^dagger g"}
        rows = np.column_stack([tjs, R, R - 1])
        return ("sbt_sector.json", res, [_check("sector", dev, _tol(cfg, "sector"))],
                {"sbt_sector.csv": (["twice_j", "R_j", "deviation"], rows)})
    sp = _space(cfg)
    rng = _rng(cfg)
    psi = rng.normal(size=sp.dim) + 1j * rng.normal(size=sp.dim)
    psi /= np.linalg.norm(psi)
    rep = isometry_check(psi, sp)
    name = "isometry_l0" if cfg.twice_l == 0 else "isometry_twisted"
    return "sbt_full.json", rep, [_check(name, abs(rep["ratio"] - 1), _tol(cfg, name))], {}


HANDLERS = {
    "params": cmd_params,
    "trajectory": cmd_trajectory,
    "amap": cmd_amap,
    "operators": cmd_operators,
    "coherent": cmd_coherent,
    "husimi": cmd_husimi,
    "sbt": cmd_sbt,
}


# --------------------------------------------------------------------------
# Entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat TOML run configuration")
    common.add_argument("--out", default="out", help="artifact directory (default: out)")
    common.add_argument("--strict", action="store_true", help="exit 3 when a tolerance is breached")
    common.add_argument("--jmax", type=int, help="override twice_j_max")
    common.add_argument("--tau", type=float, help="override the derived tau")
    common.add_argument("--grid", help="husimi grid SxT (s values x theta values)")
    common.add_argument("--mode", choices=("sector", "full"), help="sbt mode")
    ap = _Parser(prog="monosphere", description="Charged particle on the sphere: classical, quantum, coherent states")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def _recorded_argv(argv):
    """argv without the output directory, which does not affect any result."""
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
        elif tok == "--out":
            skip = True
        elif not tok.startswith("--out="):
            out.append(tok)
    return out


def _limit_threads():
    n = os.environ.get("MONOSPHERE_THREADS")
    if n:
        for var in THREAD_VARS:
            os.environ[var] = n


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _limit_threads()
    try:
        args = build_parser().parse_args(argv)
        cfg = parse_config(args.config) if args.config else RunConfig()
        if args.jmax is not None or args.tau is not None:
            data = dataclasses.asdict(cfg)
            data.pop("tolerances")
            data = {k: v for k, v in data.items() if v is not None}
            if args.jmax is not None:
                data["twice_j_max"] = args.jmax
            if args.tau is not None:
                data["tau_override"] = args.tau
            data.update({f"tol_{k}": v for k, v in cfg.tolerances})
            cfg = config_from_mapping(data, origin="<command line>")
    except (UsageError, ConfigError) as exc:
        print(exc, file=sys.stderr)
        return 1

    from .classical import NoConvergence, StepTooLarge
    from .quantum import Overflow, SignMismatch
    from .sbt import QuadratureNotConverged

    numeric = (NoConvergence, StepTooLarge, Overflow, SignMismatch, QuadratureNotConverged,
               ArithmeticError, OSError)
    try:
        json_name, results, checks, csvs = HANDLERS[args.command](cfg, args)
        out = Path(args.out)
        breach = any(bool(c.get("breach")) for c in checks)
        report = {
            "command": args.command,
            "argv": _recorded_argv(argv),
            "version": __version__,
            "config_sha256": config_hash(cfg),
            "config": emit_config(cfg),
            "tau_override": cfg.tau_override is not None,
            "results": results,
            "checks": [] if checks is results.get("relations") else checks,
            "breach": breach,
        }
        for fname, (header, rows) in csvs.items():
            write_atomic(out / fname, to_csv(header, rows))
        write_atomic(out / json_name, to_json(report) + "\n")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except numeric as exc:
        print(f"monosphere: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if breach and args.strict:
        print(f"monosphere: tolerance breach recorded in {out / json_name}", file=sys.stderr)
        return 3
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
