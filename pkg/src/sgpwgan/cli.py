"""Command-line front end.

    sgpwgan analyze            --system dirac --rho 1 --mass const:1
    sgpwgan portrait           --system quadratic-dirac --rho 0.375 --box -4,2,-2,2
    sgpwgan integrate          --system dirac --rho 1 --x0 1,1 --t-max 50
    sgpwgan check-assumptions  --system quadratic --rho 1 --equilibrium 0,1
    sgpwgan train2d            --dataset gauss8 --penalty-kind mid --iters 30000
    sgpwgan run --config cfg.json [flags override the file]

Exit status 0 on success, 2 on invalid input, 3 on numerical failure.  Every
run writes ``manifest.json`` with the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .analytic_systems import TOY_NAMES, toy_system
from .dynamics import MCConfig, check_assumptions, toy_problem
from .errors import ConfigError, InvalidMeasure, NoWeakDerivative, NumericalFailure, StructureViolation
from .export import write_json
from .gan2d import TrainConfig, train
from .integrate import integrate_ode, phase_portrait, simultaneous_gd
from .stability import jacobian_fd, projected_spectrum, qr_blocks, spectrum

COMMANDS = ("analyze", "portrait", "integrate", "train2d", "check-assumptions")
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
WORKERS_ENV = "SGPWGAN_WORKERS"

DEFAULTS = {
    "seed": 0,
    "mc_n": 100_000,
    "out": "out",
    "rho": 1.0,
    "mass": "const:1",
    "resolution": 41,
    "dt": 0.01,
    "t_max": 50.0,
    "tol": 1e-4,
    "method": "rk4",
    "lr": 1e-3,
    "steps": 1000,
}
TRAIN_KEYS = ("dataset", "penalty_kind", "anchor", "rho", "lr", "batch", "iters", "d_steps_per_g",
              "optimizer", "log_every", "checkpoint_every", "svg_every")


def load_schema() -> dict:
    return json.loads(resources.files("sgpwgan").joinpath("config.schema.json").read_text())


def validate_config(cfg: dict):
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"config invalid at '{path or '<root>'}': {exc.message}") from None


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _points(text):
    return [_floats(p) for p in str(text).split(";") if p.strip()]


def _ints(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sgpwgan", description="Stability lab for gradient-penalized WGAN dynamics.")
    p.add_argument("--version", action="version", version=f"sgpwgan {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--mc-n", dest="mc_n", type=int)
        sp.add_argument("--out")

    def toy(sp):
        sp.add_argument("--system", choices=TOY_NAMES)
        sp.add_argument("--rho", type=float)
        sp.add_argument("--mass", help="const:<c>, bump:<radius> or psisq (dirac)")
        sp.add_argument("--m2", type=float, help="fixed penalty second moment (quadratic)")
        sp.add_argument("--penalty", help="uniform or a Table 1 kind (pg, pd, gp, mid, g_anc)")

    sp = sub.add_parser("analyze", help="Jacobian spectrum, Q/R blocks and projected spectrum")
    common(sp)
    toy(sp)
    sp.add_argument("--equilibrium", type=_floats)

    sp = sub.add_parser("portrait", help="phase portrait SVG and lattice JSON")
    common(sp)
    toy(sp)
    sp.add_argument("--box", type=_floats, help="psi_lo,psi_hi,theta_lo,theta_hi")
    sp.add_argument("--resolution", type=int)
    sp.add_argument("--starts", type=_points, help="'p,t;p,t;...'")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--t-max", dest="t_max", type=float)

    sp = sub.add_parser("integrate", help="RK4 or simultaneous gradient descent trajectory")
    common(sp)
    toy(sp)
    sp.add_argument("--x0", type=_floats)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--t-max", dest="t_max", type=float)
    sp.add_argument("--target", type=_floats)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--method", choices=("rk4", "gd", "gd-mc"))
    sp.add_argument("--lr", type=float)
    sp.add_argument("--steps", type=int)

    sp = sub.add_parser("check-assumptions", help="sample-based assumption report")
    common(sp)
    toy(sp)
    sp.add_argument("--equilibrium", type=_floats)
    sp.add_argument("--tol", type=float)

    sp = sub.add_parser("train2d", help="train a 2D WGAN with the simple gradient penalty")
    common(sp)
    sp.add_argument("--dataset", choices=("gauss8", "gauss25", "swissroll"))
    sp.add_argument("--penalty-kind", dest="penalty_kind", choices=("pg", "pd", "gp", "mid", "g_anc"))
    sp.add_argument("--anchor", type=_floats)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--iters", type=int)
    sp.add_argument("--d-steps-per-g", dest="d_steps_per_g", type=int)
    sp.add_argument("--optimizer", choices=("gd", "adam"))
    sp.add_argument("--log-every", dest="log_every", type=int)
    sp.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    sp.add_argument("--svg-every", dest="svg_every", type=int)
    sp.add_argument("--seeds", type=_ints, help="several seeds, run by SGPWGAN_WORKERS processes")

    sp = sub.add_parser("run", help="run a JSON config (flags given after it override the file)")
    sp.add_argument("--config", required=True)
    common(sp)
    return p


def _flags(ns) -> dict:
    return {k: v for k, v in vars(ns).items() if v is not None and k not in ("command", "config")}


def _attach_negative_values(argv):
    # argparse reads "-4,2,-2,2" as an option; glue such values to their flag
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if (a.startswith("--") and "=" not in a and i + 1 < len(argv)
                and re.match(r"^-[0-9.]", argv[i + 1])):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def resolve(argv) -> dict:
    """Merge defaults, an optional config file and explicit flags; validate."""
    parser = build_parser()
    ns = parser.parse_args(_attach_negative_values(list(argv)))
    if ns.command is None:
        raise ConfigError("no command given; see --help")
    if ns.command == "run":
        try:
            text = Path(ns.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {ns.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        cfg = {**cfg, **_flags(ns)}
    else:
        cfg = {"command": ns.command, **_flags(ns)}
    validate_config(cfg)
    if cfg["command"] != "train2d" and "system" not in cfg:
        raise ConfigError(f"command {cfg['command']!r} needs a system")
    return cfg


# ---------------------------------------------------------------------------
# commands


def _get(cfg, key):
    return cfg.get(key, DEFAULTS.get(key))


def _system(cfg):
    name = cfg["system"]
    if name == "quadratic":
        return toy_system(name, _get(cfg, "rho"), second_moment=cfg.get("m2"))
    return toy_system(name, _get(cfg, "rho"), mass=_get(cfg, "mass"))


def _problem(cfg):
    return toy_problem(cfg["system"], _get(cfg, "rho"), mass=_get(cfg, "mass"), penalty=cfg.get("penalty"))


def _default_equilibrium(system):
    if system.equilibria:
        return list(system.equilibria[0])
    return [0.0, 0.0]


def cmd_analyze(cfg, out):
    system = _system(cfg)
    eq = cfg.get("equilibrium") or _default_equilibrium(system)
    J = jacobian_fd(system.as_vector_field(), np.asarray(eq, float))
    result = {"system": system.name, "equilibrium": eq, "spectral": spectrum(J).to_dict()}
    problem = _problem(cfg)
    blocks = qr_blocks(problem, ([eq[0]], [eq[1]]), MCConfig(_get(cfg, "mc_n"), _get(cfg, "seed")))
    result["blocks"] = blocks.to_dict()
    try:
        result["projected"] = projected_spectrum(blocks).to_dict()
    except StructureViolation as exc:
        result["projected"] = {"error": str(exc)}
    write_json(out / "analyze.json", result)
    return ["analyze.json"]


def cmd_portrait(cfg, out):
    system = _system(cfg)
    box = cfg.get("box") or [-2.0, 2.0, -2.0, 2.0]
    pp = phase_portrait(system, ((box[0], box[1]), (box[2], box[3])), int(_get(cfg, "resolution")),
                        [tuple(s) for s in cfg.get("starts", [])], _get(cfg, "dt"),
                        cfg.get("t_max", 20.0))
    title = f"{system.name} rho={_get(cfg, 'rho')!r}"
    (out / "portrait.svg").write_text(pp.to_svg(title))
    write_json(out / "portrait.json", pp)
    return ["portrait.json", "portrait.svg"]


def cmd_integrate(cfg, out):
    x0 = cfg.get("x0") or [1.0, 1.0]
    stop = None if cfg.get("target") is None else {"target": cfg["target"], "tol": _get(cfg, "tol")}
    method = _get(cfg, "method")
    if method == "rk4":
        tr = integrate_ode(_system(cfg), x0, _get(cfg, "dt"), _get(cfg, "t_max"), stop)
    elif method == "gd":
        tr = simultaneous_gd(_system(cfg), x0, _get(cfg, "lr"), _get(cfg, "steps"), stop=stop)
    else:
        tr = simultaneous_gd(_problem(cfg), x0, _get(cfg, "lr"), _get(cfg, "steps"),
                             MCConfig(_get(cfg, "mc_n"), _get(cfg, "seed")), stop=stop)
        tr.meta["names"] = ["psi", "theta"]
    tr.to_csv(out / "trajectory.csv")
    write_json(out / "trajectory.json", tr)
    return ["trajectory.csv", "trajectory.json"]


def cmd_check(cfg, out):
    system = _system(cfg)
    eq = cfg.get("equilibrium") or _default_equilibrium(system)
    rep = check_assumptions(_problem(cfg), ([eq[0]], [eq[1]]),
                            {"n": _get(cfg, "mc_n"), "seed": _get(cfg, "seed"), "tol": _get(cfg, "tol")})
    write_json(out / "assumptions.json", rep)
    return ["assumptions.json"]


def _train_one(args):
    tcfg, out = args
    rec = train(TrainConfig.from_dict(tcfg), out)
    rec.to_csv(Path(out) / "train.csv")
    write_json(Path(out) / "record.json", rec)
    return rec.status


def cmd_train2d(cfg, out):
    tcfg = {k: cfg[k] for k in TRAIN_KEYS if k in cfg}
    seeds = cfg.get("seeds") or [_get(cfg, "seed")]
    jobs = []
    for s in seeds:
        sub = out if len(seeds) == 1 else out / f"seed_{s}"
        sub.mkdir(parents=True, exist_ok=True)
        TrainConfig.from_dict({**tcfg, "seed": s})  # validate before any work
        jobs.append(({**tcfg, "seed": s}, sub))
    workers = max(1, int(os.environ.get(WORKERS_ENV, "1") or 1))
    if workers == 1 or len(jobs) == 1:
        statuses = [_train_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            statuses = list(pool.map(_train_one, jobs))
    files = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
    if any(s != "ok" for s in statuses):
        raise NumericalFailure("training stopped on a non-finite value; last checkpoint kept")
    return files


HANDLERS = {"analyze": cmd_analyze, "portrait": cmd_portrait, "integrate": cmd_integrate,
            "check-assumptions": cmd_check, "train2d": cmd_train2d}


def execute(cfg: dict) -> list:
    out = Path(cfg.get("out", DEFAULTS["out"]))
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}") from None
    resolved = {k: cfg.get(k, DEFAULTS.get(k)) for k in sorted(set(cfg) | {"seed", "mc_n", "out"})}
    files = HANDLERS[cfg["command"]](cfg, out)
    write_json(out / "manifest.json", {"version": __version__, "config": resolved, "files": sorted(files)})
    return files


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve(argv)
        execute(cfg)
    except (ConfigError, InvalidMeasure, NoWeakDerivative, StructureViolation) as exc:
        print(f"sgpwgan: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        where = "" if getattr(exc, "where", None) is None else f" at {np.asarray(exc.where).tolist()}"
        print(f"sgpwgan: numerical failure: {exc}{where}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
