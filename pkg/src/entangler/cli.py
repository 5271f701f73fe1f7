"""Command-line front-end.

Subcommands: state, bell, tomo, curve, simulate. Settings come from an
optional config file (INI sections or the ``config`` block of a previous
JSON output) overridden by flags; the fully resolved configuration is
embedded in every JSON artifact so a run can be replayed exactly.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 non-convergence.
"""
from __future__ import annotations

import argparse
import configparser
import copy
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .apparatus import (
    DetectorModel,
    expected_rate,
    load_records,
    records_to_csv,
    records_to_json,
    simulate_counts,
)
from .chsh import ANGLE_SETS, ChshAngles, estimate_S_from_counts, fit_visibility, fringe
from .core import ValidationError
from .measures import report
from .settings import AnalyzerSetting
from .states import mems, state_from_config, werner
from .tomography import derived_quantities, matrix_csv, mle_reconstruct, standard_settings

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NONCONVERGED = 0, 2, 3, 4
OUTPUT_DIR_ENV = "ENTANGLER_OUTPUT_DIR"

# section -> key -> type; anything else in a config file is rejected
SCHEMA = {
    "state": {"family": str, "p": float, "phi": float, "wA": float, "wB": float, "wC": float,
              "dx": float, "x0": float},
    "detector": {"ideal": bool, "dqe": float, "dark_rate": float, "pair_rate": float,
                 "coincidence_window": float, "singles_rate_background": float},
    "run": {"duration": float, "seed": int, "out": str},
    "bell": {"angles": str, "method": str, "fringe_theta2_deg": float, "fringe_start_deg": float,
             "fringe_stop_deg": float, "fringe_step_deg": float},
    "tomo": {"design": str, "max_iters": int, "tolerance": float, "counts": str,
             "subtract_accidentals": bool},
    "curve": {"step": float, "simulate": bool, "simulate_step": float, "jobs": int},
}

DEFAULTS = {
    "state": {"family": "singlet"},
    "detector": {"ideal": False},
    "run": {"duration": 180.0, "seed": 0},
    "bell": {"angles": "optimal", "method": "delta", "fringe_theta2_deg": 45.0,
             "fringe_start_deg": 45.0, "fringe_stop_deg": 135.0, "fringe_step_deg": 5.0},
    "tomo": {"design": "16", "max_iters": 5000, "tolerance": 1e-9, "subtract_accidentals": True},
    "curve": {"step": 0.01, "simulate": False, "simulate_step": 0.1, "jobs": 1},
}


class NonConvergence(RuntimeError):
    pass


def _coerce(section: str, key: str, value):
    try:
        kind = SCHEMA[section][key]
    except KeyError:
        raise ValidationError(f"unknown config key [{section}] {key}") from None
    if value is None:
        return None
    if kind is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"[{section}] {key}: expected a boolean, got {value!r}")
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ValidationError(f"[{section}] {key}: cannot parse {value!r} as {kind.__name__}") from None


def load_config_file(path: str) -> dict:
    """Read an INI file, or a JSON artifact / dict with a top-level ``config`` block."""
    text = Path(path).read_text()
    if path.endswith(".json"):
        data = json.loads(text)
        data = data.get("config", data)
    else:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        parser.read_string(text)
        data = {s: dict(parser.items(s)) for s in parser.sections()}
    out = {}
    for section, values in data.items():
        if section not in SCHEMA:
            raise ValidationError(f"unknown config section [{section}]")
        out[section] = {k: _coerce(section, k, v) for k, v in values.items()}
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        file_cfg = load_config_file(args.config)
        if "state" in file_cfg:
            cfg["state"] = {}
        for section, values in file_cfg.items():
            cfg[section].update({k: v for k, v in values.items() if v is not None})
    overrides = getattr(args, "overrides", {})
    if overrides.get("state", {}).get("family") is not None:
        cfg["state"] = {}
    for section, values in overrides.items():
        for k, v in values.items():
            if v is not None:
                cfg[section][k] = _coerce(section, k, v)
    env_out = os.environ.get(OUTPUT_DIR_ENV)
    if env_out:
        cfg["run"]["out"] = env_out
    return cfg


def detector_from_config(cfg: dict) -> DetectorModel:
    d = dict(cfg["detector"])
    base = DetectorModel.ideal() if d.pop("ideal", False) else DetectorModel()
    return base.with_overrides(**{k: v for k, v in d.items() if v is not None})


def angles_from_config(cfg: dict) -> ChshAngles:
    text = str(cfg["bell"]["angles"]).strip()
    if text in ANGLE_SETS:
        return ANGLE_SETS[text]
    try:
        values = [float(x) for x in text.split(",")]
    except ValueError:
        values = []
    if len(values) != 4:
        raise ValidationError(f"angles must be {sorted(ANGLE_SETS)} or four comma-separated degrees, got {text!r}")
    return ChshAngles.from_degrees(*values)


def subseed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(cfg: dict, name: str, text: str) -> None:
    out = cfg["run"].get("out")
    if not out:
        return
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / name).write_text(text)


def _x_coefficients(rho) -> dict:
    r = np.asarray(rho)
    return {
        "A": float(r[0, 0].real),
        "B": float(0.5 * (r[1, 1].real + r[2, 2].real)),
        "C": float(r[1, 2].real),
        "D": float(r[3, 3].real),
    }


# -- subcommands ---------------------------------------------------------------


def cmd_state(cfg: dict) -> int:
    rho = state_from_config(cfg["state"])
    payload = {"config": cfg, "rho": rho.to_dict(), "coefficients": _x_coefficients(rho),
               "report": report(rho).to_dict()}
    text = _dump(payload)
    _write(cfg, "state.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def _fringe_angles(cfg: dict) -> list[float]:
    b = cfg["bell"]
    step = b["fringe_step_deg"]
    if step <= 0:
        raise ValidationError("fringe_step_deg must be positive")
    n = int(math.floor((b["fringe_stop_deg"] - b["fringe_start_deg"]) / step + 1e-9)) + 1
    return [b["fringe_start_deg"] + i * step for i in range(max(n, 0))]


def cmd_bell(cfg: dict) -> int:
    rho = state_from_config(cfg["state"])
    model = detector_from_config(cfg)
    angles = angles_from_config(cfg)
    seed, duration = cfg["run"]["seed"], cfg["run"]["duration"]

    records = simulate_counts(rho, angles.unique_settings(), duration, model, subseed(seed, 0))
    est = estimate_S_from_counts(records, angles, method=cfg["bell"]["method"], seed=subseed(seed, 1))

    theta2 = math.radians(cfg["bell"]["fringe_theta2_deg"])
    degs = _fringe_angles(cfg)
    ideal = fringe(rho, theta2, [math.radians(d) for d in degs])
    settings = [AnalyzerSetting(math.radians(d), theta2) for d in degs]
    sim = simulate_counts(rho, settings, duration, model, subseed(seed, 2))

    lines = ["theta1_deg,theta2_deg,probability,expected_rate,counts"]
    for d, (_, prob), s, rec in zip(degs, ideal, settings, sim):
        lines.append(f"{d!r},{cfg['bell']['fringe_theta2_deg']!r},{prob!r},{expected_rate(rho, s, model)!r},{rec.coincidences}")
    fringe_csv = "\n".join(lines) + "\n"

    payload = {"config": cfg, **est.to_dict()}
    if len(degs) >= 3:
        payload["fringe_visibility_ideal"] = fit_visibility([math.radians(d) for d in degs], [p for _, p in ideal])
        payload["fringe_visibility_measured"] = fit_visibility(
            [math.radians(d) for d in degs], [r.coincidences / r.duration for r in sim])
    text = _dump(payload)
    _write(cfg, "bell.json", text)
    _write(cfg, "bell_fringe.csv", fringe_csv)
    sys.stdout.write(text)
    return EXIT_OK


def _tomo_records(cfg: dict, rho):
    path = cfg["tomo"].get("counts")
    if path:
        return load_records(path)
    model = detector_from_config(cfg)
    settings = standard_settings(cfg["tomo"]["design"])
    return simulate_counts(rho, settings, cfg["run"]["duration"], model, subseed(cfg["run"]["seed"], 0))


def cmd_tomo(cfg: dict) -> int:
    target = state_from_config(cfg["state"])
    records = _tomo_records(cfg, target)
    t = cfg["tomo"]
    result = mle_reconstruct(records, settings=t["design"], max_iters=t["max_iters"], tolerance=t["tolerance"],
                             target=target, subtract_accidentals=t["subtract_accidentals"])
    payload = {
        "config": cfg,
        "result": result.to_dict(),
        "coefficients": _x_coefficients(result.rho),
        "report": derived_quantities(result).to_dict(),
        "target_rho": target.to_dict(),
    }
    text = _dump(payload)
    _write(cfg, "tomo.json", text)
    _write(cfg, "tomo_matrix.csv", matrix_csv(result.rho))
    sys.stdout.write(text)
    if not result.converged:
        raise NonConvergence(f"MLE did not converge in {result.iterations} iterations")
    return EXIT_OK


CURVE_HEADER = "family,p,S_L,T,chsh_max,ppt_min,source"
FAMILIES = {"werner": werner, "mems": mems}


def _grid(step: float) -> list[float]:
    if not 0 < step <= 1:
        raise ValidationError("grid step must lie in (0, 1]")
    n = int(round(1 / step))
    return [min(i * step, 1.0) for i in range(n + 1)]


def _curve_row(family: str, p: float, rho, source: str) -> str:
    r = report(rho)
    return f"{family},{p!r},{r.linear_entropy!r},{r.tangle!r},{r.chsh_max!r},{r.ppt_min_eigenvalue!r},{source}"


def _reconstructed_point(job):
    family, p, cfg, seed = job
    rho = FAMILIES[family](p)
    records = simulate_counts(rho, standard_settings(cfg["tomo"]["design"]), cfg["run"]["duration"],
                              detector_from_config(cfg), seed)
    result = mle_reconstruct(records, settings=cfg["tomo"]["design"], max_iters=cfg["tomo"]["max_iters"],
                             tolerance=cfg["tomo"]["tolerance"])
    return _curve_row(family, p, result.rho, "reconstructed")


def cmd_curve(cfg: dict) -> int:
    c = cfg["curve"]
    rows = [CURVE_HEADER]
    for family, build in FAMILIES.items():
        rows.extend(_curve_row(family, p, build(p), "analytic") for p in _grid(c["step"]))
    if c["simulate"]:
        jobs = []
        for family in FAMILIES:
            for p in _grid(c["simulate_step"]):
                jobs.append((family, p, cfg, subseed(cfg["run"]["seed"], len(jobs))))
        if c["jobs"] > 1:
            with ProcessPoolExecutor(max_workers=c["jobs"]) as pool:
                rows.extend(pool.map(_reconstructed_point, jobs))
        else:
            rows.extend(map(_reconstructed_point, jobs))
    text = "\n".join(rows) + "\n"
    if cfg["run"].get("out"):
        _write(cfg, "curve.csv", text)
        sidecar = _dump({"config": cfg, "rows": len(rows) - 1, "columns": CURVE_HEADER.split(",")})
        _write(cfg, "curve.json", sidecar)
        sys.stdout.write(sidecar)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(cfg: dict, kind: str) -> int:
    rho = state_from_config(cfg["state"])
    model = detector_from_config(cfg)
    if kind == "bell":
        settings = angles_from_config(cfg).unique_settings()
    else:
        settings = standard_settings(cfg["tomo"]["design"])
    records = simulate_counts(rho, settings, cfg["run"]["duration"], model, subseed(cfg["run"]["seed"], 0))
    payload = json.loads(records_to_json(records))
    payload["config"] = cfg
    text = _dump(payload)
    _write(cfg, "counts.json", text)
    _write(cfg, "counts.csv", records_to_csv(records))
    sys.stdout.write(text if cfg["run"].get("out") else records_to_csv(records))
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


class _Store(argparse.Action):
    """Store a flag under ``overrides[section][key]``."""

    def __init__(self, *args, section, key, **kw):
        self.section, self.key = section, key
        super().__init__(*args, **kw)

    def __call__(self, parser, namespace, values, option_string=None):
        overrides = getattr(namespace, "overrides", None) or {}
        overrides.setdefault(self.section, {})[self.key] = values
        namespace.overrides = overrides


def _flag(p, name, section, key=None, **kw):
    p.add_argument(name, action=_Store, section=section, key=key or name.lstrip("-").replace("-", "_"),
                   default=argparse.SUPPRESS, **kw)


def _common(p):
    p.add_argument("--config", help="INI config file, or a JSON artifact from a previous run")
    _flag(p, "--family", "state", help="bell|singlet|mixed|werner|mems|mems_sectors|sectors|displacement")
    _flag(p, "--p", "state", type=float)
    _flag(p, "--phi", "state", type=float, help="phase of the source Bell state, radians")
    _flag(p, "--wA", "state", type=float, key="wA")
    _flag(p, "--wB", "state", type=float, key="wB")
    _flag(p, "--wC", "state", type=float, key="wC")
    _flag(p, "--dx", "state", type=float, help="glass-plate displacement")
    _flag(p, "--x0", "state", type=float, help="displacement calibration scale")
    _flag(p, "--seed", "run", type=int)
    _flag(p, "--duration", "run", type=float, help="seconds per setting")
    _flag(p, "--out", "run", help=f"output directory (overridden by ${OUTPUT_DIR_ENV})")
    _flag(p, "--ideal-detector", "detector", key="ideal", nargs="?", const="true",
          metavar="BOOL", help="use unit efficiency with no dark counts or accidentals")
    _flag(p, "--dqe", "detector", type=float)
    _flag(p, "--dark-rate", "detector", type=float)
    _flag(p, "--pair-rate", "detector", type=float)
    _flag(p, "--coincidence-window", "detector", type=float)
    _flag(p, "--angles", "bell", help="'optimal', 'printed', or four comma-separated degrees a,a',b,b'")
    _flag(p, "--design", "tomo", help="16 or 36 projector settings")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entangler", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("state", help="build a state and print its measures")
    _common(p)

    p = sub.add_parser("bell", help="simulate a CHSH run and a correlation fringe")
    _common(p)
    _flag(p, "--method", "bell", choices=["delta", "bootstrap"])
    _flag(p, "--fringe-theta2-deg", "bell", type=float)

    p = sub.add_parser("tomo", help="simulate (or replay) tomography counts and reconstruct")
    _common(p)
    _flag(p, "--counts", "tomo", help="replay a count file (CSV or JSON) instead of simulating")
    _flag(p, "--max-iters", "tomo", type=int)
    _flag(p, "--tolerance", "tomo", type=float)
    _flag(p, "--subtract-accidentals", "tomo", nargs="?", const="true", metavar="BOOL")

    p = sub.add_parser("curve", help="tangle/entropy curves for the Werner and MEMS families")
    _common(p)
    _flag(p, "--step", "curve", type=float)
    _flag(p, "--simulate", "curve", nargs="?", const="true", metavar="BOOL", help="add tomographically reconstructed points")
    _flag(p, "--simulate-step", "curve", type=float)
    _flag(p, "--jobs", "curve", type=int)

    p = sub.add_parser("simulate", help="write simulated count records only")
    _common(p)
    p.add_argument("--kind", choices=["bell", "tomo"], default="tomo")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "state":
            return cmd_state(cfg)
        if args.command == "bell":
            return cmd_bell(cfg)
        if args.command == "tomo":
            return cmd_tomo(cfg)
        if args.command == "curve":
            return cmd_curve(cfg)
        return cmd_simulate(cfg, args.kind)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
