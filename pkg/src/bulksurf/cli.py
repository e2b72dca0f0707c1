"""Command line front end: run, regimes, equilibrium, convergence, validate."""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .diagnostics import (MpParameters, combined_basis, conserved_totals, consistent_potentials, free_energy,
                          limit_convergence_study, mp_equilibrium, mp_equilibrium_newton, mp_residuals,
                          positivity_monitor)
from .grids import Interval1DGrid, PeriodicStripGrid
from .network import ReactionNetwork, SpeciesSet
from .scales import TimeScales, classify_regime
from .solvers import (ConfigurationError, FullProblem, ModelVariant, StepFailure, StepperConfig, SystemState,
                      simulate)
from .surface import SorptionModel, SurfaceReactionNetwork, isotherm_array, langmuir_diffusion

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str = ""):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key
        self.detail = message


# -- loading ----------------------------------------------------------------------

def _schema() -> dict:
    return json.loads(resources.files("bulksurf").joinpath("schema/config.schema.json").read_text("utf-8"))


def _preset(name: str) -> dict:
    return json.loads(resources.files("bulksurf").joinpath(f"configs/{name}.json").read_text("utf-8"))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        old = out.get(key)
        same_kind = isinstance(old, dict) and isinstance(value, dict) and old.get("type") == value.get("type")
        out[key] = _merge(old, value) if same_kind else copy.deepcopy(value)
    return out


def _key_path(path) -> str:
    text = ""
    for part in path:
        text += f"[{part}]" if isinstance(part, int) else (f".{part}" if text else str(part))
    return text


def validate_dict(raw: dict) -> dict:
    """Apply a preset, then check the schema; the first error names its key."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    if "preset" in raw:
        if raw["preset"] != "mp":
            raise ConfigError(f"unknown preset {raw['preset']!r}", "preset")
        raw = _merge(_preset("mp"), raw)
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _key_path(err.absolute_path) or "(root)")
    return raw


@dataclass
class RunConfig:
    raw: dict
    problem: FullProblem
    variant: ModelVariant
    initial: SystemState
    stepper: StepperConfig
    t_end: float
    sample_every: int
    use_phi: bool
    conservation: np.ndarray
    out_dir: Path
    trajectory_name: str = "trajectory.ndjson"
    final_name: str = "final_state.csv"
    regime_report: Optional[dict] = None
    notes: list = field(default_factory=list)


def _check_len(values, n: int, key: str):
    if len(values) != n:
        raise ConfigError(f"expected {n} entries, got {len(values)}", key)


def _reactions(section: list, n: int, key: str) -> ReactionNetwork:
    alpha, beta, kf, kb = [], [], [], []
    for j, rx in enumerate(section):
        _check_len(rx["alpha"], n, f"{key}[{j}].alpha")
        _check_len(rx["beta"], n, f"{key}[{j}].beta")
        alpha.append(rx["alpha"])
        beta.append(rx["beta"])
        kf.append(rx.get("k_f", 1.0))
        kb.append(rx.get("k_b", 1.0))
    if not section:
        return ReactionNetwork.empty(n)
    try:
        return ReactionNetwork.from_arrays(alpha, beta, kf, kb)
    except ValueError as exc:
        raise ConfigError(str(exc), key) from None


def _grid(geo: dict):
    if geo["type"] == "interval":
        return Interval1DGrid(geo.get("n_cells", 100), geo.get("length", 1.0))
    return PeriodicStripGrid(geo.get("nx", 8), geo.get("ny", 32), geo.get("lx", 1.0), geo.get("ly", 1.0))


def _read_state_csv(path: Path, grid, n: int) -> SystemState:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    bulk = [[float(r[f"c{i}"]) for i in range(n)] for r in rows if r["surface"] == "0"]
    surf = [[float(r[f"theta{i}"]) for i in range(n + 1)] for r in rows if r["surface"] == "1"]
    if len(bulk) != grid.n_cells:
        raise ConfigError(f"file has {len(bulk)} cells, grid has {grid.n_cells}", "initial.path")
    if surf and len(surf) != grid.n_nodes:
        raise ConfigError(f"file has {len(surf)} surface nodes, grid has {grid.n_nodes}", "initial.path")
    return SystemState(np.array(bulk), np.array(surf) if surf else None)


def _initial(section: dict, problem: FullProblem, base_dir: Path) -> SystemState:
    g = problem.grid
    n = problem.n_species
    kind = section["type"]
    if kind == "file":
        if "path" not in section:
            raise ConfigError("file initial data needs a path", "initial.path")
        return _read_state_csv(base_dir / section["path"], g, n)
    if kind == "mp":
        from .presets import mp_initial_state

        try:
            return mp_initial_state(problem, float(section.get("amplitude", 0.1)), tuple(section.get("base", (1.0, 1.0))),
                                    int(section.get("mode", 1)))
        except ConfigurationError as exc:
            raise ConfigError(str(exc), "initial.type") from None
    if kind == "uniform":
        if "bulk" not in section:
            raise ConfigError("uniform initial data needs bulk values", "initial.bulk")
        _check_len(section["bulk"], n, "initial.bulk")
        bulk = np.tile(np.asarray(section["bulk"], dtype=float), (g.n_cells, 1))
    else:
        base = section.get("base")
        if base is None:
            raise ConfigError("sinusoidal initial data needs base values", "initial.base")
        _check_len(base, n, "initial.base")
        amp = section.get("amplitude", 0.1)
        amp = np.broadcast_to(np.asarray(amp, dtype=float), (n,)) if np.ndim(amp) == 0 else np.asarray(amp, float)
        _check_len(amp, n, "initial.amplitude")
        if np.any(np.abs(amp) > 1):
            raise ConfigError("amplitudes above 1 give negative data", "initial.amplitude")
        y = g.centers[:, -1]
        length = g.ly if hasattr(g, "ly") else g.length
        prof = np.cos(int(section.get("mode", 1)) * np.pi * y / length)
        bulk = np.asarray(base, dtype=float) * (1.0 + amp * prof[:, None])
    if "surface" in section:
        _check_len(section["surface"], n + 1, "initial.surface")
        if abs(sum(section["surface"]) - 1.0) > 1e-12:
            raise ConfigError("occupancies must sum to one", "initial.surface")
        theta = np.tile(np.asarray(section["surface"], dtype=float), (g.n_nodes, 1))
    elif np.all(problem.sorption.k_ad > 0):
        theta = isotherm_array(bulk[g.adjacent], problem.sorption)
    else:
        raise ConfigError("give surface occupancies when some adsorption constant is zero", "initial.surface")
    return SystemState(bulk, theta)


def build_config(raw: dict, base_dir: Path = Path("."), out_dir: Optional[Path] = None) -> RunConfig:
    raw = validate_dict(raw)
    d = raw["diffusion"]
    n = len(d)
    if "species" in raw:
        _check_len(raw["species"], n, "species")
    names = raw.get("species")
    bulk = _reactions(raw.get("bulk", {}).get("reactions", []), n, "bulk.reactions")
    if names:
        bulk = ReactionNetwork(SpeciesSet(tuple(names)), bulk.reactions)
    surf_section = raw.get("surface", {})
    surface = SurfaceReactionNetwork(_reactions(surf_section.get("reactions", []), n, "surface.reactions"))
    _check_len(raw["sorption"]["k_ad"], n, "sorption.k_ad")
    _check_len(raw["sorption"]["k_de"], n, "sorption.k_de")
    sorption = SorptionModel(raw["sorption"]["k_ad"], raw["sorption"]["k_de"])
    times = TimeScales.direct(**raw.get("times", {}), n_bulk=bulk.n_reactions,
                              n_surface=surface.n_reactions, n_species=n)
    sdiff = surf_section.get("diffusion")
    diffusion = langmuir_diffusion(sdiff.get("d_ref", 1.0)) if sdiff else None
    grid = _grid(raw.get("geometry", {"type": "interval"}))
    problem = FullProblem(grid, tuple(d), bulk, surface, sorption, times, diffusion)

    report = None
    notes = []
    tag = raw.get("variant", "Full")
    if tag == "auto":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rep = classify_regime(times, raw.get("regime_threshold", 1e-2))
        notes += [str(w.message) for w in caught]
        report = rep.as_dict()
        try:
            variant = ModelVariant.from_regime(rep.recommendation)
        except ConfigurationError as exc:
            raise ConfigError(str(exc), "variant") from None
    else:
        variant = ModelVariant.parse(tag)
    try:
        problem.check_variant(variant)
    except ConfigurationError as exc:
        raise ConfigError(str(exc), "variant") from None

    step = dict(raw.get("stepper", {}))
    t_end = float(step.pop("t_end", 1.0))
    use_phi = bool(step.pop("use_phi", False))
    try:
        stepper = StepperConfig(**step)
    except ValueError as exc:
        raise ConfigError(str(exc), "stepper") from None
    if use_phi and variant is not ModelVariant.THREE_PARAM:
        raise ConfigError("the subproblem iteration only applies to ThreeParamMP", "stepper.use_phi")
    steps = t_end / stepper.dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        raise ConfigError("t_end must be a whole number of steps", "stepper.t_end")

    cons = raw.get("conservation")
    if cons is not None:
        for k, row in enumerate(cons):
            _check_len(row, n, f"conservation[{k}]")
        cons = np.asarray(cons, dtype=float).reshape(-1, n)
    else:
        cons = combined_basis(problem).vectors
    initial = _initial(raw["initial"], problem, base_dir)
    out = raw.get("output", {})
    out_path = Path(out_dir) if out_dir is not None else base_dir / out.get("dir", "out")
    return RunConfig(raw, problem, variant, initial, stepper, t_end, int(out.get("sample_every", 1)), use_phi,
                     cons, out_path, out.get("trajectory", "trajectory.ndjson"),
                     out.get("final_state", "final_state.csv"), report, notes)


def load_config(path, out_dir: Optional[Path] = None) -> RunConfig:
    """Read, validate and build a run configuration from a JSON file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", "config") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", "config") from None
    return build_config(raw, path.parent, out_dir)


# -- emission -----------------------------------------------------------------------

def fmt(x) -> str:
    """17 significant digits; non-finite values become JSON null."""
    x = float(x)
    return "%.17g" % x if math.isfinite(x) else "null"


def _json_value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_value(x)}" for k, x in v.items()) + "}"
    return "[" + ", ".join(_json_value(x) for x in v) + "]"


def dumps(record: dict) -> str:
    return _json_value(record)


def _energy(state: SystemState, cfg: RunConfig):
    try:
        _, _, residual = consistent_potentials(cfg.problem)
        if residual > 1e-8:
            return None
        return free_energy(state, cfg.problem, cfg.variant)
    except ValueError:
        return None


def trajectory_record(state: SystemState, cfg: RunConfig, totals0) -> dict:
    totals = conserved_totals(state, cfg.problem, cfg.conservation, cfg.variant)
    scale = np.maximum(np.abs(totals0), 1e-300)
    rec = {
        "t": state.time,
        "totals": list(totals),
        "drift": float(np.max(np.abs(totals - totals0) / scale)) if len(totals) else 0.0,
        "F": _energy(state, cfg),
        "min_c": positivity_monitor(state).value,
        "newton_res": state.info.get("newton_res", 0.0),
    }
    if "phi_iters" in state.info:
        rec["phi_iters"] = state.info["phi_iters"]
    return rec


def final_state_csv(state: SystemState, problem: FullProblem) -> str:
    g = problem.grid
    n = problem.n_species
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    dim = g.centers.shape[1]
    pos = ["x", "y"][:dim] if dim == 2 else ["y"]
    writer.writerow(["index", "surface"] + pos + [f"c{i}" for i in range(n)] + [f"theta{i}" for i in range(n + 1)])
    blank_c = [""] * n
    blank_t = [""] * (n + 1)
    for k in range(g.n_cells):
        writer.writerow([k, 0] + [fmt(v) for v in g.centers[k]] + [fmt(v) for v in state.bulk[k]] + blank_t)
    if state.surface is not None:
        for k in range(g.n_nodes):
            writer.writerow([k, 1] + [fmt(v) for v in g.node_positions[k]] + blank_c
                            + [fmt(v) for v in state.surface[k]])
    return buf.getvalue()


def error_record(exc: BaseException, **extra) -> dict:
    rec = {"error": type(exc).__name__, "message": getattr(exc, "detail", str(exc))}
    key = getattr(exc, "key", None)
    if key:
        rec["key"] = key
    for name in ("residual", "time"):
        val = getattr(exc, name, None)
        if val is not None and not (isinstance(val, float) and math.isnan(val)):
            rec[name] = val
    rec.update(extra)
    return rec


def run_experiment(cfg: RunConfig) -> int:
    """Simulate and write the trajectory and final-state files; returns an exit code."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    traj_path = cfg.out_dir / cfg.trajectory_name
    lines = []
    totals0 = None

    def record(state: SystemState):
        nonlocal totals0
        if totals0 is None:
            totals0 = conserved_totals(state, cfg.problem, cfg.conservation, cfg.variant)
        lines.append(dumps(trajectory_record(state, cfg, totals0)))

    try:
        traj = simulate(cfg.problem, cfg.variant, cfg.initial, cfg.stepper, cfg.t_end, cfg.sample_every,
                        keep_states=False, use_phi=cfg.use_phi, callback=record)
    except (StepFailure, ValueError) as exc:
        traj_path.write_text("".join(x + "\n" for x in lines), encoding="utf-8")
        rec = error_record(exc, variant=cfg.variant.value)
        (cfg.out_dir / "error.json").write_text(dumps(rec) + "\n", encoding="utf-8")
        print(dumps(rec), file=sys.stderr)
        return EXIT_SOLVER
    traj_path.write_text("".join(x + "\n" for x in lines), encoding="utf-8")
    (cfg.out_dir / cfg.final_name).write_text(final_state_csv(traj.final, cfg.problem), encoding="utf-8")
    return EXIT_OK


# -- subcommands ----------------------------------------------------------------------

def _cmd_run(args) -> int:
    cfg = load_config(args.config, Path(args.out) if args.out else None)
    code = run_experiment(cfg)
    if code == EXIT_OK:
        print(dumps({"status": "ok", "variant": cfg.variant.value, "out": str(cfg.out_dir)}))
    return code


def _cmd_regimes(args) -> int:
    cfg = load_config(args.config)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        rep = classify_regime(cfg.problem.times, cfg.raw.get("regime_threshold", 1e-2))
    out = rep.as_dict()
    out["ordering"] = [{"process": o["process"], "slow": o["slow"], "fast": o["fast"]} for o in out["ordering"]]
    print(dumps(out))
    return EXIT_OK


def _cmd_equilibrium(args) -> int:
    try:
        params = MpParameters(args.a, args.b, args.kappa)
    except ValueError as exc:
        raise ConfigError(str(exc), "equilibrium") from None
    c = mp_equilibrium(params)
    check = mp_equilibrium_newton(params)
    print(dumps({"c1": c[0], "c2": c[1], "c3": c[2], "relative_residuals": list(mp_residuals(params, c)),
                 "newton_difference": float(np.max(np.abs(np.asarray(c) - check)))}))
    return EXIT_OK


def _cmd_convergence(args) -> int:
    cfg = load_config(args.config)
    try:
        variant = ModelVariant.parse(args.variant)
        epsilons = [float(x) for x in args.epsilons.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc), "variant" if "variant" in str(exc) else "epsilons") from None
    if variant is ModelVariant.FULL:
        raise ConfigError("pick a reduced model", "variant")
    rows = limit_convergence_study(cfg.problem, variant, epsilons, cfg.t_end, cfg.stepper, cfg.initial)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epsilon", "error", "status", "message"])
    for r in rows:
        writer.writerow([fmt(r["epsilon"]), fmt(r["error"]) if r["status"] == "ok" else "", r["status"], r["message"]])
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "convergence.csv").write_text(buf.getvalue(), encoding="utf-8")
    sys.stdout.write(buf.getvalue())
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_SOLVER


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    out = {"valid": True, "variant": cfg.variant.value, "n_species": cfg.problem.n_species,
           "n_cells": cfg.problem.grid.n_cells, "t_end": cfg.t_end}
    if cfg.notes:
        out["notes"] = cfg.notes
    print(dumps(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bulksurf", description="Bulk-surface reaction-diffusion-sorption runs.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="simulate a configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: output.dir of the config)")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("regimes", help="classify the time-scale regime")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_regimes)
    p = sub.add_parser("equilibrium", help="closed-form equilibrium of A1 + A2 <-> A3")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.set_defaults(func=_cmd_equilibrium)
    p = sub.add_parser("convergence", help="distance of stiff full-model runs to a limit model")
    p.add_argument("--config", required=True)
    p.add_argument("--variant", required=True)
    p.add_argument("--epsilons", default="1e-1,1e-2,1e-3")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_convergence)
    p = sub.add_parser("validate", help="check a configuration without running it")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(dumps(error_record(exc)), file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(dumps(error_record(exc)), file=sys.stderr)
        return EXIT_CONFIG
    except StepFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        print(dumps(error_record(exc)), file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
