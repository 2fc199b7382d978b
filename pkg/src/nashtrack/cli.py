"""Experiment runner: config ingestion, seeded runs, CSV artifacts.

Subcommands:

    learn         run the learning driver to termination and write the
                  iteration log, weight/gain checkpoints and a manifest
    evaluate      replay checkpointed controllers over fresh randomized
                  scenarios and write per-trial glycaemic summaries
    oracle-check  exact-oracle equivalence sweep on generated linear games

Configs are YAML with a fixed schema; unknown keys are errors, because a
silently ignored typo corrupts an experiment.  Identical (config, seed)
pairs produce byte-identical artifacts.
"""

import argparse
import concurrent.futures
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .basis import ORDER_VERSION, quadratic_tracking_basis
from .errors import (
    ConfigError,
    CurvatureError,
    ExcitationError,
    ModelBlowupError,
    TrajectoryDivergedError,
)
from .learning import (
    EvalConfig,
    Q0ScaleProfile,
    init_q0,
    read_policy_gains,
    run_msqvi,
    write_iteration_log,
    write_policy_gains,
    write_weights_checkpoint,
)
from .metrics import summarize_trace, write_summary_csv
from .oracle import exact_vi_lq, remark_one_scale
from .plants import generate_lq_game, make_toy_game
from .plants.glucose import DailySchedule, GlucosePatient, GlucosePlant, glucose_basis, glucose_game_spec
from .plants.scenario import ScenarioConfig, scenario_to_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_POE = 3
EXIT_NONCONVERGENCE = 4
EXIT_DIVERGED = 5

# schema: nested mapping of allowed keys; None means "any scalar/list value"
_SCHEMA = {
    "plant": {
        "kind": None,
        "state_dim": None,
        "action_dims": None,
        "discount": None,
        "coupling": None,
        "drift_gain": None,
        "input_gain": None,
        "ref_gain": None,
        "game_seed": None,
        "patient": None,
        "scenario": None,
        "setpoint": None,
        "suspend_below": None,
        "cgm_noise": None,
        "cgm_noise_learning": None,
        "insulin_max": None,
        "glucagon_max": None,
    },
    "basis": {"kind": None},
    "learning": {
        "backend": None,
        "horizon": None,
        "buffer_size": None,
        "tol": None,
        "max_rounds": None,
        "poe_delta": None,
        "poe_scaled": None,
        "allow_rank_deficient": None,
        "damping": None,
        "curvature_floor": None,
        "restart_each_tuple": None,
        "noise_ranges": None,
        "lp": {"w_max": None, "moments": None},
        "q0": {"base": None, "action_multipliers": None, "seed_gains": None},
    },
    "trials": {"count": None, "days": None},
    "oracle_check": {
        "seeds": None,
        "state_dim": None,
        "action_dims": None,
        "gain_tolerance": None,
        "tol": None,
    },
    "seed": None,
    "out": None,
    "workers": None,
}


def _check_keys(section, schema, path=""):
    if schema is None or not isinstance(section, dict):
        return
    for key, value in section.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key: {where}")
        _check_keys(value, schema[key], where)


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as handle:
            config = yaml.safe_load(handle)
    except yaml.YAMLError as err:
        raise ConfigError(f"config does not parse: {err}") from err
    if not isinstance(config, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(config, _SCHEMA)
    return config


def _eval_config(learning, defaults=()):
    learning = dict(defaults, **(learning or {}))
    lp = learning.pop("lp", {}) or {}
    q0 = learning.pop("q0", {}) or {}
    noise = learning.get("noise_ranges")
    if noise is not None:
        learning["noise_ranges"] = tuple(tuple(float(v) for v in pair) for pair in noise)
    floor = learning.get("curvature_floor")
    if isinstance(floor, (list, tuple)):
        learning["curvature_floor"] = tuple(float(v) for v in floor)
    cfg = EvalConfig(
        w_max=float(lp.get("w_max", 1e9)),
        lp_moments=lp.get("moments", "ones"),
        **learning,
    )
    seed_gains = q0.get("seed_gains")
    if seed_gains is not None:
        seed_gains = tuple(
            None if g is None else np.atleast_2d(np.asarray(g, dtype=float)) for g in seed_gains
        )
    profile = Q0ScaleProfile(
        base=float(q0.get("base", 1.0)),
        action_multipliers=tuple(q0.get("action_multipliers", (1e5, 1e8))),
        seed_gains=seed_gains,
    )
    return cfg, profile


def _build_plant(config, seed, cgm_noise_override=None):
    plant_cfg = dict(config.get("plant") or {})
    kind = plant_cfg.get("kind", "lq")
    if kind == "lq":
        dims = (int(plant_cfg.get("state_dim", 2)), tuple(plant_cfg.get("action_dims", (1, 1))))
        lq, plant = generate_lq_game(
            dims,
            seed=int(plant_cfg.get("game_seed", 0)),
            discount=float(plant_cfg.get("discount", 0.95)),
            drift_gain=float(plant_cfg.get("drift_gain", 0.7)),
            input_gain=float(plant_cfg.get("input_gain", 0.35)),
            coupling=float(plant_cfg.get("coupling", 0.1)),
            ref_gain=float(plant_cfg.get("ref_gain", 0.9)),
        )
        return lq.game, plant, lq
    if kind == "nonlinear-toy":
        spec, plant = make_toy_game(discount=float(plant_cfg.get("discount", 0.95)))
        return spec, plant, None
    if kind == "glucose":
        patient = GlucosePatient(**(plant_cfg.get("patient") or {}))
        scenario = ScenarioConfig(**(plant_cfg.get("scenario") or {}))
        noise_on = plant_cfg.get("cgm_noise", True)
        if cgm_noise_override is not None:
            noise_on = cgm_noise_override
        plant = GlucosePlant(
            patient,
            DailySchedule(scenario, seed=seed),
            noise_seed=(seed + 1) if noise_on else None,
            setpoint=float(plant_cfg.get("setpoint", 120.0)),
            suspend_below=plant_cfg.get("suspend_below", 80.0),
        )
        spec = glucose_game_spec(
            discount=float(plant_cfg.get("discount", 0.95)),
            insulin_max_u_per_5min=float(plant_cfg.get("insulin_max", 0.5)),
            glucagon_max_mg_per_5min=float(plant_cfg.get("glucagon_max", 0.05)),
        )
        return spec, plant, None
    raise ConfigError(f"unknown plant kind: {kind!r}")


def _build_basis(config, spec):
    kind = (config.get("basis") or {}).get("kind", "quadratic")
    if kind == "glucose":
        return glucose_basis()
    if kind == "quadratic":
        return quadratic_tracking_basis(spec.state_dim, spec.ref_dim, spec.action_dims)
    raise ConfigError(f"unknown basis kind: {kind!r}")


def _write_manifest(out_dir, config_path, seed, subcommand):
    digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    manifest = {
        "config_sha256": digest,
        "seed": seed,
        "code_version": __version__,
        "monomial_order": ORDER_VERSION,
        "subcommand": subcommand,
    }
    with open(Path(out_dir) / "manifest.json", "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _learning_phase_summary(result):
    cgm = np.array([s.state[0] for s in result.trajectory])
    insulin = np.array([s.actions[0][0] for s in result.trajectory])
    glucagon = np.array([s.actions[1][0] for s in result.trajectory])
    return summarize_trace(cgm, insulin, glucagon), cgm, insulin, glucagon


def run_learn(config, config_path, seed, out_dir, backend=None, horizon=None):
    noise_learning = (config.get("plant") or {}).get("cgm_noise_learning")
    spec, plant, _ = _build_plant(config, seed, cgm_noise_override=noise_learning)
    basis = _build_basis(config, spec)
    overrides = {}
    if backend:
        overrides["backend"] = backend
    if horizon:
        overrides["horizon"] = int(horizon)
    is_glucose = (config.get("plant") or {}).get("kind") == "glucose"
    cfg, profile = _eval_config(
        dict(config.get("learning") or {}, **overrides),
        defaults={"record_trajectory": is_glucose},
    )
    q0 = init_q0(basis, spec, profile)
    result = run_msqvi(plant, spec, basis, cfg, q0, np.random.default_rng(seed))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_iteration_log(out / "iteration_log.csv", result.reports, spec.n_players)
    write_weights_checkpoint(out / "weights.csv", result.q_functions)
    write_policy_gains(out / "gains.csv", result.policies, basis)
    if is_glucose and result.trajectory:
        summary, cgm, insulin, glucagon = _learning_phase_summary(result)
        with open(out / "learning_trace.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["step", "cgm_mg_dl", "insulin_u_per_5min", "glucagon_mg_per_5min"])
            for k, (c, i, g) in enumerate(zip(cgm, insulin, glucagon)):
                writer.writerow([k, f"{c:.6f}", f"{i:.8f}", f"{g:.8f}"])
        algorithm = f"{'msqvi' if cfg.horizon_at(0) > 1 else 'vi'}-{cfg.backend}"
        write_summary_csv(out / "learning_summary.csv", [(0, "learning", algorithm, summary)])
        scenario_to_csv(
            plant.schedule.day(0), out / "scenario_day0.csv", plant.schedule.exercise_factors
        )
    _write_manifest(out_dir, config_path, seed, "learn")
    print(
        f"learn: {'converged' if result.converged else 'round cap reached'} "
        f"after {result.rounds} rounds -> {out_dir}"
    )
    return EXIT_OK if result.converged else EXIT_NONCONVERGENCE


def _glucose_trial(config, policies, spec, trial_seed, days):
    plant_cfg = config.get("plant") or {}
    patient = GlucosePatient(**(plant_cfg.get("patient") or {}))
    scenario = ScenarioConfig(**(plant_cfg.get("scenario") or {}))
    plant = GlucosePlant(
        patient,
        DailySchedule(scenario, seed=trial_seed),
        noise_seed=(trial_seed + 1) if plant_cfg.get("cgm_noise", True) else None,
        setpoint=float(plant_cfg.get("setpoint", 120.0)),
        suspend_below=plant_cfg.get("suspend_below", 80.0),
    )
    rng = np.random.default_rng(trial_seed + 2)
    state, reference = plant.initial(rng)
    cgm, insulin, glucagon = [], [], []
    for _ in range(int(288 * days)):
        observed = plant.observe(state)
        actions = tuple(
            spec.clamp_action(i, policy(observed, reference)) for i, policy in enumerate(policies)
        )
        cgm.append(observed[0])
        insulin.append(actions[0][0])
        glucagon.append(actions[1][0])
        state = plant.step(state, actions)
    return summarize_trace(np.array(cgm), np.array(insulin), np.array(glucagon))


def _trial_worker(args):
    config, gains_path, trial_index, seed, days = args
    spec, _, _ = _build_plant(config, seed)
    basis = _build_basis(config, spec)
    policies = read_policy_gains(gains_path, basis)
    return trial_index, _glucose_trial(config, policies, spec, seed + 10_000 + trial_index, days)


def run_evaluate(config, config_path, seed, out_dir, workers=1):
    if (config.get("plant") or {}).get("kind") != "glucose":
        raise ConfigError("evaluate replays glucose controllers; set plant.kind: glucose")
    out = Path(out_dir)
    gains_path = out / "gains.csv"
    if not gains_path.exists():
        raise ConfigError(f"no checkpoint at {gains_path}; run learn into the same --out first")
    trials = config.get("trials") or {}
    count = int(trials.get("count", 20))
    days = float(trials.get("days", 2))

    jobs = [(config, str(gains_path), t, seed, days) for t in range(count)]
    if workers and workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_worker, jobs))
    else:
        results = [_trial_worker(job) for job in jobs]
    results.sort(key=lambda pair: pair[0])

    learning_cfg = config.get("learning") or {}
    horizon = int(learning_cfg.get("horizon", 3))
    algorithm = f"{'msqvi' if horizon > 1 else 'vi'}-{learning_cfg.get('backend', 'ls')}"
    rows = [(index, "evaluation", algorithm, summary) for index, summary in results]
    write_summary_csv(out / "summary.csv", rows)
    _write_manifest(out_dir, config_path, seed, "evaluate")
    mean_tir = float(np.mean([summary.pct_target for _, summary in results]))
    print(f"evaluate: {count} trials, mean time-in-target {mean_tir:.1f}% -> {out_dir}")
    return EXIT_OK


def run_oracle_check(config, config_path, seed, out_dir, backend=None, horizon=None):
    check = config.get("oracle_check") or {}
    seeds = check.get("seeds", list(range(10)))
    dims = (int(check.get("state_dim", 2)), tuple(check.get("action_dims", (1, 1))))
    gain_tol = float(check.get("gain_tolerance", 1e-3))
    overrides = {}
    if backend:
        overrides["backend"] = backend
    if horizon:
        overrides["horizon"] = int(horizon)
    cfg, profile = _eval_config(dict(config.get("learning") or {}, **overrides))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    all_pass = True
    for game_seed in seeds:
        lq, plant = generate_lq_game(dims, seed=int(game_seed))
        exact = exact_vi_lq(lq, tol=float(check.get("tol", 1e-12)))
        basis = quadratic_tracking_basis(lq.game.state_dim, lq.game.ref_dim, lq.game.action_dims)
        q0 = init_q0(
            basis,
            lq.game,
            Q0ScaleProfile(base=remark_one_scale(lq), action_multipliers=(1.0,) * lq.game.n_players),
        )
        result = run_msqvi(plant, lq.game, basis, cfg, q0, np.random.default_rng(seed + int(game_seed)))
        gain_error = max(
            float(np.abs(result.policies[i].gain - exact.gains[i]).max())
            for i in range(lq.game.n_players)
        )
        passed = result.converged and gain_error <= gain_tol
        all_pass &= passed
        rows.append([game_seed, result.rounds, result.converged, f"{gain_error:.3e}", passed])
        print(f"oracle-check seed {game_seed}: rounds {result.rounds} gain_err {gain_error:.2e} "
              f"{'PASS' if passed else 'FAIL'}")
    with open(out / "oracle_report.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["game_seed", "rounds", "converged", "max_gain_error", "pass"])
        writer.writerows(rows)
    _write_manifest(out_dir, config_path, seed, "oracle-check")
    return EXIT_OK if all_pass else EXIT_NONCONVERGENCE


def run_experiment(config_path, subcommand, seed=None, out=None, workers=None, backend=None, horizon=None):
    """Entry point shared by the CLI and tests; returns an exit code."""
    try:
        config = load_config(config_path)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    seed = int(config.get("seed", 0)) if seed is None else int(seed)
    out_dir = out or config.get("out") or "runs/latest"
    workers = int(workers or config.get("workers") or 1)
    try:
        if subcommand == "learn":
            return run_learn(config, config_path, seed, out_dir, backend=backend, horizon=horizon)
        if subcommand == "evaluate":
            return run_evaluate(config, config_path, seed, out_dir, workers=workers)
        if subcommand == "oracle-check":
            return run_oracle_check(config, config_path, seed, out_dir, backend=backend, horizon=horizon)
        print(f"unknown subcommand: {subcommand}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ExcitationError as err:
        print(f"excitation failure: {err}", file=sys.stderr)
        return EXIT_POE
    except (TrajectoryDivergedError, ModelBlowupError) as err:
        print(f"plant divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except CurvatureError as err:
        print(f"inadmissible Q iterate: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="nashtrack",
        description="Multi-step Q value iteration for N-player tracking games",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in ("learn", "evaluate", "oracle-check"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="YAML experiment config")
        cmd.add_argument("--seed", type=int, default=None, help="run seed (overrides config)")
        cmd.add_argument("--out", default=None, help="artifact directory (overrides config)")
        cmd.add_argument("--workers", type=int, default=None, help="trial worker pool size")
        cmd.add_argument("--backend", choices=("ls", "lp"), default=None)
        cmd.add_argument("--horizon", type=int, default=None)
    args = parser.parse_args(argv)
    return run_experiment(
        args.config,
        args.subcommand,
        seed=args.seed,
        out=args.out,
        workers=args.workers,
        backend=args.backend,
        horizon=args.horizon,
    )


if __name__ == "__main__":
    sys.exit(main())
