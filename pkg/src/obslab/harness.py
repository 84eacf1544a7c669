"""Experiment orchestration: config validation, dispatch, persistence.

Every run writes, into its output directory, a JSON report, CSV trajectories
where the experiment produces them, and a manifest with the config hash and
wall time.  All emitted bytes except the manifest timestamp are determined
by (config, seed).
"""
from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .bsde import bsde_residual, coarsen, sample_paths, star_integral_check
from .families import make_problem
from .grid import Field, ht_distance
from .kernels import BACKEND
from .ldp import TargetEvent, condition_ii_test, mc_ldp_compare, minimize_rate
from .problem import validate
from .skeleton import (Control, complementarity_residual, constant_control,
                       solve_penalized, solve_projected, solve_skeleton,
                       zero_control)
from .spde import condition_i_distance

EXPERIMENT_KINDS = ("penalization_study", "skeleton_solve", "condition_i",
                    "condition_ii", "bsde_check", "star_check",
                    "rate_minimize", "mc_compare")


class ConfigError(ValueError):
    """The experiment configuration is malformed."""


def load_schema() -> dict:
    with resources.files("obslab").joinpath("config_schema.json").open() as fh:
        return json.load(fh)


def validate_config(config: dict) -> None:
    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {path}: {exc.message}") from exc
    if config["experiment"] not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {config['experiment']!r}")


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _problem_from(config: dict):
    pc = config["problem"]
    problem = make_problem(pc["family"], **pc.get("params", {}))
    report = validate(problem)
    if not report.passed:
        raise ConfigError(f"problem fails validation:\n{report.summary()}")
    return problem


def _control_from(config: dict, problem, n_steps: int) -> Control:
    spec = config.get("control", {"kind": "zero"})
    J = problem.coefficients.n_modes
    if spec["kind"] == "zero":
        return zero_control(n_steps, J, problem.horizon)
    if spec["kind"] == "constant":
        return constant_control(n_steps, J, problem.horizon,
                                spec.get("value", 1.0), spec.get("mode", 0))
    raise ConfigError(f"unknown control kind {spec['kind']!r}")


def _event_from(config: dict, problem, n_steps: int) -> TargetEvent:
    spec = config["event"]
    if spec["kind"] == "terminal_ball":
        shift = spec.get("center_control", 0.0)
        k = constant_control(n_steps, problem.coefficients.n_modes,
                             problem.horizon, shift)
        sol = solve_penalized(problem, k, config["solver"].get("penalty_n", 1e4))
        return TargetEvent("terminal_ball",
                           center=Field(sol.traj.values[0], problem.grid),
                           radius=spec["radius"])
    if spec["kind"] == "sup_exceed":
        return TargetEvent("sup_exceed", level=spec["level"],
                           probe_x=spec.get("probe_x", 0.0))
    raise ConfigError(f"unknown event kind {spec['kind']!r}")


# --------------------------------------------------------------------------
# Experiment implementations.  Each returns (report dict, passed flag,
# {name: Trajectory} to be written as CSV).
# --------------------------------------------------------------------------

def _run_penalization_study(config, problem, workers):
    n_steps = config["mesh"]["n_steps"]
    schedule = config["params"].get("n_schedule", [1e3, 1e4, 1e5, 1e6])
    control = _control_from(config, problem, n_steps)

    def solve(n):
        return solve_penalized(problem, control, n)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        sols = list(pool.map(solve, schedule))
    norms = np.array([s.diagnostics.penalty_l2 for s in sols])
    gaps = [float(ht_distance(a.traj, b.traj)) for a, b in zip(sols, sols[1:])]
    exponent = float(-np.polyfit(np.log(schedule), np.log(norms), 1)[0])
    scaled = np.array(schedule) * norms**2
    report = {
        "n_schedule": [float(n) for n in schedule],
        "gap_l2": [float(v) for v in norms],
        "cauchy_gap": gaps,
        "decay_exponent": exponent,
        "n_gap_sq_ratio": float(scaled.max() / scaled.min()),
        "complementarity": [float(complementarity_residual(s)) for s in sols],
        "min_gap": [float(s.diagnostics.min_gap) for s in sols],
    }
    passed = all(b <= a for a, b in zip(gaps, gaps[1:])) \
        and 0.4 <= exponent <= 0.6
    return report, passed, {"final_trajectory": sols[-1].traj}


def _run_skeleton_solve(config, problem, workers):
    n_steps = config["mesh"]["n_steps"]
    solver = config["solver"]
    control = _control_from(config, problem, n_steps)
    sk = solve_skeleton(problem, control, tol=solver.get("tol", 1e-3),
                        n0=solver.get("n0", 1000),
                        n_max=solver.get("n_max", 1e7))
    proj = solve_projected(problem, control)
    dist = float(ht_distance(sk.traj, proj.traj))
    report = {
        "n_final": float(sk.n_final),
        "converged": bool(sk.converged),
        "cauchy_gap": float(sk.cauchy_gap),
        "cauchy_history": [[float(n), float(g)] for n, g in sk.cauchy_history],
        "vs_projection": dist,
        "complementarity": float(complementarity_residual(sk)),
    }
    passed = sk.converged and dist <= config["params"].get("agree_tol", 2e-3)
    return report, passed, {"skeleton_trajectory": sk.traj,
                            "projection_trajectory": proj.traj}


def _run_condition_i(config, problem, workers):
    p = config["params"]
    n_steps = config["mesh"]["n_steps"]
    control = _control_from(config, problem, n_steps)
    report = condition_i_distance(
        problem, p.get("epsilon_list", [0.1, 0.05, 0.025, 0.0125]),
        [control], config["solver"].get("penalty_n", 1e4), n_steps,
        p.get("n_samples", 200), config["seed"],
        deltas=p.get("deltas", [0.1]))
    slope = report["loglog_slope"]
    passed = report["monotone"] and 0.35 <= slope <= 0.65
    return report, passed, {}


def _run_condition_ii(config, problem, workers):
    p = config["params"]
    n_steps = config["mesh"]["n_steps"]
    control = _control_from(config, problem, n_steps)
    report = condition_ii_test(problem, control,
                               p.get("amplitude", 1.0),
                               p.get("frequencies", [1, 2, 4, 8, 16]),
                               ball_radius=p.get("ball_radius"),
                               penalty_n=config["solver"].get("penalty_n", 1e4))
    passed = report["monotone_decreasing"] and report["final_over_initial"] <= 0.25
    return report, passed, {}


def _run_bsde_check(config, problem, workers):
    # Joint refinement with h proportional to dt: the spatial read-off
    # errors (interpolation ~h^2, centered gradient ~h^2) then decay faster
    # than the dt^(1/2) martingale remainder that sets the observed order.
    # All levels reuse one path ensemble, coarsened in time, so level-to-
    # level residual ratios share the same Brownian increments.
    p = config["params"]
    levels = p.get("levels", [[50, 51], [100, 101], [200, 201], [400, 401]])
    n_paths = p.get("n_paths", 3000)
    family = config["problem"]["family"]
    params = dict(config["problem"].get("params", {}))
    finest = max(lv[0] for lv in levels)
    fine_ens = sample_paths(n_paths, finest, problem.horizon, problem.grid,
                            config["seed"])
    rows = []
    for n_steps, n_nodes in levels:
        prob = make_problem(family, **{**params, "n_nodes": n_nodes})
        control = _control_from(config, prob, n_steps)
        sol = solve_penalized(prob, control,
                              config["solver"].get("penalty_n", 1e4),
                              n_steps=n_steps)
        ens = coarsen(fine_ens, finest // n_steps)
        rows.append({"n_steps": int(n_steps), "n_nodes": int(n_nodes),
                     "residual": float(bsde_residual(sol, ens))})
    res = np.array([r["residual"] for r in rows])
    dts = problem.horizon / np.array([lv[0] for lv in levels], dtype=float)
    order = float(np.polyfit(np.log(dts), np.log(res), 1)[0])
    report = {"levels": rows, "observed_order": order}
    return report, order >= 0.5, {}


def _run_star_check(config, problem, workers):
    p = config["params"]
    n_steps = config["mesh"]["n_steps"]
    n_paths = p.get("n_paths", 10000)
    scale = p.get("j_scale", 1.0)

    def J(t, x):
        return scale * np.exp(-np.asarray(x, dtype=float) ** 2)

    def dJ(t, x):
        x = np.asarray(x, dtype=float)
        return scale * (-2.0 * x) * np.exp(-x**2)

    ens = sample_paths(n_paths, n_steps, problem.horizon, problem.grid,
                       config["seed"])
    report = star_integral_check(J, dJ, ens)
    passed = abs(report["mean_gap"]) <= 3.0 * report["std_error"]
    return report, passed, {}


def _run_rate_minimize(config, problem, workers):
    p = config["params"]
    n_steps = config["mesh"]["n_steps"]
    event = _event_from(config, problem, n_steps)
    opt = dict(p.get("opt_config", {}))
    opt.setdefault("n_steps", n_steps)
    opt.setdefault("penalty_n", config["solver"].get("penalty_n", 1e4))
    result = minimize_rate(problem, event, init=None, opt_config=opt)
    report = {
        "rate": float(result.rate) if np.isfinite(result.rate) else "inf",
        "feasible": bool(result.feasible),
        "constraint_residual": float(result.constraint_residual),
        "lambda_history": [[float(a), float(b), float(c)]
                           for a, b, c in result.lambda_history],
        "k_norm_sq": float(result.minimizer.k_norm_sq()),
    }
    return report, result.feasible or p.get("expect_infeasible", False), {}


def _run_mc_compare(config, problem, workers):
    p = config["params"]
    n_steps = config["mesh"]["n_steps"]
    event = _event_from(config, problem, n_steps)
    opt = dict(p.get("opt_config", {}))
    opt.setdefault("n_steps", n_steps)
    opt.setdefault("penalty_n", config["solver"].get("penalty_n", 1e4))
    rate = minimize_rate(problem, event, opt_config=opt)
    report = mc_ldp_compare(
        problem, event, p.get("epsilon_list", [0.4, 0.2, 0.1, 0.05]),
        p.get("n_samples", 10000), config["seed"],
        use_importance=p.get("use_importance", True), rate_result=rate,
        penalty_n=opt["penalty_n"], n_steps=n_steps)
    report["rate"] = float(rate.rate) if np.isfinite(rate.rate) else "inf"
    passed = report.get("relative_error", np.inf) <= p.get("rel_tol", 0.25)
    return report, bool(passed), {}


_RUNNERS = {
    "penalization_study": _run_penalization_study,
    "skeleton_solve": _run_skeleton_solve,
    "condition_i": _run_condition_i,
    "condition_ii": _run_condition_ii,
    "bsde_check": _run_bsde_check,
    "star_check": _run_star_check,
    "rate_minimize": _run_rate_minimize,
    "mc_compare": _run_mc_compare,
}


def run(config: dict, out_dir, workers: int = 1) -> dict:
    """Validate, dispatch, and persist one experiment.

    Returns the report (with a "passed" flag); writes report.json,
    manifest.json, and any trajectory CSVs into `out_dir`.
    """
    validate_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = _problem_from(config)
    t0 = time.monotonic()
    report, passed, trajectories = _RUNNERS[config["experiment"]](
        config, problem, workers)
    wall = time.monotonic() - t0
    report = {"experiment": config["experiment"], "passed": bool(passed),
              **report}
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, traj in trajectories.items():
        traj.to_csv(out / f"{name}.csv")
    manifest = {
        "config_hash": config_hash(config),
        "package_version": __version__,
        "kernel_backend": BACKEND,
        "wall_time_s": wall,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _lookup(report: dict, path: str):
    node = report
    for part in path.split("/"):
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node[part]
    return node


def compare_baseline(report: dict, baseline: dict) -> dict:
    """Check report fields against baseline values within stored tolerances."""
    if report.get("experiment") != baseline.get("experiment"):
        raise ValueError("experiment kinds differ between report and baseline")
    mismatches = []
    for check in baseline["checks"]:
        try:
            got = _lookup(report, check["path"])
        except (KeyError, IndexError, TypeError):
            mismatches.append({"path": check["path"], "error": "missing"})
            continue
        want = check["value"]
        tol = check.get("tol", 0.0)
        if isinstance(want, bool) or isinstance(got, bool):
            ok = got == want
        else:
            ok = abs(float(got) - float(want)) <= tol
        if not ok:
            mismatches.append({"path": check["path"], "expected": want,
                               "got": got, "tol": tol})
    return {"passed": not mismatches, "mismatches": mismatches}
