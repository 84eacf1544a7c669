"""Deterministic controlled obstacle problem: penalization scheme and oracle.

`solve_penalized` implements the stiff-penalty march for a fixed penalty
parameter n; `solve_projected` replaces the penalty with a nodewise
projection onto the barrier and serves as the independent cross-check;
`solve_skeleton` drives the penalty parameter through a doubling schedule
until consecutive solutions are Cauchy in the path metric.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid import Trajectory, h_norm_array, ht_distance, v_norm_sq_array
from .problem import ProblemSpec
from .stepping import DEFAULT_THETA, MarchResult, march

N0_DEFAULT = 1_000
N_MAX_DEFAULT = 10_000_000


@dataclass(frozen=True)
class Control:
    """A discretized control path: one row of mode values per time interval.

    `values[i, j]` is the j-th mode's value on the forward interval
    [t_i, t_{i+1}).  The squared Cameron-Martin norm is dt * sum values^2.
    """

    times: np.ndarray   # n_steps + 1 uniform nodes on [0, T]
    values: np.ndarray  # (n_steps, J)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("times must be a 1-D array with >= 2 entries")
        dts = np.diff(t)
        if not np.allclose(dts, dts[0], rtol=1e-12, atol=1e-14) or dts[0] <= 0:
            raise ValueError("control times must be uniform and increasing")
        if v.ndim != 2 or v.shape[0] != len(t) - 1:
            raise ValueError(f"control values shape {v.shape} inconsistent with mesh")
        if not np.all(np.isfinite(v)):
            raise ValueError("control contains non-finite values")
        t = t.copy(); t.flags.writeable = False
        v = v.copy(); v.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def n_modes(self) -> int:
        return self.values.shape[1]

    def k_norm_sq(self) -> float:
        return float(self.dt * np.sum(self.values**2))

    def in_ball(self, radius: float) -> bool:
        """Membership in the radius-`radius` control ball S_N."""
        return self.k_norm_sq() <= radius

    def with_values(self, values: np.ndarray) -> "Control":
        return Control(self.times, values)


def zero_control(n_steps: int, n_modes: int, horizon: float) -> Control:
    return Control(np.linspace(0.0, horizon, n_steps + 1),
                   np.zeros((n_steps, n_modes)))


def constant_control(n_steps: int, n_modes: int, horizon: float,
                     value: float, mode: int = 0) -> Control:
    vals = np.zeros((n_steps, n_modes))
    vals[:, mode] = value
    return Control(np.linspace(0.0, horizon, n_steps + 1), vals)


@dataclass(frozen=True)
class Diagnostics:
    energy: float        # sup_t |u|_H^2 + dt * sum_t |u|_V^2
    penalty_l2: float    # L2(dt, dx) norm of the barrier gap (u - L)^-
    min_gap: float       # min over (t, x) of u - L


@dataclass(frozen=True)
class PenalizedSolution:
    traj: Trajectory
    penalty_density: Trajectory
    n: float
    control: Control
    diagnostics: Diagnostics
    problem: ProblemSpec


@dataclass(frozen=True)
class SkeletonSolution:
    traj: Trajectory
    measure_density: Trajectory
    n_final: float
    cauchy_gap: float
    control: Control
    problem: ProblemSpec
    converged: bool = True
    cauchy_history: tuple = ()


def _check_control(problem: ProblemSpec, control: Optional[Control],
                   n_steps: Optional[int]) -> Control:
    if control is None:
        if n_steps is None:
            raise ValueError("give either a control or an explicit n_steps")
        return zero_control(n_steps, problem.coefficients.n_modes, problem.horizon)
    if n_steps is not None and control.n_steps != n_steps:
        raise ValueError(f"control has {control.n_steps} steps, expected {n_steps}")
    if abs(control.times[-1] - problem.horizon) > 1e-12 * max(1.0, problem.horizon):
        raise ValueError("control mesh does not span the problem horizon")
    if control.n_modes != problem.coefficients.n_modes:
        raise ValueError("control mode count does not match the problem")
    return control


def _energy(res: MarchResult, h: float, dt: float) -> float:
    sup = float(np.max(h_norm_array(res.traj, h) ** 2))
    integ = float(dt * np.sum(v_norm_sq_array(res.traj, h)))
    return sup + integ


def solve_penalized(problem: ProblemSpec, control: Optional[Control],
                    n: float, n_steps: Optional[int] = None,
                    theta: float = DEFAULT_THETA) -> PenalizedSolution:
    """Fixed-penalty march; the workhorse behind the skeleton limit."""
    control = _check_control(problem, control, n_steps)
    res = march(problem, control.n_steps, penalty_n=n,
                control_values=control.values, theta=theta)
    traj = Trajectory(control.times, res.traj, problem.grid)
    dens = Trajectory(control.times, res.density, problem.grid)
    diag = Diagnostics(energy=_energy(res, problem.grid.h, control.dt),
                       penalty_l2=float(np.sqrt(res.gap_l2_sq)),
                       min_gap=float(res.min_gap))
    return PenalizedSolution(traj, dens, n, control, diag, problem)


def solve_projected(problem: ProblemSpec, control: Optional[Control] = None,
                    n_steps: Optional[int] = None,
                    theta: float = DEFAULT_THETA) -> SkeletonSolution:
    """Projection-scheme march: the independent oracle for the same limit."""
    control = _check_control(problem, control, n_steps)
    res = march(problem, control.n_steps, project=True,
                control_values=control.values, theta=theta)
    traj = Trajectory(control.times, res.traj, problem.grid)
    dens = Trajectory(control.times, res.density, problem.grid)
    return SkeletonSolution(traj, dens, n_final=np.inf, cauchy_gap=0.0,
                            control=control, problem=problem)


def solve_skeleton(problem: ProblemSpec, control: Optional[Control] = None,
                   n_steps: Optional[int] = None, tol: float = 1e-3,
                   n0: float = N0_DEFAULT, n_max: float = N_MAX_DEFAULT,
                   theta: float = DEFAULT_THETA) -> SkeletonSolution:
    """Penalty-parameter doubling until consecutive solutions are Cauchy.

    Returns the last penalized solution; a failure to meet `tol` before
    `n_max` is flagged on the result and warned, not raised.
    """
    control = _check_control(problem, control, n_steps)
    prev = solve_penalized(problem, control, n0, theta=theta)
    n = n0
    history = []
    converged = False
    while n * 2 <= n_max:
        n *= 2
        cur = solve_penalized(problem, control, n, theta=theta)
        gap = ht_distance(prev.traj, cur.traj)
        history.append((n, gap))
        prev = cur
        if gap < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"penalty schedule hit n_max={n_max:g} with Cauchy gap "
                      f"{history[-1][1]:.3g} > tol={tol:g}", RuntimeWarning)
    return SkeletonSolution(prev.traj, prev.penalty_density, n_final=n,
                            cauchy_gap=history[-1][1], control=control,
                            problem=problem, converged=converged,
                            cauchy_history=tuple(history))


def complementarity_residual(sol) -> float:
    """Positive-part pairing of the solution-barrier gap with the measure.

    Integrates (u - L)^+ against the penalty (or projection-correction)
    density over space-time.  The negative-part pairing vanishes nodewise by
    construction of the density and is asserted, not returned.
    """
    problem: ProblemSpec = sol.problem
    traj: Trajectory = sol.traj
    dens = sol.penalty_density if isinstance(sol, PenalizedSolution) else sol.measure_density
    total = 0.0
    dt, h = traj.dt, problem.grid.h
    for i, t in enumerate(traj.times[:-1]):
        Lv = problem.obstacle_values(float(t))
        gap = traj.values[i] - Lv
        assert float(np.max(np.maximum(gap, 0.0)
                            * np.maximum(-gap, 0.0))) == 0.0
        total += dt * h * float(np.sum(np.maximum(gap, 0.0) * dens.values[i]))
    return total


def penalty_l2_estimate(problem: ProblemSpec, controls: Sequence[Control],
                        n: float, n_steps: Optional[int] = None) -> float:
    """Max over the control family of n times the squared barrier-gap norm."""
    worst = 0.0
    for control in controls:
        sol = solve_penalized(problem, control, n, n_steps=n_steps)
        worst = max(worst, n * sol.diagnostics.penalty_l2**2)
    return worst
