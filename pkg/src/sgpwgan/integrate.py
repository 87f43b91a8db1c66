"""Trajectories: fixed-step RK4, simultaneous gradient descent, phase portraits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import contourpy
import numpy as np

from ._kernels import rk4 as _rk4
from .analytic_systems import ToySystem2D
from .dynamics import MCConfig, SGPProblem, as_mc, vector_field
from .errors import ConfigError
from .export import portrait_svg, write_csv
from .measure import substream

DIVERGENCE_NORM = 1e6
DEFAULT_TOL = 1e-4
REASONS = {_rk4.CONVERGED: "converged", _rk4.MAX_TIME: "max_time",
           _rk4.DIVERGED: "diverged", _rk4.FAILURE: "numerical_failure"}


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    terminal_reason: str
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def header(self):
        names = self.meta.get("names")
        if names is None or len(names) != self.states.shape[1]:
            names = [f"x{i}" for i in range(self.states.shape[1])]
        return ["t", *names]

    def rows(self):
        return [[t, *s] for t, s in zip(self.times.tolist(), self.states.tolist())]

    def to_csv(self, path):
        return write_csv(path, self.header(), self.rows())

    def to_dict(self):
        return {"terminal_reason": self.terminal_reason, "n_steps": int(len(self.times) - 1),
                "t_final": float(self.times[-1]), "final": self.states[-1].tolist(), "meta": self.meta}


def _stop_args(stop):
    if stop is None:
        return None, DEFAULT_TOL
    if isinstance(stop, dict):
        target = stop.get("target")
        return (None if target is None else np.asarray(target, float)), float(stop.get("tol", DEFAULT_TOL))
    target, tol = stop
    return np.asarray(target, float), float(tol)


def _as_callable(f):
    if isinstance(f, ToySystem2D):
        return f.as_vector_field()
    return f


def integrate_ode(field_fn, x0, dt: float, t_max: float, stop=None,
                  div_norm: float = DIVERGENCE_NORM) -> Trajectory:
    """Classical RK4 with step ``dt`` up to ``t_max`` (last step shortened to land on it).

    ``field_fn`` is a :class:`ToySystem2D` (compiled path when it has a
    kernel) or any ``x -> x_dot`` callable.  ``stop`` is ``{target, tol}``
    (or a pair); the run ends ``converged`` once within ``tol`` of the
    target, ``diverged`` past norm ``1e6`` and ``numerical_failure`` on a
    non-finite state.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if not t_max >= dt:
        raise ConfigError("t_max must be >= dt")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    target, tol = _stop_args(stop)
    meta = {"dt": float(dt), "t_max": float(t_max), "tol": tol,
            "target": None if target is None else target.tolist()}
    if isinstance(field_fn, ToySystem2D):
        meta["system"] = field_fn.name
        meta["names"] = ["psi", "theta"]
        if field_fn.kernel is not None and x0.size == 2:
            sid, params = field_fn.kernel
            tgt = np.zeros(2) if target is None else target
            times, states, _, code = _rk4.rk4_toy(int(sid), np.asarray(params, float), x0, float(dt), float(t_max),
                                                  tgt, tol, target is not None, float(div_norm))
            return Trajectory(np.array(times), np.array(states), REASONS[int(code)], meta)
    f = _as_callable(field_fn)
    n_steps = int(np.ceil(t_max / dt - 1e-9))
    times = [0.0]
    states = [x0]
    x = x0
    reason = "max_time"
    if target is not None and np.linalg.norm(x - target) <= tol:
        return Trajectory(np.array(times), np.array(states), "converged", meta)
    t = 0.0
    for k in range(n_steps):
        h = dt if k < n_steps - 1 else t_max - t
        k1 = np.asarray(f(x), float)
        k2 = np.asarray(f(x + 0.5 * h * k1), float)
        k3 = np.asarray(f(x + 0.5 * h * k2), float)
        k4 = np.asarray(f(x + h * k3), float)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = dt * (k + 1) if k < n_steps - 1 else float(t_max)
        times.append(t)
        states.append(x)
        if not np.all(np.isfinite(x)):
            reason = "numerical_failure"
            break
        if np.linalg.norm(x) > div_norm:
            reason = "diverged"
            break
        if target is not None and np.linalg.norm(x - target) <= tol:
            reason = "converged"
            break
    return Trajectory(np.array(times), np.array(states), reason, meta)


def simultaneous_gd(problem_or_field, x0, lr: float, steps: int, mc=None, stop=None,
                    div_norm: float = DIVERGENCE_NORM) -> Trajectory:
    """Explicit Euler ``x_{k+1} = x_k + lr * field(x_k)``.

    For an :class:`SGPProblem` the state is ``(psi, theta)`` stacked and step
    ``k`` uses Monte Carlo seed ``substream(mc.seed, "step", k)``.
    """
    if not lr > 0:
        raise ConfigError("lr must be positive")
    if steps < 0:
        raise ConfigError("steps must be >= 0")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    target, tol = _stop_args(stop)
    meta = {"lr": float(lr), "steps": int(steps)}
    if isinstance(problem_or_field, SGPProblem):
        prob = problem_or_field
        mc = as_mc(mc)
        P = prob.dim_psi
        meta.update({"mc_n": mc.n, "seed": mc.seed, "problem": prob.name})

        def f(x, k):
            a, b = vector_field(prob, x[:P], x[P:], MCConfig(mc.n, substream(mc.seed, "step", k)))
            return np.concatenate([a, b])
    else:
        g = _as_callable(problem_or_field)
        if isinstance(problem_or_field, ToySystem2D):
            meta["system"] = problem_or_field.name
            meta["names"] = ["psi", "theta"]
        f = lambda x, k: np.asarray(g(x), float)  # noqa: E731
    times, states = [0.0], [x]
    reason = "max_time"
    if target is not None and np.linalg.norm(x - target) <= tol:
        return Trajectory(np.array(times), np.array(states), "converged", meta)
    for k in range(steps):
        d = f(x, k)
        x = x + lr * d
        times.append(lr * (k + 1))
        states.append(x)
        if not np.all(np.isfinite(x)):
            reason = "numerical_failure"
            break
        if np.linalg.norm(x) > div_norm:
            reason = "diverged"
            break
        if target is not None and np.linalg.norm(x - target) <= tol:
            reason = "converged"
            break
    return Trajectory(np.array(times), np.array(states), reason, meta)


# ---------------------------------------------------------------------------
# phase portraits


@dataclass
class PhasePortrait:
    box: tuple
    psi: np.ndarray
    theta: np.ndarray
    U: np.ndarray
    V: np.ndarray
    arrows: np.ndarray
    nullclines: dict
    trajectories: list
    equilibria: list

    def to_dict(self):
        return {
            "box": [list(self.box[0]), list(self.box[1])],
            "psi": self.psi.tolist(),
            "theta": self.theta.tolist(),
            "psi_dot": self.U.tolist(),
            "theta_dot": self.V.tolist(),
            "nullclines": {k: [np.asarray(l).tolist() for l in v] for k, v in self.nullclines.items()},
            "equilibria": [list(map(float, e)) for e in self.equilibria],
            "trajectories": [t.to_dict() for t in self.trajectories],
        }

    def to_svg(self, title="phase portrait") -> str:
        return portrait_svg(self, title)


def _split_corners(line, max_turn_deg=30.0):
    # break a polyline where consecutive segments turn sharply
    d = np.diff(line, axis=0)
    length = np.hypot(d[:, 0], d[:, 1])
    keep = length > 0
    line = np.vstack([line[:1], line[1:][keep]])
    d = d[keep]
    if len(d) < 2:
        return [line] if len(line) >= 2 else []
    u = d / np.hypot(d[:, 0], d[:, 1])[:, None]
    cos = np.sum(u[1:] * u[:-1], axis=1)
    cuts = np.flatnonzero(cos < np.cos(np.radians(max_turn_deg))) + 1
    pieces, start = [], 0
    for c in list(cuts) + [len(line) - 1]:
        pieces.append(line[start:c + 1])
        start = c
    return [p for p in pieces if len(p) >= 2]


def zero_level_lines(X, Y, Z):
    """Polylines of ``Z = 0`` by marching squares, split at sharp corners.

    Exact zeros count as the non-negative side, so a component that touches
    zero without changing sign (a double root) shows up only where it meets
    a genuine sign change.
    """
    Z = np.asarray(Z, float)
    if np.all(Z > 0) or np.all(Z < 0) or np.all(Z == 0):
        return []
    gen = contourpy.contour_generator(X, Y, Z, name="serial", line_type="Separate")
    out = []
    for l in gen.lines(0.0):
        if len(l) >= 2:
            out.extend(_split_corners(np.asarray(l, float)))
    return out


def _field2d(field2d):
    if isinstance(field2d, ToySystem2D):
        return field2d.field
    return field2d


def phase_portrait(field2d, box, resolution: int = 21, starts=(), dt: float = 0.01, t_max: float = 20.0,
                   stop=None) -> PhasePortrait:
    """Sample the field on a ``resolution x resolution`` lattice over ``box``.

    ``box = ((psi_lo, psi_hi), (theta_lo, theta_hi))``.  Arrows are unit
    vectors (zero where the field vanishes); nullclines are the sign-change
    contours of each component; one RK4 trajectory is integrated per start.
    """
    if resolution < 8:
        raise ConfigError("resolution must be >= 8 per axis")
    (p0, p1), (t0, t1) = [tuple(map(float, r)) for r in box]
    if not (p1 > p0 and t1 > t0):
        raise ConfigError("box ranges must be increasing")
    fn = _field2d(field2d)
    ps = np.linspace(p0, p1, resolution)
    ts = np.linspace(t0, t1, resolution)
    P, T = np.meshgrid(ps, ts)
    U, V = fn(P, T)
    U = np.broadcast_to(np.asarray(U, float), P.shape).copy()
    V = np.broadcast_to(np.asarray(V, float), P.shape).copy()
    norm = np.hypot(U, V)
    safe = np.where(norm > 1e-12, norm, 1.0)
    arrows = np.stack([np.where(norm > 1e-12, U / safe, 0.0), np.where(norm > 1e-12, V / safe, 0.0)], axis=-1)
    nullclines = {"psi_dot": zero_level_lines(P, T, U), "theta_dot": zero_level_lines(P, T, V)}
    trajs = [integrate_ode(field2d, s, dt, t_max, stop) for s in starts]
    eq = []
    if isinstance(field2d, ToySystem2D):
        eq = [e for e in field2d.equilibria if p0 <= e[0] <= p1 and t0 <= e[1] <= t1]
    return PhasePortrait(((p0, p1), (t0, t1)), ps, ts, U, V, arrows, nullclines, trajs, eq)


def vertical_lines(lines, tol):
    """psi-positions of nullcline polylines that are vertical to within ``tol``."""
    out = []
    for l in lines:
        l = np.asarray(l)
        if np.ptp(l[:, 0]) <= tol and np.ptp(l[:, 1]) > tol:
            out.append(float(np.mean(l[:, 0])))
    return sorted(out)
