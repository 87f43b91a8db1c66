"""Fixed-step RK4 for the built-in two-dimensional toy fields.

Systems are addressed by integer id with a float parameter vector so a
single compiled kernel serves all of them.
"""

import numpy as np

from .._accel import njit

OSCILLATOR = 0        # (-theta, psi)
DIRAC_CONST = 1       # params: rho, m
DIRAC_BUMP = 2        # params: rho, radius  (M = max(0, 1 - r^2 / radius^2))
DIRAC_PSISQ = 3       # params: rho          (M = psi^2)
QUADRATIC_CONST = 4   # params: rho, m2
QUADRATIC_UNIFORM = 5  # params: rho         (E[x^2] = theta^2 / 3)
QUADRATIC_DIRAC = 6   # params: rho

# terminal codes
RUNNING = -1
CONVERGED = 0
MAX_TIME = 1
DIVERGED = 2
FAILURE = 3


@njit
def toy_rhs(system, x, params):
    psi = x[0]
    theta = x[1]
    out = np.empty(2)
    if system == OSCILLATOR:
        out[0] = -theta
        out[1] = psi
    elif system <= DIRAC_PSISQ:
        rho = params[0]
        if system == DIRAC_CONST:
            m = params[1]
            dm = 0.0
        elif system == DIRAC_BUMP:
            rad2 = params[1] * params[1]
            m = 1.0 - (psi * psi + theta * theta) / rad2
            if m > 0.0:
                dm = -2.0 * psi / rad2
            else:
                m = 0.0
                dm = 0.0
        else:
            m = psi * psi
            dm = 2.0 * psi
        out[0] = -theta - 0.5 * rho * (2.0 * psi * m + psi * psi * dm)
        out[1] = psi
    elif system == QUADRATIC_CONST or system == QUADRATIC_UNIFORM:
        rho = params[0]
        if system == QUADRATIC_CONST:
            m2 = params[1]
        else:
            m2 = theta * theta / 3.0
        out[0] = 1.0 / 3.0 - theta * theta / 3.0 - 4.0 * rho * psi * m2
        out[1] = 2.0 * psi * theta / 3.0
    else:
        rho = params[0]
        out[0] = -theta * theta - (4.0 / 3.0) * rho * psi * theta * theta
        out[1] = 2.0 * psi * theta
    return out


@njit
def rk4_toy(system, params, x0, dt, t_max, target, tol, use_target, div_norm):
    """Integrate to ``t_max``; returns ``(times, states, n_taken, code)``.

    Steps have length ``dt`` except the last, which is shortened so the run
    ends exactly at ``t_max``.
    """
    n_steps = int(np.ceil(t_max / dt - 1e-9))
    times = np.zeros(n_steps + 1)
    states = np.zeros((n_steps + 1, 2))
    states[0, :] = x0
    x = x0.copy()
    code = RUNNING
    if use_target and np.sqrt(np.sum((x - target) ** 2)) <= tol:
        return times[:1], states[:1], 0, CONVERGED
    k = 0
    t = 0.0
    while k < n_steps:
        h = dt
        if k == n_steps - 1:
            h = t_max - t
        k1 = toy_rhs(system, x, params)
        k2 = toy_rhs(system, x + 0.5 * h * k1, params)
        k3 = toy_rhs(system, x + 0.5 * h * k2, params)
        k4 = toy_rhs(system, x + h * k3, params)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        k += 1
        t = dt * k if k < n_steps else t_max
        times[k] = t
        states[k, :] = x
        if not (np.isfinite(x[0]) and np.isfinite(x[1])):
            code = FAILURE
            break
        if np.sqrt(x[0] * x[0] + x[1] * x[1]) > div_norm:
            code = DIVERGED
            break
        if use_target and np.sqrt(np.sum((x - target) ** 2)) <= tol:
            code = CONVERGED
            break
    if code == RUNNING:
        code = MAX_TIME
    return times[:k + 1], states[:k + 1], k, code
