"""Physical model of the inverter-fed induction machine.

State vector (4, per-unit): stator current and rotor flux in the stationary
orthogonal frame, ``x_ph = [is_a, is_b, psi_a, psi_b]`` (``_a``/``_b`` denote
the two orthogonal axes).  Input: the three inverter switch positions
``u = [u_a, u_b, u_c]`` with ``u_s in {-1, 0, 1}``, each applying
``u_s * vdc/2`` phase-to-neutral.

The continuous dynamics ``dx/dt = D x + E u`` (time in per-unit seconds) are
discretized exactly over one sampling interval; the controller and the
simulated plant share the resulting ``(A, B)`` pair, so model mismatch is
zero by construction and closed-loop behavior isolates the controller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import DriveParams

# Orthogonal-frame transform of a balanced three-phase quantity and its
# right pseudoinverse (columns of CLARKE_PINV are the per-phase directions).
CLARKE = np.array(
    [
        [2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0],
        [0.0, 1.0 / np.sqrt(3.0), -1.0 / np.sqrt(3.0)],
    ]
)
CLARKE_PINV = np.array(
    [
        [1.0, 0.0],
        [-0.5, np.sqrt(3.0) / 2.0],
        [-0.5, -np.sqrt(3.0) / 2.0],
    ]
)


def clarke(abc: np.ndarray) -> np.ndarray:
    """Project three-phase values onto the two-axis stationary frame.

    Accepts shape (3,) or (3, n); returns shape (2,) or (2, n).
    """
    return CLARKE @ np.asarray(abc, dtype=float)


def inverse_clarke(ab: np.ndarray) -> np.ndarray:
    """Map two-axis values back to three balanced phase values."""
    return CLARKE_PINV @ np.asarray(ab, dtype=float)


def switch_voltage(u_sw: np.ndarray, vdc: float) -> np.ndarray:
    """Two-axis stator voltage applied by switch positions ``u_sw``."""
    return 0.5 * vdc * clarke(u_sw)


def continuous_matrices(params: DriveParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous-time model ``dx/dt = Dm x + E u``, output ``i_s = F x``.

    Returns
    -------
    dm : (4, 4) ndarray
        Machine dynamics.  Stator rows mix the current decay ``-1/tau_s``
        with the rotor-flux back-emf; rotor rows mix the magnetizing drive
        ``xm/tau_r`` with flux decay and the speed cross-coupling
        ``omega_r``.
    e : (4, 3) ndarray
        Input matrix mapping switch positions (includes the three-phase
        projection and the half dc-link scaling).
    f : (2, 4) ndarray
        Output selector for the stator current.
    """
    p = params
    w = p.omega_r
    k = p.xm / p.det_x
    dm = np.array(
        [
            [-1.0 / p.tau_s, 0.0, k / p.tau_r, w * k],
            [0.0, -1.0 / p.tau_s, -w * k, k / p.tau_r],
            [p.xm / p.tau_r, 0.0, -1.0 / p.tau_r, -w],
            [0.0, p.xm / p.tau_r, w, -1.0 / p.tau_r],
        ]
    )
    e = (p.xr / p.det_x) * 0.5 * p.vdc * np.vstack([CLARKE, np.zeros((2, 3))])
    f = np.hstack([np.eye(2), np.zeros((2, 2))])
    return dm, e, f


def expm_taylor(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a Taylor series.

    The series is evaluated until the next term's max-norm falls below
    ``tol`` relative to the accumulated sum; squaring undoes the initial
    power-of-two scaling.  Exact for the zero matrix (returns identity).
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    norm = np.max(np.abs(m))
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
        m = m / (2.0**squarings)
    out = np.eye(n)
    term = np.eye(n)
    for k in range(1, 60):
        term = term @ m / k
        out = out + term
        if np.max(np.abs(term)) <= tol * max(1.0, np.max(np.abs(out))):
            break
    for _ in range(squarings):
        out = out @ out
    return out


def discretize(dm: np.ndarray, e: np.ndarray, dt: float, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization of ``dx/dt = Dm x + E u``.

    Uses the block-matrix exponential
    ``expm([[Dm, E], [0, 0]] * dt) = [[A, B], [0, I]]`` which stays valid
    when ``Dm`` is singular (for ``Dm = 0`` it reduces to ``A = I``,
    ``B = dt * E``).
    """
    dm = np.asarray(dm, dtype=float)
    e = np.asarray(e, dtype=float)
    n, m = e.shape
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = dm * dt
    blk[:n, n:] = e * dt
    phi = expm_taylor(blk, tol=tol)
    return phi[:n, :n].copy(), phi[:n, n:].copy()


@dataclass(frozen=True)
class PlantModel:
    """Discrete-time physical model over one sampling interval."""

    a: np.ndarray  # (4, 4)
    b: np.ndarray  # (4, 3)
    f: np.ndarray  # (2, 4) stator-current selector
    params: DriveParams

    def step(self, x_ph: np.ndarray, u_sw: np.ndarray) -> np.ndarray:
        """Advance the physical state one sampling interval."""
        return self.a @ x_ph + self.b @ u_sw


def build_plant(params: DriveParams) -> PlantModel:
    """Discretize the machine model at the configured sampling interval."""
    dm, e, f = continuous_matrices(params)
    a, b = discretize(dm, e, params.ts_pu)
    return PlantModel(a=a, b=b, f=f, params=params)


def torque(x_ph: np.ndarray, params: DriveParams) -> float | np.ndarray:
    """Electromagnetic torque ``(xm/xr) * (psi_r x i_s)`` (pu).

    Accepts a single state (4,) or a trajectory (4, n).
    """
    x = np.asarray(x_ph, dtype=float)
    cross = x[2] * x[1] - x[3] * x[0]
    return (params.xm / params.xr) * cross


def steady_state(params: DriveParams, torque_ref: float, phase: float = 0.0) -> np.ndarray:
    """Physical state on the synchronous orbit for a torque command.

    The torque command sets the current amplitude: the reference current
    rotates with unit per-unit angular speed and amplitude ``torque_ref``,
    and with the rotor flux in sinusoidal steady state the flux phasor is
    ``psi = xm * i / (1 + j*y)`` with ``y = slip * tau_r``.  The average
    torque produced on this orbit is ``(xm**2/xr) * y/(1+y**2) *
    torque_ref**2``, slightly below the command at the rated operating
    point (the per-unit torque base exceeds rated torque by roughly the
    rated power factor).  Used to start simulations on the limit cycle
    instead of waiting out the (slow) rotor time constant.

    ``phase`` is the per-unit time of the evaluation instant; at
    ``phase = 0`` the reference current points along ``[sin 0, -cos 0] =
    [0, -1]``.
    """
    y = (1.0 - params.omega_r) * params.tau_r
    i_c = torque_ref * (np.sin(phase) - 1j * np.cos(phase))
    psi_c = params.xm * i_c / (1.0 + 1j * y)
    return np.array([i_c.real, i_c.imag, psi_c.real, psi_c.imag])
