"""Drive parameter set in the per-unit system.

All electrical quantities are normalized: reactances and resistances are
dimensionless, currents/fluxes/voltages are expressed relative to their base
values, and time inside the prediction model is scaled by the base angular
frequency ``omega_b`` so that one fundamental period spans ``2*pi`` per-unit
seconds.  The controller sampling interval ``ts`` stays in SI seconds (it sets
the switching-frequency scale in Hz); its per-unit counterpart is
``ts_pu = ts * omega_b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class DriveParams:
    """Machine, inverter and timing constants of the drive.

    Defaults describe a medium-voltage induction machine (3.3 kV, 50 Hz,
    356 A base current) fed by a three-level neutral-point-clamped inverter,
    running at rated speed under rated load.

    Attributes
    ----------
    rs, rr : float
        Stator / rotor resistance (pu).
    xls, xlr : float
        Stator / rotor leakage reactance (pu).
    xm : float
        Magnetizing reactance (pu).
    vdc : float
        Total dc-link voltage (pu); each of the three switch levels applies
        ``-vdc/2, 0, +vdc/2`` phase-to-neutral.
    omega_r : float
        Electrical rotor speed (pu of synchronous speed).  The default is the
        rated-slip speed at which the unit-amplitude current orbit requires
        exactly rated stator voltage; see :func:`rated_slip_speed`.
    ts : float
        Controller sampling interval in seconds.
    omega_b : float
        Base angular frequency in rad/s.
    """

    rs: float = 0.0108
    rr: float = 0.0091
    xls: float = 0.1493
    xlr: float = 0.1104
    xm: float = 2.3489
    vdc: float = 1.930
    omega_r: float = 0.991142888961957
    ts: float = 25e-6
    omega_b: float = 2.0 * math.pi * 50.0

    # -- derived electrical constants -------------------------------------

    @property
    def xs(self) -> float:
        """Total stator reactance."""
        return self.xls + self.xm

    @property
    def xr(self) -> float:
        """Total rotor reactance."""
        return self.xlr + self.xm

    @property
    def det_x(self) -> float:
        """Reactance determinant ``xs*xr - xm**2`` coupling stator and rotor."""
        return self.xs * self.xr - self.xm * self.xm

    @property
    def tau_s(self) -> float:
        """Transient stator time constant (pu time)."""
        return self.xr * self.det_x / (self.rs * self.xr**2 + self.rr * self.xm**2)

    @property
    def tau_r(self) -> float:
        """Rotor time constant (pu time)."""
        return self.xr / self.rr

    @property
    def ts_pu(self) -> float:
        """Sampling interval expressed in per-unit time."""
        return self.ts * self.omega_b

    @property
    def fs(self) -> float:
        """Controller sampling frequency in Hz."""
        return 1.0 / self.ts

    def with_speed(self, omega_r: float) -> "DriveParams":
        """Copy of the parameter set at a different rotor speed."""
        return replace(self, omega_r=omega_r)


def rated_slip_speed(params: DriveParams, v_target: float = 1.0) -> float:
    """Rotor speed at which the rated-current orbit needs rated voltage.

    With the stator current on the unit-amplitude synchronous orbit and the
    rotor flux in sinusoidal steady state, ``psi_r = xm*i/(1 + j*y)`` with
    ``y = s*tau_r`` the normalized slip, the required stator voltage phasor
    is ``v = rs*i + j*psi_s``.  Its magnitude grows monotonically as the slip
    shrinks (lower slip means higher flux), so there is a unique slip where
    ``|v|`` equals the rated (base) voltage ``v_target``.  Running at that
    slip leaves the inverter its full modulation margin for ripple control;
    lower speeds would demand more voltage than the machine is rated for.

    Raises
    ------
    ValueError
        If no slip in ``(0, tau_r*0.1]`` attains ``v_target``.
    """
    from scipy.optimize import brentq

    def v_required(y: float) -> float:
        i = 1.0 + 0.0j
        psi_r = params.xm * i / (1.0 + 1j * y)
        psi_s = (params.det_x / params.xr) * i + (params.xm / params.xr) * psi_r
        return abs(params.rs * i + 1j * psi_s)

    y_hi = 0.1 * params.tau_r
    if not (v_required(y_hi) < v_target < v_required(1e-9)):
        raise ValueError("no slip reaches the target voltage at unit current")
    y = brentq(lambda y: v_required(y) - v_target, 1e-9, y_hi, xtol=1e-15, rtol=8.9e-16)
    return 1.0 - y / params.tau_r
