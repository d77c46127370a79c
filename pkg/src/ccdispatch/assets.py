"""Single-step physical models of prosumer assets.

These are used to synthesize renewable forecasts and to derive single-step
operating ranges for flexible loads; the dispatch problem itself only sees
the resulting bounds.
"""

from __future__ import annotations

import numpy as np

PV_CAP_KW = 50.0
WIND_RANGE_KW = (5.0, 50.0)


def _check_nonnegative(**values):
    for name, value in values.items():
        if np.any(np.asarray(value) < 0):
            raise ValueError(f"{name} must be nonnegative, got {value}")


def pv_power(radiation, area, efficiency, cap=PV_CAP_KW):
    """PV output in kW from irradiance (W/m^2), panel area (m^2) and efficiency.

    ``cap=None`` disables the upper clamp.
    """
    _check_nonnegative(radiation=radiation, area=area, efficiency=efficiency)
    if np.any(np.asarray(efficiency) > 1):
        raise ValueError(f"efficiency must be <= 1, got {efficiency}")
    power = np.asarray(radiation, dtype=float) * area * efficiency / 1000.0
    if cap is not None:
        power = np.minimum(power, cap)
    return power[()] if power.ndim == 0 else power


def wind_power(air_density, swept_area, power_coeff, wind_speed, limits=None):
    """Wind turbine output in kW from the cubic law 1/2 rho A C V^3.

    Parameters
    ----------
    air_density : kg/m^3
    swept_area : m^2
    power_coeff : dimensionless
    wind_speed : m/s
    limits : (low, high) kW clamp, or None for the raw cubic law.
    """
    _check_nonnegative(air_density=air_density, swept_area=swept_area,
                       power_coeff=power_coeff, wind_speed=wind_speed)
    speed = np.asarray(wind_speed, dtype=float)
    power = 0.5 * air_density * swept_area * power_coeff * speed ** 3 / 1000.0
    if limits is not None:
        power = np.clip(power, limits[0], limits[1])
    return power[()] if power.ndim == 0 else power


def hvac_indoor_temp_step(t_prev, t_out, p_hvac, inertia, cop, conductivity):
    """Indoor temperature after one step of HVAC power ``p_hvac`` (kW)."""
    if not 0.0 <= inertia <= 1.0:
        raise ValueError(f"inertia must lie in [0, 1], got {inertia}")
    if conductivity <= 0:
        raise ValueError(f"conductivity must be positive, got {conductivity}")
    return inertia * t_prev + (1.0 - inertia) * (t_out - cop / conductivity * p_hvac)


def hvac_power_range(t_prev, t_out, t_min, t_max, p_max, inertia, cop, conductivity):
    """Single-step HVAC power interval keeping the indoor temperature in [t_min, t_max].

    Intersects the comfort-band preimage of the temperature step with
    ``[0, p_max]``.  Returns ``(low, high)``; raises if the interval is empty.
    """
    if inertia >= 1.0:
        if not t_min <= t_prev <= t_max:
            raise ValueError("comfort band unreachable with full thermal inertia")
        return 0.0, float(p_max)
    if conductivity <= 0:
        raise ValueError(f"conductivity must be positive, got {conductivity}")
    gain = cop / conductivity
    # temperature decreases in p: T(p) <= t_max  <=>  p >= ...
    p_low = (t_out - (t_max - inertia * t_prev) / (1.0 - inertia)) / gain
    p_high = (t_out - (t_min - inertia * t_prev) / (1.0 - inertia)) / gain
    low, high = max(0.0, p_low), min(float(p_max), p_high)
    if low > high:
        raise ValueError(f"no HVAC power keeps the temperature in [{t_min}, {t_max}]")
    return low, high


def ess_soc_step(soc, p_charge, p_discharge, eta_c, eta_d, dt, capacity):
    """State of charge after one step of charging/discharging."""
    if capacity <= 0:
        raise ValueError(f"capacity must be positive, got {capacity}")
    if not (0 < eta_c <= 1 and 0 < eta_d <= 1):
        raise ValueError("efficiencies must lie in (0, 1]")
    _check_nonnegative(p_charge=p_charge, p_discharge=p_discharge)
    return soc + (p_charge * eta_c - p_discharge / eta_d) * dt / capacity


def ess_power_range(soc, soc_min, soc_max, p_max, eta_c, eta_d, dt, capacity):
    """Net storage power interval (discharge positive) for one step.

    The state-of-charge limits bound how much can be charged or discharged
    within ``dt``; the rating ``p_max`` bounds both directions.
    """
    charge = min(p_max, (soc_max - soc) * capacity / (eta_c * dt))
    discharge = min(p_max, (soc - soc_min) * capacity * eta_d / dt)
    return -max(charge, 0.0), max(discharge, 0.0)


def pev_energy_feasible(p_pev, p_min, p_max, e_req) -> bool:
    """Whether a charging profile respects its power range and meets ``e_req``."""
    p_pev = np.asarray(p_pev, dtype=float)
    if np.any(p_pev < p_min) or np.any(p_pev > p_max):
        return False
    return bool(p_pev.sum() >= e_req)
