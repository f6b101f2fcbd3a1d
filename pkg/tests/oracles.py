"""Independent dense-time oracles for the safety envelope.

These deliberately avoid the closed-form domain algebra: vehicle motion is
evaluated sample-by-sample on a 1 ms grid from the raw braking kinematics,
so they can arbitrate the quadratic-root implementations.
"""

import numpy as np

DT = 1e-3


def braked_positions(v0, accel_min, t):
    """Positions along a hard-brake trajectory at times t (array), from 0."""
    t = np.asarray(t)
    ts = v0 / -accel_min
    tt = np.minimum(t, ts)
    return v0 * tt + 0.5 * accel_min * tt * tt


def dense_min_gap(inp, accel, horizon_pad=1.0):
    """Minimum bumper gap on a 1 ms grid, t in [t1, both stopped].

    The follower runs accel over one cycle then brakes hard from t1; the
    predecessor brakes hard from tK = t1 - staleness.
    """
    d = inp.delta
    v1 = max(0.0, min(inp.fv_speed + accel * d, inp.fv.speed_max))
    x1 = inp.fv_pos + inp.fv_speed * d + 0.5 * accel * d * d
    if inp.fv_speed + accel * d < 0.0:  # exact zero-crossing inside the cycle
        t_stop = inp.fv_speed / -accel
        x1 = inp.fv_pos + inp.fv_speed * t_stop + 0.5 * accel * t_stop * t_stop
        v1 = 0.0
    t_end = max(v1 / inp.fv.brake_rate if inp.fv.brake_rate else 0.0,
                inp.pv_speed / -inp.pv.accel_min) + horizon_pad
    t = np.arange(0.0, t_end, DT)
    fv = x1 + braked_positions(v1, inp.fv.accel_min, t)
    pv = inp.pv_pos + braked_positions(inp.pv_speed, inp.pv.accel_min,
                                       inp.staleness + t)
    return float(np.min(pv - inp.pv.length - fv))


def dense_safe(inp, accel, slack=1e-6):
    """Spec safety oracle: gap stays above the stop gap minus slack."""
    return dense_min_gap(inp, accel) >= inp.fv.stop_gap - slack


def dense_envelope_ok(inp, accel, slack=1e-6):
    """Dense-grid version of the full elastic-gap constraint (all three
    closed-form conditions at once): gap >= elastic gap everywhere."""
    d = inp.delta
    v1 = max(0.0, min(inp.fv_speed + accel * d, inp.fv.speed_max))
    elastic = inp.fv.elastic_coeff * d * v1 + inp.fv.stop_gap
    return dense_min_gap(inp, accel) >= elastic - slack


def approach_distance_grid(inp, accel, t_end):
    """Conservative approach distance on the dense grid (for max-F checks)."""
    d = inp.delta
    v1 = max(0.0, inp.fv_speed + accel * d)
    t = np.arange(0.0, t_end, DT)
    fv = braked_positions(v1, inp.fv.accel_min, t)
    pv = (braked_positions(inp.pv_speed, inp.pv.accel_min, inp.staleness + t)
          - braked_positions(inp.pv_speed, inp.pv.accel_min, inp.staleness))
    return t, fv - pv
