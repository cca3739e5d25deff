"""
Switching the relaxation off
============================

Runs the scalar ``example_4_1`` problem with ``lambda(t) = 1`` up to
``t = 50`` and ``0`` afterwards. The state reaches the zero of the
inclusion and then stays frozen.
"""

import numpy as np

from metricflows.flows import switch_off_schedule, validate_parameters
from metricflows.integrate import IntegratorConfig, integrate
from metricflows.problems import example_4_1

p = example_4_1()
spec = p.spec.with_schedule(switch_off_schedule(50.0))

# inf lambda = 0, so the schedule check is flagged and no guarantee is claimed
rep = validate_parameters(spec)
print("schedule_bounds passed:", rep["schedule_bounds"].passed, "| guarantee:", rep.guarantee)

traj = integrate(spec, p.u0, IntegratorConfig("rk4", h=0.01, t_end=60.0))

# the integrator stops exactly at the breakpoint, so u(50) is a recorded sample
for t in (0.0, 1.0, 5.0, 10.0, 50.0, 60.0):
    print(f"u({t:>4g}) = {traj.state_at(t)[0]:.3e}")

# nothing moves after the switch-off
print("frozen:", np.all(traj.states[traj.times >= 50.0] == traj.state_at(50.0)))
