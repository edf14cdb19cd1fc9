"""Walk through one time step by hand: capacities, radial objective, regions, association.

Run with ``python3 demos/01_one_time_step.py``.
"""
# %%
import numpy as np

from flybs.capacity import bs_loads, gbs_relay_capacity, relay_flybs_capacity, sum_capacity, user_capacities
from flybs.config import load_scenario
from flybs.engine import StepContext, access_backhaul_radius, initial_state, relay_backhaul_radius, run_time_step
from flybs.mobility import generate_trajectory
from flybs.radial import build_radial, linearize_capacity

np.set_printoptions(precision=1, suppress=True)

# %% A small reference scenario: 60 users, two access FlyBSs and a relay.
s = load_scenario({"n_users": 60, "m_flybss": 3, "horizon": 5})
ctx = StepContext.from_scenario(s)
traj = generate_trajectory(s.mobility_spec(), s.n_users, s.horizon, s.seed)
state = initial_state(s, traj[0], ctx)
print("BS positions (access..., relay, GBS):\n", state.bs_positions)
print("users per BS:", np.bincount(state.serving[state.serving >= 0], minlength=4))

# %% Capacities at the initial placement. The backhaul must carry what the access links deliver.
plan = ctx.plan
caps = user_capacities(state, plan)
print(f"sum capacity {sum_capacity(state, plan) / 1e6:.1f} Mbps, best user {caps.max() / 1e6:.2f} Mbps")
loads = bs_loads(state, plan)
for m in range(s.m_flybss - 1):
    print(f"FlyBS {m}: load {loads[m] / 1e6:.1f} Mbps, relay link {relay_flybs_capacity(state, plan, m) / 1e6:.1f} Mbps")
print(f"GBS -> relay trunk {gbs_relay_capacity(state, plan) / 1e6:.1f} Mbps")

# %% The radial objective: each FlyBS is pulled toward (rho > 0) or pushed away from (rho < 0) its q0.
radial = build_radial(linearize_capacity(state, plan), state)
for j in range(s.m_flybss):
    kind = "attracted to" if radial.rho[j] > 0 else "repelled from"
    print(f"BS {j} {kind} {radial.attractors[j]}, rho={radial.rho[j]:.3g}")

# %% How far each FlyBS may drift from its upstream node this step without breaking its backhaul.
for m in range(s.m_flybss - 1):
    print(f"FlyBS {m}: backhaul radius {access_backhaul_radius(state, plan, m, ctx):.1f} m around the relay")
print(f"relay: backhaul radius {relay_backhaul_radius(state, plan, ctx):.1f} m around the GBS")

# %% Advance a few steps and watch the inner loop settle.
for k in range(1, s.horizon + 1):
    state, rep = run_time_step(state, ctx, traj[k])
    print(f"step {k}: {rep.sum_capacity / 1e6:7.1f} Mbps, {rep.inner_iterations} inner iterations, "
          f"moved {rep.max_displacement:4.1f} m, flags {sorted(rep.flags) or '-'}")
