"""Discrete-time simulator and optimizer for a three-hop FlyBS network.

A ground base station feeds a relay FlyBS over a wireless backhaul. The relay
feeds access FlyBSs, and those serve moving ground users. Each time step
repositions the FlyBSs and re-associates users to maximise sum capacity
under flight and backhaul constraints.
"""
from .association import AssociationProblem, solve_association
from .capacity import ChannelPlan, NetworkState, Radio, equal_split_plan, sum_capacity, user_capacities
from .config import Scenario, ScenarioError, load_scenario
from .engine import SimulationResult, StepReport, audit, run_time_step, simulate
from .feasibility import Ball, EmptyRegion, FeasibilityRegion, InfeasibleBackhaul, Slab, extremal_point
from .mobility import MobilitySpec, generate_trajectory
from .radial import build_radial, linearize_capacity

__all__ = [
    "AssociationProblem", "Ball", "ChannelPlan", "EmptyRegion", "FeasibilityRegion", "InfeasibleBackhaul",
    "MobilitySpec", "NetworkState", "Radio", "Scenario", "ScenarioError", "SimulationResult", "Slab",
    "StepReport", "audit", "build_radial", "equal_split_plan", "extremal_point", "generate_trajectory",
    "linearize_capacity", "load_scenario", "run_time_step", "simulate", "solve_association", "sum_capacity",
    "user_capacities",
]
