"""Distributed minimum-energy following of a sampled leader on directed acyclic graphs."""
from .agents import (LtiFollower, LtiLeader, NonlinearLeader, SamplingSchedule, WaypointTable,
                     msd_follower, msd_leader)
from .arrivals import design_plan, epoch_control_profile, min_time_to
from .config import build_scenario, load_config
from .gramian import GramianPropagator, gramian, min_energy
from .simulator import Scenario, invariant_report, run_scenario
from .topology import FormationSpec, LeaderNetwork, hierarchical_levels

__version__ = "0.1.0"
