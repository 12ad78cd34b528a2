"""Scenario simulator: synthetic world, sensor actors and the handover run."""
from ..geo import GeoPoint, TelemetryRecord, bearing, heading_to, to_quad_angle
from .actors import COORDINATOR_ID, Phase
from .render import render_sensor_view
from .runner import EventLog, run_scenario
from .scenario import (
    Appearance,
    Illumination,
    ReidConfig,
    Scenario,
    Sensor,
    Target,
    dump_scenario,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
