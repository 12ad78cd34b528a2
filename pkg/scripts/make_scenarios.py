"""Regenerate the bundled scenario files under scenarios/."""
import os
import sys

from mlai.sim import dump_scenario
from mlai.sim.benchmark import generate_suite, make_handover_scenario, make_no_handover_scenario, write_suite

root = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "scenarios")
os.makedirs(root, exist_ok=True)
dump_scenario(make_handover_scenario(7, distractor=False, shift=False, name="handover_basic"), os.path.join(root, "handover_basic.yaml"))
dump_scenario(make_no_handover_scenario(), os.path.join(root, "no_handover.yaml"))
write_suite(generate_suite(50, seed=0), os.path.join(root, "benchmark"))
write_suite(generate_suite(20, seed=1, clean=True), os.path.join(root, "clean"))
