"""Shared fixtures: a cheap four-path scenario that the pipeline
solves in well under a second, reused wherever a test needs a real
end-to-end run without paying for the full-resolution presets."""

import pytest

from nfchan.pipeline import run_evaluate, run_synth
from nfchan.scenario import parse_scenario

QUICK_SCENARIO = """\
[room]
vertices = 0,0 20,0 20,10 0,10
reflective = 1 2 3

[radio]
carrier_hz = 10e9
bandwidth_hz = 500e6
n_tones = 64

[transmitter]
position = 12,7.5
layout = triangle

[aperture]
origin = 1,1
offsets = 0 0.3 0.6
spacings = 0.5wl 1wl

[measurement]
seed = 1

[estimation]
l_max = 5
stop_fraction = 0.01
refine_passes = 1
"""


@pytest.fixture(scope="session")
def quick_text():
    return QUICK_SCENARIO


@pytest.fixture(scope="session")
def quick_cfg():
    # Session-scoped and shared: tests must not mutate it (use
    # dataclasses.replace for variants).
    return parse_scenario(QUICK_SCENARIO)


@pytest.fixture(scope="session")
def quick_synth(quick_cfg):
    return run_synth(quick_cfg)


@pytest.fixture(scope="session")
def quick_report(quick_cfg):
    return run_evaluate(quick_cfg)
