import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fatnode import kernels
from fatnode.config import node_from_dict, preset_dir, profile_from_dict

GOLDEN = Path(__file__).parent / "golden"


def load_preset(name):
    return json.loads((preset_dir() / f"{name}.json").read_text())


@pytest.fixture(scope="session")
def haswell():
    d = load_preset("haswell")
    return node_from_dict(d["node"]), profile_from_dict(d["profile"])


@pytest.fixture(scope="session")
def knl():
    d = load_preset("knl")
    return node_from_dict(d["node"]), profile_from_dict(d["profile"])


BACKENDS = ["python"] + (["cython"] if kernels.compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
