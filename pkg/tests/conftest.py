import json

import pytest

from roadsentinel.enforcement.mock_gateway import MockGateway
from roadsentinel.sim import demo_calibration


@pytest.fixture
def calibration():
    return demo_calibration()


@pytest.fixture
def gateway():
    with MockGateway() as gw:
        yield gw


@pytest.fixture
def registry_csv(tmp_path):
    path = tmp_path / "registry.csv"
    path.write_text(
        "plate,owner_name,phone,email,vehicle_details\n"
        'ABC123A,User A,+256700000001,usera@example.org,"Vehicle X, white Toyota Premio"\n'
        "UBA123C,Jane Nakato,+256700000002,jane@example.org,Silver Subaru Forester\n"
    )
    return path


@pytest.fixture
def write_config(tmp_path, calibration):
    """Writes calibration + engine config into tmp_path; returns the config path."""

    def _write(**overrides):
        cal_path = tmp_path / "calibration.json"
        calibration.save(cal_path)
        cfg = {
            "calibration": "calibration.json",
            "enforcement": {"margin_kmh": 10, "cooldown_s": 600},
            "speed": {"policy": "max"},
        }
        cfg.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        return path

    return _write


# --- acceptance summary -------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion; prints its PASS/FAIL line and returns the verdict."""
    results = request.config.stash[_ACCEPTANCE]

    def _record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        results[number] = line
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
