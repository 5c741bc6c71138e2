from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from facematch.provider import FaceBox, Frame, save_ppm, write_sidecar

_acceptance: dict[int, tuple[str, str, str]] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "_acceptance", None)
    if marker is None:
        return
    number, title = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = report.outcome.upper()
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            outcome = f"SKIPPED ({report.longrepr[2]})"
        _acceptance[number] = (title, outcome, report.nodeid)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result()._acceptance = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, outcome, _ = _acceptance[number]
        terminalreporter.write_line(f"criterion {number}: {outcome:<8} {title}")


def write_subjects(
    directory: Path,
    count: int,
    seed: int,
    prefix: str = "subj",
    size: int = 48,
    face: int = 16,
) -> dict[str, int]:
    """Write ``count`` single-face PPM images with sidecars.

    Returns ``{identity: faces}``; every crop is random noise so crops are
    distinct with overwhelming probability.
    """
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    written = {}
    for i in range(count):
        identity = f"{prefix}{i:03d}"
        pixels = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
        path = save_ppm(Frame.from_array(pixels), directory / f"{identity}_01.ppm")
        x, y = (int(v) for v in rng.integers(0, size - face, size=2))
        write_sidecar(path, [FaceBox(x, y, face, face, 0.99)])
        written[identity] = 1
    return written


@pytest.fixture
def fixture_set(tmp_path: Path) -> Path:
    """Three single-face images: alice, bob, carol."""
    directory = tmp_path / "faces"
    directory.mkdir()
    rng = np.random.default_rng(7)
    for name in ("alice", "bob", "carol"):
        pixels = rng.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)
        path = save_ppm(Frame.from_array(pixels), directory / f"{name}_01.ppm")
        write_sidecar(path, [FaceBox(8, 8, 20, 20, 0.95)])
    return directory
