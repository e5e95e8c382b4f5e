"""Fixtures: a live bridge subprocess plus the shared conformance battery.

The primary package's test directory is put on sys.path so its oracle
conformance checks run against this server verbatim.
"""

import subprocess
import sys
import threading
from pathlib import Path

import pytest

PRIMARY_TESTS = Path(__file__).resolve().parents[2] / "tests"
if str(PRIMARY_TESTS) not in sys.path:
    sys.path.insert(0, str(PRIMARY_TESTS))

SERVED_SIZE = 32


@pytest.fixture(scope="session")
def bridge_server():
    """Start `modelbridge` in a subprocess; yields (host, port)."""
    proc = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "modelbridge.cli",
            "--model",
            "resnet50",
            "--weights",
            "random",
            "--listen",
            "127.0.0.1:0",
            "--size",
            str(SERVED_SIZE),
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    watchdog = threading.Timer(120.0, proc.kill)
    watchdog.start()
    try:
        line = proc.stdout.readline()
    finally:
        watchdog.cancel()
    if not line.startswith("listening on "):
        stderr = proc.stderr.read() if proc.poll() is not None else ""
        proc.kill()
        raise RuntimeError(f"bridge did not come up: {line!r}\n{stderr}")
    host, _, port = line.strip().rpartition(" ")[2].rpartition(":")
    try:
        yield host, int(port)
    finally:
        proc.terminate()
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait(timeout=10)
