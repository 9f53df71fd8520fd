import numpy as np
import pytest

from fastdisk import fixtures


def write_obj(path, vertices, faces):
    with open(path, "w") as fh:
        for v in vertices:
            fh.write("v " + " ".join(repr(float(x)) for x in v) + "\n")
        for f in faces:
            fh.write("f " + " ".join(str(i + 1) for i in f) + "\n")
    return path


@pytest.fixture
def obj_writer(tmp_path):
    def _write(name, vertices, faces):
        return str(write_obj(tmp_path / name, vertices, faces))

    return _write


@pytest.fixture(scope="session")
def flat200():
    return fixtures.flat_disk(200)


@pytest.fixture(scope="session")
def hemi5k():
    return fixtures.hemisphere(5000)


def planar(mesh):
    return mesh.vertices[:, 0] + 1j * mesh.vertices[:, 1]


def unit_circle_mesh(n_faces=200, jitter=0.0, seed=0):
    """Flat mesh whose boundary samples the unit circle at equal arc length."""
    return fixtures.flat_disk(n_faces, jitter=jitter, seed=seed)



ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the line is also printed at the end of the run."""

    def _record(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
