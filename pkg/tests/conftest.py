import numpy as np
import pytest

from splatuq import sh
from splatuq.scene import COLOR_COEFFS, Scene
from splatuq.synth import look_at


def solid_color_sh(rgb) -> np.ndarray:
    """Color SH whose value is exactly ``rgb`` from every direction."""
    rgb = np.atleast_2d(np.asarray(rgb, dtype=np.float64))
    color = np.zeros((len(rgb), 3, COLOR_COEFFS))
    color[:, :, 0] = (rgb - 0.5) / sh.C0
    return color


def single_gaussian(position=(0.0, 0.0, 0.0), scale=0.1, opacity=0.9, rgb=(0.8, 0.4, 0.2),
                    rotation=(1.0, 0.0, 0.0, 0.0), uncert_degree=2) -> Scene:
    return Scene.from_linear([position], [rotation], [[scale] * 3 if np.isscalar(scale) else scale],
                             [opacity], solid_color_sh([rgb]), uncert_degree=uncert_degree)


def random_scene(rng, n, spread=0.5, scale=(0.05, 0.3), uncert_degree=2) -> Scene:
    pos = rng.normal(0.0, spread, (n, 3))
    quats = rng.normal(size=(n, 4))
    scales = rng.uniform(*scale, (n, 3))
    opac = rng.uniform(0.05, 0.999, n)
    color = rng.normal(0.0, 0.5, (n, 3, COLOR_COEFFS))
    uncert = rng.normal(0.0, 1.0, (n, sh.num_coeffs(uncert_degree)))
    return Scene.from_linear(pos, quats, scales, opac, color, uncert,
                             background=rng.uniform(0, 1, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def front_camera():
    """32x32 camera on the -z axis looking at the origin."""
    return look_at((0.0, 0.0, -3.0), (0.0, 0.0, 0.0), up=(0.0, -1.0, 0.0), width=32, height=32)


# Acceptance lines collected by tests/test_acceptance.py, printed after the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
