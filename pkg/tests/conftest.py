from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy import ndimage

from flownav.geometry import CameraIntrinsics

settings.register_profile(
    "flownav", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("flownav")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def K1000() -> CameraIntrinsics:
    return CameraIntrinsics(1000.0, 1000.0, 511.5, 511.5, 1024, 1024)


@pytest.fixture
def K512() -> CameraIntrinsics:
    return CameraIntrinsics.from_fov(512)


@pytest.fixture(scope="session")
def texture() -> np.ndarray:
    """Multi-scale smoothed noise, larger than the test frames so crops can shift."""
    rng = np.random.default_rng(0)
    base = sum(ndimage.gaussian_filter(rng.normal(size=(700, 700)), s) * s
               for s in (2, 4, 8, 16, 32))
    return (base - base.min()) / (base.max() - base.min()) * 255.0


def crop_shifted(base: np.ndarray, dx: float, dy: float, n: int = 512,
                 offset: int = 60) -> np.ndarray:
    """``n x n`` window whose content moves by (+dx, +dy) px relative to an unshifted crop."""
    s = ndimage.shift(base, (dy, dx), order=3, mode="nearest")
    return np.clip(np.rint(s[offset:offset + n, offset:offset + n]), 0, 255).astype(np.uint8)


def random_unit_normals(rng, n, min_gamma=0.2):
    out = []
    while len(out) < n:
        k = rng.normal(size=3)
        k /= np.linalg.norm(k)
        k[2] = abs(k[2])
        if k[2] >= min_gamma:
            out.append(k)
    return np.array(out)
