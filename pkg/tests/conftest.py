import numpy as np
import pytest
from scipy.linalg import expm

from squeezed_mzi.spinspace import build_operators, get_space

# criterion number -> list of (passed, detail) parts; filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE.setdefault(number, []).append((bool(passed), detail))
        print(f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        verdict = "PASS" if all(p for p, _ in parts) else "FAIL"
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {detail}")


def dense_channel(n_atoms: int, theta: float) -> np.ndarray:
    """Three-propagator interferometer as a dense matrix (small-N oracle)."""
    jx, _, jz = build_operators(get_space(n_atoms))
    bs = expm(1j * np.pi / 2 * jx)
    return bs @ expm(1j * theta * jz) @ bs


def random_state_amplitudes(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def equal_up_to_phase(a, b, tol):
    k = np.argmax(np.abs(b))
    phase = a[k] / b[k]
    phase /= abs(phase)
    return np.max(np.abs(a - phase * b)) < tol
