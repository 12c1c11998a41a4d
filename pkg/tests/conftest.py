import numpy as np
import pytest

from clpeft.encoder import EncoderConfig, init_weights


@pytest.fixture(scope="session")
def tiny_encoder():
    cfg = EncoderConfig(n_layers=2, n_heads=4, d_model=16, d_ff=32, n_mels=6, max_frames=32, seed=1)
    return init_weights(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
