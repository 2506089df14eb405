import numpy as np
import pytest
import torch

from phoenixcodec.model import CodecConfig, PhoenixCodec

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def codec():
    """Untrained default codec in float64, eval mode."""
    torch.manual_seed(0)
    return PhoenixCodec(CodecConfig()).double().eval()


@pytest.fixture(scope="session")
def codec32():
    torch.manual_seed(0)
    return PhoenixCodec(CodecConfig()).eval()


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record and print the one-line PASS/FAIL result of an acceptance criterion."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
