import numpy as np
import pytest

from densegan import data


def make_cifar_records(n, seed=0):
    rng = np.random.default_rng(seed)
    return [data.Cifar10Record(int(rng.integers(0, 10)), rng.integers(0, 256, 3072, dtype=np.uint8).tobytes())
            for _ in range(n)]


@pytest.fixture
def cifar_dir(tmp_path):
    """A miniature CIFAR-10 directory: five train batches and a test batch of a few records each."""
    root = tmp_path / "cifar-10-batches-bin"
    for i, name in enumerate(data.TRAIN_FILES + (data.TEST_FILE,)):
        data.write_cifar_batch(make_cifar_records(4, seed=i), root / name)
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
