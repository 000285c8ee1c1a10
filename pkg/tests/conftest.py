import pytest

from pm2lat import oracle
from pm2lat.compute import WaveModel


@pytest.fixture(scope="session")
def fp32_dev():
    return oracle.fp32_device(seed=7)


@pytest.fixture(scope="session")
def fp32_dataset(fp32_dev):
    return oracle.emit_fixture(fp32_dev)


@pytest.fixture(scope="session")
def fp32_dataset_full(fp32_dataset):
    """fp32 fixture plus synthetic utility-kernel records."""
    return oracle.with_membound_fixture(fp32_dataset, count=32, seed=23)


@pytest.fixture(scope="session")
def bf16_dev():
    return oracle.bf16_device(seed=11)


@pytest.fixture(scope="session")
def bf16_dataset(bf16_dev):
    return oracle.emit_fixture(bf16_dev)


@pytest.fixture(scope="session")
def generic_dev():
    return oracle.generic_device(seed=13)


@pytest.fixture(scope="session")
def generic_dataset(generic_dev):
    return oracle.emit_fixture(generic_dev)


@pytest.fixture(scope="session")
def wm(fp32_dev):
    return WaveModel(sm_count=fp32_dev.profile.sm_count)
