import pytest

from lpvembed.models import load_bundled


@pytest.fixture(scope="session")
def disk_doc():
    return load_bundled("unbalanced_disk")


@pytest.fixture(scope="session")
def tanh_doc():
    return load_bundled("tanh_example")
