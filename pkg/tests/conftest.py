import os
import sys

import pytest

APP_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "App")
if APP_DIR not in sys.path:
    sys.path.insert(0, APP_DIR)

from mesh import gen_stretched_square, gen_unit_square, load_mesh, CYLINDER_MESH_PATH  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the long benchmark cases")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running benchmark, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def square4():
    return gen_unit_square(4)


@pytest.fixture(scope="session")
def square10():
    return gen_unit_square(10)


@pytest.fixture(scope="session")
def stretched8():
    return gen_stretched_square(8, 0.4)


@pytest.fixture(scope="session")
def cylinder_mesh():
    return load_mesh(CYLINDER_MESH_PATH)
