import numpy as np
import pytest

from isegeval.mocks import MockBehavior, MockSegmenter
from isegeval.synthetic import make_sphere_dataset


@pytest.fixture(scope="session")
def sphere_dataset(tmp_path_factory):
    """Three 32-cube spheres shared by protocol/simulator tests."""
    root = tmp_path_factory.mktemp("spheres")
    samples = make_sphere_dataset(root, 3, shape=(32, 32, 32), radius_range=(4, 8), seed=7)
    return root, samples


@pytest.fixture
def mock_server(sphere_dataset):
    """Factory starting in-process mocks against the shared dataset labels."""
    root, _ = sphere_dataset
    servers = []

    def start(behavior: MockBehavior, seed=0, cheat_dir=None):
        server = MockSegmenter(behavior, cheat_dir or root / "labels", seed=seed).start()
        servers.append(server)
        return server

    yield start
    for s in servers:
        s.stop()
