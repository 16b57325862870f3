import threading

import numpy as np
import pytest

from segadapter import nifti
from segadapter.server import AdapterServer


@pytest.fixture
def image_file(tmp_path):
    """A small image the adapters can read geometry from."""
    rng = np.random.default_rng(0)
    arr = rng.integers(0, 200, size=(12, 10, 8)).astype(np.uint8)
    path = tmp_path / "sample.nii.gz"
    nifti.write_mask(arr, (1.0, 1.0, 2.5), path)
    return path, arr.shape


@pytest.fixture
def serve_inprocess():
    """Run AdapterServer instances on daemon threads for the test's duration."""
    servers = []

    def start(hooks) -> AdapterServer:
        server = AdapterServer(hooks)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        servers.append(server)
        return server

    yield start
    for s in servers:
        s.stop()
