import json

import numpy as np
import pytest

from exploresim.world import make_world


@pytest.fixture
def big_empty_world():
    """Large obstacle-free arena; poses near the middle never hit anything."""
    return make_world("arena", [-20, -20, 20, 20])


@pytest.fixture
def world_file(tmp_path):
    def write(stem, **payload):
        path = tmp_path / f"{stem}.json"
        path.write_text(json.dumps(payload))
        return path
    return write


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
