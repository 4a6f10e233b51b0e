import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from morphscat.imgproc import FaceCrop
from morphscat.pipeline import BONAFIDE, MORPH, PairFeatures
from morphscat.scattering import ScatteringConfig, build_filter_bank

FAKE_HASH = bytes(32)


def make_png(path, pixels):
    pixels = np.asarray(pixels, dtype=np.uint8)
    Image.fromarray(pixels, mode="RGB" if pixels.ndim == 3 else "L").save(path, format="PNG")
    return Path(path)


def random_crop(rng) -> FaceCrop:
    return FaceCrop(rng.integers(0, 256, size=(250, 250, 3), dtype=np.uint8))


def synthetic_pair(rng, kind, length=24, pair_id="p", config_hash=FAKE_HASH):
    """Separable synthetic differences: morphs far from the origin."""
    if kind == MORPH:
        vecs = np.abs(rng.normal(8.0, 0.5, (3, length)))
    else:
        vecs = np.abs(rng.normal(0.0, 0.05, (3, length)))
    return PairFeatures(
        pair_id=pair_id, fd_y=vecs[0], fd_cb=vecs[1], fd_cr=vecs[2],
        config_hash=config_hash,
    )


def separable_training_set(rng, n_per=8):
    pairs = []
    for i in range(n_per):
        pairs.append((synthetic_pair(rng, MORPH, pair_id=f"m{i}"), MORPH))
        pairs.append((synthetic_pair(rng, BONAFIDE, pair_id=f"b{i}"), BONAFIDE))
    return pairs


@pytest.fixture(scope="session")
def tiny_config():
    """Small-but-two-layer config on the production image size."""
    return ScatteringConfig(num_octaves=2, quality_factors=(1, 1), num_rotations=(2, 2))


@pytest.fixture(scope="session")
def tiny_bank(tiny_config):
    return build_filter_bank(tiny_config)


@pytest.fixture(scope="session")
def default_bank():
    return build_filter_bank(ScatteringConfig())
