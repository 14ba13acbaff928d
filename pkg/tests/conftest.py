import numpy as np
import pytest

from jndcrowd.goldgen import GoldSpec
from jndcrowd.imaging import Codec, PillowJpegAdapter, RasterImage


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_image():
    gen = np.random.default_rng(7)
    return RasterImage(gen.integers(0, 256, size=(32, 32, 3), dtype=np.uint8))


@pytest.fixture(scope="session")
def gray_image():
    return RasterImage(np.full((64, 64, 3), 128, dtype=np.uint8))


@pytest.fixture(scope="session")
def jpeg_adapter():
    return PillowJpegAdapter()


def make_gold_spec(source_id="src", centers=((60.0, 60.0), (200.0, 60.0), (130.0, 200.0)),
                   pjnd_range=(36, 44), sigma=35.0, codec=Codec.JPEG):
    return GoldSpec(
        source_id=source_id,
        codec=codec,
        centers=list(centers),
        sigma_region=sigma,
        sigmoid_center=(pjnd_range[0] + pjnd_range[1]) / 2.0,
        sigmoid_scale=4.0,
        pjnd_range=pjnd_range,
    )


@pytest.fixture
def gold_spec():
    return make_gold_spec()
