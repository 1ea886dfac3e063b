import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lvseg.types import ImageMeta

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_meta(**kw) -> ImageMeta:
    base = dict(pixel_spacing_row=1.0, pixel_spacing_col=1.0, rows=4, cols=4)
    base.update(kw)
    return ImageMeta(**base)
