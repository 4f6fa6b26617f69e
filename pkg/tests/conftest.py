import numpy as np
import pytest

from radarcam.pipeline import PipelineConfig, PipelineRun


@pytest.fixture(scope="session")
def run_factory():
    """Session-wide cache of pipeline runs keyed by (scene, predictor, extras).

    PipelineRun computes stages lazily, so sharing one instance across tests
    avoids re-simulating the same scene dozens of times.
    """
    cache = {}

    def get(scene="occluded-radar", predictor="oracle", **kwargs) -> PipelineRun:
        key = (scene, predictor, tuple(sorted(kwargs.items())))
        if key not in cache:
            cfg = PipelineConfig(
                scene=scene, out_dir="unused", predictor=predictor, **kwargs
            )
            cache[key] = PipelineRun(cfg)
        return cache[key]

    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
