import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from isslstm.iss import layer_condition
from isslstm.lstm import LayerParams

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_layer(rng, n, m, scale=0.5):
    return LayerParams(
        rng.uniform(-scale, scale, (4, n, m)),
        rng.uniform(-scale, scale, (4, n, n)),
        rng.uniform(-scale, scale, (4, n)),
    )


def random_stable_layer(rng, n, m, u_max=None, margin=0.05):
    """Rejection sampling, then shrink R_g until condition <= 1 - margin."""
    u_max = np.ones(m) if u_max is None else u_max
    while True:
        p = random_layer(rng, n, m, scale=rng.uniform(0.05, 0.6))
        if layer_condition(p, u_max).bounds.sigma_f >= 1.0 - margin:
            continue
        R = p.R.copy()
        for _ in range(200):
            q = LayerParams(p.W, R, p.b)
            if layer_condition(q, u_max).condition_value <= 1.0 - margin:
                return q
            R[3] *= 0.9
        R[3] = 0.0
        q = LayerParams(p.W, R, p.b)
        if layer_condition(q, u_max).condition_value <= 1.0 - margin:
            return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
