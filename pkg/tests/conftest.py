import numpy as np
import pytest

from ma_mimo import SystemConfig, UserStats, fpa_grid_layout, large_scale_fading

NOISE_POWER = 1e-11  # -80 dBm


def make_users(seed, kappa, n_users=5, beta0=1e-4, alpha=2.8, noise=NOISE_POWER):
    """Seeded user draw matching the experiment defaults."""
    rng = np.random.default_rng(seed)
    users = []
    for _ in range(n_users):
        theta = rng.uniform(-np.pi / 2, np.pi / 2)
        phi = rng.uniform(-np.pi / 2, np.pi / 2)
        d = rng.uniform(50.0, 70.0)
        users.append(
            UserStats(
                theta=theta,
                phi=phi,
                kappa=kappa,
                beta=large_scale_fading(d, beta0, alpha),
                noise_power=noise,
                distance=d,
            )
        )
    return users


@pytest.fixture(scope="session")
def cfg65():
    return SystemConfig.with_scaled_region(6, 5, 2.0)


@pytest.fixture(scope="session")
def cfg43():
    return SystemConfig.with_scaled_region(4, 3, 2.0)


@pytest.fixture(scope="session")
def users_k6():
    return make_users(101, 6.0)


@pytest.fixture(scope="session")
def users_k100():
    return make_users(101, 100.0)


@pytest.fixture(scope="session")
def grid65(cfg65):
    return fpa_grid_layout(cfg65)
