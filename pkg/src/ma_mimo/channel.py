"""Statistical CSI description, LoS steering vectors, and Rician channel sampling.

Conventions used throughout the package:
  * antenna positions are 2-D points in meters inside a rectangular movable
    region centered at the origin,
  * a channel matrix is a complex (n_antennas, n_users) array whose column m
    is the channel vector of user m,
  * all randomness flows through an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def grid_shape(n_antennas: int) -> tuple[int, int]:
    """Most-square (rows, cols) factorization of the antenna count, rows <= cols."""
    if n_antennas < 1:
        raise ValueError("antenna count must be positive")
    rows = 1
    for r in range(1, math.isqrt(n_antennas) + 1):
        if n_antennas % r == 0:
            rows = r
    return rows, n_antennas // rows


def region_half_widths(
    n_antennas: int, size_factor: float, wavelength: float
) -> tuple[float, float]:
    """Half-widths of the movable region for a given size factor.

    The region grows with the antenna count through its most-square grid
    factorization: rows * size_factor * wavelength / 2 along x and
    cols * size_factor * wavelength / 2 along y.
    """
    rows, cols = grid_shape(n_antennas)
    scale = size_factor * wavelength / 2.0
    return rows * scale, cols * scale


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle centered at the origin."""

    x_half: float
    y_half: float

    def __post_init__(self):
        if not (self.x_half > 0.0 and self.y_half > 0.0):
            raise ValueError("region half-widths must be positive")

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> bool:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        pad_x = tol * max(1.0, self.x_half)
        pad_y = tol * max(1.0, self.y_half)
        return bool(
            np.all(np.abs(p[:, 0]) <= self.x_half + pad_x)
            and np.all(np.abs(p[:, 1]) <= self.y_half + pad_y)
        )


@dataclass(frozen=True)
class SystemConfig:
    """Global constants of one downlink scenario.

    Power is in watts, lengths in meters.  ``beta0`` is the linear channel
    power gain at the 1 m reference distance and ``alpha`` the path-loss
    exponent.  The wavelength defaults to 1 m so that all lengths read
    directly in wavelengths.
    """

    n_antennas: int
    n_users: int
    region: Region
    wavelength: float = 1.0
    p_tot: float = 1.0
    d_min: float = 0.5
    beta0: float = 1e-4
    alpha: float = 2.8

    def __post_init__(self):
        if self.n_antennas < 1 or self.n_users < 1:
            raise ValueError("antenna and user counts must be positive")
        if self.wavelength <= 0.0:
            raise ValueError("wavelength must be positive")
        if self.p_tot < 0.0:
            raise ValueError("transmit power budget must be nonnegative")
        if self.d_min < 0.0:
            raise ValueError("minimum spacing must be nonnegative")
        # The region must admit a feasible layout: the reference grid of
        # n_antennas points at half-wavelength spacing has to fit inside.
        rows, cols = grid_shape(self.n_antennas)
        quarter = self.wavelength / 4.0
        fit_tol = 1e-9 * max(1.0, self.wavelength)
        if (rows - 1) * quarter > self.region.x_half + fit_tol or (
            cols - 1
        ) * quarter > self.region.y_half + fit_tol:
            raise ValueError(
                "region cannot hold a half-wavelength-spaced grid of "
                f"{self.n_antennas} antennas"
            )

    @classmethod
    def with_scaled_region(
        cls, n_antennas: int, n_users: int, size_factor: float = 2.0, **kwargs
    ) -> "SystemConfig":
        """Build a config whose region scales with the antenna grid."""
        wavelength = kwargs.pop("wavelength", 1.0)
        xh, yh = region_half_widths(n_antennas, size_factor, wavelength)
        return cls(n_antennas, n_users, Region(xh, yh), wavelength=wavelength, **kwargs)


@dataclass(frozen=True)
class UserStats:
    """Per-user statistical CSI: angles, Rician factor, large-scale gain."""

    theta: float  # elevation angle of departure, radians
    phi: float  # azimuth angle of departure, radians
    kappa: float  # LoS-to-NLoS power ratio
    beta: float  # large-scale channel power gain
    noise_power: float  # receiver noise power, watts
    distance: float = float("nan")  # provenance only, meters

    def __post_init__(self):
        half_pi = math.pi / 2.0 + 1e-12
        if not (-half_pi <= self.theta <= half_pi and -half_pi <= self.phi <= half_pi):
            raise ValueError("angles must lie in [-pi/2, pi/2]")
        if self.kappa < 0.0:
            raise ValueError("Rician factor must be nonnegative")
        if self.beta <= 0.0:
            raise ValueError("large-scale gain must be positive")
        if self.noise_power <= 0.0:
            raise ValueError("noise power must be positive")


@dataclass(frozen=True)
class AntennaLayout:
    """Ordered 2-D positions of the movable transmit antennas."""

    positions: np.ndarray  # (n_antennas, 2) float

    def __post_init__(self):
        p = np.array(self.positions, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2:
            raise ValueError("positions must have shape (n_antennas, 2)")
        if not np.all(np.isfinite(p)):
            raise ValueError("positions must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @property
    def n_antennas(self) -> int:
        return self.positions.shape[0]

    def replace_antenna(self, n: int, point: np.ndarray) -> "AntennaLayout":
        p = self.positions.copy()
        p[n] = point
        return AntennaLayout(p)


def min_spacing(positions: np.ndarray) -> float:
    """Smallest pairwise distance; infinity for a single antenna."""
    p = np.asarray(positions, dtype=float)
    if p.shape[0] < 2:
        return float("inf")
    diff = p[:, None, :] - p[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    n = p.shape[0]
    d2[np.arange(n), np.arange(n)] = np.inf
    return float(math.sqrt(d2.min()))


def check_layout(layout: AntennaLayout, cfg: SystemConfig, tol: float = 1e-9) -> None:
    """Raise if the layout leaves the region or violates the minimum spacing."""
    p = layout.positions
    if p.shape[0] != cfg.n_antennas:
        raise ValueError(
            f"layout has {p.shape[0]} antennas, config expects {cfg.n_antennas}"
        )
    if not cfg.region.contains(p, tol=tol):
        raise ValueError("antenna position outside the movable region")
    spacing = min_spacing(p)
    if spacing < cfg.d_min - tol * max(1.0, cfg.d_min):
        raise ValueError(
            f"minimum spacing violated: {spacing:.6g} < {cfg.d_min:.6g}"
        )


def fpa_grid_layout(cfg: SystemConfig) -> AntennaLayout:
    """Fixed-position reference layout: a centered grid at half-wavelength spacing."""
    rows, cols = grid_shape(cfg.n_antennas)
    step = cfg.wavelength / 2.0
    xs = (np.arange(rows) - (rows - 1) / 2.0) * step
    ys = (np.arange(cols) - (cols - 1) / 2.0) * step
    pts = np.array([(x, y) for x in xs for y in ys])
    layout = AntennaLayout(pts)
    check_layout(layout, cfg)
    return layout


def random_feasible_layout(
    cfg: SystemConfig, rng: np.random.Generator, max_tries: int = 200
) -> AntennaLayout:
    """Sample a layout uniformly in the region subject to the spacing constraint."""
    xh, yh = cfg.region.x_half, cfg.region.y_half
    for _ in range(max_tries):
        pts: list[np.ndarray] = []
        ok = True
        for _ in range(cfg.n_antennas):
            placed = False
            for _ in range(200):
                cand = rng.uniform([-xh, -yh], [xh, yh])
                if all(np.linalg.norm(cand - q) >= cfg.d_min for q in pts):
                    pts.append(cand)
                    placed = True
                    break
            if not placed:
                ok = False
                break
        if ok:
            layout = AntennaLayout(np.array(pts))
            check_layout(layout, cfg)
            return layout
    raise RuntimeError("could not sample a feasible layout; region too crowded")


def direction_vector(theta: float, phi: float) -> np.ndarray:
    """Unit-sphere direction [cos(theta) sin(phi), sin(theta)] of a departing path."""
    return np.array([math.cos(theta) * math.sin(phi), math.sin(theta)])


def user_directions(users: list[UserStats]) -> np.ndarray:
    """Stack the per-user direction vectors into an (n_users, 2) array."""
    return np.array([direction_vector(u.theta, u.phi) for u in users])


def los_steering(
    layout: AntennaLayout, user: UserStats, wavelength: float
) -> np.ndarray:
    """Unit-modulus LoS steering vector of one user over the current layout."""
    a = direction_vector(user.theta, user.phi)
    phase = (TWO_PI / wavelength) * (layout.positions @ a)
    return np.exp(1j * phase)


def los_matrix(
    layout: AntennaLayout, users: list[UserStats], wavelength: float
) -> np.ndarray:
    """(n_antennas, n_users) matrix of LoS steering vectors."""
    dirs = user_directions(users)
    phases = (TWO_PI / wavelength) * (layout.positions @ dirs.T)
    return np.exp(1j * phases)


def large_scale_fading(distance: float, beta0: float, alpha: float) -> float:
    """Power-law path gain beta0 * distance**(-alpha) at a positive distance."""
    if distance <= 0.0:
        raise ValueError("distance must be positive")
    return beta0 * distance ** (-alpha)


def sample_channels(
    layout: AntennaLayout,
    users: list[UserStats],
    wavelength: float,
    rng: np.random.Generator,
    size: int,
) -> np.ndarray:
    """Draw ``size`` i.i.d. Rician channel realizations, shape (size, N, M).

    Column m mixes the deterministic steering vector with a circularly
    symmetric complex Gaussian component according to the user's Rician
    factor; the total per-entry power is the user's large-scale gain.
    """
    hbar = los_matrix(layout, users, wavelength)
    kappa = np.array([u.kappa for u in users])
    beta = np.array([u.beta for u in users])
    los_amp = np.sqrt(kappa * beta / (kappa + 1.0))
    nlos_amp = np.sqrt(beta / (kappa + 1.0))
    z = rng.standard_normal((size, hbar.shape[0], hbar.shape[1], 2))
    noise = (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)
    return los_amp * hbar[None, :, :] + nlos_amp * noise


def sample_channel(
    layout: AntennaLayout,
    users: list[UserStats],
    wavelength: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw one instantaneous channel realization, shape (N, M)."""
    return sample_channels(layout, users, wavelength, rng, 1)[0]

