"""Pose-covariance proxy and the D-optimality scalar used by the reward.

The pose mean follows the true kinematics; only the 3x3 covariance is
modeled. Motion inflates it through the unicycle Jacobian plus additive
noise; re-observing already-mapped surfaces shrinks it by a scalar factor.
That preserves the two qualitative drivers the reward needs — uncertainty
grows with motion and falls when known regions are revisited — while staying
deterministic and cheap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mapping import OCCUPIED, OccupancyGrid
from .sensor import LidarScan
from .world import Action, action_velocity, advance_pose, wrap_angle

MOTION_NOISE_XY = 1e-4      # m^2 per second
MOTION_NOISE_THETA = 1e-4   # rad^2 per second
REOBSERVE_GAIN = 0.5


@dataclass
class PoseBelief:
    """Gaussian pose belief: mean (x, y, theta) and 3x3 covariance."""
    mean: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.sigma.shape != (3, 3):
            raise ValueError("sigma must be 3x3")

    @classmethod
    def initial(cls, pose, var: float = 1e-6) -> "PoseBelief":
        return cls(mean=np.array(pose, dtype=float), sigma=np.eye(3) * var)


def motion_jacobian(theta: float, v: float, omega: float, dt: float) -> np.ndarray:
    """Jacobian of the exact-arc unicycle step w.r.t. the pose."""
    f = np.eye(3)
    if abs(omega) < 1e-12:
        f[0, 2] = -v * dt * math.sin(theta)
        f[1, 2] = v * dt * math.cos(theta)
    else:
        r = v / omega
        theta2 = theta + omega * dt
        f[0, 2] = r * (math.cos(theta2) - math.cos(theta))
        f[1, 2] = r * (math.sin(theta2) - math.sin(theta))
    return f


def propagate(belief: PoseBelief, action: Action, dt: float,
              q_xy: float = MOTION_NOISE_XY,
              q_theta: float = MOTION_NOISE_THETA,
              v: float = 0.2, turn_rate: float = 0.4) -> PoseBelief:
    """Advance the belief through one motion command.

    sigma <- F sigma F^T + Q dt with F the unicycle Jacobian at the mean.
    F has unit determinant, so with Q = 0 the covariance volume (and hence
    the D-optimality value) is exactly preserved.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cmd_v, cmd_w = action_velocity(action, v=v, turn_rate=turn_rate)
    x, y, theta = belief.mean
    nx, ny, ntheta = advance_pose(x, y, theta, cmd_v, cmd_w, dt)
    f = motion_jacobian(theta, cmd_v, cmd_w, dt)
    q = np.diag([q_xy, q_xy, q_theta]) * dt
    sigma = f @ belief.sigma @ f.T + q
    sigma = 0.5 * (sigma + sigma.T)
    return PoseBelief(mean=np.array([nx, ny, wrap_angle(ntheta)]), sigma=sigma)


def reobservation_fraction(scan: LidarScan, grid: OccupancyGrid, pose) -> float:
    """Fraction of beams whose terminal cell is already mapped Occupied.

    Evaluated against the grid *before* this scan is integrated; beams
    clamped at max range have no terminal cell and count as new territory.
    """
    hit, rows, cols = grid.endpoint_cells(pose, scan)
    if not np.any(hit):
        return 0.0
    seen = grid.cells[rows[hit], cols[hit]] == OCCUPIED
    return float(np.count_nonzero(seen)) / scan.num_beams


def shrink_factor(m: float, gain: float = REOBSERVE_GAIN) -> float:
    """Covariance scale for a re-observation fraction m: 1 / (1 + gain * m)."""
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"re-observation fraction must be in [0, 1], got {m}")
    return 1.0 / (1.0 + gain * m)


def observe_correct(belief: PoseBelief, scan: LidarScan, grid: OccupancyGrid,
                    pose=None, gain: float = REOBSERVE_GAIN) -> PoseBelief:
    """Shrink the covariance by 1 / (1 + gain * m), m = re-observation fraction.

    The mean is left untouched (ground-truth pose drives the mean; only the
    uncertainty magnitude responds to revisiting). No eigenvalue can grow.
    """
    m = reobservation_fraction(scan, grid, belief.mean if pose is None else pose)
    return PoseBelief(mean=belief.mean.copy(),
                      sigma=belief.sigma * shrink_factor(m, gain))


def d_optimality(sigma: np.ndarray) -> float:
    """det(sigma)^(1/n) computed as exp(mean(log eigenvalues)).

    The geometric mean of the eigenvalues: homogeneous of degree one
    (f(c*sigma) = c*f(sigma)) and bounded above by trace(sigma)/n.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("sigma must be square")
    if not np.allclose(sigma, sigma.T, atol=1e-9):
        raise ValueError("sigma must be symmetric")
    eigvals = np.linalg.eigvalsh(sigma)
    if np.any(eigvals <= 0.0):
        raise ValueError(f"sigma is not positive definite (min eig {eigvals.min():.3e})")
    return float(np.exp(np.mean(np.log(eigvals))))
