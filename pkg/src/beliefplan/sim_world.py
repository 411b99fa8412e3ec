"""Planar ground-truth world: motion/observation models and stochastic sampling.

The robot lives in a bounded 2-D map with point landmarks. Landmarks within a
visibility radius of the robot produce relative-position measurements in the
robot frame. Motion composes displacements in the world frame; the heading is
set by the displacement direction, and motion noise scales with the
displacement length.

All sampling operations are pure given an explicit ``numpy`` generator, so
callers with disjoint streams may run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .gaussian_belief import GaussianBelief

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def rng_stream(*keys: int) -> np.random.Generator:
    """Named, reproducible random stream keyed by a tuple of integers.

    Streams with distinct key tuples are statistically independent, which
    keeps results identical regardless of evaluation order across actions
    and observation laces.
    """
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


@dataclass(frozen=True)
class Pose:
    """Planar pose (meters, radians); ``theta`` always lies in (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)


@dataclass(frozen=True)
class Landmark:
    """Point landmark with a 1-based integer id."""

    id: int
    position: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.id < 1:
            raise ValueError(f"landmark ids are 1-based, got {self.id}")
        if self.position.shape != (2,):
            raise ValueError("landmark position must be a 2-vector")


def landmark_array(landmarks: list[Landmark]) -> np.ndarray:
    """Stack landmark positions into an (M, 2) array ordered by id."""
    if not landmarks:
        return np.zeros((0, 2))
    ids = [lm.id for lm in landmarks]
    if sorted(ids) != list(range(1, len(ids) + 1)):
        raise ValueError("landmark ids must be unique and contiguous from 1")
    out = np.zeros((len(ids), 2))
    for lm in landmarks:
        out[lm.id - 1] = lm.position
    return out


@dataclass(frozen=True)
class VisibilityConfig:
    """Boolean visibility vector over landmarks 1..M."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=bool))

    @property
    def n(self) -> int:
        return int(self.bits.sum())

    def visible_ids(self) -> tuple[int, ...]:
        """Strictly increasing ids of visible landmarks."""
        return tuple(int(j) + 1 for j in np.flatnonzero(self.bits))


@dataclass(frozen=True)
class Observation:
    """Relative-position measurements, one per visible landmark.

    ``ids`` are strictly increasing landmark ids; ``values[i]`` is the 2-D
    measurement of landmark ``ids[i]`` in the robot frame.
    """

    ids: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).reshape(len(self.ids), 2))
        if any(b <= a for a, b in zip(self.ids, self.ids[1:])):
            raise ValueError("observation entries must be sorted by landmark id")

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def empty(cls) -> "Observation":
        return cls(ids=(), values=np.zeros((0, 2)))


@dataclass(frozen=True)
class NoiseSpec:
    """Diagonal motion and observation noise covariances.

    ``motion_base`` is the 3x3 motion covariance per unit action length; the
    effective covariance of one step is ``||a||_2 * motion_base``. ``obs_cov``
    is the 2x2 measurement covariance. Diagonals must be nonnegative; belief
    updates additionally require strictly positive entries.
    """

    motion_base: np.ndarray
    obs_cov: np.ndarray

    def __post_init__(self) -> None:
        motion = np.asarray(self.motion_base, dtype=float)
        obs = np.asarray(self.obs_cov, dtype=float)
        for name, mat, dim in (("motion_base", motion, 3), ("obs_cov", obs, 2)):
            if mat.shape != (dim, dim):
                raise ValueError(f"{name} must be {dim}x{dim}")
            if not np.array_equal(mat, np.diag(np.diag(mat))):
                raise ValueError(f"{name} must be diagonal")
            if np.any(np.diag(mat) < 0.0):
                raise ValueError(f"{name} diagonal must be nonnegative")
        object.__setattr__(self, "motion_base", motion)
        object.__setattr__(self, "obs_cov", obs)

    @classmethod
    def from_diagonals(cls, motion_diag, obs_diag) -> "NoiseSpec":
        return cls(np.diag(np.asarray(motion_diag, dtype=float)),
                   np.diag(np.asarray(obs_diag, dtype=float)))

    def motion_cov(self, action) -> np.ndarray:
        """Motion covariance scaled by the action length."""
        return float(np.linalg.norm(action)) * self.motion_base


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def motion_mean(pose: Pose, action) -> Pose:
    """Noiseless motion: world-frame translation, heading from the displacement.

    A zero displacement leaves the heading unchanged.
    """
    ax, ay = float(action[0]), float(action[1])
    if ax == 0.0 and ay == 0.0:
        return pose
    return Pose(pose.x + ax, pose.y + ay, math.atan2(ay, ax))


def motion_matrices(pose_ignored: Pose, action) -> tuple[np.ndarray, np.ndarray]:
    """Linear form of the motion model: ``x' = P x + c + w``.

    The model is exactly linear in the previous pose for any fixed action:
    position is additive and the new heading depends only on the displacement
    (or carries over unchanged for a zero displacement).
    """
    ax, ay = float(action[0]), float(action[1])
    P = np.eye(3)
    c = np.zeros(3)
    if ax != 0.0 or ay != 0.0:
        P[2, 2] = 0.0
        c[:] = (ax, ay, math.atan2(ay, ax))
    return P, c


def sample_motion(pose: Pose, action, noise: NoiseSpec, rng: np.random.Generator) -> Pose:
    """Sample the next pose; noise covariance scales with ``||action||_2``."""
    mean = motion_mean(pose, action)
    std = np.sqrt(np.diag(noise.motion_cov(action)))
    w = rng.standard_normal(3) * std
    return Pose(mean.x + w[0], mean.y + w[1], mean.theta + w[2])


def obs_mean(pose_vec: np.ndarray, landmark_pos: np.ndarray) -> np.ndarray:
    """Measurement function: landmark position in the robot frame."""
    delta = np.asarray(landmark_pos, dtype=float) - pose_vec[:2]
    return rotation(pose_vec[2]).T @ delta


class RelativePositionModel:
    """Robot-frame relative-position observation model with Jacobians."""

    def evaluate(self, pose_vec: np.ndarray, landmark_pos: np.ndarray):
        """Return ``(h, H_pose, H_landmark)`` linearized at the inputs."""
        theta = pose_vec[2]
        rot_t = rotation(theta).T
        h = rot_t @ (np.asarray(landmark_pos, dtype=float) - pose_vec[:2])
        h_pose = np.zeros((2, 3))
        h_pose[:, :2] = -rot_t
        # d(R(theta)^T delta)/dtheta rotates the measurement by -90 degrees.
        h_pose[:, 2] = (h[1], -h[0])
        return h, h_pose, rot_t.copy()

    def initial_landmark(self, pose_vec: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Invert the measurement to seed a newly sighted landmark."""
        return pose_vec[:2] + rotation(pose_vec[2]) @ np.asarray(z, dtype=float)


REL_POS_MODEL = RelativePositionModel()


def visible_config(pose: Pose, landmark_positions: np.ndarray, r: float) -> VisibilityConfig:
    """Visibility bits: landmark j visible iff its distance to the pose is <= r.

    The boundary distance exactly equal to ``r`` counts as visible.
    """
    if r <= 0.0:
        raise ValueError("visibility radius must be positive")
    positions = np.asarray(landmark_positions, dtype=float).reshape(-1, 2)
    if positions.shape[0] == 0:
        return VisibilityConfig(np.zeros(0, dtype=bool))
    dist = np.linalg.norm(positions - pose.position, axis=1)
    return VisibilityConfig(dist <= r)


def sample_observation(
    pose: Pose,
    landmark_positions: np.ndarray,
    config: VisibilityConfig,
    noise: NoiseSpec,
    rng: np.random.Generator,
    ids: tuple[int, ...] | None = None,
) -> Observation:
    """Draw one noisy measurement per visible landmark, ordered by id.

    ``ids`` maps rows of ``landmark_positions`` to landmark ids when they are
    not simply 1..M (e.g. the registered subset of a belief).
    """
    positions = np.asarray(landmark_positions, dtype=float).reshape(-1, 2)
    if len(config.bits) != positions.shape[0]:
        raise ValueError("visibility config length does not match landmark count")
    if ids is None:
        ids = tuple(range(1, positions.shape[0] + 1))
    rows = np.flatnonzero(config.bits)
    if rows.size == 0:
        return Observation.empty()
    std = np.sqrt(np.diag(noise.obs_cov))
    pose_vec = pose.as_vector()
    values = np.zeros((rows.size, 2))
    for i, row in enumerate(rows):
        values[i] = obs_mean(pose_vec, positions[row]) + rng.standard_normal(2) * std
    return Observation(ids=tuple(ids[row] for row in rows), values=values)


def ml_observation(belief: "GaussianBelief", action, r: float) -> tuple[VisibilityConfig, Observation]:
    """Maximum-likelihood observation for one look-ahead step.

    Takes the mean of the predicted pose (the Gaussian argmax), decides
    visibility deterministically at that pose against the landmark means, and
    returns the noiseless measurements.
    """
    pose_mean = motion_mean(belief.latest_pose_mean(), action)
    landmark_means = belief.landmark_means()
    ids = belief.registered_landmark_ids()
    config = visible_config(pose_mean, landmark_means, r)
    rows = np.flatnonzero(config.bits)
    if rows.size == 0:
        return config, Observation.empty()
    pose_vec = pose_mean.as_vector()
    values = np.stack([obs_mean(pose_vec, landmark_means[row]) for row in rows])
    return config, Observation(ids=tuple(ids[row] for row in rows), values=values)
