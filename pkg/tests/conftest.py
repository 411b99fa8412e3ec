from __future__ import annotations

import numpy as np
import pytest

from beliefplan.gaussian_belief import GaussianBelief, SubsetMarginal, VariableIndex


def random_spd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    """Well-conditioned random SPD matrix."""
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n))


def make_subset(cov: np.ndarray, block_sizes) -> SubsetMarginal:
    return SubsetMarginal.from_cov(cov, tuple(block_sizes))


def make_belief(pose_mean, landmark_means: dict[int, np.ndarray] | None = None,
                cov: np.ndarray | None = None, cov_scale: float = 1e-3) -> GaussianBelief:
    """Belief with one pose plus landmarks, built directly from mean and covariance."""
    landmark_means = landmark_means or {}
    index = VariableIndex.initial()
    mean = list(np.asarray(pose_mean, dtype=float))
    for j in sorted(landmark_means):
        index = index.with_landmark(j)
        mean.extend(np.asarray(landmark_means[j], dtype=float))
    mean = np.asarray(mean)
    dim = index.dim
    if cov is None:
        cov = cov_scale * np.eye(dim)
    lam = np.linalg.inv(cov)
    lam = 0.5 * (lam + lam.T)
    return GaussianBelief(index=index, info_matrix=lam, info_vector=lam @ mean, mean=mean)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
