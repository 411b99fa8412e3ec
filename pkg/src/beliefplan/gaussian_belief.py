"""Joint Gaussian belief over the pose trajectory and landmark map.

The belief is kept in information form (Lambda, eta) over every pose the
robot has taken plus every landmark it has sighted; past poses are never
marginalized out. Updates add linearized motion/observation factors and
re-solve the mean once (a single Gauss-Newton step at the current mean), so
with linear models the filter is exactly the batch least-squares solution.

The module also provides the D-optimality machinery used by the planners:
the marginal over all landmarks plus the current pose, its determinant root,
and a level-indexed family of deterministic determinant-root bounds that
tightens monotonically and is exact at the top level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .sim_world import (
    NoiseSpec,
    Observation,
    Pose,
    REL_POS_MODEL,
    VisibilityConfig,
    motion_matrices,
)

_SYM_TOL = 1e-12


class BeliefError(RuntimeError):
    """Structural or numerical failure in a belief operation."""


@dataclass(frozen=True)
class VariableIndex:
    """Ordered block registry: pose times get 3-wide blocks, landmarks 2-wide.

    Blocks are contiguous in insertion order (poses by ascending time
    interleaved with landmarks by first sighting) and cover ``[0, dim)``.
    """

    entries: tuple[tuple[str, int, int, int], ...]  # (kind, key, offset, width)

    @classmethod
    def initial(cls) -> "VariableIndex":
        return cls(entries=(("pose", 0, 0, 3),))

    @property
    def dim(self) -> int:
        if not self.entries:
            return 0
        _, _, off, width = self.entries[-1]
        return off + width

    def _extended(self, kind: str, key: int, width: int) -> "VariableIndex":
        return VariableIndex(entries=self.entries + ((kind, key, self.dim, width),))

    def with_pose(self, t: int) -> "VariableIndex":
        if t != self.latest_pose_time + 1:
            raise BeliefError(f"pose times must be appended in order, got {t}")
        return self._extended("pose", t, 3)

    def with_landmark(self, j: int) -> "VariableIndex":
        if j in self.landmark_ids:
            raise BeliefError(f"landmark {j} already registered")
        return self._extended("lm", j, 2)

    def _slice(self, kind: str, key: int) -> slice:
        for k, ky, off, width in self.entries:
            if k == kind and ky == key:
                return slice(off, off + width)
        raise BeliefError(f"{kind} {key} not registered")

    def pose_slice(self, t: int) -> slice:
        return self._slice("pose", t)

    def landmark_slice(self, j: int) -> slice:
        return self._slice("lm", j)

    @property
    def pose_times(self) -> tuple[int, ...]:
        return tuple(ky for k, ky, _, _ in self.entries if k == "pose")

    @property
    def landmark_ids(self) -> tuple[int, ...]:
        return tuple(ky for k, ky, _, _ in self.entries if k == "lm")

    @property
    def latest_pose_time(self) -> int:
        return self.pose_times[-1]


class GaussianBelief:
    """Immutable information-form Gaussian; operations return new beliefs."""

    def __init__(
        self,
        index: VariableIndex,
        info_matrix: np.ndarray,
        info_vector: np.ndarray,
        mean: np.ndarray | None = None,
        linearization_point: np.ndarray | None = None,
    ):
        info_matrix = np.asarray(info_matrix, dtype=float)
        scale = max(1.0, float(np.abs(info_matrix).max(initial=0.0)))
        if float(np.abs(info_matrix - info_matrix.T).max(initial=0.0)) > _SYM_TOL * scale:
            raise BeliefError("information matrix is not symmetric")
        self.index = index
        self.info_matrix = 0.5 * (info_matrix + info_matrix.T)
        self.info_vector = np.asarray(info_vector, dtype=float)
        self._mean = mean
        self.linearization_point = linearization_point if linearization_point is not None else mean

    @property
    def dim(self) -> int:
        return self.index.dim

    def _cho(self):
        try:
            return scipy.linalg.cho_factor(self.info_matrix, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise BeliefError(f"information matrix not positive definite: {exc}") from exc

    @property
    def mean(self) -> np.ndarray:
        if self._mean is None:
            self._mean = scipy.linalg.cho_solve(self._cho(), self.info_vector)
        return self._mean

    def covariance(self) -> np.ndarray:
        return scipy.linalg.cho_solve(self._cho(), np.eye(self.dim))

    def latest_pose_mean(self) -> Pose:
        mu = self.mean[self.index.pose_slice(self.index.latest_pose_time)]
        return Pose(mu[0], mu[1], mu[2])

    def landmark_means(self) -> np.ndarray:
        mu = self.mean
        ids = self.registered_landmark_ids()
        out = np.zeros((len(ids), 2))
        for row, j in enumerate(ids):
            out[row] = mu[self.index.landmark_slice(j)]
        return out

    def registered_landmark_ids(self) -> tuple[int, ...]:
        """Landmark ids in ascending order (the row order of ``landmark_means``)."""
        return tuple(sorted(self.index.landmark_ids))


def init_prior(mu0, sigma0) -> GaussianBelief:
    """Belief over the initial pose only, ``Lambda = sigma0^-1``."""
    mu0 = np.asarray(mu0, dtype=float).reshape(3)
    sigma0 = np.asarray(sigma0, dtype=float).reshape(3, 3)
    try:
        cho = scipy.linalg.cho_factor(sigma0, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise BeliefError(f"prior covariance must be positive definite: {exc}") from exc
    lam = scipy.linalg.cho_solve(cho, np.eye(3))
    return GaussianBelief(
        index=VariableIndex.initial(),
        info_matrix=lam,
        info_vector=lam @ mu0,
        mean=mu0.copy(),
    )


def _motion_noise_info(noise: NoiseSpec, action) -> np.ndarray:
    cov = noise.motion_cov(action)
    # Zero-length actions would make the scaled covariance singular.
    diag = np.maximum(np.diag(cov), 1e-12)
    if np.any(diag <= 0.0):
        raise BeliefError("motion noise covariance is singular")
    return np.diag(1.0 / diag)


def predict(belief: GaussianBelief, action, noise: NoiseSpec) -> GaussianBelief:
    """Append the next pose and add the motion factor between the last two poses."""
    t_new = belief.index.latest_pose_time + 1
    index = belief.index.with_pose(t_new)
    d_old, d_new = belief.dim, index.dim
    lam = np.zeros((d_new, d_new))
    lam[:d_old, :d_old] = belief.info_matrix
    eta = np.zeros(d_new)
    eta[:d_old] = belief.info_vector

    P, c = motion_matrices(belief.latest_pose_mean(), action)
    w_inf = _motion_noise_info(noise, action)
    s_prev = belief.index.pose_slice(t_new - 1)
    s_new = slice(d_old, d_old + 3)
    # Factor rows A = [-P, I] over (x_prev, x_new) with rhs c.
    lam[s_prev, s_prev] += P.T @ w_inf @ P
    lam[s_new, s_new] += w_inf
    lam[s_prev, s_new] += -P.T @ w_inf
    lam[s_new, s_prev] += -w_inf @ P
    eta[s_prev] += -P.T @ w_inf @ c
    eta[s_new] += w_inf @ c

    mean = np.zeros(d_new)
    mean[:d_old] = belief.mean
    mean[s_new] = P @ belief.mean[s_prev] + c
    return GaussianBelief(index=index, info_matrix=lam, info_vector=eta, mean=mean)


def update(
    belief: GaussianBelief,
    config: VisibilityConfig,
    obs: Observation,
    noise: NoiseSpec,
    *,
    allow_new_landmarks: bool = False,
    model=REL_POS_MODEL,
) -> GaussianBelief:
    """Add one linearized observation factor per entry and re-solve the mean.

    During planning every observed landmark must already be registered (the
    planner never reveals new landmarks); ``allow_new_landmarks=True`` is for
    the preliminary mapping session and path execution, where first sightings
    register the landmark with an inverse-measurement initial estimate.
    """
    if len(obs) != config.n:
        raise BeliefError("observation entry count does not match visibility config")
    if len(obs) == 0:
        return belief

    obs_diag = np.diag(noise.obs_cov)
    if np.any(obs_diag <= 0.0):
        raise BeliefError("observation noise covariance is singular")
    v_inf = np.diag(1.0 / obs_diag)

    index = belief.index
    t_cur = index.latest_pose_time
    pose_hat = belief.mean[index.pose_slice(t_cur)]
    new_landmarks: dict[int, np.ndarray] = {}
    for i, j in enumerate(obs.ids):
        if j not in index.landmark_ids and j not in new_landmarks:
            if not allow_new_landmarks:
                raise BeliefError(f"observation for unregistered landmark {j} during planning")
            new_landmarks[j] = model.initial_landmark(pose_hat, obs.values[i])
            index = index.with_landmark(j)

    d_old, d_new = belief.dim, index.dim
    lam = np.zeros((d_new, d_new))
    lam[:d_old, :d_old] = belief.info_matrix
    eta = np.zeros(d_new)
    eta[:d_old] = belief.info_vector
    lin = np.zeros(d_new)
    lin[:d_old] = belief.mean
    for j, pos in new_landmarks.items():
        lin[index.landmark_slice(j)] = pos

    s_pose = index.pose_slice(t_cur)
    for i, j in enumerate(obs.ids):
        s_lm = index.landmark_slice(j)
        h, h_pose, h_lm = model.evaluate(lin[s_pose], lin[s_lm])
        rhs = obs.values[i] - h + h_pose @ lin[s_pose] + h_lm @ lin[s_lm]
        lam[s_pose, s_pose] += h_pose.T @ v_inf @ h_pose
        lam[s_pose, s_lm] += h_pose.T @ v_inf @ h_lm
        lam[s_lm, s_pose] += h_lm.T @ v_inf @ h_pose
        lam[s_lm, s_lm] += h_lm.T @ v_inf @ h_lm
        eta[s_pose] += h_pose.T @ v_inf @ rhs
        eta[s_lm] += h_lm.T @ v_inf @ rhs

    return GaussianBelief(index=index, info_matrix=lam, info_vector=eta, linearization_point=lin)


@dataclass(frozen=True)
class SubsetMarginal:
    """Marginal over all landmarks plus the current pose.

    ``cov`` and ``info`` are mutually inverse; ``block_sizes`` records the
    per-variable block widths (landmarks first, pose last) that the
    determinant-bound partitions respect.
    """

    cov: np.ndarray
    info: np.ndarray
    block_sizes: tuple[int, ...]

    @property
    def d(self) -> int:
        return int(self.cov.shape[0])

    @classmethod
    def from_cov(cls, cov, block_sizes) -> "SubsetMarginal":
        cov = np.asarray(cov, dtype=float)
        info = scipy.linalg.cho_solve(scipy.linalg.cho_factor(cov, lower=True), np.eye(cov.shape[0]))
        return cls(cov=cov, info=0.5 * (info + info.T), block_sizes=tuple(block_sizes))


def subset_marginal(belief: GaussianBelief) -> SubsetMarginal:
    """Covariance and information of (all landmarks, latest pose).

    The information matrix of the subset is the Schur complement of the full
    information matrix onto the subset; the covariance is its inverse.
    """
    index = belief.index
    ids = sorted(index.landmark_ids)
    sel: list[int] = []
    block_sizes: list[int] = []
    for j in ids:
        s = index.landmark_slice(j)
        sel.extend(range(s.start, s.stop))
        block_sizes.append(2)
    s = index.pose_slice(index.latest_pose_time)
    sel.extend(range(s.start, s.stop))
    block_sizes.append(3)

    sel_set = set(sel)
    rest = [i for i in range(belief.dim) if i not in sel_set]
    lam = belief.info_matrix
    lam_ss = lam[np.ix_(sel, sel)]
    if rest:
        lam_sr = lam[np.ix_(sel, rest)]
        lam_rr = lam[np.ix_(rest, rest)]
        try:
            cho_rr = scipy.linalg.cho_factor(lam_rr, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise BeliefError(f"subset marginal: singular complement block: {exc}") from exc
        info = lam_ss - lam_sr @ scipy.linalg.cho_solve(cho_rr, lam_sr.T)
    else:
        info = lam_ss
    info = 0.5 * (info + info.T)
    try:
        cho = scipy.linalg.cho_factor(info, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise BeliefError(f"subset information not positive definite: {exc}") from exc
    cov = scipy.linalg.cho_solve(cho, np.eye(info.shape[0]))
    return SubsetMarginal(cov=0.5 * (cov + cov.T), info=info, block_sizes=tuple(block_sizes))


def _logdet_spd(mat: np.ndarray) -> float:
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise BeliefError(f"matrix not positive definite: {exc}") from exc
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _logdet_spd_window(mat: np.ndarray, a: int, b: int) -> float:
    """Log-determinant of the principal submatrix ``mat[a:b, a:b]``.

    Closed forms for the 1x1..3x3 windows dominating the bound evaluation;
    principal submatrices of an SPD matrix are SPD, so a nonpositive
    determinant means the input itself was invalid.
    """
    n = b - a
    if n == 1:
        det = float(mat[a, a])
    elif n == 2:
        det = float(mat[a, a] * mat[a + 1, a + 1] - mat[a, a + 1] * mat[a + 1, a])
    elif n == 3:
        m00, m01, m02 = mat[a, a], mat[a, a + 1], mat[a, a + 2]
        m10, m11, m12 = mat[a + 1, a], mat[a + 1, a + 1], mat[a + 1, a + 2]
        m20, m21, m22 = mat[a + 2, a], mat[a + 2, a + 1], mat[a + 2, a + 2]
        det = float(
            m00 * (m11 * m22 - m12 * m21)
            - m01 * (m10 * m22 - m12 * m20)
            + m02 * (m10 * m21 - m11 * m20)
        )
    elif n <= 12:
        # Scalar Cholesky beats the array-dispatch overhead at these sizes.
        rows = mat[a:b, a:b].tolist()
        chol = [[0.0] * n for _ in range(n)]
        log_det = 0.0
        for i in range(n):
            row_i = chol[i]
            for j in range(i + 1):
                row_j = chol[j]
                s = rows[i][j]
                for k in range(j):
                    s -= row_i[k] * row_j[k]
                if i == j:
                    if s <= 0.0:
                        raise BeliefError("matrix not positive definite")
                    row_i[i] = math.sqrt(s)
                    log_det += math.log(s)
                else:
                    row_i[j] = s / row_j[j]
        return log_det
    else:
        return _logdet_spd(mat[a:b, a:b])
    if det <= 0.0:
        raise BeliefError("matrix not positive definite")
    return math.log(det)


def det_root(sub: SubsetMarginal) -> float:
    """d-th root of det(cov), via triangular factorization in log space."""
    return math.exp(_logdet_spd(sub.cov) / sub.d)


@dataclass(frozen=True)
class DetBoundPair:
    """Deterministic lower/upper bounds on the covariance determinant root.

    On exactly tight inputs (block-diagonal matrices) the two ends may differ
    by a rounding ulp in either direction; the pair is stored ordered and
    only a beyond-roundoff inversion is an error.
    """

    lower: float
    upper: float
    level: int

    def __post_init__(self) -> None:
        if self.lower > self.upper * (1.0 + 1e-9):
            raise BeliefError(f"determinant bounds inverted: {self.lower} > {self.upper}")
        if self.lower > self.upper:
            ordered = (self.upper, self.lower)
            object.__setattr__(self, "lower", ordered[0])
            object.__setattr__(self, "upper", ordered[1])


def max_level(n_blocks: int) -> int:
    """Top simplification level: the bounds become exact once one group remains."""
    if n_blocks < 1:
        raise ValueError("need at least one block")
    return max(0, math.ceil(math.log2(n_blocks)))


def _block_slices(block_sizes: tuple[int, ...]) -> list[slice]:
    slices = []
    off = 0
    for width in block_sizes:
        slices.append(slice(off, off + width))
        off += width
    return slices


def _partition(n_blocks: int, level: int) -> list[list[int]]:
    group = 2**level
    return [list(range(i, min(i + group, n_blocks))) for i in range(0, n_blocks, group)]


def det_root_bounds(sub: SubsetMarginal, level: int) -> DetBoundPair:
    """Level-indexed determinant-root bounds via Fischer's inequality.

    Level ``s`` partitions the variable blocks into groups of ``2**s``
    consecutive blocks. The product of group determinants of the covariance
    bounds det(cov) from above; the analogous product on the subset
    information matrix bounds it from below. Coarser partitions are tighter,
    so the interval shrinks monotonically with the level and collapses to the
    exact determinant root at the top level.
    """
    n_blocks = len(sub.block_sizes)
    top = max_level(n_blocks)
    if not 0 <= level <= top:
        raise ValueError(f"level must be in [0, {top}], got {level}")
    groups = _partition(n_blocks, level)
    if len(groups) == 1:
        exact = det_root(sub)
        return DetBoundPair(lower=exact, upper=exact, level=level)
    slices = _block_slices(sub.block_sizes)
    log_upper = 0.0
    log_lower = 0.0
    for grp in groups:
        # Groups merge consecutive blocks, so each is one contiguous window.
        a, b = slices[grp[0]].start, slices[grp[-1]].stop
        log_upper += _logdet_spd_window(sub.cov, a, b)
        log_lower -= _logdet_spd_window(sub.info, a, b)
    return DetBoundPair(
        lower=math.exp(log_lower / sub.d),
        upper=math.exp(log_upper / sub.d),
        level=level,
    )


def dopt_gain(prior_sub: SubsetMarginal, post_sub: SubsetMarginal) -> float:
    """D-optimality information gain between consecutive subset marginals.

    Positive when the posterior covariance shrank. Sampled observation
    sequences can yield negative gains; only the universal upper limit
    (gain cannot exceed the prior determinant root) is enforced.
    """
    if prior_sub.d != post_sub.d:
        raise BeliefError(f"subset dimension mismatch: {prior_sub.d} vs {post_sub.d}")
    prior_root = det_root(prior_sub)
    gain = prior_root - det_root(post_sub)
    if gain > prior_root * (1.0 + 1e-9):
        raise BeliefError("information gain exceeds the prior determinant root")
    return gain


def dopt_gain_bounds(
    prior_sub: SubsetMarginal, post_sub: SubsetMarginal, level: int
) -> tuple[float, float]:
    """Sandwich on the D-optimality gain at one simplification level."""
    if prior_sub.d != post_sub.d:
        raise BeliefError(f"subset dimension mismatch: {prior_sub.d} vs {post_sub.d}")
    prior_b = det_root_bounds(prior_sub, level)
    post_b = det_root_bounds(post_sub, level)
    return prior_b.lower - post_b.upper, prior_b.upper - post_b.lower


def entropy(sub: SubsetMarginal) -> float:
    """Differential entropy of the Gaussian marginal (closed form)."""
    return 0.5 * sub.d * (1.0 + math.log(2.0 * math.pi)) + 0.5 * _logdet_spd(sub.cov)


def pose_marginal(belief: GaussianBelief, t: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Mean and 3x3 covariance of one pose (latest by default)."""
    if t is None:
        t = belief.index.latest_pose_time
    s = belief.index.pose_slice(t)
    rhs = np.zeros((belief.dim, 3))
    rhs[s.start : s.stop, :] = np.eye(3)
    cols = scipy.linalg.cho_solve(belief._cho(), rhs)
    cov = cols[s.start : s.stop, :]
    return belief.mean[s].copy(), 0.5 * (cov + cov.T)


def predicted_joint_marginal(predicted: GaussianBelief) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of (latest pose, landmarks in id order)."""
    index = predicted.index
    sel: list[int] = []
    s = index.pose_slice(index.latest_pose_time)
    sel.extend(range(s.start, s.stop))
    for j in sorted(index.landmark_ids):
        s = index.landmark_slice(j)
        sel.extend(range(s.start, s.stop))
    rhs = np.zeros((predicted.dim, len(sel)))
    rhs[sel, np.arange(len(sel))] = 1.0
    cols = scipy.linalg.cho_solve(predicted._cho(), rhs)
    cov = cols[sel, :]
    return predicted.mean[sel], 0.5 * (cov + cov.T)


def sample_from_predicted(
    predicted: GaussianBelief, rng: np.random.Generator
) -> tuple[Pose, np.ndarray]:
    """Draw (latest pose, landmark positions) jointly from a predicted belief."""
    mean, cov = predicted_joint_marginal(predicted)
    try:
        chol = np.linalg.cholesky(cov + 1e-15 * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise BeliefError(f"predictive marginal not positive definite: {exc}") from exc
    sample = mean + chol @ rng.standard_normal(mean.shape[0])
    pose = Pose(sample[0], sample[1], sample[2])
    return pose, sample[3:].reshape(-1, 2)


def sample_next_state(
    belief: GaussianBelief, action, noise: NoiseSpec, rng: np.random.Generator
) -> tuple[Pose, np.ndarray]:
    """Draw (next pose, landmark positions) from the predictive joint marginal."""
    return sample_from_predicted(predict(belief, action, noise), rng)
