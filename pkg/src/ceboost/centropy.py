"""Gaussian causation entropy, per-batch entropy matrices, thresholding and
cross-batch aggregation.

The causation entropy of a candidate series w for a target series u given a
conditioning block V is, under a joint-Gaussian approximation,

    C = 1/2 [ ln det R_UV - ln det R_V - ln det R_UVW + ln det R_VW ]

computed from sample covariance matrices.  It equals half the log ratio of
the conditional variance of u given V to the conditional variance of u given
V and w, so it is nonnegative in exact arithmetic and measures the variance
of u explained by w beyond what V already explains.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

__all__ = [
    "CEMatrix",
    "BinaryCEM",
    "ThresholdPolicy",
    "AggregationState",
    "gaussian_causation_entropy",
    "causation_entropy_from_cov",
    "compute_cem",
    "threshold",
    "write_cem_csv",
]

# Relative jitter added to covariance diagonals before log-determinants.
JITTER_SCALE = 1e-10
# Pre-clamp negatives larger than this (times the variance scale) are flagged.
NEGATIVITY_TOLERANCE = 1e-6


def _logdet_psd(a, jitter):
    """log det of a symmetric PSD matrix, jittered; eigenvalue clip fallback."""
    k = a.shape[0]
    if k == 0:
        return 0.0
    m = a + jitter * np.eye(k)
    try:
        chol = np.linalg.cholesky(m)
        return 2.0 * np.sum(np.log(np.diag(chol)))
    except np.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(m)
        return float(np.sum(np.log(np.maximum(eig, jitter))))


def causation_entropy_from_cov(cov, u, v, w, clamp=True):
    """Entropy from a joint covariance matrix and index groups.

    ``cov`` is the covariance of the stacked vector containing the target u
    (one index), the conditioning block v (index sequence, may be empty) and
    the candidate w (one index).
    """
    cov = np.asarray(cov, dtype=np.float64)
    v = list(v)
    jitter = JITTER_SCALE * max(np.trace(cov) / cov.shape[0], np.finfo(float).tiny)
    iuv = [u] + v
    ivw = v + [w]
    iuvw = [u] + v + [w]
    c = 0.5 * (
        _logdet_psd(cov[np.ix_(iuv, iuv)], jitter)
        - _logdet_psd(cov[np.ix_(v, v)], jitter)
        - _logdet_psd(cov[np.ix_(iuvw, iuvw)], jitter)
        + _logdet_psd(cov[np.ix_(ivw, ivw)], jitter)
    )
    if not clamp:
        return c
    if c < -NEGATIVITY_TOLERANCE * max(cov[u, u], 1.0):
        warnings.warn(
            f"causation entropy {c:.3e} below the sampling-noise tolerance; "
            "covariance may be ill-conditioned",
            RuntimeWarning,
            stacklevel=2,
        )
    return max(c, 0.0)


def gaussian_causation_entropy(u, v, w, clamp=True):
    """Causation entropy of scalar series w for scalar series u given the
    (possibly empty) multivariate conditioning series v.

    All series must share the sample count.  Covariances are mean-subtracted
    with divisor ``samples - 1``.  All-constant series give zero entropy.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        v = np.empty((u.shape[0], 0))
    elif v.ndim == 1:
        v = v[:, None]
    n = u.shape[0]
    if w.shape[0] != n or v.shape[0] != n:
        raise ValueError("series must share the sample count")
    if n < v.shape[1] + 3:
        raise ValueError(
            f"need at least dim(v)+3 = {v.shape[1] + 3} samples, got {n}"
        )
    stacked = np.column_stack([u, v, w])
    if not np.all(np.isfinite(stacked)):
        raise ValueError("series contain non-finite values")
    cov = np.cov(stacked, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    k = v.shape[1]
    return causation_entropy_from_cov(cov, 0, list(range(1, k + 1)), k + 1, clamp=clamp)


@dataclass(frozen=True)
class CEMatrix:
    """Per-batch causation entropies (nats), one row per modeled equation.

    Entries excluded by the library's row masks are zero.  ``n_samples`` is
    the regression sample count behind the estimates, used for quantile
    calibration of the detection threshold.
    """

    values: np.ndarray
    batch_index: int = 0
    n_samples: int = 0
    k_batches: int = 1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("causation entropy matrix has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class BinaryCEM:
    """Thresholded 0/1 pattern of a causation entropy matrix."""

    pattern: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pattern, dtype=bool)
        p.setflags(write=False)
        object.__setattr__(self, "pattern", p)

    def __eq__(self, other):
        if not isinstance(other, BinaryCEM):
            return NotImplemented
        return self.pattern.shape == other.pattern.shape and bool(
            np.all(self.pattern == other.pattern)
        )

    def any(self):
        return bool(self.pattern.any())

    def count(self):
        return int(self.pattern.sum())

    def entries(self):
        return [tuple(ij) for ij in np.argwhere(self.pattern)]


@dataclass(frozen=True)
class ThresholdPolicy:
    """Rule turning an entropy matrix into a 0/1 candidate pattern.

    ``relative_row`` keeps entries above ``alpha`` times their row maximum;
    ``absolute`` keeps entries above a floor; ``hybrid`` (default) requires
    both.  When ``c_abs`` is None the floor is ``c_scale`` times the median
    of the row's masked entries, making the rule scale-free across rows.

    On top of the hybrid rule a chi-square calibrated guard bounds sampling
    noise: with no causal link, 2n times a sample entropy is approximately a
    1-dof chi-square draw, and the mean over K batches scales like
    chi-square with K dofs.  The guard quantile is ``detect_q`` for the
    single-batch detection test (strict, since one firing entry anywhere
    declares a switch) and ``agg_q`` during aggregation (looser; the
    D-batch stability criterion provides the error control there).  Without
    the guard, the heavy chi-square tail makes the median-multiple floor
    fire spuriously on a few percent of no-switch batches.
    """

    mode: str = "hybrid"
    alpha: float = 0.25
    c_abs: float | None = None
    c_scale: float = 5.0
    detect_q: float = 1e-8
    agg_q: float = 1e-2

    def __post_init__(self):
        if self.mode not in ("absolute", "relative_row", "hybrid"):
            raise ValueError(f"unknown threshold mode {self.mode!r}")
        if self.mode in ("relative_row", "hybrid") and not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.c_abs is not None and self.c_abs < 0:
            raise ValueError("c_abs must be nonnegative")

    def _row_floor(self, row_values, mask):
        if self.c_abs is not None:
            return self.c_abs
        vals = row_values[mask]
        return self.c_scale * float(np.median(vals)) if vals.size else np.inf

    def noise_guard(self, n_samples, k_batches=1, detect=False):
        """Chi-square quantile of the no-link sampling noise of an entry
        aggregated over ``k_batches`` with ``n_samples`` total points."""
        if n_samples <= 0:
            return 0.0
        q = self.detect_q if detect else self.agg_q
        return chi2.ppf(1.0 - q, df=k_batches) / (2.0 * n_samples)

    def binary(self, values, masks, n_samples=0, k_batches=1, detect=False):
        values = np.asarray(values, dtype=np.float64)
        masks = np.asarray(masks, dtype=bool)
        out = np.zeros_like(values, dtype=bool)
        guard = self.noise_guard(n_samples, k_batches, detect)
        for i in range(values.shape[0]):
            mask = masks[i]
            if not mask.any():
                continue
            row = values[i]
            keep = mask.copy()
            if self.mode in ("relative_row", "hybrid"):
                rowmax = row[mask].max()
                keep &= row > self.alpha * rowmax
            if self.mode in ("absolute", "hybrid"):
                keep &= row > self._row_floor(row, mask)
            if guard > 0.0:
                keep &= row > guard
            out[i] = keep
        return BinaryCEM(pattern=out)


def threshold(cem, policy, masks=None, detect=False):
    """Apply a threshold policy to a causation entropy matrix."""
    if masks is None:
        masks = np.ones_like(cem.values, dtype=bool)
    return policy.binary(cem.values, masks, n_samples=cem.n_samples,
                         k_batches=cem.k_batches, detect=detect)


def compute_cem(residuals, phi, masks, batch_index=0):
    """Causation entropy of every masked (equation, candidate) pair.

    For equation row i, the conditioning block of candidate n is the row's
    masked candidate set minus n.  Candidates with (numerically) zero
    variance, such as the constant function, carry no entropy and get zero.
    """
    residuals = np.asarray(residuals, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    if residuals.shape[0] != phi.shape[0]:
        raise ValueError("residuals and library values must share the sample count")
    n_eq, n_fn = masks.shape
    if residuals.shape[1] != n_eq or phi.shape[1] != n_fn:
        raise ValueError("mask shape does not match residual/library dimensions")
    n = residuals.shape[0]
    values = np.zeros((n_eq, n_fn))
    for i in range(n_eq):
        cand = np.flatnonzero(masks[i])
        block = np.column_stack([residuals[:, i], phi[:, cand]])
        live = np.std(block, axis=0) > 0.0
        cov = np.cov(block, rowvar=False, ddof=1)
        jitter = JITTER_SCALE * max(np.trace(cov) / cov.shape[0], np.finfo(float).tiny)
        # Shared pieces: ln det over the full block and over all candidates.
        all_live = np.flatnonzero(live)
        cand_live = all_live[all_live > 0]
        ld_uvw = _logdet_psd(cov[np.ix_(all_live, all_live)], jitter)
        ld_vw = _logdet_psd(cov[np.ix_(cand_live, cand_live)], jitter)
        for local, n_global in enumerate(cand):
            col = local + 1
            if not live[col] or not live[0]:
                continue  # constant candidate or degenerate residual: no entropy
            v_idx = cand_live[cand_live != col]
            iuv = np.concatenate(([0], v_idx))
            ld_uv = _logdet_psd(cov[np.ix_(iuv, iuv)], jitter)
            ld_v = _logdet_psd(cov[np.ix_(v_idx, v_idx)], jitter)
            c = 0.5 * (ld_uv - ld_v - ld_uvw + ld_vw)
            if c < -NEGATIVITY_TOLERANCE * max(cov[0, 0], 1.0):
                warnings.warn(
                    f"entropy entry ({i}, {n_global}) = {c:.3e} strongly negative; "
                    "near-singular covariance",
                    RuntimeWarning,
                    stacklevel=2,
                )
            values[i, n_global] = max(c, 0.0)
    return CEMatrix(values=values, batch_index=batch_index, n_samples=n)


@dataclass
class AggregationState:
    """Running mean of per-batch entropy matrices and the stability counter.

    Feed one matrix per batch with :meth:`update`; the state is complete once
    the thresholded mean pattern is unchanged for ``D`` consecutive batches.
    """

    policy: ThresholdPolicy
    masks: np.ndarray
    D: int
    running_sum: np.ndarray | None = None
    K: int = 0
    n_samples: int = 0
    last_pattern: BinaryCEM | None = None
    d: int = 0
    complete: bool = False
    row_first_stable: dict = field(default_factory=dict)
    _row_patterns: list = field(default_factory=list)
    _row_d: np.ndarray | None = None

    def aggregated(self):
        if self.K == 0:
            raise ValueError("no batches aggregated yet")
        return CEMatrix(values=self.running_sum / self.K, n_samples=self.n_samples)

    def update(self, cem):
        """Add one batch's matrix; returns the stable pattern or None."""
        if self.complete:
            raise RuntimeError("aggregation already complete")
        if self.running_sum is None:
            self.running_sum = np.array(cem.values, dtype=np.float64)
            self._row_d = np.zeros(cem.values.shape[0], dtype=int)
        else:
            if cem.values.shape != self.running_sum.shape:
                raise ValueError("matrix shape changed during aggregation")
            self.running_sum = self.running_sum + cem.values
        self.K += 1
        self.n_samples += cem.n_samples
        pattern = self.policy.binary(self.running_sum / self.K, self.masks)
        if self.last_pattern is not None and pattern == self.last_pattern:
            self.d += 1
        else:
            self.d = 1
        # Per-row stability bookkeeping (reported, not load-bearing).
        rows_equal = (
            np.all(pattern.pattern == self.last_pattern.pattern, axis=1)
            if self.last_pattern is not None
            else np.zeros(pattern.pattern.shape[0], dtype=bool)
        )
        self._row_d = np.where(rows_equal, self._row_d + 1, 1)
        for i, di in enumerate(self._row_d):
            if di >= self.D and i not in self.row_first_stable:
                self.row_first_stable[i] = self.K - self.D + 1
        self.last_pattern = pattern
        if self.d >= self.D:
            self.complete = True
            return pattern
        return None

    @property
    def k_first(self):
        """Batch at which the current pattern first appeared."""
        return self.K - self.d + 1


def write_cem_csv(path, cem, library, pattern=None, equation_names=None):
    """Dump a CEM (and optionally its binary pattern) as labeled CSV."""
    names = library.names()
    n_eq = cem.values.shape[0]
    if equation_names is None:
        equation_names = [f"d{library.state_names[i]}/dt" for i in range(n_eq)]
    with open(path, "w") as fh:
        fh.write("," + ",".join(names) + "\n")
        for i in range(n_eq):
            row = ",".join(f"{v:.8e}" for v in cem.values[i])
            fh.write(f"{equation_names[i]},{row}\n")
        if pattern is not None:
            fh.write("# binary pattern\n")
            for i in range(n_eq):
                row = ",".join(str(int(v)) for v in pattern.pattern[i])
                fh.write(f"{equation_names[i]},{row}\n")
