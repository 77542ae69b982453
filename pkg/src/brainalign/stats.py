"""The RSA statistical pipeline: Spearman scores, bootstrap confidence
intervals, permutation tests on condition differences, Benjamini-Hochberg
FDR, rank-based partial correlation, split-half noise ceilings, and
paired Cohen's d.

Conventions shared by everything here:

* Ties get average (fractional) ranks.
* Permutation p-values use the (b + 1) / (N + 1) estimator, so the
  smallest representable p at N permutations is 1 / (N + 1).
* Bootstrap CIs are percentile intervals with linear interpolation.
* Every stochastic routine is deterministic given its seed and does not
  depend on thread count (there is none).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, UndefinedStatisticError
from .rdm import upper_triangle

log = logging.getLogger(__name__)

_BOOT_CHUNK = 256
_PERM_CHUNK = 128


# ---------------------------------------------------------------------------
# Ranks and Spearman
# ---------------------------------------------------------------------------

def rank_rows(m: np.ndarray) -> np.ndarray:
    """Average (fractional) 1-based ranks along axis 1, vectorized over rows."""
    m = np.asarray(m, dtype=np.float64)
    rows, n = m.shape
    order = np.argsort(m, axis=1, kind="stable")
    s = np.take_along_axis(m, order, axis=1)
    pos = np.broadcast_to(np.arange(n), (rows, n))
    new_group = np.ones((rows, n), dtype=bool)
    new_group[:, 1:] = s[:, 1:] != s[:, :-1]
    start = np.maximum.accumulate(np.where(new_group, pos, 0), axis=1)
    # end of each tie group = (next group's start) - 1, found from the right
    nxt = np.where(new_group, pos, n)
    nxt = np.concatenate([nxt[:, 1:], np.full((rows, 1), n)], axis=1)
    end = np.flip(np.minimum.accumulate(np.flip(nxt, axis=1), axis=1), axis=1) - 1
    avg = (start + end) / 2.0 + 1.0
    ranks = np.empty_like(avg)
    np.put_along_axis(ranks, order, avg, axis=1)
    return ranks


def rank_average(x) -> np.ndarray:
    """Average 1-based ranks of a single vector."""
    return rank_rows(np.asarray(x, dtype=np.float64)[None, :])[0]


def _check_vector_pair(x, y, min_len=3):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ConfigurationError(f"vectors must be 1D and matched, got {x.shape}/{y.shape}")
    if x.shape[0] < min_len:
        raise ConfigurationError(f"need at least {min_len} entries, got {x.shape[0]}")
    return x, y


def _zranks(x) -> np.ndarray:
    """Centered, unit-norm ranks: corr(x, y) == zranks(x) @ zranks(y)."""
    r = rank_average(x)
    r -= r.mean()
    norm = np.sqrt(r @ r)
    if norm == 0:
        raise UndefinedStatisticError("correlation undefined for a constant vector")
    return r / norm


def spearman(x, y) -> float:
    """Spearman's rho: Pearson correlation of average-tie ranks."""
    x, y = _check_vector_pair(x, y)
    return float(_zranks(x) @ _zranks(y))


# ---------------------------------------------------------------------------
# Bootstrap confidence interval
# ---------------------------------------------------------------------------

def _pearson_rows(a, b):
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    num = np.einsum("ij,ij->i", a, b)
    den = np.sqrt(np.einsum("ij,ij->i", a, a) * np.einsum("ij,ij->i", b, b))
    return num / den


def bootstrap_ci(model_vec, brain_vec, n_boot: int = 10000, level: float = 0.95,
                 seed: int = 0):
    """Percentile bootstrap CI for the Spearman score of two matched
    upper-triangle vectors.

    Resamples pair indices with replacement and recomputes Spearman each
    time. Degenerate resamples (either vector constant) are skipped and
    redrawn; more than 1% of n_boot degenerates is an error. Returns
    (lo, hi), deterministic per seed.
    """
    x, y = _check_vector_pair(model_vec, brain_vec)
    if not 0 < level < 1:
        raise ConfigurationError(f"level must be in (0,1), got {level}")
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    cap = max(1, int(0.01 * n_boot))
    rhos = np.empty(n_boot)
    filled = degenerate = 0
    while filled < n_boot:
        idx = rng.integers(0, n, size=(_BOOT_CHUNK, n))
        xb, yb = x[idx], y[idx]
        ok = (np.ptp(xb, axis=1) > 0) & (np.ptp(yb, axis=1) > 0)
        degenerate += int(np.count_nonzero(~ok))
        if degenerate > cap:
            raise UndefinedStatisticError(
                f"more than {cap} degenerate bootstrap resamples; data too close to constant")
        take = min(int(np.count_nonzero(ok)), n_boot - filled)
        if take:
            r = _pearson_rows(rank_rows(xb[ok][:take]), rank_rows(yb[ok][:take]))
            rhos[filled : filled + take] = r
            filled += take
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(rhos, [100 * alpha, 100 * (1 - alpha)], method="linear")
    return float(lo), float(hi)


@dataclass
class RsaResult:
    """One model-vs-brain comparison: Spearman rho with its bootstrap CI."""

    rho: float
    ci_low: float
    ci_high: float
    n_pairs: int

    def __post_init__(self):
        if self.ci_low > self.ci_high:
            raise ConfigurationError(
                f"ci_low {self.ci_low} > ci_high {self.ci_high}")


def compute_rsa(model_vec, brain_vec, n_boot: int = 10000, level: float = 0.95,
                seed: int = 0) -> RsaResult:
    rho = spearman(model_vec, brain_vec)
    lo, hi = bootstrap_ci(model_vec, brain_vec, n_boot=n_boot, level=level, seed=seed)
    return RsaResult(rho=rho, ci_low=lo, ci_high=hi, n_pairs=len(np.asarray(model_vec)))


# ---------------------------------------------------------------------------
# Permutation test
# ---------------------------------------------------------------------------

@dataclass
class PairwiseTest:
    """Permutation test of one condition pair against one brain vector."""

    pair: tuple[str, str]
    rho_a: float
    rho_b: float
    delta_rho: float
    p_value: float
    n_perm: int
    fdr_significant: bool | None = None


def permutation_test(model_a_vec, model_b_vec, brain_vec, n_perm: int = 1000,
                     seed: int = 0, pair: tuple[str, str] = ("A", "B")) -> PairwiseTest:
    """Two-sided permutation test of delta_rho = rho(A, brain) - rho(B, brain).

    Each permutation shuffles the brain vector once and recomputes delta
    against both models with the same shuffled vector. Two calls with the
    same seed share the same permutations, so tests at one ROI can share a
    null stream by sharing a seed. p = (count(|null| >= |observed|) + 1) /
    (n_perm + 1).
    """
    a, brain = _check_vector_pair(model_a_vec, brain_vec)
    b, _ = _check_vector_pair(model_b_vec, brain_vec)
    za, zb, zbr = _zranks(a), _zranks(b), _zranks(brain)
    rho_a = float(za @ zbr)
    rho_b = float(zb @ zbr)
    delta_obs = rho_a - rho_b
    contrast = za - zb
    rng = np.random.default_rng(seed)
    n = brain.shape[0]
    base = np.broadcast_to(np.arange(n), (_PERM_CHUNK, n))
    exceed = 0
    done = 0
    while done < n_perm:
        take = min(_PERM_CHUNK, n_perm - done)
        perms = rng.permuted(base[:take], axis=1)
        null = zbr[perms] @ contrast
        exceed += int(np.count_nonzero(np.abs(null) >= abs(delta_obs)))
        done += take
    p = (exceed + 1) / (n_perm + 1)
    return PairwiseTest(pair=tuple(pair), rho_a=rho_a, rho_b=rho_b,
                        delta_rho=delta_obs, p_value=p, n_perm=n_perm)


# ---------------------------------------------------------------------------
# Benjamini-Hochberg FDR
# ---------------------------------------------------------------------------

def fdr_bh(p_values, alpha: float = 0.05) -> list[bool]:
    """Step-up BH: sort p ascending, find the largest k with
    p_(k) <= k * alpha / m, reject ranks 1..k. Flags in input order."""
    p = np.asarray(list(p_values), dtype=np.float64)
    if p.size == 0:
        return []
    if np.any(p <= 0) or np.any(p > 1):
        bad = int(np.nonzero((p <= 0) | (p > 1))[0][0])
        raise ConfigurationError(f"p-value out of (0,1] at index {bad}: {p[bad]!r}")
    m = p.size
    order = np.argsort(p, kind="stable")
    thresh = (np.arange(1, m + 1) * alpha) / m
    passed = np.nonzero(p[order] <= thresh)[0]
    flags = np.zeros(m, dtype=bool)
    if passed.size:
        flags[order[: passed[-1] + 1]] = True
    return flags.tolist()


# ---------------------------------------------------------------------------
# Partial Spearman
# ---------------------------------------------------------------------------

class PartialSpearman(NamedTuple):
    rho: float
    degenerate: bool


def partial_spearman(model_vec, brain_vec, control_vec) -> PartialSpearman:
    """Spearman between model and brain after residualizing both against a
    control vector via rank-based linear regression.

    A constant control falls back to the plain Spearman (with a warning).
    If residualizing annihilates a vector (model == control, say), the
    result is 0.0 with the degenerate flag set.
    """
    model, brain = _check_vector_pair(model_vec, brain_vec)
    control, _ = _check_vector_pair(control_vec, brain_vec)
    if np.ptp(control) == 0:
        warnings.warn("constant control vector: partial Spearman falls back to "
                      "plain Spearman", stacklevel=2)
        return PartialSpearman(rho=spearman(model, brain), degenerate=False)
    rm = rank_average(model)
    rb = rank_average(brain)
    rc = rank_average(control)
    rc = rc - rc.mean()
    vc = rc @ rc

    def residual(r):
        centered = r - r.mean()
        return centered - ((centered @ rc) / vc) * rc, np.sqrt(centered @ centered)

    em, scale_m = residual(rm)
    eb, scale_b = residual(rb)
    if scale_m == 0 or scale_b == 0:
        raise UndefinedStatisticError("correlation undefined for a constant vector")
    nm, nb = np.sqrt(em @ em), np.sqrt(eb @ eb)
    if nm <= 1e-10 * scale_m or nb <= 1e-10 * scale_b:
        return PartialSpearman(rho=0.0, degenerate=True)
    return PartialSpearman(rho=float((em @ eb) / (nm * nb)), degenerate=False)


# ---------------------------------------------------------------------------
# Noise ceiling
# ---------------------------------------------------------------------------

@dataclass
class NoiseCeiling:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ConfigurationError(f"noise ceiling lower {self.lower} > upper {self.upper}")


def _split_halves(n_subjects: int, n_splits: int, rng):
    half = (n_subjects + 1) // 2
    all_splits = [s for s in combinations(range(n_subjects), half) if 0 in s]
    if n_subjects % 2:  # odd: complements have different sizes, keep every subset
        all_splits = list(combinations(range(n_subjects), half))
    if len(all_splits) <= n_splits:
        return all_splits
    chosen = rng.choice(len(all_splits), size=n_splits, replace=False)
    return [all_splits[i] for i in sorted(chosen)]


def noise_ceiling(subject_rdms, n_splits: int = 100, seed: int = 0) -> NoiseCeiling:
    """Split-half reliability of the subject RDMs with Spearman-Brown
    correction.

    Subjects are split into halves of size ceil(S/2) / floor(S/2); the
    Spearman correlation r between half-mean RDM vectors gives the lower
    bound, and r_sb = 2r / (1 + r) the upper bound, each averaged over
    splits and clamped to [-1, 1]. With few subjects all distinct splits
    are enumerated (three 1-vs-2 splits for S = 3); otherwise n_splits
    random splits are drawn.
    """
    def as_vec(r):
        if hasattr(r, "rdm"):
            r = r.rdm
        arr = r.values if hasattr(r, "values") else np.asarray(r, dtype=np.float64)
        return upper_triangle(arr) if arr.ndim == 2 else arr

    vecs = [as_vec(r) for r in subject_rdms]
    s = len(vecs)
    if s < 2:
        raise UndefinedStatisticError("noise ceiling needs at least 2 subjects")
    rng = np.random.default_rng(seed)
    rs, rs_sb = [], []
    for half in _split_halves(s, n_splits, rng):
        rest = [i for i in range(s) if i not in half]
        m1 = np.mean([vecs[i] for i in half], axis=0)
        m2 = np.mean([vecs[i] for i in rest], axis=0)
        r = spearman(m1, m2)
        rs.append(r)
        rs_sb.append(np.clip(2 * r / (1 + r) if r > -1 else -1.0, -1.0, 1.0))
    lower = float(np.clip(np.mean(rs), -1.0, 1.0))
    upper = float(np.clip(np.mean(rs_sb), -1.0, 1.0))
    if upper < lower:  # possible only with negative split reliability
        log.warning("negative split-half reliability (%.3g): flattening noise "
                    "ceiling to the lower bound", lower)
        upper = lower
    return NoiseCeiling(lower=lower, upper=upper)


# ---------------------------------------------------------------------------
# Cohen's d (paired)
# ---------------------------------------------------------------------------

class CohensD(NamedTuple):
    d: float
    degenerate: bool


def cohens_d_paired(scores_a, scores_b) -> CohensD:
    """d = mean(a - b) / sd(a - b), sample sd (n-1 denominator).

    Zero sd of differences yields a signed-infinity sentinel with the
    degenerate flag set.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.shape[0] < 2:
        raise ConfigurationError(
            f"paired score lists must match with length >= 2, got {a.shape}/{b.shape}")
    diff = a - b
    sd = float(np.std(diff, ddof=1))
    mean = float(diff.mean())
    if sd == 0:
        return CohensD(d=math.copysign(math.inf, mean) if mean != 0 else math.inf,
                       degenerate=True)
    return CohensD(d=mean / sd, degenerate=False)
