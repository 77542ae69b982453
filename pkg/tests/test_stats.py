"""Statistics tests. Every routine is checked against an independent
implementation: scipy for ranks/Spearman/FDR, a hand step-up loop for BH,
closed-form arithmetic for Spearman-Brown and Cohen's d, and null
simulations for the permutation and bootstrap machinery."""

import math

import numpy as np
import pytest
import scipy.stats as ss

from brainalign import stats
from brainalign.errors import ConfigurationError, UndefinedStatisticError


@pytest.fixture
def rng():
    return np.random.default_rng(55)


# ---------------------------------------------------------------------------
# Ranks and Spearman
# ---------------------------------------------------------------------------

class TestSpearman:
    def test_identity(self, rng):
        x = rng.normal(size=20)
        assert stats.spearman(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_reversal(self, rng):
        x = np.sort(rng.normal(size=20))
        assert stats.spearman(x, x[::-1]) == pytest.approx(-1.0, abs=1e-12)

    def test_rank_difference_formula(self):
        # 1 - 6*sum(d^2)/(n(n^2-1)) with d^2 summing to 4
        assert stats.spearman([1, 2, 3, 4, 5], [1, 3, 2, 5, 4]) == pytest.approx(0.8)

    def test_matches_scipy_on_200_random_instances(self, rng):
        for _ in range(200):
            n = int(rng.integers(5, 60))
            x = rng.integers(0, 8, n).astype(float) if rng.random() < 0.5 else rng.normal(size=n)
            y = rng.integers(0, 8, n).astype(float) if rng.random() < 0.5 else rng.normal(size=n)
            if np.ptp(x) == 0 or np.ptp(y) == 0:
                continue
            assert stats.spearman(x, y) == pytest.approx(
                ss.spearmanr(x, y).statistic, abs=1e-10)

    def test_monotone_transform_invariance(self, rng):
        x = rng.normal(size=50)
        y = rng.normal(size=50)
        base = stats.spearman(x, y)
        assert stats.spearman(np.exp(x), y**3) == pytest.approx(base, abs=1e-12)

    def test_constant_vector_rejected(self):
        with pytest.raises(UndefinedStatisticError):
            stats.spearman(np.ones(5), np.arange(5.0))

    def test_short_vectors_rejected(self):
        with pytest.raises(ConfigurationError):
            stats.spearman([1.0, 2.0], [2.0, 1.0])

    def test_rank_rows_matches_scipy_rankdata(self, rng):
        m = rng.integers(0, 5, size=(40, 25)).astype(float)
        mine = stats.rank_rows(m)
        ref = np.vstack([ss.rankdata(row) for row in m])
        assert np.array_equal(mine, ref)


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------

class TestBootstrap:
    def test_self_correlation_ci_near_one(self, rng):
        x = rng.normal(size=300)
        lo, hi = stats.bootstrap_ci(x, x, n_boot=400, seed=0)
        assert lo > 0.99 and hi <= 1.0

    def test_null_cis_straddle_zero(self, rng):
        hits = 0
        for i in range(100):
            r = np.random.default_rng(i)
            u, v = r.normal(size=(2, 1000))
            lo, hi = stats.bootstrap_ci(u, v, n_boot=300, seed=i)
            hits += lo < 0 < hi
        assert hits >= 90

    def test_width_shrinks_with_sample_size(self, rng):
        # resampling theory: CI width ~ 1/sqrt(n) in the vector length
        def width(n, seed):
            r = np.random.default_rng(seed)
            z = r.normal(size=n)
            x = z + r.normal(size=n)
            y = z + r.normal(size=n)
            lo, hi = stats.bootstrap_ci(x, y, n_boot=500, seed=seed)
            return hi - lo

        assert width(10000, 3) < width(100, 3)

    def test_deterministic_per_seed(self, rng):
        x, y = rng.normal(size=(2, 200))
        assert stats.bootstrap_ci(x, y, n_boot=300, seed=9) == \
            stats.bootstrap_ci(x, y, n_boot=300, seed=9)

    def test_degenerate_resamples_capped(self):
        # all-but-one identical values: most resamples are constant
        x = np.zeros(50)
        x[0] = 1.0
        y = np.arange(50.0)
        with pytest.raises(UndefinedStatisticError, match="degenerate"):
            stats.bootstrap_ci(x, y, n_boot=200, seed=0)

    def test_rsa_result_invariant(self):
        with pytest.raises(ConfigurationError):
            stats.RsaResult(rho=0.5, ci_low=0.6, ci_high=0.4, n_pairs=10)


# ---------------------------------------------------------------------------
# Permutation test
# ---------------------------------------------------------------------------

class TestPermutation:
    def test_identical_models_give_p_one(self, rng):
        x = rng.normal(size=100)
        b = rng.normal(size=100)
        t = stats.permutation_test(x, x, b, n_perm=99, seed=0)
        assert t.delta_rho == 0.0
        assert t.p_value == 1.0

    def test_swap_symmetry_exact(self, rng):
        a, b, brain = rng.normal(size=(3, 150))
        t1 = stats.permutation_test(a, b, brain, n_perm=300, seed=4, pair=("A", "B"))
        t2 = stats.permutation_test(b, a, brain, n_perm=300, seed=4, pair=("B", "A"))
        assert t1.delta_rho == -t2.delta_rho
        assert t1.p_value == t2.p_value

    def test_minimum_p_is_one_over_n_plus_one(self, rng):
        # a strong true difference should bottom out at 1/(n_perm+1)
        z = rng.normal(size=400)
        brain = z + 0.1 * rng.normal(size=400)
        unrelated = rng.normal(size=400)
        t = stats.permutation_test(z, unrelated, brain, n_perm=199, seed=0)
        assert t.p_value == pytest.approx(1 / 200)

    def test_null_calibration_and_fpr(self):
        ps = []
        for i in range(300):
            r = np.random.default_rng(10_000 + i)
            a, b, brain = r.normal(size=(3, 120))
            ps.append(stats.permutation_test(a, b, brain, n_perm=200, seed=i).p_value)
        ps = np.array(ps)
        assert ss.kstest(ps, "uniform").statistic < 0.1
        assert 0.02 <= np.mean(ps <= 0.05) <= 0.08

    def test_same_seed_shares_permutations(self, rng):
        # two pairs at one ROI share a null stream: identical models must
        # then give identical null distributions, hence identical p-values
        a, b, brain = rng.normal(size=(3, 80))
        t1 = stats.permutation_test(a, b, brain, n_perm=100, seed=77)
        t2 = stats.permutation_test(a, b, brain, n_perm=100, seed=77)
        assert t1.p_value == t2.p_value and t1.delta_rho == t2.delta_rho


# ---------------------------------------------------------------------------
# FDR
# ---------------------------------------------------------------------------

def bh_oracle(p, alpha):
    """Literal step-up: try every k and keep the largest valid one."""
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    best_k = 0
    for k in range(1, m + 1):
        if p[order[k - 1]] <= k * alpha / m:
            best_k = k
    flags = [False] * m
    for i in range(best_k):
        flags[order[i]] = True
    return flags


class TestFdr:
    def test_hand_example(self):
        assert stats.fdr_bh([0.001, 0.02, 0.03, 0.2]) == [True, True, True, False]

    def test_all_small(self):
        assert stats.fdr_bh([0.001] * 40) == [True] * 40

    def test_all_one(self):
        assert stats.fdr_bh([1.0] * 7) == [False] * 7

    def test_empty(self):
        assert stats.fdr_bh([]) == []

    def test_out_of_range_rejected(self):
        with pytest.raises(ConfigurationError):
            stats.fdr_bh([0.5, 0.0])

    def test_exhaustive_vs_oracle_up_to_m12(self, rng):
        for _ in range(400):
            m = int(rng.integers(1, 13))
            p = rng.random(m).clip(1e-9, 1.0).tolist()
            alpha = float(rng.choice([0.01, 0.05, 0.1, 0.25]))
            assert stats.fdr_bh(p, alpha) == bh_oracle(p, alpha)

    def test_matches_scipy_adjusted_pvalues(self, rng):
        for _ in range(200):
            m = int(rng.integers(1, 13))
            p = rng.random(m).clip(1e-9, 1.0)
            ref = (ss.false_discovery_control(p, method="bh") <= 0.05).tolist()
            assert stats.fdr_bh(p, 0.05) == ref


# ---------------------------------------------------------------------------
# Partial Spearman
# ---------------------------------------------------------------------------

class TestPartialSpearman:
    def test_independent_control_changes_little(self, rng):
        m = rng.normal(size=3000)
        b = 0.6 * m + rng.normal(size=3000)
        c = rng.normal(size=3000)
        res = stats.partial_spearman(m, b, c)
        assert not res.degenerate
        assert res.rho == pytest.approx(stats.spearman(m, b), abs=0.02)

    def test_self_control_annihilates(self, rng):
        m = rng.normal(size=100)
        b = rng.normal(size=100)
        res = stats.partial_spearman(m, b, m)
        assert res.rho == 0.0 and res.degenerate

    def test_constant_control_falls_back_with_warning(self, rng):
        m, b = rng.normal(size=(2, 100))
        with pytest.warns(UserWarning, match="constant control"):
            res = stats.partial_spearman(m, b, np.full(100, 2.0))
        assert res.rho == pytest.approx(stats.spearman(m, b), abs=1e-12)
        assert not res.degenerate

    def test_orthogonal_control_leaves_spearman_exact(self):
        # control ranks [-1, 1, 1, -1] (centered) are orthogonal to the
        # centered ranks of both model and brain
        model = np.array([1.0, 2.0, 3.0, 4.0])
        brain = np.array([2.0, 1.0, 4.0, 3.0])
        control = np.array([1.0, 2.0, 2.0, 1.0])
        res = stats.partial_spearman(model, brain, control)
        assert res.rho == pytest.approx(stats.spearman(model, brain), abs=1e-12)

    def test_matches_manual_rank_regression(self, rng):
        # brute-force oracle: rank, OLS-residualize, Pearson
        m, b, c = rng.normal(size=(3, 200))
        rm, rb, rc = (ss.rankdata(v) for v in (m, b, c))
        em = rm - np.polyval(np.polyfit(rc, rm, 1), rc)
        eb = rb - np.polyval(np.polyfit(rc, rb, 1), rc)
        oracle = np.corrcoef(em, eb)[0, 1]
        assert stats.partial_spearman(m, b, c).rho == pytest.approx(oracle, abs=1e-10)


# ---------------------------------------------------------------------------
# Noise ceiling
# ---------------------------------------------------------------------------

class TestNoiseCeiling:
    def test_spearman_brown_formula(self):
        # two subjects whose vectors have Spearman r = 0.5
        nc = stats.noise_ceiling([np.array([1.0, 2, 3]), np.array([1.0, 3, 2])])
        assert nc.lower == pytest.approx(0.5, abs=1e-12)
        assert nc.upper == pytest.approx(2 * 0.5 / 1.5, abs=1e-12)

    def test_identical_subjects_ceiling_one(self, rng):
        v = rng.normal(size=45)
        nc = stats.noise_ceiling([v, v, v])
        assert nc.lower == pytest.approx(1.0, abs=1e-9)
        assert nc.upper == pytest.approx(1.0, abs=1e-9)

    def test_three_subjects_enumerates_all_splits(self, rng):
        vecs = [rng.normal(size=40) for _ in range(3)]
        a = stats.noise_ceiling(vecs, seed=0)
        b = stats.noise_ceiling(vecs, seed=999)  # enumeration ignores the seed
        assert a == b

    def test_single_subject_rejected(self, rng):
        with pytest.raises(UndefinedStatisticError):
            stats.noise_ceiling([rng.normal(size=10)])

    def test_accepts_rdm_objects(self, rng):
        from brainalign.rdm import rdm_from_features

        rdms = [rdm_from_features(rng.normal(size=(6, 5))) for _ in range(2)]
        nc = stats.noise_ceiling(rdms)
        assert -1.0 <= nc.lower <= nc.upper <= 1.0


# ---------------------------------------------------------------------------
# Cohen's d
# ---------------------------------------------------------------------------

class TestCohensD:
    def test_hand_arithmetic(self):
        res = stats.cohens_d_paired([2.0, 4.0, 6.0], [1.0, 2.0, 3.0])
        assert res.d == pytest.approx(2.0, abs=1e-12)
        assert not res.degenerate

    def test_equal_scores_flagged_sentinel(self):
        res = stats.cohens_d_paired([1.0, 2.0], [1.0, 2.0])
        assert res.degenerate and math.isinf(res.d)

    def test_constant_positive_difference(self):
        res = stats.cohens_d_paired([3.0, 4.0, 5.0], [1.0, 2.0, 3.0])
        assert res.degenerate and res.d == math.inf

    def test_constant_negative_difference(self):
        res = stats.cohens_d_paired([1.0, 2.0], [4.0, 5.0])
        assert res.degenerate and res.d == -math.inf

    def test_length_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            stats.cohens_d_paired([1.0], [1.0, 2.0])
