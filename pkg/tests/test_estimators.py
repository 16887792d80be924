"""Tests for the unadjusted, GEE, AIPTW and TMLE estimators."""

import unittest

import numpy as np
from scipy.special import expit, logit

from rmst_targeted.estimators import (
    Z_95,
    NuisanceConfig,
    augmented_ipw,
    build_report,
    estimate,
    estimate_aiptw,
    estimate_gee,
    estimate_tmle,
    estimate_unadjusted,
    sandwich_covariance,
    solve_fluctuation,
    truncate_propensity,
)
from rmst_targeted.pseudo import PseudoDataset
from rmst_targeted.types import (
    METHODS,
    REPORT_FIELDS,
    DataValidationException,
    EstimationException,
    RankDeficientException,
)


def make_po(arm, pseudo, covariates=None, tau=10.0):
    arm = np.asarray(arm, dtype=int)
    n = arm.size
    if covariates is None:
        covariates = np.zeros((n, 0))
    covariates = np.asarray(covariates, dtype=float)
    return PseudoDataset(
        ids=np.array([str(i) for i in range(n)], dtype=object),
        covariates=covariates,
        arm=arm,
        pseudo=np.asarray(pseudo, dtype=float),
        event=np.ones(n, dtype=int),
        time=np.ones(n),
        tau=tau,
        covariate_names=[f"x{j + 1}" for j in range(covariates.shape[1])],
    )


def confounded_po(n=240, seed=5):
    """Two covariates driving both arm and pseudo-value."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    arm = (rng.random(n) < expit(0.4 * X[:, 0] - 0.3 * X[:, 1])).astype(int)
    pseudo = 2.0 + 1.5 * arm + X[:, 0] + 0.5 * X[:, 1] ** 2 + rng.normal(size=n)
    return make_po(arm, pseudo, X)


class TestUnadjusted(unittest.TestCase):
    """Test estimate_unadjusted."""

    def test_hand_computed(self):
        """Arm 1 [2,4] vs arm 0 [1,1] gives 2 with se 1."""
        report = estimate_unadjusted(make_po([1, 1, 0, 0], [2, 4, 1, 1]))
        self.assertEqual(report["estimate"], 2.0)
        self.assertAlmostEqual(report["se"], 1.0)
        self.assertEqual(report["diagnostics"]["mu1"], 3.0)

    def test_constant_pseudo_values(self):
        """All pseudo-values equal: estimate 0, se 0, p 1."""
        report = estimate_unadjusted(make_po([1, 0, 1, 0], [3.0] * 4))
        self.assertEqual(report["estimate"], 0.0)
        self.assertEqual(report["se"], 0.0)
        self.assertEqual(report["p_value"], 1.0)

    def test_single_arm_rejected(self):
        """Both arms are required."""
        with self.assertRaises(DataValidationException):
            estimate_unadjusted(make_po([1, 1, 1], [1, 2, 3]))


class TestGee(unittest.TestCase):
    """Test estimate_gee."""

    def test_no_covariates_is_difference_of_means(self):
        """Without covariates the arm coefficient is the unadjusted estimate."""
        po = make_po([1, 0, 1, 0, 1, 0], [5, 1, 7, 2, 6, 4])
        self.assertAlmostEqual(estimate_gee(po)["estimate"], estimate_unadjusted(po)["estimate"])

    def test_exact_linear_outcome(self):
        """P = 1 + 5A + 2X exactly gives 5 with se 0."""
        rng = np.random.default_rng(0)
        x = rng.normal(size=(30, 1))
        arm = np.tile([1, 0], 15)
        report = estimate_gee(make_po(arm, 1 + 5 * arm + 2 * x[:, 0], x))
        self.assertAlmostEqual(report["estimate"], 5.0, places=10)
        self.assertAlmostEqual(report["se"], 0.0, places=8)
        self.assertIn("arm", report["diagnostics"]["coefficients"])

    def test_covariate_equal_to_arm(self):
        """A covariate duplicating the arm is rank deficient."""
        arm = np.array([1, 0, 1, 0, 1, 0])
        with self.assertRaises(RankDeficientException):
            estimate_gee(make_po(arm, [1, 2, 3, 4, 5, 6], arm.reshape(-1, 1)))

    def test_sandwich_two_groups(self):
        """Two-group HC0 variance is the sum of ML arm variances over arm sizes."""
        arm = np.array([1, 1, 1, 0, 0, 0, 0])
        y = np.array([1.0, 2.0, 6.0, 0.0, 1.0, 1.0, 4.0])
        design = arm.reshape(-1, 1).astype(float)
        covariance = sandwich_covariance(design, y)
        expected = np.var(y[arm == 1]) / 3 + np.var(y[arm == 0]) / 4
        self.assertAlmostEqual(covariance[1, 1], expected)


class TestAiptw(unittest.TestCase):
    """Test augmented_ipw and estimate_aiptw."""

    def test_zero_outcome_model_is_horvitz_thompson(self):
        """With Q = 0 the estimate is inverse probability weighting."""
        arm = np.array([1, 1, 0, 0])
        pseudo = np.array([4.0, 2.0, 1.0, 3.0])
        g = np.array([0.5, 0.25, 0.5, 0.75])
        psi, influence = augmented_ipw(arm, pseudo, g, np.zeros(4), np.zeros(4))
        expected = np.mean([4 / 0.5, 2 / 0.25, -1 / 0.5, -3 / 0.25])
        self.assertAlmostEqual(psi, expected)
        self.assertAlmostEqual(influence.mean(), 0.0)

    def test_correct_outcome_model(self):
        """When Q reproduces P the estimate is mean(Q1 - Q0)."""
        rng = np.random.default_rng(3)
        x = rng.normal(size=(120, 1))
        arm = (rng.random(120) < expit(0.5 * x[:, 0])).astype(int)
        report = estimate_aiptw(make_po(arm, 1 + 3 * arm + 2 * x[:, 0], x), seed=1)
        self.assertAlmostEqual(report["estimate"], 3.0, places=8)
        self.assertEqual(report["diagnostics"]["settings"]["outcome_library"], ["glm"])

    def test_confounded_data(self):
        """The estimate is near the true effect and the report is complete."""
        report = estimate_aiptw(confounded_po(), seed=2)
        self.assertLess(abs(report["estimate"] - 1.5), 4 * report["se"] + 0.1)
        self.assertIn("g_min", report["diagnostics"])


class TestTmle(unittest.TestCase):
    """Test solve_fluctuation and estimate_tmle."""

    def test_score_equation_solved(self):
        """The targeted fit leaves a score mean below 1e-6."""
        report = estimate_tmle(confounded_po(), seed=4)
        self.assertLess(abs(report["diagnostics"]["eif_score_mean"]), 1e-6)
        self.assertGreater(report["se"], 0.0)
        self.assertLess(abs(report["estimate"] - 1.5), 4 * report["se"] + 0.1)

    def test_outcome_fit_already_targeted(self):
        """Arm-mean Q with constant g needs no fluctuation."""
        rng = np.random.default_rng(8)
        arm = np.tile([1, 0, 0], 20)
        pseudo = 3.0 + arm + rng.normal(size=60)
        po = make_po(arm, pseudo)
        config = NuisanceConfig(outcome_library=("glm",), propensity_library=("mean",))
        report = estimate_tmle(po, config, seed=0)
        self.assertLess(abs(report["diagnostics"]["epsilon"]), 1e-8)
        self.assertAlmostEqual(report["estimate"], estimate_unadjusted(po)["estimate"], places=8)

    def test_constant_pseudo_values(self):
        """Constant P short-circuits to estimate 0, se 0, epsilon 0."""
        report = estimate_tmle(make_po([1, 0, 1, 0], [2.0] * 4))
        self.assertEqual(report["estimate"], 0.0)
        self.assertEqual(report["se"], 0.0)
        self.assertEqual(report["diagnostics"]["epsilon"], 0.0)

    def test_fluctuation_root(self):
        """solve_fluctuation returns a root of the logistic score."""
        rng = np.random.default_rng(1)
        h = rng.choice([2.0, -2.0], size=50)
        y = rng.random(50)
        q = np.clip(rng.random(50), 0.05, 0.95)
        epsilon = solve_fluctuation(h, y, q)
        score = np.sum(h * (y - expit(logit(q) + epsilon * h)))
        self.assertLess(abs(score), 1e-9)

    def test_zero_clever_covariate(self):
        """H = 0 everywhere gives epsilon 0."""
        self.assertEqual(solve_fluctuation(np.zeros(3), np.full(3, 0.5), np.full(3, 0.3)), 0.0)


class TestReports(unittest.TestCase):
    """Test build_report and the estimate dispatcher."""

    def test_report_invariants_all_methods(self):
        """Every method reports a Wald interval, a valid p-value and arm sizes."""
        po = confounded_po()
        for method in METHODS:
            report = estimate(po, method, seed=7, plugin_difference=1.25)
            self.assertEqual(set(report), set(REPORT_FIELDS))
            self.assertEqual(report["method"], method)
            self.assertEqual(report["ci_low"], report["estimate"] - Z_95 * report["se"])
            self.assertEqual(report["ci_high"], report["estimate"] + Z_95 * report["se"])
            self.assertTrue(0.0 <= report["p_value"] <= 1.0)
            self.assertEqual(report["n1"] + report["n0"], po.n)
            self.assertEqual(report["diagnostics"]["provenance"], "main")
            self.assertEqual(report["diagnostics"]["plugin_difference"], 1.25)

    def test_location_equivariance(self):
        """Adding c to every pseudo-value leaves estimate and se unchanged."""
        po = confounded_po(n=150, seed=9)
        for method in METHODS:
            base = estimate(po, method, seed=3)
            moved = estimate(po.shifted(25.0), method, seed=3)
            self.assertAlmostEqual(moved["estimate"], base["estimate"], places=7, msg=method)
            self.assertAlmostEqual(moved["se"], base["se"], places=7, msg=method)

    def test_seed_determinism(self):
        """Repeating a run with the same seed gives identical reports."""
        po = confounded_po(n=150, seed=11)
        a = estimate(po, "tmle", seed=5)
        b = estimate(po, "tmle", seed=5, config=NuisanceConfig(threads=3))
        self.assertEqual(a["estimate"], b["estimate"])
        self.assertEqual(a["se"], b["se"])

    def test_zero_se_p_values(self):
        """se = 0 gives p = 1 at a zero estimate and p = 0 otherwise."""
        self.assertEqual(build_report("gee", 1.0, 0.0, 0.0, 2, 2)["p_value"], 1.0)
        self.assertEqual(build_report("gee", 1.0, 2.0, 0.0, 2, 2)["p_value"], 0.0)

    def test_p_value_from_normal(self):
        """estimate/se = 1.96 gives p close to 0.05."""
        report = build_report("aiptw", 1.0, 1.96, 1.0, 5, 5)
        self.assertAlmostEqual(report["p_value"], 0.05, places=3)
        self.assertAlmostEqual(report["ci_low"], 0.0)

    def test_non_finite_estimate(self):
        """NaN estimates are estimation errors."""
        with self.assertRaises(EstimationException):
            build_report("tmle", 1.0, float("nan"), 1.0, 2, 2)

    def test_unknown_method(self):
        """Unknown method names are rejected."""
        with self.assertRaises(DataValidationException):
            estimate(make_po([1, 0], [1, 2]), "ipw")


class TestNuisanceConfig(unittest.TestCase):
    """Test NuisanceConfig and truncate_propensity."""

    def test_invalid_bounds(self):
        """g_bounds must straddle 0.5 inside (0, 1)."""
        with self.assertRaises(DataValidationException):
            NuisanceConfig(g_bounds=(0.6, 0.9))

    def test_unknown_learner(self):
        """Unknown learner names fail at construction."""
        with self.assertRaises(DataValidationException):
            NuisanceConfig(outcome_library=("forest",))

    def test_method_defaults(self):
        """AIPTW defaults to main terms; TMLE to the full library."""
        config = NuisanceConfig()
        self.assertEqual(config.libraries("aiptw"), (("glm",), ("glm",)))
        self.assertIn("glm_squared", config.libraries("tmle")[0])
        self.assertNotIn("q_bounds", config.settings("aiptw", 0))
        self.assertIn("q_bounds", config.settings("tmle", 0))

    def test_truncation_summary(self):
        """Values outside the bounds are clipped and counted."""
        g, summary = truncate_propensity(np.array([0.01, 0.5, 0.99, 0.2]), (0.025, 0.975))
        np.testing.assert_allclose(g, [0.025, 0.5, 0.975, 0.2])
        self.assertEqual(summary["g_truncated"], 2)
        self.assertEqual(summary["g_min"], 0.01)
        self.assertEqual(summary["warnings"], [])

    def test_all_truncated_warns(self):
        """Every score clipped at one bound adds a warning."""
        with self.assertLogs("rmst_targeted", level="WARNING"):
            _, summary = truncate_propensity(np.full(4, 0.999), (0.025, 0.975))
        self.assertEqual(len(summary["warnings"]), 1)


if __name__ == '__main__':
    unittest.main()
