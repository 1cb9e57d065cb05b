//! Exponent feasibility: every admissibility condition on the Lebesgue
//! exponents, executed numerically.
//!
//! The mild-solution machinery works in `L^p` for the density and `L^r`
//! for the chemical gradient.  Which pairs `(p, r)` are admissible is a
//! small calculus of inequalities in `(d, alpha, beta)`:
//!
//! * hypotheses gating the fixed-point argument, split into a bounded
//!   case (a) and an unbounded case (b) for `p` against `d/(beta-1)`,
//!   plus a cap on `p` when `2 beta (alpha - 1) >= alpha`;
//! * the decay rate `sigma` and the initial-data exponents `p1`, `p2` of
//!   the global small-data theory;
//! * the initial-gradient exponent `wp` (here written `wp` for the
//!   script letter) classifying local solvability into cases where
//!   shrinking the horizon helps (`theta1 > 0`) or a smallness condition
//!   is unavoidable (`theta1 = 0`);
//! * an extra region of `(p, r)` guaranteeing `r sigma <= d/alpha`,
//!   which upgrades the decay theory to an `L^inf` bound.
//!
//! Strict and non-strict boundaries follow the source inequalities
//! verbatim; a `1e-12` slack is used only when asserting *derived*
//! consequences, never in the defining comparisons themselves.
//! Infinite `r` is supported through `f64::INFINITY` with `1/r = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{FksError, Result};
use crate::params::SystemParams;

/// Slack for asserting derived consequences of accepted profiles.
const DERIVED_SLACK: f64 = 1e-12;

/// Reciprocal with the convention `1/inf = 0`.
#[inline]
fn inv(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

/// Which branch of the main hypothesis the pair `(p, r)` satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum H2Case {
    /// Bounded case: `p <= d/(beta-1)` with a finite upper bound on `r`.
    A2a,
    /// Unbounded case: `p > d/(beta-1)`, `r` bounded below only.
    A2b,
}

/// Outcome of the hypothesis check: either a case classification or the
/// list of violated inequalities, each named.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesesReport {
    /// Whether every hypothesis holds.
    pub accepted: bool,
    /// The (H2) case on acceptance.
    pub case: Option<H2Case>,
    /// Human-readable names of all violated inequalities (empty on
    /// acceptance).  Rejection is a verdict, not an error.
    pub violations: Vec<String>,
}

/// Lower bound on `r`: `max{p, p/(p-1), d/(alpha-1)}`, where the equality
/// `r = max{p, p/(p-1)}` is admissible when that max exceeds
/// `d/(alpha-1)`.
fn r_lower_admissible(d: f64, alpha: f64, p: f64, r: f64) -> bool {
    let m12 = p.max(p / (p - 1.0));
    let m3 = d / (alpha - 1.0);
    r > m12.max(m3) || (r == m12 && m12 > m3)
}

/// Check every hypothesis on `(d, alpha, beta, p, r)` and classify the
/// pair into case (a) or (b), reporting each violated inequality by name.
pub fn check_hypotheses(params: &SystemParams, p: f64, r: f64) -> HypothesesReport {
    let d = params.d as f64;
    let alpha = params.alpha;
    let beta = params.beta;
    let mut violations = Vec::new();

    // (H1): dimension and diffusion orders.
    if params.d < 2 {
        violations.push(format!("H1: d >= 2 (got d = {})", params.d));
    }
    if !(alpha > 1.0 && alpha <= 2.0) {
        violations.push(format!("H1: alpha in (1, 2] (got alpha = {alpha})"));
    }
    if !(beta > 1.0 && beta <= d) {
        violations.push(format!("H1: beta in (1, d] (got beta = {beta}, d = {d})"));
    }
    if !(p > 1.0) {
        violations.push(format!("H2: p > 1 (got p = {p})"));
    }
    if !(r > 1.0) {
        violations.push(format!("H2: r > 1 (got r = {r})"));
    }
    if !violations.is_empty() {
        return HypothesesReport {
            accepted: false,
            case: None,
            violations,
        };
    }

    // (H2): branch on p against d/(beta-1); ties go to case (a) per the
    // printed "p <= d/(beta-1)".
    let p_split = d / (beta - 1.0);
    let case = if p <= p_split {
        H2Case::A2a
    } else {
        H2Case::A2b
    };
    match case {
        H2Case::A2a => {
            let p_lo = (2.0 * d / (d + beta - 1.0)).max(d / (alpha + beta - 2.0));
            if !(p > p_lo) {
                violations.push(format!(
                    "H2a: p > max{{2d/(d+beta-1), d/(alpha+beta-2)}} = {p_lo} (got p = {p})"
                ));
            }
            if !r_lower_admissible(d, alpha, p, r) {
                violations.push(format!(
                    "H2a: r > max{{p, p/(p-1), d/(alpha-1)}} = {} (equality with \
                     max{{p, p/(p-1)}} admissible only above d/(alpha-1); got r = {r})",
                    p.max(p / (p - 1.0)).max(d / (alpha - 1.0))
                ));
            }
            let denom = d - p * (beta - 1.0);
            let r_hi = if denom > 0.0 {
                p * d / denom
            } else {
                f64::INFINITY
            };
            if !(r < r_hi) {
                violations.push(format!(
                    "H2a: r < p d / (d - p(beta-1)) = {r_hi} (got r = {r})"
                ));
            }
        }
        H2Case::A2b => {
            if !r_lower_admissible(d, alpha, p, r) {
                violations.push(format!(
                    "H2b: r > max{{p, p/(p-1), d/(alpha-1)}} = {} (equality with \
                     max{{p, p/(p-1)}} admissible only above d/(alpha-1); got r = {r})",
                    p.max(p / (p - 1.0)).max(d / (alpha - 1.0))
                ));
            }
        }
    }

    // (H3): extra cap on p, active when 2 beta (alpha - 1) >= alpha.  At
    // exact equality the cap is +infinity and the condition is vacuous.
    let h3_gap = 2.0 * beta * (alpha - 1.0) - alpha;
    if h3_gap >= 0.0 {
        let cap = d * alpha / h3_gap;
        if !(p < cap) {
            violations.push(format!(
                "H3: p < d alpha / (2 beta(alpha-1) - alpha) = {cap} (got p = {p})"
            ));
        }
    }

    let accepted = violations.is_empty();
    HypothesesReport {
        accepted,
        case: if accepted { Some(case) } else { None },
        violations,
    }
}

/// Decay rate
/// `sigma = 2 - (1/alpha)(d/r + 1) - (d/beta)(1/p - 1/r) - 1/beta`.
///
/// On accepted profiles `0 < sigma < 1`.
pub fn compute_sigma(params: &SystemParams, p: f64, r: f64) -> f64 {
    let d = params.d as f64;
    let alpha = params.alpha;
    let beta = params.beta;
    2.0 - (d * inv(r) + 1.0) / alpha - (d / beta) * (inv(p) - inv(r)) - 1.0 / beta
}

/// Initial-data exponents of the global theory:
/// `p1 = p d / (alpha sigma p + d)` and
/// `p2 = d r alpha / (beta (r(alpha-1) - d) + d alpha)`.
///
/// On profiles accepted by [`check_hypotheses`] the bounds `1 <= p1 < p`
/// and `1 < p2 < r`, and the identity
/// `(1/alpha)(d/r + 1) + (d/beta)(1/p2 - 1/r) = 1`, are asserted; a
/// failure is an internal inconsistency and panics loudly rather than
/// propagating a bad exponent into a solve.
pub fn compute_p1_p2(params: &SystemParams, p: f64, r: f64) -> (f64, f64) {
    let d = params.d as f64;
    let alpha = params.alpha;
    let beta = params.beta;
    let sigma = compute_sigma(params, p, r);
    let p1 = p * d / (alpha * sigma * p + d);
    let p2 = if r.is_infinite() {
        d * alpha / (beta * (alpha - 1.0))
    } else {
        d * r * alpha / (beta * (r * (alpha - 1.0) - d) + d * alpha)
    };

    if check_hypotheses(params, p, r).accepted {
        assert!(
            p1 >= 1.0 - DERIVED_SLACK && p1 < p + DERIVED_SLACK,
            "p1 bound violated on an accepted profile: p1 = {p1}, p = {p} \
             (d={d}, alpha={alpha}, beta={beta}, r={r})"
        );
        assert!(
            p2 > 1.0 - DERIVED_SLACK && p2 < r + DERIVED_SLACK,
            "p2 bound violated on an accepted profile: p2 = {p2}, r = {r} \
             (d={d}, alpha={alpha}, beta={beta}, p={p})"
        );
        let identity = (d * inv(r) + 1.0) / alpha + (d / beta) * (1.0 / p2 - inv(r));
        assert!(
            (identity - 1.0).abs() < 1e-13,
            "p2 defining identity violated: sum = {identity}"
        );
    }
    (p1, p2)
}

/// Classification of the initial-gradient exponent `wp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WpCase {
    /// `wp = r`: the gradient lives in the same space as the evolution.
    A,
    /// `alpha = beta` and `wp = d/(alpha-1)`: the scale-critical choice,
    /// where the condition sum equals 1 exactly and smallness of the
    /// data replaces a short horizon.
    B1,
    /// `alpha <= beta` and `d/(alpha-1) <= wp < r` otherwise.
    B2,
}

/// Verdict of [`check_wp`]: a case or a named rejection, plus the
/// diagnostic condition sum `(1/alpha)(d/r+1) + (d/beta)(1/wp - 1/r)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WpVerdict {
    /// The case on acceptance.
    pub case: Option<WpCase>,
    /// Why the exponent was rejected, if it was.
    pub rejection: Option<String>,
    /// The condition sum; equals 1 exactly in case B1, is below 1 in
    /// case B2.
    pub condition_sum: f64,
}

/// Classify the initial-gradient exponent `wp` relative to `r`.
///
/// The B1 equality `wp = d/(alpha-1)` is detected to `1e-12` relative
/// tolerance: the right-hand side is itself computed in floating point,
/// so exact bit equality would misclassify legitimately critical inputs.
pub fn check_wp(params: &SystemParams, wp: f64, r: f64) -> WpVerdict {
    let d = params.d as f64;
    let alpha = params.alpha;
    let beta = params.beta;
    let condition_sum = (d * inv(r) + 1.0) / alpha + (d / beta) * (inv(wp) - inv(r));

    let case = if wp == r {
        Some(WpCase::A)
    } else if alpha > beta {
        return WpVerdict {
            case: None,
            rejection: Some(format!(
                "with alpha = {alpha} > beta = {beta} the gradient exponent must equal r \
                 (got wp = {wp}, r = {r})"
            )),
            condition_sum,
        };
    } else {
        let critical = d / (alpha - 1.0);
        if alpha == beta && (wp - critical).abs() <= 1e-12 * critical {
            Some(WpCase::B1)
        } else if critical <= wp && wp < r {
            Some(WpCase::B2)
        } else {
            return WpVerdict {
                case: None,
                rejection: Some(format!(
                    "gradient exponent must satisfy d/(alpha-1) = {critical} <= wp < r = {r} \
                     (got wp = {wp})"
                )),
                condition_sum,
            };
        }
    };
    WpVerdict {
        case,
        rejection: None,
        condition_sum,
    }
}

/// The time exponents controlling the contraction estimates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThetaExponents {
    /// `theta1 = 1 - (1/alpha)(d/r+1) - (d/beta)(1/wp - 1/r)`; positive
    /// means a short horizon shrinks the linear term, zero (case B1)
    /// means only small data can.
    pub theta1: f64,
    /// `theta2 = 1 - (1/alpha)(d/r+1)` for `gamma > 0`.
    pub theta2_gamma_pos: f64,
    /// For `gamma = 0` the damping is absent and `theta2` degrades to
    /// the full decay rate `sigma`.
    pub theta2_gamma_zero: f64,
}

/// Compute the contraction time-exponents for a profile.
///
/// In case B1 the defining identity makes `theta1` vanish; the value is
/// snapped to exactly 0 there so downstream gating (`theta1 > 0`?) never
/// depends on the last bit of a float.
pub fn theta_exponents(params: &SystemParams, p: f64, r: f64, wp: f64) -> ThetaExponents {
    let d = params.d as f64;
    let alpha = params.alpha;
    let beta = params.beta;
    let lead = (d * inv(r) + 1.0) / alpha;
    let mut theta1 = 1.0 - lead - (d / beta) * (inv(wp) - inv(r));
    if check_wp(params, wp, r).case == Some(WpCase::B1) {
        theta1 = 0.0;
    }
    ThetaExponents {
        theta1,
        theta2_gamma_pos: 1.0 - lead,
        theta2_gamma_zero: 2.0 - lead - (d / beta) * (inv(p) - inv(r)) - 1.0 / beta,
    }
}

/// Verdict of the extra-region check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtraRegionVerdict {
    /// Whether `(p, r)` lies in the extra region.
    pub accepted: bool,
    /// Which `p`-branch applied (1: bounded branch, 2: larger-`p`
    /// branch), when accepted.
    pub branch: Option<u8>,
    /// Named inequalities that failed, empty on acceptance.
    pub violations: Vec<String>,
    /// The product `r sigma`.
    pub r_sigma: f64,
    /// The cap `d / alpha` that `r sigma` must not exceed.
    pub cap: f64,
}

/// Check membership in the extra region that guarantees
/// `r sigma <= d/alpha` (the gateway to the `L^inf` decay bound).
///
/// Two `p`-branches split at `2d/((alpha-1) + 2(beta-1))`; both share
/// the `r` lower bound of the main hypotheses (including the admissible
/// equality) and differ in the upper bound.  On acceptance the
/// consequence `r sigma <= d/alpha` is asserted with the derived-slack
/// tolerance.
pub fn check_extra_region(params: &SystemParams, p: f64, r: f64) -> ExtraRegionVerdict {
    let d = params.d as f64;
    let alpha = params.alpha;
    let beta = params.beta;
    let sigma = compute_sigma(params, p, r);
    let r_sigma = if r.is_infinite() {
        f64::INFINITY
    } else {
        r * sigma
    };
    let cap = d / alpha;
    let mut violations = Vec::new();

    if !(p > 1.0 && r > 1.0) {
        violations.push(format!(
            "extra region needs p > 1 and r > 1 (got p = {p}, r = {r})"
        ));
        return ExtraRegionVerdict {
            accepted: false,
            branch: None,
            violations,
            r_sigma,
            cap,
        };
    }

    let p_lo = (2.0 * d / (d + beta - 1.0)).max(d / (alpha + beta - 2.0));
    let p_split = 2.0 * d / ((alpha - 1.0) + 2.0 * (beta - 1.0));
    let branch = if p <= p_split { 1u8 } else { 2u8 };

    match branch {
        1 => {
            if !(p > p_lo) {
                violations.push(format!(
                    "extra branch 1: p > max{{2d/(d+beta-1), d/(alpha+beta-2)}} = {p_lo} \
                     (got p = {p})"
                ));
            }
            if !r_lower_admissible(d, alpha, p, r) {
                violations.push(format!(
                    "extra branch 1: r > max{{p, p/(p-1), d/(alpha-1)}} (got r = {r})"
                ));
            }
            let denom = d - p * (beta - 1.0);
            let r_hi = if denom > 0.0 {
                p * d / denom
            } else {
                f64::INFINITY
            };
            if !(r < r_hi) {
                violations.push(format!(
                    "extra branch 1: r < p d / (d - p(beta-1)) = {r_hi} (got r = {r})"
                ));
            }
        }
        _ => {
            let p_hi_denom = (2.0 * beta * (alpha - 1.0) - alpha).max(alpha * (alpha - 2.0) + beta);
            let p_hi = if p_hi_denom > 0.0 {
                alpha * d / p_hi_denom
            } else {
                f64::INFINITY
            };
            if !(p < p_hi) {
                violations.push(format!(
                    "extra branch 2: p < alpha d / max{{2 beta(alpha-1) - alpha, \
                     alpha(alpha-2) + beta}} = {p_hi} (got p = {p})"
                ));
            }
            if !r_lower_admissible(d, alpha, p, r) {
                violations.push(format!(
                    "extra branch 2: r > max{{p, p/(p-1), d/(alpha-1)}} (got r = {r})"
                ));
            }
            let denom = (beta * (alpha - 1.0) + alpha * (beta - 1.0)) * p - alpha * d;
            let r_hi = if denom > 0.0 {
                (2.0 * beta - alpha) * p * d / denom
            } else {
                f64::INFINITY
            };
            if !(r <= r_hi) {
                violations.push(format!(
                    "extra branch 2: r <= (2 beta - alpha) p d / \
                     ([beta(alpha-1) + alpha(beta-1)] p - alpha d) = {r_hi} (got r = {r})"
                ));
            }
        }
    }

    let accepted = violations.is_empty();
    if accepted {
        assert!(
            r_sigma <= cap + DERIVED_SLACK,
            "extra region accepted but r sigma = {r_sigma} exceeds d/alpha = {cap} \
             (d={d}, alpha={alpha}, beta={beta}, p={p}, r={r})"
        );
    }
    ExtraRegionVerdict {
        accepted,
        branch: if accepted { Some(branch) } else { None },
        violations,
        r_sigma,
        cap,
    }
}

/// One classified point of a region scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSample {
    /// Density exponent.
    pub p: f64,
    /// Gradient exponent.
    pub r: f64,
    /// Whether the main hypotheses accept the pair.
    pub accepted: bool,
    /// Case tag on acceptance.
    pub case: Option<H2Case>,
    /// Decay rate (computed for every sample, meaningful on accepted
    /// ones).
    pub sigma: f64,
    /// `theta1` with `wp = r`.
    pub theta1: f64,
    /// `theta2` for damped chemistry.
    pub theta2_gamma_pos: f64,
    /// `theta2` without damping.
    pub theta2_gamma_zero: f64,
    /// Initial-density exponent.
    pub p1: f64,
    /// Initial-gradient exponent.
    pub p2: f64,
    /// Whether the extra region also accepts the pair.
    pub extra_accepted: bool,
}

/// Classify a dense rectangle of `(p, r)` pairs.
///
/// `resolution` points are placed per axis (a single point lands at the
/// range midpoint), and every point is pushed through the hypothesis,
/// theta and extra-region checks.  The resulting table serializes
/// directly to CSV for plotting.
pub fn scan_region(
    params: &SystemParams,
    p_range: (f64, f64),
    r_range: (f64, f64),
    resolution: usize,
) -> Result<Vec<RegionSample>> {
    if resolution == 0 {
        return Err(FksError::InvalidParam(
            "scan resolution must be at least 1".into(),
        ));
    }
    for (lo, hi, name) in [(p_range.0, p_range.1, "p"), (r_range.0, r_range.1, "r")] {
        if !(lo > 0.0 && hi >= lo) {
            return Err(FksError::InvalidParam(format!(
                "invalid {name} range [{lo}, {hi}]"
            )));
        }
    }
    let axis = |range: (f64, f64)| -> Vec<f64> {
        if resolution == 1 {
            vec![0.5 * (range.0 + range.1)]
        } else {
            (0..resolution)
                .map(|i| range.0 + (range.1 - range.0) * i as f64 / (resolution - 1) as f64)
                .collect()
        }
    };
    let mut samples = Vec::with_capacity(resolution * resolution);
    for &p in &axis(p_range) {
        for &r in &axis(r_range) {
            let report = check_hypotheses(params, p, r);
            let sigma = compute_sigma(params, p, r);
            let thetas = theta_exponents(params, p, r, r);
            let (p1, p2) = compute_p1_p2(params, p, r);
            let extra = check_extra_region(params, p, r);
            samples.push(RegionSample {
                p,
                r,
                accepted: report.accepted,
                case: report.case,
                sigma,
                theta1: thetas.theta1,
                theta2_gamma_pos: thetas.theta2_gamma_pos,
                theta2_gamma_zero: thetas.theta2_gamma_zero,
                p1,
                p2,
                extra_accepted: extra.accepted,
            });
        }
    }
    Ok(samples)
}

/// Which regime an exponent profile was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileCase {
    /// Accepted under the bounded case (a) with `wp = r`.
    A2a,
    /// Accepted under the unbounded case (b) with `wp = r`.
    A2b,
    /// Local theory, scale-critical gradient exponent (`theta1 = 0`).
    LocalB1,
    /// Local theory, subcritical gradient exponent (`theta1 > 0`).
    LocalB2,
    /// Global small-data regime (`wp = r`, decay exponents in play).
    Global,
    /// Global regime inside the extra region (`r sigma <= d/alpha`).
    Extra,
}

/// A fully validated set of exponents, ready to parameterize a solve.
///
/// Instances only come out of the checked constructors, so holding an
/// `ExponentProfile` certifies that the hypotheses accepted `(p, r)` and
/// that `wp` classified successfully.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExponentProfile {
    /// Density exponent.
    pub p: f64,
    /// Gradient exponent.
    pub r: f64,
    /// Initial-gradient exponent.
    pub wp: f64,
    /// Decay rate.
    pub sigma: f64,
    /// Initial-density exponent.
    pub p1: f64,
    /// Initial-gradient-data exponent.
    pub p2: f64,
    /// Regime tag.
    pub case: ProfileCase,
}

impl ExponentProfile {
    /// Build a profile with an explicit gradient exponent `wp`.
    ///
    /// The case tag records the hypothesis case for `wp = r` and the
    /// local classification otherwise.
    pub fn build(params: &SystemParams, p: f64, r: f64, wp: f64) -> Result<Self> {
        let report = check_hypotheses(params, p, r);
        if !report.accepted {
            return Err(FksError::InvalidParam(format!(
                "exponents rejected: {}",
                report.violations.join("; ")
            )));
        }
        let wp_verdict = check_wp(params, wp, r);
        let case = match wp_verdict.case {
            Some(WpCase::A) => match report.case.expect("accepted implies a case") {
                H2Case::A2a => ProfileCase::A2a,
                H2Case::A2b => ProfileCase::A2b,
            },
            Some(WpCase::B1) => ProfileCase::LocalB1,
            Some(WpCase::B2) => ProfileCase::LocalB2,
            None => {
                return Err(FksError::InvalidParam(format!(
                    "gradient exponent rejected: {}",
                    wp_verdict.rejection.unwrap_or_default()
                )))
            }
        };
        let sigma = compute_sigma(params, p, r);
        let (p1, p2) = compute_p1_p2(params, p, r);
        Ok(ExponentProfile {
            p,
            r,
            wp,
            sigma,
            p1,
            p2,
            case,
        })
    }

    /// Build a profile for the global small-data regime (`wp = r`).
    pub fn global(params: &SystemParams, p: f64, r: f64) -> Result<Self> {
        let mut profile = Self::build(params, p, r, r)?;
        profile.case = ProfileCase::Global;
        Ok(profile)
    }

    /// Build a profile certified for the extra region (`wp = r` and
    /// `r sigma <= d/alpha`).
    pub fn extra(params: &SystemParams, p: f64, r: f64) -> Result<Self> {
        let verdict = check_extra_region(params, p, r);
        if !verdict.accepted {
            return Err(FksError::InvalidParam(format!(
                "extra region rejected: {}",
                verdict.violations.join("; ")
            )));
        }
        let mut profile = Self::build(params, p, r, r)?;
        profile.case = ProfileCase::Extra;
        Ok(profile)
    }
}
