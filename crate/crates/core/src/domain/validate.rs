//! Legality validators: charge neutrality, Goldschmidt tolerance factor,
//! site-fraction invariants, and process sanity ranges.
//!
//! These rules are a declared stand-in for a full structure validator; the
//! rule-set version travels with every marker so downstream reports can name
//! which rules produced a verdict.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::composition::Composition;
use super::ion::Site;
use super::process::Candidate;

pub const CHARGE_TOLERANCE: f64 = 1e-9;
/// Accepted Goldschmidt window, inclusive on both ends.
pub const TOLERANCE_WINDOW: (f64, f64) = (0.80, 1.06);
/// Sane anneal temperature range in C, exclusive bounds.
pub const ANNEAL_C_RANGE: (f64, f64) = (50.0, 250.0);
/// Sane spin speed range in rpm, exclusive bounds.
pub const RPM_RANGE: (f64, f64) = (500.0, 8000.0);
pub const RULE_SET_VERSION: &str = "builtin-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeutralityCheck {
    /// Net charge per ABX3 formula unit.
    pub net_charge: f64,
    pub pass: bool,
}

/// Net charge per formula unit: sum of fraction-weighted charges on A and B
/// plus three times the X-site sum.
pub fn check_charge_neutrality(c: &Composition) -> NeutralityCheck {
    let site_sum = |site: Site| -> f64 {
        c.site(site).iter().map(|sf| sf.fraction * f64::from(sf.ion.charge)).sum()
    };
    let net_charge = site_sum(Site::A) + site_sum(Site::B) + 3.0 * site_sum(Site::X);
    NeutralityCheck { net_charge, pass: net_charge.abs() <= CHARGE_TOLERANCE }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceCheck {
    pub t: f64,
    pub r_a: f64,
    pub r_b: f64,
    pub r_x: f64,
    pub pass: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum ToleranceError {
    #[error("ion `{0}` has no usable radius")]
    MissingRadius(String),
}

/// Goldschmidt factor from fraction-weighted mean radii:
/// t = (r_A + r_X) / (sqrt(2) * (r_B + r_X)).
pub fn tolerance_factor(c: &Composition) -> Result<ToleranceCheck, ToleranceError> {
    let mean_radius = |site: Site| -> Result<f64, ToleranceError> {
        let mut acc = 0.0;
        for sf in c.site(site) {
            if !(sf.ion.radius > 0.0) || !sf.ion.radius.is_finite() {
                return Err(ToleranceError::MissingRadius(sf.ion.symbol.clone()));
            }
            acc += sf.fraction * sf.ion.radius;
        }
        Ok(acc)
    };
    let r_a = mean_radius(Site::A)?;
    let r_b = mean_radius(Site::B)?;
    let r_x = mean_radius(Site::X)?;
    let t = (r_a + r_x) / (std::f64::consts::SQRT_2 * (r_b + r_x));
    let pass = (TOLERANCE_WINDOW.0..=TOLERANCE_WINDOW.1).contains(&t);
    Ok(ToleranceCheck { t, r_a, r_b, r_x, pass })
}

/// Pass/fail with the complete list of violated rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityMarker {
    pub pass: bool,
    pub reasons: Vec<String>,
    /// Which rule set produced this verdict.
    pub rule_set: String,
}

impl ValidityMarker {
    pub fn passing() -> Self {
        Self { pass: true, reasons: Vec::new(), rule_set: RULE_SET_VERSION.into() }
    }
}

fn site_fractions_ok(c: &Composition) -> bool {
    [Site::A, Site::B, Site::X].iter().all(|&site| {
        let fractions = c.site(site);
        !fractions.is_empty()
            && fractions.iter().all(|sf| sf.fraction >= 0.0)
            && (fractions.iter().map(|sf| sf.fraction).sum::<f64>() - 1.0).abs() <= 1e-9
    })
}

/// Conjunction of every hard rule; collects all violations, not just the first.
pub fn legality_check(candidate: &Candidate) -> ValidityMarker {
    let mut reasons = Vec::new();
    let c = &candidate.composition;

    if !site_fractions_ok(c) {
        reasons.push("site_fractions_invalid".to_string());
    }
    if !check_charge_neutrality(c).pass {
        reasons.push("charge_imbalance".to_string());
    }
    match tolerance_factor(c) {
        Ok(check) if !check.pass => reasons.push("tolerance_out_of_window".to_string()),
        Ok(_) => {}
        Err(_) => reasons.push("missing_ion_radius".to_string()),
    }

    let anneal = candidate.process.anneal.temperature_c;
    if !(anneal > ANNEAL_C_RANGE.0 && anneal < ANNEAL_C_RANGE.1) {
        reasons.push("anneal_out_of_range".to_string());
    }
    for step in &candidate.process.spin_profile {
        if !(step.rpm > RPM_RANGE.0 && step.rpm < RPM_RANGE.1) {
            reasons.push("rpm_out_of_range".to_string());
            break;
        }
    }

    ValidityMarker { pass: reasons.is_empty(), reasons, rule_set: RULE_SET_VERSION.into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::composition::{parse_composition, SiteFraction};
    use crate::domain::ion::{IonSpec, IonTable};

    fn table() -> &'static IonTable {
        IonTable::bundled()
    }

    #[test]
    fn mapbi3_is_charge_neutral() {
        let c = parse_composition("MAPbI3", table()).unwrap();
        let check = check_charge_neutrality(&c);
        assert!(check.pass);
        assert!(check.net_charge.abs() <= CHARGE_TOLERANCE);
    }

    #[test]
    fn divalent_a_cation_breaks_neutrality_by_plus_one() {
        // Hypothetical Ca(2+) on the A site with PbI3: (+2)+(+2)+3(-1) = +1.
        let mut c = parse_composition("MAPbI3", table()).unwrap();
        c.a_site = vec![SiteFraction {
            ion: IonSpec { symbol: "Ca".into(), site: Site::A, charge: 2, radius: 1.34 },
            fraction: 1.0,
        }];
        let check = check_charge_neutrality(&c);
        assert!(!check.pass);
        assert!((check.net_charge - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_sn_pb_blend_stays_neutral() {
        let c = parse_composition("(FASnI3)0.6(MAPbI3)0.4", table()).unwrap();
        let check = check_charge_neutrality(&c);
        assert!(check.pass, "net {}", check.net_charge);
    }

    #[test]
    fn equal_ab_radii_with_huge_anion_approaches_inverse_sqrt2() {
        let mk = |symbol: &str, site: Site, charge: i8, radius: f64| IonSpec {
            symbol: symbol.into(),
            site,
            charge,
            radius,
        };
        let c = Composition {
            a_site: vec![SiteFraction { ion: mk("Aa", Site::A, 1, 1.0), fraction: 1.0 }],
            b_site: vec![SiteFraction { ion: mk("Bb", Site::B, 2, 1.0), fraction: 1.0 }],
            x_site: vec![SiteFraction { ion: mk("Xx", Site::X, -1, 100.0), fraction: 1.0 }],
            additives: vec![],
        };
        let check = tolerance_factor(&c).unwrap();
        assert!((check.t - 101.0 / (std::f64::consts::SQRT_2 * 101.0)).abs() < 1e-12);
        assert!((check.t - 0.70711).abs() < 1e-5);
        assert!(!check.pass);
    }

    #[test]
    fn cspbi3_tolerance_factor_matches_hand_arithmetic() {
        let c = parse_composition("CsPbI3", table()).unwrap();
        let check = tolerance_factor(&c).unwrap();
        // (1.88 + 2.20) / (sqrt(2) * (1.19 + 2.20))
        let expected = 4.08 / (std::f64::consts::SQRT_2 * 3.39);
        assert!((check.t - expected).abs() < 1e-12);
        assert!((check.t - 0.851).abs() < 5e-4);
        assert!(check.pass);
    }

    #[test]
    fn mixed_a_site_uses_fraction_weighted_mean_radius() {
        let c = parse_composition("Cs0.05FA0.95PbI3", table()).unwrap();
        let check = tolerance_factor(&c).unwrap();
        let r_a = 0.05 * 1.88 + 0.95 * 2.53;
        assert!((check.r_a - r_a).abs() < 1e-12);
        assert!((r_a - 2.4975).abs() < 1e-12);
        let expected = (r_a + 2.20) / (std::f64::consts::SQRT_2 * (1.19 + 2.20));
        assert!((check.t - expected).abs() < 1e-12);
    }

    #[test]
    fn tolerance_factor_is_monotone_in_mean_radii() {
        let c = parse_composition("MAPbI3", table()).unwrap();
        let base = tolerance_factor(&c).unwrap().t;

        let mut bigger_a = c.clone();
        bigger_a.a_site[0].ion.radius += 0.01;
        assert!(tolerance_factor(&bigger_a).unwrap().t > base);

        let mut bigger_b = c.clone();
        bigger_b.b_site[0].ion.radius += 0.01;
        assert!(tolerance_factor(&bigger_b).unwrap().t < base);
    }

    #[test]
    fn appendix_recipe_passes_every_legality_rule() {
        let c =
            parse_composition("(FASnI3)0.6(MAPbI3)0.4 + 10% SnF2 + 3% EDAI2", table()).unwrap();
        let mut cand = Candidate::from_composition("c1", c);
        cand.process.anneal = crate::domain::Anneal { temperature_c: 70.0, minutes: 15.0 };
        cand.process.spin_profile = vec![crate::domain::SpinStep { rpm: 4000.0, seconds: 40.0 }];
        let marker = legality_check(&cand);
        assert!(marker.pass, "reasons: {:?}", marker.reasons);
        assert_eq!(marker.rule_set, RULE_SET_VERSION);
    }

    #[test]
    fn hot_anneal_fails_with_that_single_reason() {
        let c = parse_composition("(FASnI3)0.6(MAPbI3)0.4", table()).unwrap();
        let mut cand = Candidate::from_composition("c1", c);
        cand.process.anneal.temperature_c = 400.0;
        let marker = legality_check(&cand);
        assert!(!marker.pass);
        assert_eq!(marker.reasons, vec!["anneal_out_of_range"]);
    }

    #[test]
    fn all_violations_are_collected() {
        let c = parse_composition("MAPbI3", table()).unwrap();
        let mut cand = Candidate::from_composition("c1", c);
        cand.composition.a_site[0].ion.charge = 2; // breaks neutrality
        cand.process.anneal.temperature_c = 400.0;
        cand.process.spin_profile.push(crate::domain::SpinStep { rpm: 100.0, seconds: 5.0 });
        let marker = legality_check(&cand);
        assert!(!marker.pass);
        assert!(marker.reasons.contains(&"charge_imbalance".to_string()));
        assert!(marker.reasons.contains(&"anneal_out_of_range".to_string()));
        assert!(marker.reasons.contains(&"rpm_out_of_range".to_string()));
    }
}
