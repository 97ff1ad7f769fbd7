//! Seeded mutation-and-recombination candidate generator plus the hard
//! constraint filter.
//!
//! Generation starts from seed-entry compositions (or dataset rows when no
//! seeds are given), applies small mutations, and rejection-samples against
//! the legality rules and hard constraints. Deterministic under a fixed seed.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    legality_check, parse_composition, Anneal, Candidate, Composition, DatasetRecord, IonTable,
    Site, SiteFraction, ANNEAL_C_RANGE, RPM_RANGE,
};
use crate::goal::ConstraintSpec;
use crate::knowledge::KnowledgeEntry;

/// Fixed additive vocabulary with default loadings (mole-%).
pub const ADDITIVE_LIST: [(&str, f64); 5] =
    [("SnF2", 10.0), ("EDAI2", 3.0), ("MACl", 5.0), ("PEAI", 2.0), ("RbI", 5.0)];

/// Site-fraction mutation step.
pub const FRACTION_STEP: f64 = 0.05;
/// Rejection-sampling budget is this factor times the requested count.
pub const RETRY_FACTOR: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateOutput {
    pub candidates: Vec<Candidate>,
    /// Set when the retry budget ran out before `count` candidates passed.
    pub shortfall: bool,
    pub attempts: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("no candidate satisfied the constraints within budget ({reason})")]
    Exhausted { reason: String },
    #[error("count must be at least 1")]
    BadCount,
    #[error("empty ion table")]
    EmptyIonTable,
}

fn round_fraction(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn renormalize(site: &mut Vec<SiteFraction>) {
    site.retain(|sf| sf.fraction > 1e-12);
    let total: f64 = site.iter().map(|sf| sf.fraction).sum();
    if total > 0.0 {
        for sf in site.iter_mut() {
            sf.fraction = round_fraction(sf.fraction / total);
        }
    }
    // Push any residual rounding onto the largest fraction so sums stay 1.
    let total: f64 = site.iter().map(|sf| sf.fraction).sum();
    let residual = 1.0 - total;
    if let Some(largest) = site
        .iter_mut()
        .max_by(|a, b| a.fraction.partial_cmp(&b.fraction).unwrap_or(std::cmp::Ordering::Equal))
    {
        largest.fraction = round_fraction(largest.fraction + residual);
    }
    site.sort_by(|a, b| {
        b.fraction
            .partial_cmp(&a.fraction)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.ion.symbol.cmp(&b.ion.symbol))
    });
}

fn shift_fraction(site: &mut Vec<SiteFraction>, from: usize, to: usize, step: f64) {
    let moved = step.min(site[from].fraction);
    site[from].fraction = round_fraction(site[from].fraction - moved);
    site[to].fraction = round_fraction(site[to].fraction + moved);
    renormalize(site);
}

struct Mutator<'a> {
    table: &'a IonTable,
    rng: ChaCha8Rng,
}

impl<'a> Mutator<'a> {
    fn perturb_site_fractions(&mut self, c: &mut Composition, site: Site) {
        let fractions = c.site_mut(site);
        if fractions.len() < 2 {
            return;
        }
        let from = self.rng.gen_range(0..fractions.len());
        let mut to = self.rng.gen_range(0..fractions.len() - 1);
        if to >= from {
            to += 1;
        }
        shift_fraction(fractions, from, to, FRACTION_STEP);
    }

    fn substitute_ion(&mut self, c: &mut Composition, site: Site) {
        let options = self.table.ions_on_site(site);
        if options.is_empty() {
            return;
        }
        let replacement = options[self.rng.gen_range(0..options.len())].clone();
        let fractions = c.site_mut(site);
        let slot = self.rng.gen_range(0..fractions.len());
        if let Some(existing) =
            fractions.iter().position(|sf| sf.ion.symbol == replacement.symbol)
        {
            if existing != slot {
                let moved = fractions[slot].fraction;
                fractions[existing].fraction = round_fraction(fractions[existing].fraction + moved);
                fractions.remove(slot);
            }
        } else {
            fractions[slot].ion = replacement;
        }
        renormalize(fractions);
    }

    fn shift_halides(&mut self, c: &mut Composition) {
        if c.x_site.len() >= 2 {
            self.perturb_site_fractions(c, Site::X);
            return;
        }
        // Introduce a second halide at one step.
        let current = c.x_site[0].ion.symbol.clone();
        let options: Vec<_> = self
            .table
            .ions_on_site(Site::X)
            .into_iter()
            .filter(|i| i.symbol != current)
            .cloned()
            .collect();
        if options.is_empty() {
            return;
        }
        let incoming = options[self.rng.gen_range(0..options.len())].clone();
        c.x_site[0].fraction = round_fraction(1.0 - FRACTION_STEP);
        c.x_site.push(SiteFraction { ion: incoming, fraction: FRACTION_STEP });
        renormalize(&mut c.x_site);
    }

    fn toggle_additive(&mut self, c: &mut Composition) {
        let (name, percent) = ADDITIVE_LIST[self.rng.gen_range(0..ADDITIVE_LIST.len())];
        if let Some(pos) = c.additives.iter().position(|a| a.name == name) {
            c.additives.remove(pos);
        } else {
            c.additives.push(crate::domain::Additive {
                name: name.to_string(),
                mole_percent: percent,
            });
            c.additives.sort_by(|a, b| a.name.cmp(&b.name));
        }
    }

    fn jitter_process(&mut self, candidate: &mut Candidate) {
        let anneal_delta = [-20.0, -10.0, 10.0, 20.0][self.rng.gen_range(0..4)];
        let anneal = &mut candidate.process.anneal;
        anneal.temperature_c = (anneal.temperature_c + anneal_delta)
            .clamp(ANNEAL_C_RANGE.0 + 5.0, ANNEAL_C_RANGE.1 - 5.0);
        let minutes_delta = [-5.0, 5.0][self.rng.gen_range(0..2)];
        anneal.minutes = (anneal.minutes + minutes_delta).max(5.0);
        if let Some(last) = candidate.process.spin_profile.last_mut() {
            let rpm_delta = [-500.0, 500.0][self.rng.gen_range(0..2)];
            last.rpm = (last.rpm + rpm_delta).clamp(RPM_RANGE.0 + 100.0, RPM_RANGE.1 - 100.0);
        }
    }

    /// Nudges a candidate toward satisfying fraction-type constraints so
    /// rejection sampling converges; the full filter still re-checks.
    fn repair_for_constraints(&mut self, c: &mut Composition, constraints: &[ConstraintSpec]) {
        for constraint in constraints {
            match constraint {
                ConstraintSpec::MaxFraction { site, ion, max } => {
                    let over =
                        c.site(*site).iter().any(|sf| sf.ion.symbol == *ion && sf.fraction > *max);
                    if !over {
                        continue;
                    }
                    let alternatives: Vec<_> = self
                        .table
                        .ions_on_site(*site)
                        .into_iter()
                        .filter(|i| i.symbol != *ion)
                        .cloned()
                        .collect();
                    if alternatives.is_empty() {
                        continue;
                    }
                    let fractions = c.site_mut(*site);
                    let index =
                        fractions.iter().position(|sf| sf.ion.symbol == *ion).expect("present");
                    let excess = round_fraction(fractions[index].fraction - *max);
                    fractions[index].fraction = *max;
                    let receiver = alternatives[self.rng.gen_range(0..alternatives.len())].clone();
                    if let Some(existing) =
                        fractions.iter_mut().find(|sf| sf.ion.symbol == receiver.symbol)
                    {
                        existing.fraction = round_fraction(existing.fraction + excess);
                    } else {
                        fractions.push(SiteFraction { ion: receiver, fraction: excess });
                    }
                    renormalize(fractions);
                }
                ConstraintSpec::BanIon { ion } => {
                    for site in [Site::A, Site::B, Site::X] {
                        let present = c.site(site).iter().any(|sf| sf.ion.symbol == *ion);
                        if !present {
                            continue;
                        }
                        let alternatives: Vec<_> = self
                            .table
                            .ions_on_site(site)
                            .into_iter()
                            .filter(|i| i.symbol != *ion)
                            .cloned()
                            .collect();
                        if alternatives.is_empty() {
                            continue;
                        }
                        let replacement =
                            alternatives[self.rng.gen_range(0..alternatives.len())].clone();
                        let fractions = c.site_mut(site);
                        let index = fractions
                            .iter()
                            .position(|sf| sf.ion.symbol == *ion)
                            .expect("present");
                        if let Some(existing) =
                            fractions.iter().position(|sf| sf.ion.symbol == replacement.symbol)
                        {
                            let moved = fractions[index].fraction;
                            fractions[existing].fraction =
                                round_fraction(fractions[existing].fraction + moved);
                            fractions.remove(index);
                        } else {
                            fractions[index].ion = replacement;
                        }
                        renormalize(fractions);
                    }
                }
                ConstraintSpec::ProcessRange { .. } => {}
            }
        }
    }
}

/// Base designs the sampler mutates from.
fn seed_bases(
    seeds: &[KnowledgeEntry],
    dataset: &[DatasetRecord],
    table: &IonTable,
) -> Vec<Candidate> {
    let mut bases: Vec<Candidate> = Vec::new();
    for entry in seeds {
        let Ok(composition) = parse_composition(&entry.design.composition, table) else {
            continue;
        };
        let mut candidate = Candidate::from_composition("seed", composition);
        if let Some(anneal_c) = entry.design.process.anneal_c {
            candidate.process.anneal.temperature_c = anneal_c;
        }
        if let Some(minutes) = entry.design.process.anneal_min {
            candidate.process.anneal.minutes = minutes;
        }
        if let Some(method) = entry.design.process.deposition_method {
            candidate.process.deposition_method = method;
        }
        bases.push(candidate);
    }
    if bases.is_empty() {
        bases.extend(dataset.iter().map(|record| record.as_candidate("seed")));
    }
    bases
}

/// K legal, constraint-satisfying candidates from the seeded sampler.
pub fn generate_candidates(
    seeds: &[KnowledgeEntry],
    dataset: &[DatasetRecord],
    table: &IonTable,
    constraints: &[ConstraintSpec],
    count: usize,
    seed: u64,
    id_prefix: &str,
) -> Result<GenerateOutput, GenerateError> {
    if count == 0 {
        return Err(GenerateError::BadCount);
    }
    if table.is_empty() {
        return Err(GenerateError::EmptyIonTable);
    }
    let bases = seed_bases(seeds, dataset, table);
    if bases.is_empty() {
        return Err(GenerateError::Exhausted { reason: "no_seed_designs".into() });
    }

    let mut mutator = Mutator { table, rng: ChaCha8Rng::seed_from_u64(seed) };
    let mut accepted: Vec<Candidate> = Vec::new();
    let mut rejection_counts: BTreeMap<String, usize> = BTreeMap::new();
    let budget = RETRY_FACTOR * count;
    let mut attempts = 0;

    while accepted.len() < count && attempts < budget {
        attempts += 1;
        let base = &bases[mutator.rng.gen_range(0..bases.len())];
        let mut candidate = base.clone();
        candidate.id = format!("{id_prefix}-{:03}", accepted.len() + 1);

        let mutation_count = 1 + mutator.rng.gen_range(0..3);
        for _ in 0..mutation_count {
            match mutator.rng.gen_range(0..5) {
                0 => {
                    let site = [Site::A, Site::B][mutator.rng.gen_range(0..2)];
                    mutator.perturb_site_fractions(&mut candidate.composition, site);
                }
                1 => {
                    let site = [Site::A, Site::B][mutator.rng.gen_range(0..2)];
                    mutator.substitute_ion(&mut candidate.composition, site);
                }
                2 => mutator.shift_halides(&mut candidate.composition),
                3 => mutator.toggle_additive(&mut candidate.composition),
                _ => mutator.jitter_process(&mut candidate),
            }
        }
        mutator.repair_for_constraints(&mut candidate.composition, constraints);

        let marker = legality_check(&candidate);
        if !marker.pass {
            for reason in marker.reasons {
                *rejection_counts.entry(reason).or_insert(0) += 1;
            }
            continue;
        }
        if let Some(violated) =
            constraints.iter().find(|constraint| !constraint.satisfied_by(&candidate))
        {
            *rejection_counts.entry(violated.code()).or_insert(0) += 1;
            continue;
        }
        // Dedup on the canonical formula + anneal so K candidates differ.
        let key = format!(
            "{}|{}",
            candidate.composition.formula(),
            candidate.process.anneal.temperature_c
        );
        if accepted.iter().any(|c| {
            format!("{}|{}", c.composition.formula(), c.process.anneal.temperature_c) == key
        }) {
            *rejection_counts.entry("duplicate_design".into()).or_insert(0) += 1;
            continue;
        }
        accepted.push(candidate);
    }

    if accepted.is_empty() {
        let modal = rejection_counts
            .iter()
            .max_by_key(|(_, n)| **n)
            .map(|(reason, _)| reason.clone())
            .unwrap_or_else(|| "no_attempts".into());
        let reason = if modal.starts_with("max_fraction") || modal.starts_with("ban_ion") {
            "constraint_unsatisfiable".to_string()
        } else {
            modal
        };
        return Err(GenerateError::Exhausted { reason });
    }
    let shortfall = accepted.len() < count;
    Ok(GenerateOutput { candidates: accepted, shortfall, attempts })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterOutput {
    pub kept: Vec<Candidate>,
    pub rejected: Vec<(Candidate, Vec<String>)>,
}

/// Partitions candidates by legality and hard constraints, preserving input
/// order; every rejected candidate carries its full reason list.
pub fn filter_candidates(
    candidates: Vec<Candidate>,
    constraints: &[ConstraintSpec],
) -> FilterOutput {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for candidate in candidates {
        let mut reasons = legality_check(&candidate).reasons;
        for constraint in constraints {
            if !constraint.satisfied_by(&candidate) {
                reasons.push(constraint.code());
            }
        }
        if reasons.is_empty() {
            kept.push(candidate);
        } else {
            rejected.push((candidate, reasons));
        }
    }
    FilterOutput { kept, rejected }
}
