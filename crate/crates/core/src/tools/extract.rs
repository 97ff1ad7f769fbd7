//! Deterministic pattern-based knowledge extraction from document bodies.
//!
//! Composition formulas are matched by the domain grammar; performance values
//! by unit-anchored patterns; mechanism sentences by a curated lexicon. In
//! LLM-assisted mode the gateway proposes entries and the same patterns
//! validate them, pattern-validated fields winning on conflict.

use once_cell::sync::Lazy;
use regex::Regex;

use super::corpus::CorpusDocument;
use crate::domain::{parse_composition, IonTable};
use crate::knowledge::{DesignInfo, KnowledgeEntry, PartialProcess, Performance};

/// Sentences containing any of these terms count as mechanistic insight.
pub const MECHANISM_LEXICON: [&str; 5] = ["passivation", "oxidation", "pinhole", "trap", "additive"];

static FORMULA_SPAN: Lazy<Regex> = Lazy::new(|| {
    // A formula-shaped token, optionally followed by `+ N% Name` clauses.
    Regex::new(r"(?x)
        (?: \( [A-Za-z0-9.]+ \) [0-9.]+ )+ (?: \s* \+ \s* [0-9.]+ % \s* [A-Za-z0-9]+ )*
        | [A-Z][A-Za-z0-9.]* (?: \s* \+ \s* [0-9.]+ % \s* [A-Za-z0-9]+ )*
    ")
    .expect("static regex")
});

static PCE_PATTERN: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)PCE\s*(?:of|=|:)?\s*([0-9]+(?:\.[0-9]+)?)\s*%").expect("static regex")
});
static T80_PATTERN: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)T80[^0-9]{0,24}?([0-9]+(?:\.[0-9]+)?)\s*h\b").expect("static regex")
});
static BANDGAP_PATTERN: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)(?:bandgap\s*(?:of|=|:|is|to)?\s*([0-9]+(?:\.[0-9]+)?)\s*eV|([0-9]+(?:\.[0-9]+)?)\s*eV\s*bandgap)")
        .expect("static regex")
});
static VOC_PATTERN: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)Voc\s*(?:of|=|:)?\s*([0-9]+(?:\.[0-9]+)?)\s*V\b").expect("static regex")
});
static FF_PATTERN: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)fill\s+factors?\s*(?:of|near|=|:)?\s*([0-9]+(?:\.[0-9]+)?)").expect("static regex")
});
static ANNEAL_PATTERN: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)anneal(?:ed|ing)?\s*(?:at)?\s*([0-9]+(?:\.[0-9]+)?)\s*C\b").expect("static regex")
});
static RPM_PATTERN: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"([0-9]{3,5})\s*rpm").expect("static regex"));

fn first_f64(pattern: &Regex, text: &str) -> Option<f64> {
    pattern.captures(text).and_then(|c| {
        c.iter().skip(1).flatten().next().and_then(|m| m.as_str().parse().ok())
    })
}

/// Performance values found anywhere in the text.
pub fn extract_performance(text: &str) -> Performance {
    Performance {
        pce: first_f64(&PCE_PATTERN, text),
        voc: first_f64(&VOC_PATTERN, text),
        jsc: None,
        ff: first_f64(&FF_PATTERN, text),
        t80: first_f64(&T80_PATTERN, text),
        bandgap: first_f64(&BANDGAP_PATTERN, text),
    }
}

fn extract_process(text: &str) -> PartialProcess {
    let deposition_method = if text.to_lowercase().contains("spin") {
        Some(crate::domain::DepositionMethod::SpinCoating)
    } else if text.to_lowercase().contains("blade") {
        Some(crate::domain::DepositionMethod::BladeCoating)
    } else if text.to_lowercase().contains("evaporat") {
        Some(crate::domain::DepositionMethod::Evaporation)
    } else {
        None
    };
    PartialProcess {
        deposition_method,
        anneal_c: first_f64(&ANNEAL_PATTERN, text),
        anneal_min: None,
        max_rpm: first_f64(&RPM_PATTERN, text),
    }
}

fn mechanism_sentences(text: &str) -> Vec<String> {
    text.split(['.', '!', '?'])
        .map(str::trim)
        .filter(|sentence| {
            let lower = sentence.to_lowercase();
            !sentence.is_empty() && MECHANISM_LEXICON.iter().any(|term| lower.contains(term))
        })
        .map(|s| format!("{s}."))
        .collect()
}

/// Grammar-valid formulas in the text, in order of appearance, deduplicated
/// on the canonical form.
pub fn extract_formulas(text: &str, table: &IonTable) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    let mut found = Vec::new();
    for span in FORMULA_SPAN.find_iter(text) {
        let raw = span.as_str().trim().trim_end_matches(['.', ',', ';', ':']);
        let Ok(composition) = parse_composition(raw, table) else { continue };
        let canonical = composition.formula();
        if seen.insert(canonical) {
            found.push(raw.to_string());
        }
    }
    found
}

/// Pattern-based extraction over one document body.
pub fn extract_entries(doc: &CorpusDocument, table: &IonTable) -> Vec<KnowledgeEntry> {
    let performance = extract_performance(&doc.body);
    if !performance.any_present() {
        return Vec::new();
    }
    let mechanism = mechanism_sentences(&doc.body);
    let process = extract_process(&doc.body);
    extract_formulas(&doc.body, table)
        .into_iter()
        .map(|composition| KnowledgeEntry {
            design: DesignInfo { composition, process: process.clone() },
            performance: performance.clone(),
            mechanism: mechanism.clone(),
            source_doc: doc.doc_id.clone(),
        })
        .collect()
}

/// Merges a model-proposed entry with pattern evidence; pattern-validated
/// fields win on conflict.
pub fn reconcile_with_patterns(
    mut proposed: KnowledgeEntry,
    doc: &CorpusDocument,
    table: &IonTable,
) -> Option<KnowledgeEntry> {
    if parse_composition(&proposed.design.composition, table).is_err() {
        let formulas = extract_formulas(&doc.body, table);
        proposed.design.composition = formulas.into_iter().next()?;
    }
    let evidence = extract_performance(&doc.body);
    let pick = |found: Option<f64>, claimed: Option<f64>| found.or(claimed);
    proposed.performance = Performance {
        pce: pick(evidence.pce, proposed.performance.pce),
        voc: pick(evidence.voc, proposed.performance.voc),
        jsc: proposed.performance.jsc,
        ff: pick(evidence.ff, proposed.performance.ff),
        t80: pick(evidence.t80, proposed.performance.t80),
        bandgap: pick(evidence.bandgap, proposed.performance.bandgap),
    };
    proposed.source_doc = doc.doc_id.clone();
    proposed.performance.any_present().then_some(proposed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::IonTable;

    fn doc(body: &str) -> CorpusDocument {
        CorpusDocument {
            doc_id: "doc-t".into(),
            title: "t".into(),
            abstract_text: String::new(),
            body: body.into(),
            tags: vec![],
        }
    }

    #[test]
    fn formula_with_pce_yields_one_entry() {
        let table = IonTable::bundled();
        let entries = extract_entries(
            &doc("Films of (FASnI3)0.6(MAPbI3)0.4 record a PCE of 17%."),
            table,
        );
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].performance.pce, Some(17.0));
        assert!(entries[0].is_valid(table));
    }

    #[test]
    fn body_without_a_formula_yields_nothing() {
        let table = IonTable::bundled();
        assert!(extract_entries(&doc("We record a PCE of 17% somewhere."), table).is_empty());
    }

    #[test]
    fn bandgap_phrasing_both_ways() {
        let table = IonTable::bundled();
        let entries =
            extract_entries(&doc("MAPbI3 shows a bandgap of 1.23 eV in thin films."), table);
        assert_eq!(entries[0].performance.bandgap, Some(1.23));
        let flipped = extract_entries(&doc("MAPbI3 gives a 1.23 eV bandgap."), table);
        assert_eq!(flipped[0].performance.bandgap, Some(1.23));
    }

    #[test]
    fn t80_hours_and_mechanism_sentences() {
        let table = IonTable::bundled();
        let body = "Cells of MAPbI3 show T80 of 1000 h. The additive suppresses oxidation. Nothing else.";
        let entries = extract_entries(&doc(body), table);
        assert_eq!(entries[0].performance.t80, Some(1000.0));
        assert_eq!(entries[0].mechanism.len(), 1);
        assert!(entries[0].mechanism[0].contains("oxidation"));
    }

    #[test]
    fn additive_clauses_stay_attached_to_the_formula() {
        let table = IonTable::bundled();
        let body = "We study FASnI3 + 10% SnF2 + 3% EDAI2 with a PCE of 12.1%.";
        let entries = extract_entries(&doc(body), table);
        assert_eq!(entries.len(), 1);
        let parsed = parse_composition(&entries[0].design.composition, table).unwrap();
        assert_eq!(parsed.additives.len(), 2);
    }

    #[test]
    fn pattern_fields_override_model_claims() {
        let table = IonTable::bundled();
        let document = doc("MAPbI3 devices record a PCE of 19.3%.");
        let proposed = KnowledgeEntry {
            design: DesignInfo { composition: "MAPbI3".into(), process: Default::default() },
            performance: Performance { pce: Some(99.0), ..Default::default() },
            mechanism: vec![],
            source_doc: "wrong".into(),
        };
        let merged = reconcile_with_patterns(proposed, &document, table).unwrap();
        assert_eq!(merged.performance.pce, Some(19.3));
        assert_eq!(merged.source_doc, "doc-t");
    }

    #[test]
    fn bundled_corpus_extracts_entries_from_every_doc() {
        let table = IonTable::bundled();
        let corpus = super::super::corpus::Corpus::bundled();
        for document in corpus.docs() {
            let entries = extract_entries(document, table);
            assert!(!entries.is_empty(), "no entries from {}", document.doc_id);
            for entry in entries {
                assert!(entry.is_valid(table), "invalid entry from {}", document.doc_id);
            }
        }
    }
}
