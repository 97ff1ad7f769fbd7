//! Composition grammar and parser.
//!
//! Accepts concatenated cation tokens with optional decimal subscripts,
//! parenthesized sub-formulas with multipliers, halide subscripts summing to
//! 3 before normalization, and `+ N% Name` additive clauses:
//!
//! ```text
//! MAPbI3
//! Cs0.05FA0.95PbI2.55Br0.45
//! (FASnI3)0.6(MAPbI3)0.4 + 10% SnF2 + 3% EDAI2
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ion::{IonSpec, IonTable, Site};

/// Tolerance on raw site totals before normalization.
pub const SITE_TOTAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteFraction {
    pub ion: IonSpec,
    pub fraction: f64,
}

/// Additive loading as mole-percent relative to the B-site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Additive {
    pub name: String,
    pub mole_percent: f64,
}

/// Fully resolved site occupancies; fractions on each site sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub a_site: Vec<SiteFraction>,
    pub b_site: Vec<SiteFraction>,
    pub x_site: Vec<SiteFraction>,
    pub additives: Vec<Additive>,
}

impl Composition {
    pub fn site(&self, site: Site) -> &[SiteFraction] {
        match site {
            Site::A => &self.a_site,
            Site::B => &self.b_site,
            Site::X => &self.x_site,
        }
    }

    pub fn site_mut(&mut self, site: Site) -> &mut Vec<SiteFraction> {
        match site {
            Site::A => &mut self.a_site,
            Site::B => &mut self.b_site,
            Site::X => &mut self.x_site,
        }
    }

    /// Fraction of `symbol` on `site`, 0 when absent.
    pub fn fraction_of(&self, site: Site, symbol: &str) -> f64 {
        self.site(site)
            .iter()
            .find(|sf| sf.ion.symbol == symbol)
            .map(|sf| sf.fraction)
            .unwrap_or(0.0)
    }

    pub fn formula(&self) -> String {
        format_composition(self)
    }

    /// Structural equality up to a per-fraction tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let site_eq = |a: &[SiteFraction], b: &[SiteFraction]| {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    x.ion == y.ion && (x.fraction - y.fraction).abs() <= tol
                })
        };
        site_eq(&self.a_site, &other.a_site)
            && site_eq(&self.b_site, &other.b_site)
            && site_eq(&self.x_site, &other.x_site)
            && self.additives.len() == other.additives.len()
            && self.additives.iter().zip(&other.additives).all(|(x, y)| {
                x.name == y.name && (x.mole_percent - y.mole_percent).abs() <= tol
            })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CompositionError {
    #[error("syntax error at byte {position}: {reason}")]
    Syntax { position: usize, reason: String },
    #[error("unknown ion symbol `{fragment}`")]
    UnknownIon { fragment: String },
    #[error("empty {site}-site")]
    EmptySite { site: Site },
    #[error("{site}-site coefficients sum to {total}, expected {expected}")]
    SiteTotal { site: Site, total: f64, expected: f64 },
    #[error("bad additive clause `{clause}`")]
    BadAdditive { clause: String },
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn eof(&self) -> bool {
        self.pos >= self.text.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn number(&mut self) -> Option<f64> {
        let rest = self.rest();
        let end = rest
            .char_indices()
            .take_while(|(i, c)| c.is_ascii_digit() || (*c == '.' && rest[..*i].contains(|d: char| d.is_ascii_digit())))
            .map(|(i, c)| i + c.len_utf8())
            .last()?;
        let token = &rest[..end];
        let value: f64 = token.parse().ok()?;
        self.pos += end;
        Some(value)
    }
}

/// Raw coefficients per site before normalization.
type Coefficients = BTreeMap<Site, BTreeMap<String, f64>>;

fn parse_units(
    lexer: &mut Lexer,
    table: &IonTable,
    scale: f64,
    coeffs: &mut Coefficients,
    depth: usize,
) -> Result<(), CompositionError> {
    if depth > 8 {
        return Err(CompositionError::Syntax {
            position: lexer.pos,
            reason: "parenthesis nesting too deep".into(),
        });
    }
    let mut parsed_any = false;
    while !lexer.eof() {
        match lexer.peek().unwrap() {
            '(' => {
                lexer.pos += 1;
                let mut inner: Coefficients = BTreeMap::new();
                parse_units(lexer, table, 1.0, &mut inner, depth + 1)?;
                if lexer.peek() != Some(')') {
                    return Err(CompositionError::Syntax {
                        position: lexer.pos,
                        reason: "unclosed parenthesis".into(),
                    });
                }
                lexer.pos += 1;
                let multiplier = lexer.number().unwrap_or(1.0);
                for (site, ions) in inner {
                    let entry = coeffs.entry(site).or_default();
                    for (symbol, coeff) in ions {
                        *entry.entry(symbol).or_insert(0.0) += coeff * multiplier * scale;
                    }
                }
                parsed_any = true;
            }
            ')' => break,
            c if c.is_ascii_alphabetic() => {
                let Some(ion) = table.match_symbol_prefix(lexer.rest()) else {
                    let fragment: String =
                        lexer.rest().chars().take_while(|c| c.is_ascii_alphabetic()).collect();
                    return Err(CompositionError::UnknownIon { fragment });
                };
                let symbol = ion.symbol.clone();
                let site = ion.site;
                lexer.pos += symbol.len();
                let coeff = lexer.number().unwrap_or(1.0);
                *coeffs.entry(site).or_default().entry(symbol).or_insert(0.0) += coeff * scale;
                parsed_any = true;
            }
            c => {
                return Err(CompositionError::Syntax {
                    position: lexer.pos,
                    reason: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    if !parsed_any {
        return Err(CompositionError::Syntax {
            position: lexer.pos,
            reason: "expected an ion or parenthesized group".into(),
        });
    }
    Ok(())
}

fn expected_total(site: Site) -> f64 {
    match site {
        Site::A | Site::B => 1.0,
        Site::X => 3.0,
    }
}

fn normalize_site(
    site: Site,
    raw: Option<&BTreeMap<String, f64>>,
    table: &IonTable,
) -> Result<Vec<SiteFraction>, CompositionError> {
    let raw = raw.filter(|m| !m.is_empty()).ok_or(CompositionError::EmptySite { site })?;
    let total: f64 = raw.values().sum();
    let expected = expected_total(site);
    if (total - expected).abs() > SITE_TOTAL_TOLERANCE * expected {
        return Err(CompositionError::SiteTotal { site, total, expected });
    }
    Ok(raw
        .iter()
        .map(|(symbol, coeff)| SiteFraction {
            ion: table.get(symbol).expect("symbol came from the table").clone(),
            fraction: coeff / total,
        })
        .collect())
}

fn parse_additive_clause(clause: &str) -> Result<Additive, CompositionError> {
    let bad = || CompositionError::BadAdditive { clause: clause.trim().to_string() };
    let trimmed = clause.trim();
    let percent_pos = trimmed.find('%').ok_or_else(bad)?;
    let number: f64 = trimmed[..percent_pos].trim().parse().map_err(|_| bad())?;
    let name = trimmed[percent_pos + 1..].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric()) {
        return Err(bad());
    }
    Ok(Additive { name: name.to_string(), mole_percent: number })
}

/// Parses a formula against an ion table; site fractions come out normalized.
pub fn parse_composition(formula: &str, table: &IonTable) -> Result<Composition, CompositionError> {
    let mut clauses = formula.split('+');
    let base = clauses.next().unwrap_or("").trim();
    if base.is_empty() {
        return Err(CompositionError::Syntax { position: 0, reason: "empty formula".into() });
    }
    let mut coeffs: Coefficients = BTreeMap::new();
    let mut lexer = Lexer { text: base, pos: 0 };
    parse_units(&mut lexer, table, 1.0, &mut coeffs, 0)?;
    if !lexer.eof() {
        return Err(CompositionError::Syntax {
            position: lexer.pos,
            reason: "trailing input after formula".into(),
        });
    }

    let composition = Composition {
        a_site: sort_site(normalize_site(Site::A, coeffs.get(&Site::A), table)?),
        b_site: sort_site(normalize_site(Site::B, coeffs.get(&Site::B), table)?),
        x_site: sort_site(normalize_site(Site::X, coeffs.get(&Site::X), table)?),
        additives: clauses.map(parse_additive_clause).collect::<Result<Vec<_>, _>>()?,
    };
    Ok(composition)
}

/// Canonical per-site order: fraction descending, then symbol ascending.
fn sort_site(mut fractions: Vec<SiteFraction>) -> Vec<SiteFraction> {
    fractions.sort_by(|a, b| {
        b.fraction
            .partial_cmp(&a.fraction)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.ion.symbol.cmp(&b.ion.symbol))
    });
    fractions
}

fn push_number(out: &mut String, value: f64) {
    // Shortest round-trip representation keeps reparses exact.
    out.push_str(&format!("{value}"));
}

/// Canonical formula string; reparses to an equal composition.
pub fn format_composition(c: &Composition) -> String {
    let mut out = String::new();
    for sf in &c.a_site {
        out.push_str(&sf.ion.symbol);
        if sf.fraction != 1.0 {
            push_number(&mut out, sf.fraction);
        }
    }
    for sf in &c.b_site {
        out.push_str(&sf.ion.symbol);
        if sf.fraction != 1.0 {
            push_number(&mut out, sf.fraction);
        }
    }
    for sf in &c.x_site {
        out.push_str(&sf.ion.symbol);
        push_number(&mut out, sf.fraction * 3.0);
    }
    for additive in &c.additives {
        out.push_str(" + ");
        push_number(&mut out, additive.mole_percent);
        out.push_str("% ");
        out.push_str(&additive.name);
    }
    out
}
