//! Ion table: site assignments, formal charges, and effective radii.
//!
//! Molecular cations (MA, FA, EDA) are treated as rigid pseudo-ions with an
//! effective radius. The bundled table is versioned data; a custom table can
//! be loaded from the same CSV format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lattice site in the ABX3 structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Site {
    A,
    B,
    X,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::A => write!(f, "A"),
            Site::B => write!(f, "B"),
            Site::X => write!(f, "X"),
        }
    }
}

impl std::str::FromStr for Site {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Site::A),
            "B" | "b" => Ok(Site::B),
            "X" | "x" => Ok(Site::X),
            other => Err(format!("unknown site `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSpec {
    pub symbol: String,
    pub site: Site,
    /// Formal charge in elementary charges.
    pub charge: i8,
    /// Effective ionic radius in angstrom.
    pub radius: f64,
}

#[derive(Debug, Error)]
pub enum IonTableError {
    #[error("io error reading ion table: {0}")]
    Io(#[from] std::io::Error),
    #[error("ion table line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("ion `{symbol}`: {reason}")]
    BadIon { symbol: String, reason: String },
    #[error("duplicate ion symbol `{0}`")]
    Duplicate(String),
}

/// Immutable lookup table of ions keyed by symbol.
#[derive(Debug, Clone)]
pub struct IonTable {
    ions: BTreeMap<String, IonSpec>,
    /// Symbols sorted longest-first for greedy formula tokenization.
    symbols_by_len: Vec<String>,
}

const BUNDLED_CSV: &str = include_str!("../../data/ion_table.csv");

static BUNDLED: Lazy<IonTable> =
    Lazy::new(|| IonTable::parse_csv(BUNDLED_CSV).expect("bundled ion table is valid"));

fn check_ion(ion: &IonSpec) -> Result<(), IonTableError> {
    let bad = |reason: String| IonTableError::BadIon { symbol: ion.symbol.clone(), reason };
    if !(ion.radius > 0.0) {
        return Err(bad(format!("radius must be positive, got {}", ion.radius)));
    }
    let charge_ok = match ion.site {
        Site::A => matches!(ion.charge, 1 | 2),
        Site::B => matches!(ion.charge, 2 | 3 | 4),
        Site::X => matches!(ion.charge, -1 | -2),
    };
    if !charge_ok {
        return Err(bad(format!("charge {} not allowed on {}-site", ion.charge, ion.site)));
    }
    Ok(())
}

impl IonTable {
    /// The table shipped with the crate.
    pub fn bundled() -> &'static IonTable {
        &BUNDLED
    }

    pub fn from_ions(ions: impl IntoIterator<Item = IonSpec>) -> Result<Self, IonTableError> {
        let mut map = BTreeMap::new();
        for ion in ions {
            check_ion(&ion)?;
            if map.insert(ion.symbol.clone(), ion.clone()).is_some() {
                return Err(IonTableError::Duplicate(ion.symbol));
            }
        }
        let mut symbols: Vec<String> = map.keys().cloned().collect();
        symbols.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        Ok(Self { ions: map, symbols_by_len: symbols })
    }

    /// Parses CSV text: `symbol,site,charge,radius_angstrom` per line.
    /// Lines starting with `#` and an optional header line are skipped.
    pub fn parse_csv(text: &str) -> Result<Self, IonTableError> {
        let mut ions = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("symbol,") {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(IonTableError::BadLine {
                    line: idx + 1,
                    reason: format!("expected 4 fields, got {}", parts.len()),
                });
            }
            let site: Site = parts[1]
                .parse()
                .map_err(|reason| IonTableError::BadLine { line: idx + 1, reason })?;
            let charge: i8 = parts[2].parse().map_err(|e| IonTableError::BadLine {
                line: idx + 1,
                reason: format!("bad charge: {e}"),
            })?;
            let radius: f64 = parts[3].parse().map_err(|e| IonTableError::BadLine {
                line: idx + 1,
                reason: format!("bad radius: {e}"),
            })?;
            ions.push(IonSpec { symbol: parts[0].to_string(), site, charge, radius });
        }
        Self::from_ions(ions)
    }

    pub fn load(path: &Path) -> Result<Self, IonTableError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    pub fn get(&self, symbol: &str) -> Option<&IonSpec> {
        self.ions.get(symbol)
    }

    pub fn ions(&self) -> impl Iterator<Item = &IonSpec> {
        self.ions.values()
    }

    pub fn ions_on_site(&self, site: Site) -> Vec<&IonSpec> {
        self.ions.values().filter(|i| i.site == site).collect()
    }

    pub fn len(&self) -> usize {
        self.ions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ions.is_empty()
    }

    /// Longest symbol matching a prefix of `text`, for the formula lexer.
    pub fn match_symbol_prefix(&self, text: &str) -> Option<&IonSpec> {
        self.symbols_by_len
            .iter()
            .find(|sym| text.starts_with(sym.as_str()))
            .and_then(|sym| self.ions.get(sym))
    }
}
