//! Extracted knowledge entries: design parameters, performance metrics, and
//! mechanistic insight from one source document.

use serde::{Deserialize, Serialize};

use crate::domain::{parse_composition, DepositionMethod, IonTable};

/// Partial process information as it appears in prose.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialProcess {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deposition_method: Option<DepositionMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rpm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignInfo {
    /// Formula in the composition grammar.
    pub composition: String,
    #[serde(default)]
    pub process: PartialProcess,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pce: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jsc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t80: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandgap: Option<f64>,
}

impl Performance {
    pub fn any_present(&self) -> bool {
        self.pce.is_some()
            || self.voc.is_some()
            || self.jsc.is_some()
            || self.ff.is_some()
            || self.t80.is_some()
            || self.bandgap.is_some()
    }
}

/// One design / performance / mechanism triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub design: DesignInfo,
    pub performance: Performance,
    #[serde(default)]
    pub mechanism: Vec<String>,
    pub source_doc: String,
}

impl KnowledgeEntry {
    /// Entry invariants: parseable composition and at least one performance field.
    pub fn is_valid(&self, table: &IonTable) -> bool {
        self.performance.any_present()
            && parse_composition(&self.design.composition, table).is_ok()
    }
}
