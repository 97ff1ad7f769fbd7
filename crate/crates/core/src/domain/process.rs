//! Process, structure, and candidate types.

use serde::{Deserialize, Serialize};

use super::composition::Composition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepositionMethod {
    SpinCoating,
    BladeCoating,
    Evaporation,
    Other,
}

impl DepositionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            DepositionMethod::SpinCoating => "spin_coating",
            DepositionMethod::BladeCoating => "blade_coating",
            DepositionMethod::Evaporation => "evaporation",
            DepositionMethod::Other => "other",
        }
    }
}

impl std::str::FromStr for DepositionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "spin_coating" => Ok(DepositionMethod::SpinCoating),
            "blade_coating" => Ok(DepositionMethod::BladeCoating),
            "evaporation" => Ok(DepositionMethod::Evaporation),
            "other" => Ok(DepositionMethod::Other),
            other => Err(format!("unknown deposition method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolventRatio {
    pub name: String,
    pub volume_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinStep {
    pub rpm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anneal {
    pub temperature_c: f64,
    pub minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Antisolvent {
    pub name: String,
    pub drop_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub deposition_method: DepositionMethod,
    pub solvent_system: Vec<SolventRatio>,
    pub spin_profile: Vec<SpinStep>,
    pub anneal: Anneal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antisolvent: Option<Antisolvent>,
}

impl ProcessSpec {
    pub fn max_rpm(&self) -> Option<f64> {
        self.spin_profile.iter().map(|s| s.rpm).fold(None, |acc, rpm| {
            Some(acc.map_or(rpm, |a: f64| a.max(rpm)))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Cubic,
    Tetragonal,
    Orthorhombic,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceArchitecture {
    Nip,
    Pin,
}

impl DeviceArchitecture {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeviceArchitecture::Nip => "nip",
            DeviceArchitecture::Pin => "pin",
        }
    }

    /// Conventional layer order for the architecture.
    pub fn default_stack(&self) -> Vec<String> {
        let layers: &[&str] = match self {
            DeviceArchitecture::Nip => &["ito", "etl", "absorber", "htl", "electrode"],
            DeviceArchitecture::Pin => &["ito", "htl", "absorber", "etl", "electrode"],
        };
        layers.iter().map(|s| s.to_string()).collect()
    }
}

impl std::str::FromStr for DeviceArchitecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "nip" | "n-i-p" => Ok(DeviceArchitecture::Nip),
            "pin" | "p-i-n" => Ok(DeviceArchitecture::Pin),
            other => Err(format!("unknown architecture `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub phase: Phase,
    pub device_architecture: DeviceArchitecture,
    pub layer_stack: Vec<String>,
}

impl StructureSpec {
    pub fn with_architecture(architecture: DeviceArchitecture) -> Self {
        Self {
            phase: Phase::Unknown,
            device_architecture: architecture,
            layer_stack: architecture.default_stack(),
        }
    }
}

/// One design proposal: composition, structure, and synthesis process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub composition: Composition,
    pub structure: StructureSpec,
    pub process: ProcessSpec,
}

impl Candidate {
    /// Routine lab process used when a fixture gives only a formula.
    pub fn default_process() -> ProcessSpec {
        ProcessSpec {
            deposition_method: DepositionMethod::SpinCoating,
            solvent_system: vec![
                SolventRatio { name: "DMF".into(), volume_ratio: 4.0 },
                SolventRatio { name: "DMSO".into(), volume_ratio: 1.0 },
            ],
            spin_profile: vec![
                SpinStep { rpm: 1000.0, seconds: 10.0 },
                SpinStep { rpm: 4000.0, seconds: 30.0 },
            ],
            anneal: Anneal { temperature_c: 100.0, minutes: 15.0 },
            antisolvent: Some(Antisolvent { name: "CB".into(), drop_time_s: 25.0 }),
        }
    }

    pub fn from_composition(id: impl Into<String>, composition: Composition) -> Self {
        Self {
            id: id.into(),
            composition,
            structure: StructureSpec::with_architecture(DeviceArchitecture::Pin),
            process: Self::default_process(),
        }
    }
}
