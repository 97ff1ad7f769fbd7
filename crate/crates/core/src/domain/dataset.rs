//! Tabular dataset ingestion: composition filtering, attribute cleaning,
//! and stratified deduplication, with a per-row rejection log.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::composition::{format_composition, parse_composition, Composition, CompositionError};
use super::ion::IonTable;
use super::process::{
    Anneal, Antisolvent, Candidate, DepositionMethod, ProcessSpec, SolventRatio, SpinStep,
    StructureSpec,
};

pub const DATASET_HEADER: [&str; 14] = [
    "formula",
    "deposition_method",
    "solvents",
    "spin_profile",
    "anneal_c",
    "anneal_min",
    "antisolvent",
    "architecture",
    "pce",
    "voc",
    "jsc",
    "ff",
    "bandgap",
    "t80",
];

/// B-site metals the composition filter recognizes by name; symbols in this
/// list but absent from the ion table reject as `unrecognized_b_site`.
const B_SITE_METALS: [&str; 16] = [
    "Pb", "Sn", "Bi", "Ge", "Zn", "Cd", "Mn", "Fe", "Cu", "Co", "Ni", "Ti", "Zr", "Sb", "In",
    "Ag",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub composition: Composition,
    pub process: ProcessSpec,
    pub structure: StructureSpec,
    pub pce: f64,
    pub voc: f64,
    pub jsc: f64,
    pub ff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandgap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t80: Option<f64>,
}

impl DatasetRecord {
    pub fn as_candidate(&self, id: impl Into<String>) -> Candidate {
        Candidate {
            id: id.into(),
            composition: self.composition.clone(),
            structure: self.structure.clone(),
            process: self.process.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    UnparseableFormula,
    UnrecognizedBSite,
    MissingDepositionMethod,
    MissingSolvent,
    BadField,
    OutOfRange,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based data row index (header not counted).
    pub row: usize,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: Vec<DatasetRecord>,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header mismatch: expected `{expected}`, got `{got}`")]
    Header { expected: String, got: String },
}

fn parse_solvents(text: &str) -> Result<Vec<SolventRatio>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let (names, ratios) = match text.split_once('=') {
        Some((names, ratios)) => (names, Some(ratios)),
        None => (text, None),
    };
    let names: Vec<&str> = names.split(':').map(str::trim).collect();
    let ratios: Vec<f64> = match ratios {
        Some(r) => r
            .split(':')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad solvent ratio: {e}")))
            .collect::<Result<_, _>>()?,
        None => vec![1.0; names.len()],
    };
    if names.len() != ratios.len() {
        return Err(format!("{} solvent names but {} ratios", names.len(), ratios.len()));
    }
    Ok(names
        .into_iter()
        .zip(ratios)
        .map(|(name, volume_ratio)| SolventRatio { name: name.to_string(), volume_ratio })
        .collect())
}

fn parse_spin_profile(text: &str) -> Result<Vec<SpinStep>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(';')
        .map(|step| {
            let step = step.trim();
            let (rpm_part, sec_part) =
                step.split_once('/').ok_or_else(|| format!("bad spin step `{step}`"))?;
            let rpm: f64 = rpm_part
                .trim()
                .strip_suffix("rpm")
                .ok_or_else(|| format!("missing rpm suffix in `{step}`"))?
                .parse()
                .map_err(|e| format!("bad rpm in `{step}`: {e}"))?;
            let seconds: f64 = sec_part
                .trim()
                .strip_suffix('s')
                .ok_or_else(|| format!("missing seconds suffix in `{step}`"))?
                .parse()
                .map_err(|e| format!("bad seconds in `{step}`: {e}"))?;
            Ok(SpinStep { rpm, seconds })
        })
        .collect()
}

fn parse_antisolvent(text: &str) -> Result<Option<Antisolvent>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    let (name, time) =
        text.split_once('@').ok_or_else(|| format!("bad antisolvent `{text}` (want NAME@SECs)"))?;
    let drop_time_s: f64 = time
        .trim()
        .strip_suffix('s')
        .ok_or_else(|| format!("missing seconds suffix in `{text}`"))?
        .parse()
        .map_err(|e| format!("bad antisolvent time in `{text}`: {e}"))?;
    Ok(Some(Antisolvent { name: name.trim().to_string(), drop_time_s }))
}

fn opt_f64(text: &str, field: &str) -> Result<Option<f64>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    text.parse::<f64>().map(Some).map_err(|e| format!("bad {field}: {e}"))
}

fn req_f64(text: &str, field: &str) -> Result<f64, String> {
    opt_f64(text, field)?.ok_or_else(|| format!("missing {field}"))
}

fn classify_parse_failure(err: &CompositionError) -> (RejectReason, String) {
    if let CompositionError::UnknownIon { fragment } = err {
        // Maximal-prefix element symbols of the fragment that look like
        // B-site metals we simply do not model.
        let looks_b_site = B_SITE_METALS.iter().any(|m| fragment.starts_with(m));
        if looks_b_site {
            return (RejectReason::UnrecognizedBSite, err.to_string());
        }
    }
    (RejectReason::UnparseableFormula, err.to_string())
}

/// Ingests CSV from any reader. Pipeline order: composition filtering, then
/// attribute cleaning, then stratified deduplication on
/// (canonical formula, deposition method, anneal temperature) keeping the
/// first row of each stratum.
pub fn ingest_dataset<R: Read>(reader: R, table: &IonTable) -> Result<IngestReport, IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let header: Vec<String> =
        csv_reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != DATASET_HEADER {
        return Err(IngestError::Header {
            expected: DATASET_HEADER.join(","),
            got: header.join(","),
        });
    }

    let mut report = IngestReport::default();
    let mut seen_strata: std::collections::BTreeSet<String> = Default::default();

    for (idx, row) in csv_reader.records().enumerate() {
        let row_no = idx + 1;
        let reject = |reason, detail: String| Rejection { row: row_no, reason, detail };
        let record = match row {
            Ok(r) => r,
            Err(e) => {
                report.rejections.push(reject(RejectReason::BadField, e.to_string()));
                continue;
            }
        };
        let field = |i: usize| record.get(i).unwrap_or("").trim();

        // Step 1: composition filtering.
        let composition = match parse_composition(field(0), table) {
            Ok(c) => c,
            Err(e) => {
                let (reason, detail) = classify_parse_failure(&e);
                report.rejections.push(reject(reason, detail));
                continue;
            }
        };

        // Step 2: attribute cleaning.
        let deposition_method: DepositionMethod = match field(1) {
            "" => {
                report
                    .rejections
                    .push(reject(RejectReason::MissingDepositionMethod, "empty field".into()));
                continue;
            }
            text => match text.parse() {
                Ok(m) => m,
                Err(e) => {
                    report.rejections.push(reject(RejectReason::BadField, e));
                    continue;
                }
            },
        };
        let solvents = match parse_solvents(field(2)) {
            Ok(s) if s.is_empty() => {
                report.rejections.push(reject(RejectReason::MissingSolvent, "empty field".into()));
                continue;
            }
            Ok(s) => s,
            Err(e) => {
                report.rejections.push(reject(RejectReason::BadField, e));
                continue;
            }
        };

        let parsed = (|| -> Result<DatasetRecord, String> {
            let spin_profile = parse_spin_profile(field(3))?;
            let anneal_c = req_f64(field(4), "anneal_c")?;
            let anneal_min = req_f64(field(5), "anneal_min")?;
            let antisolvent = parse_antisolvent(field(6))?;
            let architecture = field(7).parse().map_err(|e: String| e)?;
            let pce = req_f64(field(8), "pce")?;
            let voc = req_f64(field(9), "voc")?;
            let jsc = req_f64(field(10), "jsc")?;
            let ff = req_f64(field(11), "ff")?;
            let bandgap = opt_f64(field(12), "bandgap")?;
            let t80 = opt_f64(field(13), "t80")?;
            Ok(DatasetRecord {
                composition: composition.clone(),
                process: ProcessSpec {
                    deposition_method,
                    solvent_system: solvents,
                    spin_profile,
                    anneal: Anneal { temperature_c: anneal_c, minutes: anneal_min },
                    antisolvent,
                },
                structure: StructureSpec::with_architecture(architecture),
                pce,
                voc,
                jsc,
                ff,
                bandgap,
                t80,
            })
        })();
        let record = match parsed {
            Ok(r) => r,
            Err(e) => {
                report.rejections.push(reject(RejectReason::BadField, e));
                continue;
            }
        };

        let range_ok = (0.0..=40.0).contains(&record.pce)
            && record.ff > 0.0
            && record.ff <= 1.0
            && record.bandgap.map_or(true, |g| g > 0.5 && g < 4.0);
        if !range_ok {
            report.rejections.push(reject(
                RejectReason::OutOfRange,
                format!("pce={} ff={} bandgap={:?}", record.pce, record.ff, record.bandgap),
            ));
            continue;
        }

        // Step 3: stratified deduplication. Rows that differ in deposition
        // method are distinct strata by construction of the key.
        let stratum = format!(
            "{}|{}|{}",
            format_composition(&record.composition),
            record.process.deposition_method.as_str(),
            record.process.anneal.temperature_c,
        );
        if !seen_strata.insert(stratum.clone()) {
            report.rejections.push(reject(RejectReason::Duplicate, stratum));
            continue;
        }
        report.records.push(record);
    }

    Ok(report)
}

pub fn ingest_dataset_str(text: &str, table: &IonTable) -> Result<IngestReport, IngestError> {
    ingest_dataset(text.as_bytes(), table)
}

pub fn ingest_dataset_path(path: &Path, table: &IonTable) -> Result<IngestReport, IngestError> {
    let file = std::fs::File::open(path)?;
    ingest_dataset(file, table)
}

fn format_solvents(solvents: &[SolventRatio]) -> String {
    if solvents.is_empty() {
        return String::new();
    }
    let names: Vec<&str> = solvents.iter().map(|s| s.name.as_str()).collect();
    let ratios: Vec<String> = solvents.iter().map(|s| format!("{}", s.volume_ratio)).collect();
    if solvents.len() == 1 && solvents[0].volume_ratio == 1.0 {
        return names[0].to_string();
    }
    format!("{}={}", names.join(":"), ratios.join(":"))
}

fn format_spin_profile(steps: &[SpinStep]) -> String {
    steps
        .iter()
        .map(|s| format!("{}rpm/{}s", s.rpm, s.seconds))
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes records back out in the ingestion CSV contract.
pub fn write_dataset_csv(records: &[DatasetRecord]) -> String {
    let mut out = DATASET_HEADER.join(",") + "\n";
    for r in records {
        let antisolvent = r
            .process
            .antisolvent
            .as_ref()
            .map(|a| format!("{}@{}s", a.name, a.drop_time_s))
            .unwrap_or_default();
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            format_composition(&r.composition),
            r.process.deposition_method.as_str(),
            format_solvents(&r.process.solvent_system),
            format_spin_profile(&r.process.spin_profile),
            r.process.anneal.temperature_c,
            r.process.anneal.minutes,
            antisolvent,
            r.structure.device_architecture.as_str(),
            r.pce,
            r.voc,
            r.jsc,
            r.ff,
            opt(r.bandgap),
            opt(r.t80),
        ));
    }
    out
}

/// The dataset shipped with the crate, already ingested.
pub fn bundled_dataset(table: &IonTable) -> IngestReport {
    static CSV_TEXT: &str = include_str!("../../data/dataset.csv");
    ingest_dataset_str(CSV_TEXT, table).expect("bundled dataset is well-formed")
}
