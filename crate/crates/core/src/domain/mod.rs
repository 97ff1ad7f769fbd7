//! Domain core: ions, composition grammar, process/structure types,
//! legality validators, and dataset ingestion.

mod composition;
mod dataset;
mod ion;
mod process;
mod validate;

pub use composition::{
    format_composition, parse_composition, Additive, Composition, CompositionError, SiteFraction,
};
pub use dataset::{
    bundled_dataset, ingest_dataset, ingest_dataset_path, ingest_dataset_str, write_dataset_csv,
    DatasetRecord, IngestError, IngestReport, RejectReason, Rejection, DATASET_HEADER,
};
pub use ion::{IonSpec, IonTable, IonTableError, Site};
pub use process::{
    Anneal, Antisolvent, Candidate, DepositionMethod, DeviceArchitecture, Phase, ProcessSpec,
    SolventRatio, SpinStep, StructureSpec,
};
pub use validate::{
    check_charge_neutrality, legality_check, tolerance_factor, NeutralityCheck, ToleranceCheck,
    ToleranceError, ValidityMarker, ANNEAL_C_RANGE, CHARGE_TOLERANCE, RPM_RANGE,
    RULE_SET_VERSION, TOLERANCE_WINDOW,
};
