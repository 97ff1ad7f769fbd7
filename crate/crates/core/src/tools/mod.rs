//! Desk-scale realizations of the domain toolchain, registered over MCP.
//!
//! Tool names are load-bearing for the bench metrics: `search.corpus`,
//! `extract.entries`, `design.generate`, `design.filter`, `predict.property`,
//! `predict.utility`, `analyze.attribution`, `analyze.report`.

pub mod attribution;
pub mod corpus;
pub mod design;
pub mod extract;
pub mod feature;
pub mod knn;
pub mod report;
pub mod utility;

pub use attribution::{attribute_candidate, exact_shapley, Attribution, AttributionError};
pub use corpus::{Corpus, CorpusDocument, CorpusError};
pub use design::{
    filter_candidates, generate_candidates, FilterOutput, GenerateError, GenerateOutput,
    ADDITIVE_LIST,
};
pub use extract::{extract_entries, extract_formulas, reconcile_with_patterns};
pub use feature::{
    featurize_candidate, featurize_record, gower_distance, FeatureScale, FeatureVector,
};
pub use knn::{knn_predict, PredictError, PredictionResult};
pub use report::{build_report, BestSummary, DiagnosticReport, KeyConstraint, ReportInputs};
pub use utility::{rank_candidates, utility_score, UtilityError, DEFAULT_LAMBDA};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

use peromas_mcp::{ObjectSchema, ParamSpec, ParamType, ToolDescriptor, ToolRegistry};

use crate::domain::{Candidate, DatasetRecord, IonTable};
use crate::goal::{ConstraintSpec, ObjectiveSpec, Target};

pub const DEFAULT_KNN_K: usize = 5;

/// Immutable state shared by every tool handler.
pub struct ToolContext {
    pub ion_table: Arc<IonTable>,
    pub dataset: Vec<DatasetRecord>,
    pub corpus: Corpus,
    pub knn_k: usize,
    pub utility_lambda: f64,
    features: Vec<FeatureVector>,
}

/// Training view for one target: rows that have the metric, plus the scale
/// fitted on exactly those rows.
pub struct TargetTraining {
    pub rows: Vec<(FeatureVector, f64)>,
    pub scale: FeatureScale,
}

impl ToolContext {
    pub fn new(ion_table: Arc<IonTable>, dataset: Vec<DatasetRecord>, corpus: Corpus) -> Self {
        let features = dataset.iter().map(featurize_record).collect();
        Self {
            ion_table,
            dataset,
            corpus,
            knn_k: DEFAULT_KNN_K,
            utility_lambda: DEFAULT_LAMBDA,
            features,
        }
    }

    /// Bundled ion table, dataset, and corpus.
    pub fn bundled() -> Self {
        let table = Arc::new(IonTable::bundled().clone());
        let dataset = crate::domain::bundled_dataset(&table).records;
        Self::new(table, dataset, Corpus::bundled())
    }

    fn target_value(record: &DatasetRecord, target: Target) -> Option<f64> {
        match target {
            Target::Pce => Some(record.pce),
            Target::Voc => Some(record.voc),
            Target::T80 => record.t80,
            Target::Bandgap => record.bandgap,
        }
    }

    pub fn training_for(&self, target: Target) -> TargetTraining {
        let rows: Vec<(FeatureVector, f64)> = self
            .dataset
            .iter()
            .zip(&self.features)
            .filter_map(|(record, features)| {
                Self::target_value(record, target).map(|y| (features.clone(), y))
            })
            .collect();
        let scale = FeatureScale::fit(&rows.iter().map(|(f, _)| f.clone()).collect::<Vec<_>>());
        TargetTraining { rows, scale }
    }

    pub fn predict(&self, candidate: &Candidate, target: Target, k: usize) -> Result<PredictionResult, PredictError> {
        let training = self.training_for(target);
        knn_predict(&training.rows, &training.scale, &featurize_candidate(candidate), k, target)
    }

    /// Training-set means (numeric) and modes (categorical) for one target.
    pub fn background_for(&self, target: Target) -> Option<FeatureVector> {
        let training = self.training_for(target);
        if training.rows.is_empty() {
            return None;
        }
        let n = training.rows.len() as f64;
        let mut numeric = [0.0; 8];
        for (features, _) in &training.rows {
            for i in 0..8 {
                numeric[i] += features.numeric[i];
            }
        }
        for v in numeric.iter_mut() {
            *v /= n;
        }
        let mode = |index: usize| -> String {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for (features, _) in &training.rows {
                *counts.entry(features.categorical[index].as_str()).or_insert(0) += 1;
            }
            counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(value, _)| value.to_string())
                .unwrap_or_default()
        };
        Some(FeatureVector { numeric, categorical: [mode(0), mode(1)] })
    }

    pub fn attribute(
        &self,
        candidate: &Candidate,
        target: Target,
        k: usize,
    ) -> Result<Attribution, String> {
        let training = self.training_for(target);
        if training.rows.len() < k {
            return Err(format!(
                "insufficient_rows: only {} training rows have `{}`, need k={k}",
                training.rows.len(),
                target.as_str()
            ));
        }
        let background =
            self.background_for(target).ok_or_else(|| "insufficient_rows".to_string())?;
        let predict = |features: &FeatureVector| {
            knn_predict(&training.rows, &training.scale, features, k, target)
                .map(|p| p.y_hat)
                .unwrap_or(f64::NAN)
        };
        attribute_candidate(&predict, &featurize_candidate(candidate), &background, target)
            .map_err(|e| e.to_string())
    }
}

fn parse_args<T: for<'de> Deserialize<'de>>(args: &Value) -> Result<T, String> {
    serde_json::from_value(args.clone()).map_err(|e| format!("bad arguments: {e}"))
}

fn to_value<T: serde::Serialize>(value: &T) -> Result<Value, String> {
    serde_json::to_value(value).map_err(|e| format!("serialization failed: {e}"))
}

fn parse_constraints(values: &[Value]) -> Result<Vec<ConstraintSpec>, String> {
    ConstraintSpec::parse_list(values).map_err(|e| format!("unknown-predicate: {e}"))
}

fn target_enum() -> ParamSpec {
    ParamSpec::enumeration(["pce", "t80", "bandgap", "voc"])
}

/// Registers all eight tools against a shared context.
pub fn build_registry(ctx: Arc<ToolContext>) -> ToolRegistry {
    let mut registry = ToolRegistry::new();

    {
        let ctx = ctx.clone();
        registry
            .register(
                ToolDescriptor {
                    name: "search.corpus".into(),
                    description: "Ranks corpus documents by lexical relevance to a query".into(),
                    input_schema: ObjectSchema::new()
                        .field("query", ParamSpec::string(), true)
                        .field("limit", ParamSpec::integer().min(1.0), false),
                    output_schema: ObjectSchema::new()
                        .field("results", ParamSpec::array_of(ParamType::Object), true),
                },
                Arc::new(move |args: &Value| {
                    #[derive(Deserialize)]
                    struct Args {
                        query: String,
                        limit: Option<usize>,
                    }
                    let args: Args = parse_args(args)?;
                    let hits = ctx
                        .corpus
                        .search(&args.query, args.limit.unwrap_or(5))
                        .map_err(|e| e.to_string())?;
                    let results: Vec<Value> = hits
                        .into_iter()
                        .map(|(doc_id, score)| json!({"doc_id": doc_id, "score": score}))
                        .collect();
                    Ok(json!({ "results": results }))
                }),
            )
            .expect("register search.corpus");
    }

    {
        let ctx = ctx.clone();
        registry
            .register(
                ToolDescriptor {
                    name: "extract.entries".into(),
                    description: "Extracts design/performance/mechanism entries from a document"
                        .into(),
                    input_schema: ObjectSchema::new().field("doc_id", ParamSpec::string(), true),
                    output_schema: ObjectSchema::new()
                        .field("entries", ParamSpec::array_of(ParamType::Object), true),
                },
                Arc::new(move |args: &Value| {
                    #[derive(Deserialize)]
                    struct Args {
                        doc_id: String,
                    }
                    let args: Args = parse_args(args)?;
                    let doc = ctx.corpus.get(&args.doc_id).map_err(|e| e.to_string())?;
                    let entries = extract_entries(doc, &ctx.ion_table);
                    Ok(json!({ "entries": to_value(&entries)? }))
                }),
            )
            .expect("register extract.entries");
    }

    {
        let ctx = ctx.clone();
        registry
            .register(
                ToolDescriptor {
                    name: "design.generate".into(),
                    description:
                        "Samples legal candidates by seeded mutation and recombination".into(),
                    input_schema: ObjectSchema::new()
                        .field("count", ParamSpec::integer().min(1.0), true)
                        .field("seed", ParamSpec::integer().min(0.0), false)
                        .field("id_prefix", ParamSpec::string(), false)
                        .field("objectives", ParamSpec::array_of(ParamType::Object), false)
                        .field("constraints", ParamSpec::array_of(ParamType::Object), false)
                        .field("seed_entries", ParamSpec::array_of(ParamType::Object), false),
                    output_schema: ObjectSchema::new()
                        .field("candidates", ParamSpec::array_of(ParamType::Object), true)
                        .field("shortfall", ParamSpec::boolean(), true),
                },
                Arc::new(move |args: &Value| {
                    #[derive(Deserialize)]
                    struct Args {
                        count: usize,
                        #[serde(default)]
                        seed: u64,
                        #[serde(default)]
                        id_prefix: Option<String>,
                        #[serde(default)]
                        constraints: Vec<Value>,
                        #[serde(default)]
                        seed_entries: Vec<crate::knowledge::KnowledgeEntry>,
                        #[serde(default)]
                        #[allow(dead_code)]
                        objectives: Vec<Value>,
                    }
                    let args: Args = parse_args(args)?;
                    let constraints = parse_constraints(&args.constraints)?;
                    let prefix = args.id_prefix.unwrap_or_else(|| format!("c{:08x}", args.seed));
                    let output = generate_candidates(
                        &args.seed_entries,
                        &ctx.dataset,
                        &ctx.ion_table,
                        &constraints,
                        args.count,
                        args.seed,
                        &prefix,
                    )
                    .map_err(|e| e.to_string())?;
                    Ok(json!({
                        "candidates": to_value(&output.candidates)?,
                        "shortfall": output.shortfall,
                        "attempts": output.attempts,
                    }))
                }),
            )
            .expect("register design.generate");
    }

    registry
        .register(
            ToolDescriptor {
                name: "design.filter".into(),
                description: "Partitions candidates by legality and hard constraints".into(),
                input_schema: ObjectSchema::new()
                    .field("candidates", ParamSpec::array_of(ParamType::Object), true)
                    .field("constraints", ParamSpec::array_of(ParamType::Object), false),
                output_schema: ObjectSchema::new()
                    .field("kept", ParamSpec::array_of(ParamType::Object), true)
                    .field("rejected", ParamSpec::array_of(ParamType::Object), true),
            },
            Arc::new(move |args: &Value| {
                #[derive(Deserialize)]
                struct Args {
                    candidates: Vec<Candidate>,
                    #[serde(default)]
                    constraints: Vec<Value>,
                }
                let args: Args = parse_args(args)?;
                let constraints = parse_constraints(&args.constraints)?;
                let output = filter_candidates(args.candidates, &constraints);
                let rejected: Vec<Value> = output
                    .rejected
                    .iter()
                    .map(|(candidate, reasons)| {
                        Ok(json!({"candidate": to_value(candidate)?, "reasons": reasons}))
                    })
                    .collect::<Result<_, String>>()?;
                Ok(json!({ "kept": to_value(&output.kept)?, "rejected": rejected }))
            }),
        )
        .expect("register design.filter");

    {
        let ctx = ctx.clone();
        registry
            .register(
                ToolDescriptor {
                    name: "predict.property".into(),
                    description: "k-nearest-neighbor point prediction with uncertainty".into(),
                    input_schema: ObjectSchema::new()
                        .field("candidate", ParamSpec::object(), true)
                        .field("target", target_enum(), true)
                        .field("k", ParamSpec::integer().min(1.0), false),
                    output_schema: ObjectSchema::new()
                        .field("target", target_enum(), true)
                        .field("y_hat", ParamSpec::number(), true)
                        .field("sigma", ParamSpec::number().min(0.0), true)
                        .field("neighbors_used", ParamSpec::integer(), true),
                },
                Arc::new(move |args: &Value| {
                    #[derive(Deserialize)]
                    struct Args {
                        candidate: Candidate,
                        target: Target,
                        k: Option<usize>,
                    }
                    let args: Args = parse_args(args)?;
                    let prediction = ctx
                        .predict(&args.candidate, args.target, args.k.unwrap_or(ctx.knn_k))
                        .map_err(|e| e.to_string())?;
                    to_value(&prediction)
                }),
            )
            .expect("register predict.property");
    }

    {
        let ctx = ctx.clone();
        registry
            .register(
                ToolDescriptor {
                    name: "predict.utility".into(),
                    description: "Ranks evaluated candidates by scalarized utility".into(),
                    input_schema: ObjectSchema::new()
                        .field("candidates", ParamSpec::array_of(ParamType::Object), true)
                        .field("objectives", ParamSpec::array_of(ParamType::Object), true)
                        .field("lambda", ParamSpec::number().min(0.0), false),
                    output_schema: ObjectSchema::new()
                        .field("ranking", ParamSpec::array_of(ParamType::Object), true),
                },
                Arc::new(move |args: &Value| {
                    #[derive(Deserialize)]
                    struct Item {
                        id: String,
                        predictions: BTreeMap<Target, PredictionResult>,
                    }
                    #[derive(Deserialize)]
                    struct Args {
                        candidates: Vec<Item>,
                        objectives: Vec<ObjectiveSpec>,
                        lambda: Option<f64>,
                    }
                    let args: Args = parse_args(args)?;
                    let items: Vec<(String, BTreeMap<Target, PredictionResult>)> =
                        args.candidates.into_iter().map(|i| (i.id, i.predictions)).collect();
                    let ranked = rank_candidates(
                        &items,
                        &args.objectives,
                        args.lambda.unwrap_or(ctx.utility_lambda),
                    )
                    .map_err(|e| e.to_string())?;
                    let ranking: Vec<Value> = ranked
                        .into_iter()
                        .map(|(id, utility)| json!({"id": id, "utility": utility}))
                        .collect();
                    Ok(json!({ "ranking": ranking }))
                }),
            )
            .expect("register predict.utility");
    }

    {
        let ctx = ctx.clone();
        registry
            .register(
                ToolDescriptor {
                    name: "analyze.attribution".into(),
                    description: "Exact Shapley feature attribution for one candidate".into(),
                    input_schema: ObjectSchema::new()
                        .field("candidate", ParamSpec::object(), true)
                        .field("target", target_enum(), true)
                        .field("k", ParamSpec::integer().min(1.0), false),
                    output_schema: ObjectSchema::new()
                        .field("target", target_enum(), true)
                        .field("baseline", ParamSpec::number(), true)
                        .field("contributions", ParamSpec::array(), true),
                },
                Arc::new(move |args: &Value| {
                    #[derive(Deserialize)]
                    struct Args {
                        candidate: Candidate,
                        target: Target,
                        k: Option<usize>,
                    }
                    let args: Args = parse_args(args)?;
                    let attribution =
                        ctx.attribute(&args.candidate, args.target, args.k.unwrap_or(ctx.knn_k))?;
                    to_value(&attribution)
                }),
            )
            .expect("register analyze.attribution");
    }

    registry
        .register(
            ToolDescriptor {
                name: "analyze.report".into(),
                description: "Assembles the diagnostic report for one iteration".into(),
                input_schema: ObjectSchema::new()
                    .field("iteration", ParamSpec::integer().min(0.0), false)
                    .field("objectives", ParamSpec::array_of(ParamType::Object), true)
                    .field("kept", ParamSpec::array_of(ParamType::Object), false)
                    .field("rejected", ParamSpec::array_of(ParamType::Object), false)
                    .field("evaluations", ParamSpec::array_of(ParamType::Object), false)
                    .field("attributions", ParamSpec::array_of(ParamType::Object), false),
                output_schema: ObjectSchema::new()
                    .field("objectives_unmet", ParamSpec::array(), true)
                    .field("strategies", ParamSpec::array(), true)
                    .field("terminate_recommended", ParamSpec::boolean(), true),
            },
            Arc::new(move |args: &Value| {
                #[derive(Deserialize)]
                struct RejectedItem {
                    candidate: Candidate,
                    reasons: Vec<String>,
                }
                #[derive(Deserialize)]
                struct EvalItem {
                    id: String,
                    predictions: BTreeMap<Target, PredictionResult>,
                    #[serde(default)]
                    utility: f64,
                }
                #[derive(Deserialize)]
                struct Args {
                    #[serde(default)]
                    iteration: u32,
                    objectives: Vec<ObjectiveSpec>,
                    #[serde(default)]
                    kept: Vec<Candidate>,
                    #[serde(default)]
                    rejected: Vec<RejectedItem>,
                    #[serde(default)]
                    evaluations: Vec<EvalItem>,
                    #[serde(default)]
                    attributions: Vec<Attribution>,
                }
                let args: Args = parse_args(args)?;
                let rejected: Vec<(Candidate, Vec<String>)> =
                    args.rejected.into_iter().map(|r| (r.candidate, r.reasons)).collect();
                let evaluations: Vec<(String, BTreeMap<Target, PredictionResult>, f64)> =
                    args.evaluations.into_iter().map(|e| (e.id, e.predictions, e.utility)).collect();
                let report = build_report(ReportInputs {
                    iteration: args.iteration,
                    objectives: &args.objectives,
                    kept: &args.kept,
                    rejected: &rejected,
                    evaluations: &evaluations,
                    attributions: &args.attributions,
                });
                to_value(&report)
            }),
        )
        .expect("register analyze.report");

    registry
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_serves_exactly_the_eight_tools() {
        let registry = build_registry(Arc::new(ToolContext::bundled()));
        let names: Vec<&str> =
            registry.descriptors().iter().map(|d| d.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "analyze.attribution",
                "analyze.report",
                "design.filter",
                "design.generate",
                "extract.entries",
                "predict.property",
                "predict.utility",
                "search.corpus",
            ]
        );
    }

    #[test]
    fn performance_predicates_error_through_design_filter() {
        let registry = build_registry(Arc::new(ToolContext::bundled()));
        let err = registry
            .dispatch(
                "design.filter",
                &json!({"candidates": [], "constraints": [{"kind": "pce_pred_min", "min": 20.0}]}),
            )
            .unwrap_err();
        assert!(err.message.contains("unknown-predicate"));
        assert!(err.message.contains("pce_pred_min"));
    }
}
