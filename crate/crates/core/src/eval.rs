//! Scoring a trained marginaliser against the exact oracle.
//!
//! Test queries fix one disease as the query node and draw evidence under
//! one of two observation models: `uniform` picks any size-`k` node subset,
//! `markov` picks evidence only from a random disease's Markov blanket.
//! Evidence values come from a fresh joint sample, so observed assignments
//! are always jointly plausible. The harness reports
//! `|Q(X=0|evidence) - P(X=0|evidence)|` aggregated per evidence size, plus
//! an ordinary-least-squares fit of error against size.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::bn::{NetworkError, NodeRole, NoisyOrNetwork};
use crate::inference::{exact_conditional_marginals, Evidence, InferenceError};
use crate::masking::{EncodedSample, MaskingError, MaskingScheme};
use crate::nn::{ModelError, UmModel};

/// Attempts at drawing an unseen `(evidence, values)` pair before accepting
/// a duplicate; tiny query spaces (k = 0, small k) cannot fill a test set
/// with distinct queries.
const DEDUP_ATTEMPTS: usize = 100;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("query node {0} is not a disease")]
    QueryNodeNotDisease(usize),
    #[error("evidence size {k} is infeasible under the {model} observation model (max {max})")]
    InfeasibleK { k: usize, model: String, max: usize },
    #[error("report has no rows")]
    EmptyReport,
    #[error("linear fit needs at least two distinct evidence sizes")]
    DegenerateFit,
    #[error("prediction count {got} does not match query count {expected}")]
    PredictionCount { expected: usize, got: usize },
    #[error("reports disagree on metadata: {0}")]
    MetaMismatch(String),
    #[error("report parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Masking(#[from] MaskingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Prediction-time evidence pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationModel {
    Uniform,
    Markov,
}

impl ObservationModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Markov => "markov",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "uniform" => Some(Self::Uniform),
            "markov" => Some(Self::Markov),
            _ => None,
        }
    }
}

/// One scoring query: evidence, the queried disease and the evidence size.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationQuery {
    pub evidence: Evidence,
    pub query_node: usize,
    pub k: usize,
}

/// Builds `per_size` queries for every requested evidence size.
///
/// Under the uniform model evidence nodes are a uniform size-`k` subset of
/// all nodes except the query node. Under the markov model a disease is
/// drawn per query and evidence is a uniform size-`k` subset of its Markov
/// blanket, again never including the query node. Values are restricted
/// from a fresh joint sample. Exact duplicates are resampled away where the
/// query space allows it.
pub fn build_test_set<R: Rng + ?Sized>(
    net: &NoisyOrNetwork,
    model: ObservationModel,
    sizes: &[usize],
    per_size: usize,
    query_node: usize,
    rng: &mut R,
) -> Result<Vec<EvaluationQuery>, EvalError> {
    if !matches!(net.role_of(query_node)?, NodeRole::Disease(_)) {
        return Err(EvalError::QueryNodeNotDisease(query_node));
    }

    // Feasibility of the largest requested size.
    let candidates: Vec<usize> = (0..net.n()).filter(|&i| i != query_node).collect();
    let blankets: Vec<Vec<usize>> = (0..net.num_diseases())
        .map(|i| {
            let mut mb = net.markov_blanket(net.disease_global(i)).expect("disease");
            mb.retain(|&x| x != query_node);
            mb
        })
        .collect();
    let max_feasible = match model {
        ObservationModel::Uniform => candidates.len(),
        ObservationModel::Markov => blankets.iter().map(Vec::len).max().unwrap_or(0),
    };
    if let Some(&k) = sizes.iter().find(|&&k| k > max_feasible) {
        return Err(EvalError::InfeasibleK {
            k,
            model: model.name().to_string(),
            max: max_feasible,
        });
    }

    let mut queries = Vec::with_capacity(sizes.len() * per_size);
    let mut seen: HashSet<Vec<(usize, bool)>> = HashSet::new();
    for &k in sizes {
        for _ in 0..per_size {
            let mut accepted = None;
            for _ in 0..DEDUP_ATTEMPTS {
                let nodes: Vec<usize> = match model {
                    ObservationModel::Uniform => {
                        rand::seq::index::sample(rng, candidates.len(), k)
                            .iter()
                            .map(|idx| candidates[idx])
                            .collect()
                    }
                    ObservationModel::Markov => {
                        let blanket = loop {
                            let d = rng.random_range(0..net.num_diseases());
                            if blankets[d].len() >= k {
                                break &blankets[d];
                            }
                        };
                        rand::seq::index::sample(rng, blanket.len(), k)
                            .iter()
                            .map(|idx| blanket[idx])
                            .collect()
                    }
                };
                let sample = net.ancestral_sample(rng);
                let mut items: Vec<(usize, bool)> =
                    nodes.iter().map(|&i| (i, sample.get(i))).collect();
                items.sort_by_key(|&(i, _)| i);
                let fresh = seen.insert(items.clone());
                if fresh || accepted.is_none() {
                    accepted = Some(items);
                }
                if fresh {
                    break;
                }
            }
            let items = accepted.expect("at least one attempt");
            queries.push(EvaluationQuery {
                evidence: Evidence::new(items).expect("unique indices"),
                query_node,
                k,
            });
        }
    }
    Ok(queries)
}

/// Model predictions of `P(X_query = 0 | evidence)`, one per query, run as
/// a single evaluation-mode batch.
pub fn model_predictions(
    model: &UmModel,
    queries: &[EvaluationQuery],
) -> Result<Vec<f64>, EvalError> {
    if queries.is_empty() {
        return Ok(Vec::new());
    }
    let n = model.num_nodes();
    let samples: Vec<EncodedSample> = queries
        .iter()
        .map(|q| EncodedSample::from_evidence(n, &q.evidence))
        .collect::<Result<_, _>>()?;
    let probs = model.forward_eval_samples(&samples)?;
    Ok(queries
        .iter()
        .enumerate()
        .map(|(row, q)| 1.0 - probs[[row, q.query_node]])
        .collect())
}

/// Exact ground truth `P(X_query = 0 | evidence)`, one per query.
pub fn oracle_predictions(
    net: &NoisyOrNetwork,
    queries: &[EvaluationQuery],
) -> Result<Vec<f64>, EvalError> {
    queries
        .iter()
        .map(|q| {
            let marginals = exact_conditional_marginals(net, &q.evidence)?;
            Ok(1.0 - marginals.get(q.query_node))
        })
        .collect()
}

/// Report metadata; enough to reproduce the evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportMeta {
    pub network_id: String,
    pub checkpoint_id: String,
    pub seed: u64,
    pub query_node: usize,
}

/// Error statistics of one `(scheme, observation model, evidence size)`
/// cell. Values are stored at the 6-significant-digit precision of the
/// plot-data format, so exports are lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub scheme: String,
    pub obs_model: String,
    pub k: usize,
    pub mean_abs_err: f64,
    pub sd: f64,
    pub count: usize,
}

/// Ordinary least squares of mean error on evidence size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual sum of squares.
    pub residual: f64,
}

/// Per-evidence-size error statistics for one or more schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub meta: ReportMeta,
    pub rows: Vec<ErrorRow>,
}

fn quantize6(x: f64) -> f64 {
    format!("{x:.5e}").parse().expect("formatted float")
}

/// Aggregates `|prediction - truth|` per evidence size into report rows.
pub fn build_report(
    queries: &[EvaluationQuery],
    predictions: &[f64],
    truth: &[f64],
    scheme: &str,
    obs_model: &str,
    meta: &ReportMeta,
) -> Result<EvaluationReport, EvalError> {
    if predictions.len() != queries.len() {
        return Err(EvalError::PredictionCount {
            expected: queries.len(),
            got: predictions.len(),
        });
    }
    if truth.len() != queries.len() {
        return Err(EvalError::PredictionCount {
            expected: queries.len(),
            got: truth.len(),
        });
    }
    let mut ks: Vec<usize> = queries.iter().map(|q| q.k).collect();
    ks.sort_unstable();
    ks.dedup();

    let mut rows = Vec::with_capacity(ks.len());
    for k in ks {
        let errors: Vec<f64> = queries
            .iter()
            .zip(predictions.iter().zip(truth.iter()))
            .filter(|(q, _)| q.k == k)
            .map(|(_, (&p, &t))| (p - t).abs())
            .collect();
        let count = errors.len();
        let mean = errors.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            var.sqrt()
        } else {
            0.0
        };
        rows.push(ErrorRow {
            scheme: scheme.to_string(),
            obs_model: obs_model.to_string(),
            k,
            mean_abs_err: quantize6(mean),
            sd: quantize6(sd),
            count,
        });
    }
    Ok(EvaluationReport {
        meta: meta.clone(),
        rows,
    })
}

/// Scores a model on a query set against the exact oracle.
pub fn evaluate(
    model: &UmModel,
    net: &NoisyOrNetwork,
    queries: &[EvaluationQuery],
    scheme: &str,
    obs_model: &str,
    meta: &ReportMeta,
) -> Result<EvaluationReport, EvalError> {
    let predictions = model_predictions(model, queries)?;
    let truth = oracle_predictions(net, queries)?;
    build_report(queries, &predictions, &truth, scheme, obs_model, meta)
}

/// Ordinary least squares of `y` on `x`. Needs two distinct `x` values.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit, EvalError> {
    if points.len() < 2 {
        return Err(EvalError::DegenerateFit);
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(EvalError::DegenerateFit);
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(LinearFit {
        slope,
        intercept,
        residual,
    })
}

/// Export layout: a human-readable table or machine-readable plot data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    TableText,
    PlotData,
}

impl EvaluationReport {
    /// Merges per-scheme reports over the same network, seed and query node.
    /// Checkpoint ids are joined with `+`.
    pub fn merge(reports: &[EvaluationReport]) -> Result<EvaluationReport, EvalError> {
        let first = reports.first().ok_or(EvalError::EmptyReport)?;
        let mut checkpoint_ids = vec![first.meta.checkpoint_id.clone()];
        let mut rows = first.rows.clone();
        for report in &reports[1..] {
            let m = &report.meta;
            if m.network_id != first.meta.network_id
                || m.seed != first.meta.seed
                || m.query_node != first.meta.query_node
            {
                return Err(EvalError::MetaMismatch(format!(
                    "{} vs {}",
                    m.network_id, first.meta.network_id
                )));
            }
            if !checkpoint_ids.contains(&m.checkpoint_id) {
                checkpoint_ids.push(m.checkpoint_id.clone());
            }
            rows.extend(report.rows.iter().cloned());
        }
        Ok(EvaluationReport {
            meta: ReportMeta {
                checkpoint_id: checkpoint_ids.join("+"),
                ..first.meta.clone()
            },
            rows,
        })
    }

    /// `(k, mean error)` pairs for one scheme and observation model,
    /// ascending in `k`.
    pub fn series(&self, scheme: &str, obs_model: &str) -> Vec<(f64, f64)> {
        let mut points: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.scheme == scheme && r.obs_model == obs_model)
            .map(|r| (r.k as f64, r.mean_abs_err))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        points
    }

    /// Linear fit of a scheme's error-against-size series.
    pub fn fit(&self, scheme: &str, obs_model: &str) -> Result<LinearFit, EvalError> {
        linear_fit(&self.series(scheme, obs_model))
    }

    fn schemes(&self) -> Vec<String> {
        // Canonical order first, then anything else in first-seen order.
        let mut schemes: Vec<String> = MaskingScheme::all_names()
            .iter()
            .map(|s| s.to_string())
            .filter(|s| self.rows.iter().any(|r| &r.scheme == s))
            .collect();
        for row in &self.rows {
            if !schemes.contains(&row.scheme) {
                schemes.push(row.scheme.clone());
            }
        }
        schemes
    }

    fn obs_models(&self) -> Vec<String> {
        let mut models = Vec::new();
        for row in &self.rows {
            if !models.contains(&row.obs_model) {
                models.push(row.obs_model.clone());
            }
        }
        models
    }

    fn header_line(&self) -> String {
        format!(
            "# network={} checkpoint={} seed={} query_node={}",
            self.meta.network_id, self.meta.checkpoint_id, self.meta.seed, self.meta.query_node
        )
    }

    /// Machine-readable rows: `scheme obs_model k mean sd count`, decimals
    /// at 6 significant digits.
    pub fn to_plot_data(&self) -> Result<String, EvalError> {
        if self.rows.is_empty() {
            return Err(EvalError::EmptyReport);
        }
        let mut out = self.header_line();
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{} {} {} {:.5e} {:.5e} {}",
                r.scheme, r.obs_model, r.k, r.mean_abs_err, r.sd, r.count
            );
        }
        Ok(out)
    }

    /// Parses the plot-data format back into a report.
    pub fn parse_plot_data(text: &str) -> Result<EvaluationReport, EvalError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(EvalError::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let mut meta = ReportMeta {
            network_id: String::new(),
            checkpoint_id: String::new(),
            seed: 0,
            query_node: 0,
        };
        for field in header.trim_start_matches('#').split_whitespace() {
            let (key, value) = field.split_once('=').ok_or(EvalError::Parse {
                line: 1,
                message: format!("bad header field `{field}`"),
            })?;
            match key {
                "network" => meta.network_id = value.to_string(),
                "checkpoint" => meta.checkpoint_id = value.to_string(),
                "seed" => {
                    meta.seed = value.parse().map_err(|_| EvalError::Parse {
                        line: 1,
                        message: format!("bad seed `{value}`"),
                    })?
                }
                "query_node" => {
                    meta.query_node = value.parse().map_err(|_| EvalError::Parse {
                        line: 1,
                        message: format!("bad query_node `{value}`"),
                    })?
                }
                other => {
                    return Err(EvalError::Parse {
                        line: 1,
                        message: format!("unknown header field `{other}`"),
                    })
                }
            }
        }

        let mut rows = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 6 {
                return Err(EvalError::Parse {
                    line: idx + 1,
                    message: format!("expected 6 fields, got {}", toks.len()),
                });
            }
            let parse_err = |what: &str| EvalError::Parse {
                line: idx + 1,
                message: format!("bad {what}"),
            };
            rows.push(ErrorRow {
                scheme: toks[0].to_string(),
                obs_model: toks[1].to_string(),
                k: toks[2].parse().map_err(|_| parse_err("k"))?,
                mean_abs_err: toks[3].parse().map_err(|_| parse_err("mean"))?,
                sd: toks[4].parse().map_err(|_| parse_err("sd"))?,
                count: toks[5].parse().map_err(|_| parse_err("count"))?,
            });
        }
        if rows.is_empty() {
            return Err(EvalError::EmptyReport);
        }
        Ok(EvaluationReport { meta, rows })
    }

    /// Human-readable table, one block per observation model: rows are
    /// evidence sizes, columns are schemes, plus the per-scheme linear fits.
    pub fn to_table_text(&self) -> Result<String, EvalError> {
        if self.rows.is_empty() {
            return Err(EvalError::EmptyReport);
        }
        let mut out = self.header_line();
        out.push('\n');
        let schemes = self.schemes();
        for obs in self.obs_models() {
            let _ = writeln!(out, "\nobservation model: {obs}");
            let _ = write!(out, "{:>4}", "k");
            for scheme in &schemes {
                let _ = write!(out, " {scheme:>12}");
            }
            out.push('\n');
            let mut ks: Vec<usize> = self
                .rows
                .iter()
                .filter(|r| r.obs_model == obs)
                .map(|r| r.k)
                .collect();
            ks.sort_unstable();
            ks.dedup();
            for k in ks {
                let _ = write!(out, "{k:>4}");
                for scheme in &schemes {
                    let cell = self
                        .rows
                        .iter()
                        .find(|r| r.obs_model == obs && &r.scheme == scheme && r.k == k);
                    match cell {
                        Some(r) => {
                            let _ = write!(out, " {:>12.6}", r.mean_abs_err);
                        }
                        None => {
                            let _ = write!(out, " {:>12}", "-");
                        }
                    }
                }
                out.push('\n');
            }
            for scheme in &schemes {
                if let Ok(fit) = self.fit(scheme, &obs) {
                    let _ = writeln!(
                        out,
                        "fit {scheme}: slope={:.6} intercept={:.6} residual={:.6e}",
                        fit.slope, fit.intercept, fit.residual
                    );
                }
            }
        }
        Ok(out)
    }
}

/// Writes a report to disk in the requested format.
pub fn export_report(
    report: &EvaluationReport,
    path: &Path,
    format: ExportFormat,
) -> Result<(), EvalError> {
    let text = match format {
        ExportFormat::TableText => report.to_table_text()?,
        ExportFormat::PlotData => report.to_plot_data()?,
    };
    fs::write(path, text)?;
    Ok(())
}
