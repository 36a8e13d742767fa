//! Three-layer noisy-OR Bayesian network over binary nodes.
//!
//! The network has a fixed layered structure: risk factors feed diseases,
//! diseases feed symptoms. Every conditional distribution is a noisy-OR: a
//! child stays false only if its leak "fires" and the inhibition of every
//! true parent fires as well. Nodes carry a single global index in the order
//! `[risk factors, diseases, symptoms]`.

mod file;
mod generate;

pub use file::NETWORK_FORMAT_VERSION;
pub use generate::{generate_random_network, ParamRanges};

use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

/// Errors raised by network construction, queries and serialisation.
#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("layer sizes must all be >= 1, got ({0}, {1}, {2})")]
    InvalidLayerSizes(usize, usize, usize),
    #[error("{name}[{index}] = {value} lies outside the open interval (0, 1)")]
    ParamOutOfRange {
        name: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{name} has length {got}, expected {expected}")]
    LengthMismatch {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("node index {index} out of range for a network of {n} nodes")]
    NodeIndex { index: usize, n: usize },
    #[error("node {index} is not a {expected}")]
    RoleMismatch {
        index: usize,
        expected: &'static str,
    },
    #[error("duplicate edge {parent} -> {child}")]
    DuplicateEdge { parent: usize, child: usize },
    #[error("parent index {parent} out of range for child {child}")]
    ParentIndex { parent: usize, child: usize },
    #[error("edge probability {0} must lie in (0, 1]")]
    BadEdgeProbability(f64),
    #[error("{name} interval [{lo}, {hi}] must lie strictly inside (0, 1) with lo <= hi")]
    BadInterval {
        name: &'static str,
        lo: f64,
        hi: f64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("network file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported network format version {found}, expected {expected}")]
    UnsupportedVersion { found: String, expected: u32 },
}

/// Node counts of the three layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSizes {
    pub risk_factors: usize,
    pub diseases: usize,
    pub symptoms: usize,
}

impl LayerSizes {
    pub fn new(
        risk_factors: usize,
        diseases: usize,
        symptoms: usize,
    ) -> Result<Self, NetworkError> {
        if risk_factors == 0 || diseases == 0 || symptoms == 0 {
            return Err(NetworkError::InvalidLayerSizes(
                risk_factors,
                diseases,
                symptoms,
            ));
        }
        Ok(Self {
            risk_factors,
            diseases,
            symptoms,
        })
    }

    /// Total node count `n`.
    pub fn total(&self) -> usize {
        self.risk_factors + self.diseases + self.symptoms
    }
}

/// Role of a global node index, with the index local to its layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    RiskFactor(usize),
    Disease(usize),
    Symptom(usize),
}

/// A full joint assignment of all nodes, in global index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    values: Vec<bool>,
}

impl Assignment {
    pub fn new(values: Vec<bool>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.values[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.values
    }

    /// Packs assignments into a `(batch, n)` matrix of 0/1 training targets.
    pub fn pack(batch: &[Assignment]) -> Array2<f64> {
        let rows = batch.len();
        let cols = batch.first().map_or(0, Assignment::len);
        let mut out = Array2::zeros((rows, cols));
        for (r, a) in batch.iter().enumerate() {
            for (c, &v) in a.values.iter().enumerate() {
                out[[r, c]] = if v { 1.0 } else { 0.0 };
            }
        }
        out
    }
}

impl From<Vec<bool>> for Assignment {
    fn from(values: Vec<bool>) -> Self {
        Self::new(values)
    }
}

/// A three-layer noisy-OR Bayesian network.
///
/// Parameters follow the usual noisy-OR convention: `rf_priors[j]` is the
/// probability that risk factor `j` is *false*; `disease_leaks[i]` is the
/// probability disease `i` stays false when all its parents are false; each
/// edge weight is the probability the parent's influence is inhibited.
/// Conditionals multiply the leak by the weight of every *true* parent.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyOrNetwork {
    layers: LayerSizes,
    rf_priors: Vec<f64>,
    disease_leaks: Vec<f64>,
    /// Per disease: `(risk factor local index, weight)`, sorted by parent.
    disease_parents: Vec<Vec<(usize, f64)>>,
    symptom_leaks: Vec<f64>,
    /// Per symptom: `(disease local index, weight)`, sorted by parent.
    symptom_parents: Vec<Vec<(usize, f64)>>,
    /// Derived reverse adjacency: diseases per risk factor (local indices).
    rf_children: Vec<Vec<usize>>,
    /// Derived reverse adjacency: symptoms per disease (local indices).
    disease_children: Vec<Vec<usize>>,
    /// Seed the network was generated from, if any.
    seed: Option<u64>,
}

impl NoisyOrNetwork {
    /// Builds a network, enforcing that every probability lies strictly
    /// inside `(0, 1)` so all assignments keep nonzero probability.
    pub fn new(
        layers: LayerSizes,
        rf_priors: Vec<f64>,
        disease_leaks: Vec<f64>,
        disease_parents: Vec<Vec<(usize, f64)>>,
        symptom_leaks: Vec<f64>,
        symptom_parents: Vec<Vec<(usize, f64)>>,
        seed: Option<u64>,
    ) -> Result<Self, NetworkError> {
        let net = Self::build(
            layers,
            rf_priors,
            disease_leaks,
            disease_parents,
            symptom_leaks,
            symptom_parents,
            seed,
        )?;
        net.check_open_interval()?;
        Ok(net)
    }

    /// Test-only constructor that admits degenerate parameters in `[0, 1]`.
    ///
    /// Degenerate values break the positivity invariant that the rest of the
    /// crate relies on; production code must use [`NoisyOrNetwork::new`].
    pub fn new_degenerate_for_tests(
        layers: LayerSizes,
        rf_priors: Vec<f64>,
        disease_leaks: Vec<f64>,
        disease_parents: Vec<Vec<(usize, f64)>>,
        symptom_leaks: Vec<f64>,
        symptom_parents: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self, NetworkError> {
        Self::build(
            layers,
            rf_priors,
            disease_leaks,
            disease_parents,
            symptom_leaks,
            symptom_parents,
            None,
        )
    }

    fn build(
        layers: LayerSizes,
        rf_priors: Vec<f64>,
        disease_leaks: Vec<f64>,
        mut disease_parents: Vec<Vec<(usize, f64)>>,
        symptom_leaks: Vec<f64>,
        mut symptom_parents: Vec<Vec<(usize, f64)>>,
        seed: Option<u64>,
    ) -> Result<Self, NetworkError> {
        let check_len = |name, got: usize, expected: usize| {
            if got != expected {
                Err(NetworkError::LengthMismatch {
                    name,
                    expected,
                    got,
                })
            } else {
                Ok(())
            }
        };
        check_len("rf_priors", rf_priors.len(), layers.risk_factors)?;
        check_len("disease_leaks", disease_leaks.len(), layers.diseases)?;
        check_len("disease_parents", disease_parents.len(), layers.diseases)?;
        check_len("symptom_leaks", symptom_leaks.len(), layers.symptoms)?;
        check_len("symptom_parents", symptom_parents.len(), layers.symptoms)?;

        let check_edges = |rows: &mut Vec<Vec<(usize, f64)>>, parent_count: usize| {
            for (child, row) in rows.iter_mut().enumerate() {
                row.sort_by_key(|&(p, _)| p);
                for pair in row.windows(2) {
                    if pair[0].0 == pair[1].0 {
                        return Err(NetworkError::DuplicateEdge {
                            parent: pair[0].0,
                            child,
                        });
                    }
                }
                if let Some(&(p, _)) = row.iter().find(|&&(p, _)| p >= parent_count) {
                    return Err(NetworkError::ParentIndex { parent: p, child });
                }
            }
            Ok(())
        };
        check_edges(&mut disease_parents, layers.risk_factors)?;
        check_edges(&mut symptom_parents, layers.diseases)?;

        let mut rf_children = vec![Vec::new(); layers.risk_factors];
        for (i, row) in disease_parents.iter().enumerate() {
            for &(j, _) in row {
                rf_children[j].push(i);
            }
        }
        let mut disease_children = vec![Vec::new(); layers.diseases];
        for (k, row) in symptom_parents.iter().enumerate() {
            for &(i, _) in row {
                disease_children[i].push(k);
            }
        }

        Ok(Self {
            layers,
            rf_priors,
            disease_leaks,
            disease_parents,
            symptom_leaks,
            symptom_parents,
            rf_children,
            disease_children,
            seed,
        })
    }

    fn check_open_interval(&self) -> Result<(), NetworkError> {
        let check = |name, values: &[f64]| {
            for (index, &value) in values.iter().enumerate() {
                if !(value > 0.0 && value < 1.0) {
                    return Err(NetworkError::ParamOutOfRange { name, index, value });
                }
            }
            Ok(())
        };
        check("rf_priors", &self.rf_priors)?;
        check("disease_leaks", &self.disease_leaks)?;
        check("symptom_leaks", &self.symptom_leaks)?;
        for (name, rows) in [
            ("disease_weights", &self.disease_parents),
            ("symptom_weights", &self.symptom_parents),
        ] {
            for (index, row) in rows.iter().enumerate() {
                for &(_, w) in row {
                    if !(w > 0.0 && w < 1.0) {
                        return Err(NetworkError::ParamOutOfRange {
                            name,
                            index,
                            value: w,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> LayerSizes {
        self.layers
    }

    /// Total node count.
    pub fn n(&self) -> usize {
        self.layers.total()
    }

    pub fn num_risk_factors(&self) -> usize {
        self.layers.risk_factors
    }

    pub fn num_diseases(&self) -> usize {
        self.layers.diseases
    }

    pub fn num_symptoms(&self) -> usize {
        self.layers.symptoms
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Global index of risk factor `j`.
    pub fn rf_global(&self, j: usize) -> usize {
        j
    }

    /// Global index of disease `i`.
    pub fn disease_global(&self, i: usize) -> usize {
        self.layers.risk_factors + i
    }

    /// Global index of symptom `k`.
    pub fn symptom_global(&self, k: usize) -> usize {
        self.layers.risk_factors + self.layers.diseases + k
    }

    /// Classifies a global node index into its layer.
    pub fn role_of(&self, index: usize) -> Result<NodeRole, NetworkError> {
        let LayerSizes {
            risk_factors,
            diseases,
            ..
        } = self.layers;
        if index < risk_factors {
            Ok(NodeRole::RiskFactor(index))
        } else if index < risk_factors + diseases {
            Ok(NodeRole::Disease(index - risk_factors))
        } else if index < self.n() {
            Ok(NodeRole::Symptom(index - risk_factors - diseases))
        } else {
            Err(NetworkError::NodeIndex {
                index,
                n: self.n(),
            })
        }
    }

    /// Human-readable node label, e.g. `R0`, `D3`, `S7`.
    pub fn node_name(&self, index: usize) -> Result<String, NetworkError> {
        Ok(match self.role_of(index)? {
            NodeRole::RiskFactor(j) => format!("R{j}"),
            NodeRole::Disease(i) => format!("D{i}"),
            NodeRole::Symptom(k) => format!("S{k}"),
        })
    }

    pub fn rf_priors(&self) -> &[f64] {
        &self.rf_priors
    }

    pub fn disease_leaks(&self) -> &[f64] {
        &self.disease_leaks
    }

    pub fn symptom_leaks(&self) -> &[f64] {
        &self.symptom_leaks
    }

    /// `(risk factor local index, weight)` pairs for disease `i` (local).
    pub fn disease_parents(&self, i: usize) -> &[(usize, f64)] {
        &self.disease_parents[i]
    }

    /// `(disease local index, weight)` pairs for symptom `k` (local).
    pub fn symptom_parents(&self, k: usize) -> &[(usize, f64)] {
        &self.symptom_parents[k]
    }

    /// Diseases (local indices) that risk factor `j` feeds.
    pub fn rf_children(&self, j: usize) -> &[usize] {
        &self.rf_children[j]
    }

    /// Symptoms (local indices) that disease `i` feeds.
    pub fn disease_children(&self, i: usize) -> &[usize] {
        &self.disease_children[i]
    }

    pub fn edge_counts(&self) -> (usize, usize) {
        (
            self.disease_parents.iter().map(Vec::len).sum(),
            self.symptom_parents.iter().map(Vec::len).sum(),
        )
    }

    /// Stable identifier derived from shape and generation seed.
    pub fn id(&self) -> String {
        let LayerSizes {
            risk_factors,
            diseases,
            symptoms,
        } = self.layers;
        match self.seed {
            Some(s) => format!("bn-{risk_factors}x{diseases}x{symptoms}-seed{s}"),
            None => format!("bn-{risk_factors}x{diseases}x{symptoms}-handbuilt"),
        }
    }

    /// Prior probability that a risk factor is false, `P(RF_j = 0)`.
    pub fn prob_risk_factor_false(&self, index: usize) -> Result<f64, NetworkError> {
        match self.role_of(index)? {
            NodeRole::RiskFactor(j) => Ok(self.rf_priors[j]),
            _ => Err(NetworkError::RoleMismatch {
                index,
                expected: "risk factor",
            }),
        }
    }

    /// `P(D_i = 0 | risk factors)`: the leak times the weight of every true
    /// parent. Non-parents carry no factor.
    pub fn prob_disease_false_given_parents(
        &self,
        index: usize,
        rf_values: &[bool],
    ) -> Result<f64, NetworkError> {
        let i = match self.role_of(index)? {
            NodeRole::Disease(i) => i,
            _ => {
                return Err(NetworkError::RoleMismatch {
                    index,
                    expected: "disease",
                })
            }
        };
        if rf_values.len() != self.layers.risk_factors {
            return Err(NetworkError::LengthMismatch {
                name: "rf_values",
                expected: self.layers.risk_factors,
                got: rf_values.len(),
            });
        }
        Ok(self.disease_false_local(i, rf_values))
    }

    pub(crate) fn disease_false_local(&self, i: usize, rf_values: &[bool]) -> f64 {
        let mut p = self.disease_leaks[i];
        for &(j, w) in &self.disease_parents[i] {
            if rf_values[j] {
                p *= w;
            }
        }
        p
    }

    /// `P(S_k = 0 | diseases)`, analogous to the disease conditional.
    pub fn prob_symptom_false_given_parents(
        &self,
        index: usize,
        d_values: &[bool],
    ) -> Result<f64, NetworkError> {
        let k = match self.role_of(index)? {
            NodeRole::Symptom(k) => k,
            _ => {
                return Err(NetworkError::RoleMismatch {
                    index,
                    expected: "symptom",
                })
            }
        };
        if d_values.len() != self.layers.diseases {
            return Err(NetworkError::LengthMismatch {
                name: "d_values",
                expected: self.layers.diseases,
                got: d_values.len(),
            });
        }
        Ok(self.symptom_false_local(k, d_values))
    }

    pub(crate) fn symptom_false_local(&self, k: usize, d_values: &[bool]) -> f64 {
        let mut p = self.symptom_leaks[k];
        for &(i, w) in &self.symptom_parents[k] {
            if d_values[i] {
                p *= w;
            }
        }
        p
    }

    /// Joint probability of a full assignment: the chain-rule product of the
    /// prior, disease and symptom conditionals.
    pub fn joint_probability(&self, a: &Assignment) -> Result<f64, NetworkError> {
        let (rf, d, s) = self.split_assignment(a)?;
        let mut p = 1.0;
        for (j, &v) in rf.iter().enumerate() {
            let pi = self.rf_priors[j];
            p *= if v { 1.0 - pi } else { pi };
        }
        for (i, &v) in d.iter().enumerate() {
            let p0 = self.disease_false_local(i, rf);
            p *= if v { 1.0 - p0 } else { p0 };
        }
        for (k, &v) in s.iter().enumerate() {
            let p0 = self.symptom_false_local(k, d);
            p *= if v { 1.0 - p0 } else { p0 };
        }
        Ok(p)
    }

    /// Log of [`NoisyOrNetwork::joint_probability`], summed per node.
    pub fn log_joint_probability(&self, a: &Assignment) -> Result<f64, NetworkError> {
        let (rf, d, s) = self.split_assignment(a)?;
        let mut lp = 0.0;
        for (j, &v) in rf.iter().enumerate() {
            let pi = self.rf_priors[j];
            lp += if v { (1.0 - pi).ln() } else { pi.ln() };
        }
        for (i, &v) in d.iter().enumerate() {
            let p0 = self.disease_false_local(i, rf);
            lp += if v { (1.0 - p0).ln() } else { p0.ln() };
        }
        for (k, &v) in s.iter().enumerate() {
            let p0 = self.symptom_false_local(k, d);
            lp += if v { (1.0 - p0).ln() } else { p0.ln() };
        }
        Ok(lp)
    }

    fn split_assignment<'a>(
        &self,
        a: &'a Assignment,
    ) -> Result<(&'a [bool], &'a [bool], &'a [bool]), NetworkError> {
        if a.len() != self.n() {
            return Err(NetworkError::LengthMismatch {
                name: "assignment",
                expected: self.n(),
                got: a.len(),
            });
        }
        let v = a.as_slice();
        let r = self.layers.risk_factors;
        let d = self.layers.diseases;
        Ok((&v[..r], &v[r..r + d], &v[r + d..]))
    }

    /// Draws a joint sample by walking the layers in topological order.
    pub fn ancestral_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        let mut values = Vec::with_capacity(self.n());
        for &pi in &self.rf_priors {
            values.push(rng.random_bool(1.0 - pi));
        }
        let rf = values.clone();
        for i in 0..self.layers.diseases {
            let p0 = self.disease_false_local(i, &rf);
            values.push(rng.random_bool(1.0 - p0));
        }
        let d = values[self.layers.risk_factors..].to_vec();
        for k in 0..self.layers.symptoms {
            let p0 = self.symptom_false_local(k, &d);
            values.push(rng.random_bool(1.0 - p0));
        }
        Assignment::new(values)
    }

    /// Markov blanket of a node: parents, children and co-parents of the
    /// children, excluding the node itself. Returned sorted by global index.
    pub fn markov_blanket(&self, index: usize) -> Result<Vec<usize>, NetworkError> {
        let mut blanket = Vec::new();
        match self.role_of(index)? {
            NodeRole::RiskFactor(j) => {
                for &child in &self.rf_children[j] {
                    blanket.push(self.disease_global(child));
                    for &(co, _) in &self.disease_parents[child] {
                        blanket.push(self.rf_global(co));
                    }
                }
            }
            NodeRole::Disease(i) => {
                for &(parent, _) in &self.disease_parents[i] {
                    blanket.push(self.rf_global(parent));
                }
                for &child in &self.disease_children[i] {
                    blanket.push(self.symptom_global(child));
                    for &(co, _) in &self.symptom_parents[child] {
                        blanket.push(self.disease_global(co));
                    }
                }
            }
            NodeRole::Symptom(k) => {
                for &(parent, _) in &self.symptom_parents[k] {
                    blanket.push(self.disease_global(parent));
                }
            }
        }
        blanket.sort_unstable();
        blanket.dedup();
        blanket.retain(|&x| x != index);
        Ok(blanket)
    }
}
