//! Versioned binary checkpoints.
//!
//! A checkpoint carries the full model (shapes, parameters, running
//! batch-norm statistics), the optimiser state when training is resumable,
//! and the seeds and sample count the run was driven by. All floats are
//! written as little-endian IEEE-754 bits, so a round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::ArrayD;

use super::adam::{AdamHyper, AdamState};
use super::model::{ModelError, UmModel};
use crate::bn::LayerSizes;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"UMCK";

/// A saved training state: the model plus everything needed to describe or
/// resume the run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: UmModel,
    pub adam: Option<AdamState>,
    pub data_seed: u64,
    pub samples_consumed: u64,
    pub scheme: String,
}

impl Checkpoint {
    /// Stable identifier recorded in report headers.
    pub fn id(&self) -> String {
        format!(
            "um-{}-init{}-data{}-n{}",
            if self.scheme.is_empty() {
                "untrained"
            } else {
                &self.scheme
            },
            self.model.init_seed(),
            self.data_seed,
            self.samples_consumed
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_FORMAT_VERSION)?;

        let nodes = self.model.branch_nodes();
        if nodes.len() != 3 {
            return Err(ModelError::Format("expected three branches".into()));
        }
        for &count in &nodes {
            w.write_u64::<LittleEndian>(count as u64)?;
        }
        w.write_u64::<LittleEndian>(self.model.init_seed())?;
        w.write_f64::<LittleEndian>(self.model.bn_momentum)?;
        w.write_f64::<LittleEndian>(self.model.bn_eps)?;

        for view in self.model.param_views() {
            write_tensor(&mut w, &view.to_owned())?;
        }
        for view in self.model.running_stat_views() {
            write_tensor(&mut w, &view.to_owned())?;
        }

        match &self.adam {
            None => w.write_u8(0)?,
            Some(state) => {
                w.write_u8(1)?;
                w.write_f64::<LittleEndian>(state.hyper.learning_rate)?;
                w.write_f64::<LittleEndian>(state.hyper.beta1)?;
                w.write_f64::<LittleEndian>(state.hyper.beta2)?;
                w.write_f64::<LittleEndian>(state.hyper.epsilon)?;
                w.write_u64::<LittleEndian>(state.t)?;
                for tensor in state.m.iter().chain(state.v.iter()) {
                    write_tensor(&mut w, tensor)?;
                }
            }
        }

        w.write_u64::<LittleEndian>(self.data_seed)?;
        w.write_u64::<LittleEndian>(self.samples_consumed)?;
        let scheme = self.scheme.as_bytes();
        w.write_u32::<LittleEndian>(scheme.len() as u32)?;
        w.write_all(scheme)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ModelError::Format("not a checkpoint file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion {
                found: version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }

        let rf = r.read_u64::<LittleEndian>()? as usize;
        let d = r.read_u64::<LittleEndian>()? as usize;
        let s = r.read_u64::<LittleEndian>()? as usize;
        let init_seed = r.read_u64::<LittleEndian>()?;
        let bn_momentum = r.read_f64::<LittleEndian>()?;
        let bn_eps = r.read_f64::<LittleEndian>()?;

        let shape = LayerSizes::new(rf, d, s)
            .map_err(|e| ModelError::Format(format!("bad branch shape: {e}")))?;
        let mut model = UmModel::init(shape, init_seed);
        model.bn_momentum = bn_momentum;
        model.bn_eps = bn_eps;

        for mut view in model.param_views_mut() {
            read_tensor_into(&mut r, &mut view)?;
        }
        for mut view in model.running_stat_views_mut() {
            read_tensor_into(&mut r, &mut view)?;
        }

        let adam = match r.read_u8()? {
            0 => None,
            1 => {
                let hyper = AdamHyper {
                    learning_rate: r.read_f64::<LittleEndian>()?,
                    beta1: r.read_f64::<LittleEndian>()?,
                    beta2: r.read_f64::<LittleEndian>()?,
                    epsilon: r.read_f64::<LittleEndian>()?,
                };
                let t = r.read_u64::<LittleEndian>()?;
                let mut state = AdamState::new(&model, hyper);
                state.t = t;
                for tensor in state.m.iter_mut().chain(state.v.iter_mut()) {
                    let mut view = tensor.view_mut();
                    read_tensor_into(&mut r, &mut view)?;
                }
                Some(state)
            }
            other => {
                return Err(ModelError::Format(format!(
                    "bad optimiser-state flag {other}"
                )))
            }
        };

        let data_seed = r.read_u64::<LittleEndian>()?;
        let samples_consumed = r.read_u64::<LittleEndian>()?;
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut scheme = vec![0u8; len];
        r.read_exact(&mut scheme)?;
        let scheme = String::from_utf8(scheme)
            .map_err(|_| ModelError::Format("scheme name is not UTF-8".into()))?;

        Ok(Self {
            model,
            adam,
            data_seed,
            samples_consumed,
            scheme,
        })
    }
}

fn write_tensor<W: Write>(w: &mut W, tensor: &ArrayD<f64>) -> Result<(), ModelError> {
    w.write_u8(tensor.ndim() as u8)?;
    for &dim in tensor.shape() {
        w.write_u64::<LittleEndian>(dim as u64)?;
    }
    for &v in tensor.iter() {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_tensor_into<R: Read>(
    r: &mut R,
    view: &mut ndarray::ArrayViewMutD<'_, f64>,
) -> Result<(), ModelError> {
    let ndim = r.read_u8()? as usize;
    if ndim != view.ndim() {
        return Err(ModelError::Format(format!(
            "tensor rank {ndim} does not match expected {}",
            view.ndim()
        )));
    }
    for expected in view.shape().to_vec() {
        let dim = r.read_u64::<LittleEndian>()? as usize;
        if dim != expected {
            return Err(ModelError::Format(format!(
                "tensor dimension {dim} does not match expected {expected}"
            )));
        }
    }
    for v in view.iter_mut() {
        *v = r.read_f64::<LittleEndian>()?;
    }
    Ok(())
}
