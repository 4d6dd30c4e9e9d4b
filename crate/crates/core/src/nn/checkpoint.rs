//! Binary checkpoint: magic `EANN`, version u16, conv activation tag u8, the
//! feature standardization mean and std (`FEATURE_DIM` f32 each), then one
//! blob per parameterized layer in layer order: layer index u16, element
//! count u64, f32 values. All integers and floats are little-endian.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::spec::{Activation, ModelSpec};
use super::{ParamStore, Tensor};
use crate::features::FEATURE_DIM;

pub const MAGIC: &[u8; 4] = b"EANN";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u16),
    #[error("unknown activation tag {0}")]
    UnknownActivation(u8),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint does not match the model: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub activation: Activation,
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
    /// `(layer index, flattened parameters)` for layers that own parameters.
    pub blobs: Vec<(u16, Vec<f32>)>,
}

impl Checkpoint {
    pub fn from_params(activation: Activation, mean: Vec<f32>, std: Vec<f32>, params: &ParamStore<f32>) -> Self {
        let blobs = params
            .layers
            .iter()
            .enumerate()
            .filter(|(_, ts)| !ts.is_empty())
            .map(|(i, ts)| (i as u16, ts.iter().flat_map(|t| t.data().iter().copied()).collect()))
            .collect();
        Self {
            activation,
            mean,
            std,
            blobs,
        }
    }

    /// Per-layer element counts, zero for layers without a blob.
    pub fn layer_counts(&self) -> Vec<usize> {
        let n = self.blobs.last().map_or(0, |(i, _)| *i as usize + 1);
        let mut counts = vec![0; n];
        for (i, b) in &self.blobs {
            counts[*i as usize] = b.len();
        }
        counts
    }

    /// Unpacks the blobs into a parameter store shaped for `spec`.
    pub fn params_for(&self, spec: &ModelSpec) -> Result<ParamStore<f32>, CheckpointError> {
        let shapes = spec
            .param_shapes()
            .map_err(|e| CheckpointError::ShapeMismatch(e.to_string()))?;
        let mut blobs = self.blobs.iter().peekable();
        let mut layers = Vec::with_capacity(shapes.len());
        for (i, layer_shapes) in shapes.iter().enumerate() {
            let want: usize = layer_shapes.iter().map(|s| s.iter().product::<usize>()).sum();
            if want == 0 {
                layers.push(Vec::new());
                continue;
            }
            let Some((idx, data)) = blobs.next_if(|(idx, _)| *idx as usize == i) else {
                return Err(CheckpointError::ShapeMismatch(format!("no parameters for layer {i}")));
            };
            if data.len() != want {
                return Err(CheckpointError::ShapeMismatch(format!(
                    "layer {idx} holds {} values, model expects {want}",
                    data.len()
                )));
            }
            let mut offset = 0;
            let mut tensors = Vec::with_capacity(layer_shapes.len());
            for s in layer_shapes {
                let n: usize = s.iter().product();
                let t = Tensor::from_vec(s, data[offset..offset + n].to_vec())
                    .map_err(|e| CheckpointError::ShapeMismatch(e.to_string()))?;
                tensors.push(t);
                offset += n;
            }
            layers.push(tensors);
        }
        if let Some((idx, _)) = blobs.next() {
            return Err(CheckpointError::ShapeMismatch(format!(
                "unexpected parameters for layer {idx}"
            )));
        }
        Ok(ParamStore { layers })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), CheckpointError> {
        if self.mean.len() != FEATURE_DIM || self.std.len() != FEATURE_DIM {
            return Err(CheckpointError::ShapeMismatch(format!(
                "standardization vectors must have {FEATURE_DIM} entries"
            )));
        }
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.activation.tag()])?;
        write_f32s(w, &self.mean)?;
        write_f32s(w, &self.std)?;
        for (idx, data) in &self.blobs {
            w.write_all(&idx.to_le_bytes())?;
            w.write_all(&(data.len() as u64).to_le_bytes())?;
            write_f32s(w, data)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut b2 = [0u8; 2];
        read_exact(r, &mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != VERSION {
            return Err(CheckpointError::VersionMismatch(version));
        }
        let mut tag = [0u8; 1];
        read_exact(r, &mut tag)?;
        let activation = Activation::from_tag(tag[0]).ok_or(CheckpointError::UnknownActivation(tag[0]))?;
        let mean = read_f32s(r, FEATURE_DIM)?;
        let std = read_f32s(r, FEATURE_DIM)?;

        let mut blobs = Vec::new();
        loop {
            let mut idx = [0u8; 2];
            match r.read(&mut idx[..1])? {
                0 => break,
                _ => read_exact(r, &mut idx[1..])?,
            }
            let mut n = [0u8; 8];
            read_exact(r, &mut n)?;
            let n = u64::from_le_bytes(n) as usize;
            blobs.push((u16::from_le_bytes(idx), read_f32s(r, n)?));
        }
        Ok(Self {
            activation,
            mean,
            std,
            blobs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    w.write_all(&bytes)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CheckpointError::Truncated,
        _ => CheckpointError::Io(e),
    })
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>, CheckpointError> {
    let mut out = Vec::with_capacity(n.min(1 << 24));
    let mut chunk = vec![0u8; 4 * 4096];
    let mut left = n;
    while left > 0 {
        let take = left.min(4096);
        read_exact(r, &mut chunk[..4 * take])?;
        out.extend(
            chunk[..4 * take]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
        left -= take;
    }
    Ok(out)
}
