//! "HSBM" checkpoint files.

use std::path::Path;

use super::{BandNorm, Head, ModelSpec, TrainedModel, TrainingMeta};
use crate::data::io::{read_bytes, write_bytes, Reader};
use crate::numerics::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HSBM";
pub const VERSION: u16 = 1;

pub fn checkpoint_to_bytes(model: &TrainedModel) -> Vec<u8> {
    let spec = &model.spec;
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.bands as u32).to_le_bytes());
    out.push(match spec.head {
        Head::Bitfield => 0,
        Head::Baseline => 1,
    });
    out.extend_from_slice(&(spec.spectral_reduction as u32).to_le_bytes());
    out.push(spec.depth as u8);
    out.push(spec.encoder_channels.len() as u8);
    for &c in &spec.encoder_channels {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    out.extend_from_slice(&spec.seed.to_le_bytes());
    let meta = &model.meta;
    out.extend_from_slice(&meta.seed.to_le_bytes());
    out.extend_from_slice(&meta.epochs.to_le_bytes());
    out.extend_from_slice(&meta.final_train_loss.to_le_bytes());
    out.extend_from_slice(&meta.final_val_loss.to_le_bytes());
    for stats in [&model.norm.mean, &model.norm.std] {
        for v in stats {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, t) in &model.params {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let at = r.offset();
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::format(at, format!("unsupported checkpoint version {version}")));
    }
    let bands = r.u32("bands")? as usize;
    let at = r.offset();
    let head = match r.u8("head")? {
        0 => Head::Bitfield,
        1 => Head::Baseline,
        other => return Err(Error::format(at, format!("unknown head tag {other}"))),
    };
    let spectral_reduction = r.u32("reduction channels")? as usize;
    let depth = r.u8("depth")? as usize;
    let levels = r.u8("level count")? as usize;
    let encoder_channels = (0..levels).map(|_| r.u32("encoder channels").map(|c| c as usize)).collect::<Result<_>>()?;
    let seed = r.u64("seed")?;
    let spec = ModelSpec { bands, head, spectral_reduction, encoder_channels, depth, seed };
    let meta = TrainingMeta {
        seed: r.u64("training seed")?,
        epochs: r.u32("epochs")?,
        final_train_loss: f64::from_bits(r.u64("train loss")?),
        final_val_loss: f64::from_bits(r.u64("validation loss")?),
    };
    let spec_end = r.offset();
    spec.validate().map_err(|e| Error::format(spec_end, e.to_string()))?;
    let norm = BandNorm { mean: r.f32s(bands, "band means")?, std: r.f32s(bands, "band deviations")? };
    let count = r.u32("tensor count")? as usize;
    let mut params = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let at = r.offset();
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::format(at, "tensor name is not UTF-8"))?
            .to_string();
        let ndim = r.u8("rank")? as usize;
        let shape = (0..ndim).map(|_| r.u32("extent").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let at = r.offset();
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::format(at, "tensor too large"))?;
        let data = r.f32s(n, &format!("tensor {name}"))?;
        let t = Tensor::new(&shape, data).map_err(|e| Error::format(at, e.to_string()))?;
        params.push((name, t));
    }
    let end = r.offset();
    r.finish()?;
    TrainedModel::from_parts(spec, norm, params, meta).map_err(|e| Error::format(end, e.to_string()))
}

pub fn write_checkpoint(path: &Path, model: &TrainedModel) -> Result<()> {
    write_bytes(path, &checkpoint_to_bytes(model))
}

pub fn read_checkpoint(path: &Path) -> Result<TrainedModel> {
    checkpoint_from_bytes(&read_bytes(path)?).map_err(|e| match e {
        Error::Format { offset, message } => Error::format(offset, format!("{}: {message}", path.display())),
        other => other,
    })
}
