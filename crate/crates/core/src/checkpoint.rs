//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PKAN1"
//! u64 length, then the model config as `model.* = value` text
//! u64 record count
//! per record: u32 name length, name (UTF-8), u32 rank, rank × u64 dims,
//!             row-major f64 values
//! ```
//!
//! Records are `param/<name>`, `bn_mean/<name>`, `bn_var/<name>` and, when
//! optimizer state is saved, `adam/step`, `adam/hyper` (β1, β2, ε),
//! `adam_m/<name>` and `adam_v/<name>`.

use std::collections::HashMap;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::config::{model_from_text, model_to_text};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::train::Adam;

const MAGIC: &[u8; 5] = b"PKAN1";

fn put_record(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes weights, batch-norm statistics and optional optimizer state.
pub fn to_bytes(model: &Model, opt: Option<&Adam>) -> Vec<u8> {
    let mut records: Vec<(String, Tensor)> = Vec::new();
    let names: Vec<String> = model.state.params().map(|(n, _)| n.to_string()).collect();
    for (n, t) in model.state.params() {
        records.push((format!("param/{n}"), t.clone()));
    }
    for (n, s) in model.state.norms() {
        let c = s.channels();
        records.push((format!("bn_mean/{n}"), Tensor::new(vec![c], s.running_mean.clone()).expect("shape")));
        records.push((format!("bn_var/{n}"), Tensor::new(vec![c], s.running_var.clone()).expect("shape")));
    }
    if let Some(a) = opt {
        records.push(("adam/step".into(), Tensor::scalar(a.step as f64)));
        records.push((
            "adam/hyper".into(),
            Tensor::new(vec![3], vec![a.beta1, a.beta2, a.eps]).expect("shape"),
        ));
        for (n, (m, v)) in names.iter().zip(a.m.iter().zip(&a.v)) {
            records.push((format!("adam_m/{n}"), m.clone()));
            records.push((format!("adam_v/{n}"), v.clone()));
        }
    }
    let cfg = model_to_text(&model.config);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    out.extend_from_slice(cfg.as_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for (n, t) in &records {
        put_record(&mut out, n, t);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Data(format!("checkpoint truncated at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Rebuilds the model described by the embedded config and restores its
/// state. Every parameter and batch-norm record must be present.
pub fn from_bytes(buf: &[u8]) -> Result<(Model, Option<Adam>)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(5).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Data("not a checkpoint (bad magic)".into()));
    }
    let len = r.u64()? as usize;
    let cfg_text = std::str::from_utf8(r.take(len)?)
        .map_err(|_| Error::Data("checkpoint config is not UTF-8".into()))?;
    let cfg = model_from_text(cfg_text, Path::new("<checkpoint>"))?;
    let count = r.u64()?;
    let mut records: HashMap<String, Tensor> = HashMap::new();
    for _ in 0..count {
        let nlen = r.u32()? as usize;
        let name = String::from_utf8(r.take(nlen)?.to_vec())
            .map_err(|_| Error::Data("checkpoint record name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u64()? as usize);
        }
        let n: usize = dims.iter().product();
        let bytes = r.take(n.checked_mul(8).ok_or_else(|| Error::Data("record too large".into()))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        records.insert(name, Tensor::new(dims, data)?);
    }

    let mut model = Model::build(&cfg, 0)?;
    let take = |records: &mut HashMap<String, Tensor>, name: String, shape: &[usize]| -> Result<Tensor> {
        let t = records
            .remove(&name)
            .ok_or_else(|| Error::Data(format!("checkpoint lacks record '{name}'")))?;
        if t.shape() != shape {
            return Err(Error::Data(format!(
                "checkpoint record '{name}' has shape {:?}, model expects {shape:?}",
                t.shape()
            )));
        }
        Ok(t)
    };
    let names: Vec<String> = model.state.params().map(|(n, _)| n.to_string()).collect();
    let shapes: Vec<Vec<usize>> = model.state.param_values().iter().map(|t| t.shape().to_vec()).collect();
    for (i, n) in names.iter().enumerate() {
        model.state.params_mut()[i] = take(&mut records, format!("param/{n}"), &shapes[i])?;
    }
    let norm_names: Vec<String> = model.state.norms().map(|(n, _)| n.to_string()).collect();
    for (i, n) in norm_names.iter().enumerate() {
        let c = model.state.norms_mut()[i].channels();
        let mean = take(&mut records, format!("bn_mean/{n}"), &[c])?;
        let var = take(&mut records, format!("bn_var/{n}"), &[c])?;
        let s = &mut model.state.norms_mut()[i];
        s.running_mean = mean.into_data();
        s.running_var = var.into_data();
    }
    let opt = if records.contains_key("adam/step") {
        let step = take(&mut records, "adam/step".into(), &[])?.item() as u64;
        let hyper = take(&mut records, "adam/hyper".into(), &[3])?;
        let h = hyper.data();
        let mut a = Adam::new(model.state.param_values(), h[0], h[1], h[2]);
        a.step = step;
        for (i, n) in names.iter().enumerate() {
            a.m[i] = take(&mut records, format!("adam_m/{n}"), &shapes[i])?;
            a.v[i] = take(&mut records, format!("adam_v/{n}"), &shapes[i])?;
        }
        Some(a)
    } else {
        None
    };
    if let Some(extra) = records.keys().next() {
        return Err(Error::Data(format!("checkpoint has unexpected record '{extra}'")));
    }
    Ok((model, opt))
}

pub fn save(path: impl AsRef<Path>, model: &Model, opt: Option<&Adam>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, to_bytes(model, opt)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(Model, Option<Adam>)> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}
