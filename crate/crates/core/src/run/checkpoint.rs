//! Binary checkpoint format.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic      8 bytes  "METODSCK"
//! version    u32      1
//! config     32 bytes SHA-256 of the canonical config TOML
//! update     u64
//! env_steps  u64
//! adam_t     u64
//! toml_len   u32, then the canonical config TOML (UTF-8)
//! count      u32 tensors, each:
//!     name_len u16, name (UTF-8), rows u32, cols u32, rows*cols f64
//! ```
//!
//! Tensors are the agent parameters in visiting order, followed by the Adam
//! moments under `adam.m.<name>` and `adam.v.<name>`.

use std::path::Path;

use crate::metatrain::{Adam, AdamConfig};
use crate::plastic::{init_agent, AgentParams};

use super::config::RunConfig;
use super::RunError;

pub const MAGIC: &[u8; 8] = b"METODSCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: AgentParams<f64>,
    pub adam: Adam,
    pub update: u64,
    pub env_steps: u64,
}

struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn corrupt(msg: impl Into<String>) -> RunError {
    RunError::Data(format!("corrupt checkpoint: {}", msg.into()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RunError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, RunError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("length checked")))
    }

    fn u32(&mut self) -> Result<u32, RunError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("length checked")))
    }

    fn u64(&mut self) -> Result<u64, RunError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("length checked")))
    }

    fn str(&mut self, n: usize) -> Result<&'a str, RunError> {
        std::str::from_utf8(self.take(n)?).map_err(|_| corrupt("invalid UTF-8"))
    }
}

fn param_tensors(params: &AgentParams<f64>) -> Vec<Tensor> {
    let mut out = Vec::new();
    params.visit(|name, shape, data, _| {
        out.push(Tensor { name: name.to_string(), rows: shape.rows, cols: shape.cols, data: data.to_vec() })
    });
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.hash());
        out.extend_from_slice(&self.update.to_le_bytes());
        out.extend_from_slice(&self.env_steps.to_le_bytes());
        out.extend_from_slice(&self.adam.t.to_le_bytes());
        let toml = self.config.to_toml();
        out.extend_from_slice(&(toml.len() as u32).to_le_bytes());
        out.extend_from_slice(toml.as_bytes());

        let params = param_tensors(&self.params);
        let mut tensors = Vec::with_capacity(3 * params.len());
        let mut offset = 0;
        let mut moments = (Vec::new(), Vec::new());
        for t in &params {
            let n = t.data.len();
            let m = |prefix: &str, src: &[f64]| Tensor { name: format!("{prefix}.{}", t.name), rows: t.rows, cols: t.cols, data: src[offset..offset + n].to_vec() };
            moments.0.push(m("adam.m", &self.adam.m));
            moments.1.push(m("adam.v", &self.adam.v));
            offset += n;
        }
        tensors.extend(params);
        tensors.extend(moments.0);
        tensors.extend(moments.1);

        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in &tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.rows as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols as u32).to_le_bytes());
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RunError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).map_err(|_| corrupt("shorter than the header"))? != MAGIC {
            return Err(RunError::Data("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(RunError::Data(format!("unsupported checkpoint version {version} (expected {FORMAT_VERSION})")));
        }
        let hash: [u8; 32] = r.take(32)?.try_into().expect("length checked");
        let update = r.u64()?;
        let env_steps = r.u64()?;
        let adam_t = r.u64()?;
        let toml_len = r.u32()? as usize;
        let toml = r.str(toml_len)?;
        let config = RunConfig::from_toml(toml, &[]).map_err(|e| corrupt(format!("embedded config: {e}")))?;
        if config.hash() != hash {
            return Err(corrupt("config hash does not match the embedded config"));
        }

        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = r.str(len)?.to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows.checked_mul(cols).ok_or_else(|| corrupt("tensor too large"))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| corrupt("tensor too large"))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
            tensors.push(Tensor { name, rows, cols, data });
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }

        let mut params: AgentParams<f64> = init_agent(&config.agent);
        let expected = param_tensors(&params);
        if tensors.len() != 3 * expected.len() {
            return Err(corrupt(format!("expected {} tensors, found {}", 3 * expected.len(), tensors.len())));
        }
        let prefixes = ["", "adam.m.", "adam.v."];
        for (block, prefix) in prefixes.iter().enumerate() {
            for (e, t) in expected.iter().zip(&tensors[block * expected.len()..]) {
                let want = format!("{prefix}{}", e.name);
                if t.name != want || t.rows != e.rows || t.cols != e.cols {
                    return Err(corrupt(format!(
                        "tensor `{}` ({}x{}) where `{want}` ({}x{}) was expected",
                        t.name, t.rows, t.cols, e.rows, e.cols
                    )));
                }
            }
        }
        let mut it = tensors[..expected.len()].iter();
        params.visit_mut(|_, dst, _| dst.copy_from_slice(&it.next().expect("count checked").data));
        let flat = |block: usize| tensors[block * expected.len()..(block + 1) * expected.len()].iter().flat_map(|t| t.data.iter().copied()).collect();
        let mut adam_cfg = AdamConfig::with_lr(config.train.learning_rate);
        adam_cfg.max_grad_norm = Some(config.train.max_grad_norm);
        let adam = Adam { config: adam_cfg, m: flat(1), v: flat(2), t: adam_t };
        Ok(Self { config, params, adam, update, env_steps })
    }

    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        // Write-then-rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| RunError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| RunError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let bytes = std::fs::read(path).map_err(|e| RunError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
