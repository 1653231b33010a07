//! Parameter checkpoints: a plain-text manifest followed by a little-endian
//! `f32` payload.
//!
//! ```text
//! NDAUTO-CHECKPOINT 1
//! <count>
//! <name> <dim0>x<dim1>x... <byte offset into payload>
//! ...
//! END
//! <payload>
//! ```

use std::io::{BufRead, Write};

use crate::error::{Result, TensorError};
use crate::tensor::{Params, Tensor};
use crate::Real;

const MAGIC: &str = "NDAUTO-CHECKPOINT 1";

fn ck(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

pub fn write_checkpoint<T: Real, W: Write>(params: &Params<T>, mut out: W) -> Result<()> {
    let mut header = format!("{MAGIC}\n{}\n", params.len());
    let mut offset = 0usize;
    for (name, t) in params.iter() {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(ck(format!("parameter name `{name}` must be non-empty without whitespace")));
        }
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        header.push_str(&format!("{name} {} {offset}\n", dims.join("x")));
        offset += 4 * t.len();
    }
    header.push_str("END\n");
    let mut payload = Vec::with_capacity(offset);
    for (_, t) in params.iter() {
        for v in t.data() {
            payload.extend_from_slice(&(v.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
        }
    }
    out.write_all(header.as_bytes())
        .and_then(|_| out.write_all(&payload))
        .map_err(|e| ck(e.to_string()))
}

pub fn read_checkpoint<T: Real, R: BufRead>(mut input: R) -> Result<Params<T>> {
    let mut line = String::new();
    let mut next_line = |line: &mut String| -> Result<String> {
        line.clear();
        input.read_line(line).map_err(|e| ck(e.to_string()))?;
        if line.is_empty() {
            return Err(ck("unexpected end of header"));
        }
        Ok(line.trim_end_matches('\n').to_string())
    };
    if next_line(&mut line)? != MAGIC {
        return Err(ck("bad magic"));
    }
    let count: usize = next_line(&mut line)?.parse().map_err(|_| ck("bad count"))?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let l = next_line(&mut line)?;
        let parts: Vec<&str> = l.split(' ').collect();
        if parts.len() != 3 {
            return Err(ck(format!("bad manifest line `{l}`")));
        }
        let shape = parts[1]
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|_| ck(format!("bad shape `{}`", parts[1]))))
            .collect::<Result<Vec<_>>>()?;
        let offset: usize = parts[2].parse().map_err(|_| ck("bad offset"))?;
        entries.push((parts[0].to_string(), shape, offset));
    }
    if next_line(&mut line)? != "END" {
        return Err(ck("missing END"));
    }
    drop(next_line);
    let mut payload = Vec::new();
    input.read_to_end(&mut payload).map_err(|e| ck(e.to_string()))?;
    let mut params = Params::new();
    for (name, shape, offset) in entries {
        let n: usize = shape.iter().product();
        let bytes = payload
            .get(offset..offset + 4 * n)
            .ok_or_else(|| ck(format!("payload too short for `{name}`")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| T::from_f32(f32::from_le_bytes([b[0], b[1], b[2], b[3]])).unwrap())
            .collect();
        params.insert(name, Tensor::new(&shape, data)?)?;
    }
    Ok(params)
}

/// Copies checkpoint values into an existing store, requiring identical
/// names and shapes.
pub fn load_into<T: Real>(target: &mut Params<T>, loaded: &Params<T>) -> Result<()> {
    if target.len() != loaded.len() {
        return Err(ck(format!("expected {} tensors, found {}", target.len(), loaded.len())));
    }
    let ids: Vec<_> = target.ids().collect();
    for id in ids {
        let name = target.name(id).to_string();
        let src = loaded.by_name(&name).ok_or_else(|| ck(format!("missing `{name}`")))?;
        let dst = target.get_mut(id);
        if src.shape() != dst.shape() {
            return Err(ck(format!("`{name}`: shape {:?} != {:?}", src.shape(), dst.shape())));
        }
        dst.data_mut().copy_from_slice(src.data());
    }
    Ok(())
}
