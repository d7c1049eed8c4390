//! Plain-text parameter checkpoints.
//!
//! ```text
//! camrl-checkpoint 1
//! meta <key> <value...>
//! param <name> <ndim> <d0> <d1> ...
//! <v0> <v1> ...
//! end
//! ```
//!
//! Values are written in shortest round-trip form, so save → load is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{NumericsError, ParamStore, Tensor};

const MAGIC: &str = "camrl-checkpoint 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub params: ParamStore,
}

fn bad(msg: impl Into<String>) -> NumericsError {
    NumericsError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut w: W) -> Result<(), NumericsError> {
    let mut s = String::new();
    writeln!(s, "{MAGIC}").unwrap();
    for (k, v) in &ckpt.meta {
        if k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(bad(format!("meta key `{k}` must be a single token")));
        }
        writeln!(s, "meta {k} {v}").unwrap();
    }
    for (name, t) in ckpt.params.iter() {
        write!(s, "param {name} {}", t.shape().len()).unwrap();
        for d in t.shape() {
            write!(s, " {d}").unwrap();
        }
        s.push('\n');
        let mut first = true;
        for v in t.data() {
            if !first {
                s.push(' ');
            }
            first = false;
            write!(s, "{v:e}").unwrap();
        }
        s.push('\n');
    }
    s.push_str("end\n");
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint, NumericsError> {
    let mut lines = BufReader::new(r).lines();
    let mut next = || -> Result<Option<String>, NumericsError> { Ok(lines.next().transpose()?) };
    if next()?.as_deref() != Some(MAGIC) {
        return Err(bad("missing header"));
    }
    let mut ckpt = Checkpoint::default();
    loop {
        let line = next()?.ok_or_else(|| bad("truncated file (no `end`)"))?;
        let mut tok = line.splitn(3, ' ');
        match tok.next() {
            Some("end") => break,
            Some("meta") => {
                let k = tok.next().ok_or_else(|| bad("meta without key"))?;
                ckpt.meta.insert(k.to_string(), tok.next().unwrap_or("").to_string());
            }
            Some("param") => {
                let fields: Vec<&str> = line.split_whitespace().collect();
                let name = fields.get(1).ok_or_else(|| bad("param without name"))?.to_string();
                let ndim: usize =
                    fields.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad(format!("{name}: bad rank")))?;
                if fields.len() != 3 + ndim {
                    return Err(bad(format!("{name}: shape header has wrong length")));
                }
                let shape = fields[3..]
                    .iter()
                    .map(|s| s.parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| bad(format!("{name}: {e}")))?;
                let values = next()?.ok_or_else(|| bad(format!("{name}: missing values")))?;
                let data = values
                    .split_whitespace()
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| bad(format!("{name}: {e}")))?;
                ckpt.params.insert(name, Tensor::new(shape, data)?);
            }
            _ => return Err(bad(format!("unexpected line `{line}`"))),
        }
    }
    Ok(ckpt)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NumericsError> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(ckpt, std::io::BufWriter::new(f))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NumericsError> {
    read_checkpoint(std::fs::File::open(path)?)
}
