//! Output files. JSON documents carry the command name and config hash next
//! to the payload. Ensembles are binary: 8-byte magic, little-endian `u64`
//! header length, a JSON header, then the states as little-endian `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use locstat_core::sde::{EnsembleMeta, PathFlag, TrajectoryEnsemble};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const ENSEMBLE_MAGIC: &[u8; 8] = b"LCSTENS1";

#[derive(Serialize, Deserialize)]
pub struct Document<T> {
    pub command: String,
    pub config_hash: String,
    pub result: T,
}

pub fn write_json<T: Serialize>(path: &Path, command: &str, hash: &str, result: &T) -> Result<(), CliError> {
    let doc = Document { command: command.to_string(), config_hash: hash.to_string(), result };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Document<T>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    times: Vec<f64>,
    path_ids: Vec<u64>,
    flagged: Vec<(u64, PathFlag)>,
    meta: EnsembleMeta,
}

pub fn write_ensemble(path: &Path, ens: &TrajectoryEnsemble) -> Result<(), CliError> {
    let header = Header {
        dim: ens.dim,
        times: ens.times.clone(),
        path_ids: ens.path_ids.clone(),
        flagged: ens.flagged.clone(),
        meta: ens.meta.clone(),
    };
    let head = serde_json::to_vec(&header).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + head.len() + 8 * ens.states.len());
    buf.extend_from_slice(ENSEMBLE_MAGIC);
    buf.extend_from_slice(&(head.len() as u64).to_le_bytes());
    buf.extend_from_slice(&head);
    for v in &ens.states {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_ensemble(path: &Path) -> Result<TrajectoryEnsemble, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    let bad = |what: &str| CliError::Usage(format!("{}: {what}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != ENSEMBLE_MAGIC {
        return Err(bad("not an ensemble file"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let rest = &bytes[16 + len..];
    let expected = header.path_ids.len() * header.times.len() * header.dim;
    if rest.len() != 8 * expected {
        return Err(bad("state block has the wrong length"));
    }
    let states = rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(TrajectoryEnsemble {
        dim: header.dim,
        times: header.times,
        path_ids: header.path_ids,
        states,
        flagged: header.flagged,
        meta: header.meta,
    })
}

/// One row per path and saved time: `path,time,x_1,...,x_d`.
pub fn write_ensemble_csv(path: &Path, ens: &TrajectoryEnsemble) -> Result<(), CliError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "# config_hash={}", ens.meta.config_hash)?;
    let cols: Vec<String> = (1..=ens.dim).map(|i| format!("x_{i}")).collect();
    writeln!(out, "path,time,{}", cols.join(","))?;
    for (p, id) in ens.path_ids.iter().enumerate() {
        for (k, t) in ens.times.iter().enumerate() {
            let xs: Vec<String> = ens.state(p, k).iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{id},{t:e},{}", xs.join(","))?;
        }
    }
    out.flush()?;
    Ok(())
}
