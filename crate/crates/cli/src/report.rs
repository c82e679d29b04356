//! Report envelopes and the CSV shapes the CLI writes.

use std::io::{Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Failure, GlobalOpts, Phase};

/// Fields every report carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generated_at_unix: Option<u64>,
}

impl Meta {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: u64, g: &GlobalOpts) -> Result<Self, Failure> {
        let generated_at_unix =
            (!g.no_timestamp).then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        Ok(Self { command: command.into(), config_hash: hash_json(config)?, seed, generated_at_unix })
    }

    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("command".to_string(), self.command.clone()),
            ("config_hash".to_string(), self.config_hash.clone()),
            ("seed".to_string(), self.seed.to_string()),
        ];
        if let Some(t) = self.generated_at_unix {
            kv.push(("generated_at_unix".into(), t.to_string()));
        }
        kv
    }
}

pub fn hash_json<C: Serialize>(config: &C) -> Result<String, Failure> {
    let json = serde_json::to_string(config).runtime()?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(value).runtime()?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

/// Two-column `key,value` CSV.
pub fn write_key_values<W: Write>(w: W, rows: &[(String, String)]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["key", "value"])?;
    for (k, v) in rows {
        out.write_record([k, v])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_key_values<R: Read>(r: R) -> csv::Result<Vec<(String, String)>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().collect()
}

/// One relaxed weight `w^l(h)` with the spread statistics of its row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub layer: usize,
    pub l: usize,
    pub element_name: String,
    pub weight: f64,
    pub spread: f64,
    pub variance: f64,
}

/// Equivariance error of one group element over the sample set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub layer: usize,
    pub element_name: String,
    pub max_ee: f64,
    pub mean_ee: f64,
}

pub fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> csv::Result<Vec<T>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

pub(crate) fn create(path: &Path) -> Result<std::fs::File, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("creating {}: {e}", dir.display())))?;
    }
    std::fs::File::create(path).map_err(|e| Failure::Runtime(format!("creating {}: {e}", path.display())))
}
