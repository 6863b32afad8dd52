//! Deterministic file emission and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::diagnostics::{EnergyLedger, PhiSample};
use crate::ensemble::Ensemble;
use crate::flow::ReflectionEvent;
use crate::selfconsistent::PicardState;

use super::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub partial: bool,
    pub error: Option<String>,
    pub files: Vec<ManifestEntry>,
}

/// Single writer for one output directory.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.dir.join(name);
        fs::write(&p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        self.entries.push(ManifestEntry {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(
        self,
        command: &str,
        config_sha256: String,
        seed: u64,
        error: Option<String>,
    ) -> Result<Manifest, CliError> {
        let manifest = Manifest {
            tool: "specvp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256,
            seed,
            partial: error.is_some(),
            error,
            files: self.entries.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        let p = self.dir.join("manifest.json");
        fs::write(&p, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        Ok(manifest)
    }
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn num(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x:e}").expect("writing to a string");
    s
}

fn indexed(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (0..d).map(move |k| format!("{prefix}{k}"))
}

/// Columns `t, id, x0.., v0.., w`, one row per particle and snapshot.
pub fn snapshots_csv(snaps: &[Ensemble]) -> Result<Vec<u8>, CliError> {
    let d = snaps.first().map_or(0, |e| e.dim());
    let header: Vec<String> = ["t".to_string(), "id".to_string()]
        .into_iter()
        .chain(indexed("x", d))
        .chain(indexed("v", d))
        .chain(["w".to_string()])
        .collect();
    let rows = snaps.iter().flat_map(|e| {
        (0..e.len()).map(move |i| {
            [num(e.time()), e.id(i).to_string()]
                .into_iter()
                .chain(e.pos(i).iter().map(|&c| num(c)))
                .chain(e.vel(i).iter().map(|&c| num(c)))
                .chain([num(e.weight(i))])
                .collect()
        })
    });
    csv_bytes(&header, rows)
}

/// Columns `t, id, x0.., v_minus0.., v_plus0..`.
pub fn events_csv(events: &[ReflectionEvent], d: usize) -> Result<Vec<u8>, CliError> {
    let header: Vec<String> = ["t".to_string(), "id".to_string()]
        .into_iter()
        .chain(indexed("x", d))
        .chain(indexed("v_minus", d))
        .chain(indexed("v_plus", d))
        .collect();
    let rows = events.iter().map(|ev| {
        [num(ev.t), ev.id.to_string()]
            .into_iter()
            .chain(ev.x.iter().map(|&c| num(c)))
            .chain(ev.v_minus.iter().map(|&c| num(c)))
            .chain(ev.v_plus.iter().map(|&c| num(c)))
            .collect()
    });
    csv_bytes(&header, rows)
}

const LEDGER_HEADER: [&str; 6] = ["t", "kinetic", "potential", "total", "K_integral", "drift"];

pub fn ledger_csv(l: &EnergyLedger) -> Result<Vec<u8>, CliError> {
    let header: Vec<String> = LEDGER_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = (0..l.len()).map(|k| {
        vec![
            num(l.t[k]),
            num(l.kinetic[k]),
            num(l.potential[k]),
            num(l.total[k]),
            num(l.k_integral[k]),
            num(l.drift[k]),
        ]
    });
    csv_bytes(&header, rows)
}

pub fn read_ledger_csv(path: &Path) -> Result<EnergyLedger, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| CliError::Io(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != LEDGER_HEADER {
        return Err(CliError::Io(format!("{}: unexpected ledger header", path.display())));
    }
    let mut cols: [Vec<f64>; 6] = Default::default();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Io(e.to_string()))?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|e| CliError::Io(format!("{}: row {}: {e}", path.display(), line + 2)))?;
            c.push(v);
        }
    }
    let [t, kinetic, potential, total, k_integral, drift] = cols;
    EnergyLedger::from_columns(t, kinetic, potential, total, k_integral, drift).map_err(CliError::from)
}

pub fn phi_csv(series: &[PhiSample]) -> Result<Vec<u8>, CliError> {
    let header = vec!["t".to_string(), "phi".to_string(), "slope".to_string()];
    csv_bytes(&header, series.iter().map(|s| vec![num(s.t), num(s.phi), num(s.slope)]))
}

/// Columns `n, Z_n, ratio, w1_exact`; empty cells where undefined.
pub fn contraction_csv(state: &PicardState) -> Result<Vec<u8>, CliError> {
    let header = ["n", "Z_n", "ratio", "w1_exact"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>();
    let rows = state.z.iter().enumerate().map(|(k, z)| {
        vec![
            (k + 1).to_string(),
            num(*z),
            if k == 0 {
                String::new()
            } else {
                num(state.ratios[k - 1])
            },
            state.w1[k].map(num).unwrap_or_default(),
        ]
    });
    csv_bytes(&header, rows)
}
