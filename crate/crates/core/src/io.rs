//! Time-series CSV, binary field snapshots and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::StateRecord;
use crate::spectral::{Backend, SpectralField, SpectralGrid};

pub const CSV_HEADER: &str =
    "t,mass,energy,dissipation_acc,ito_F_acc,ito_M_acc,entropy,sup_abs_phi,confinement_l2";
pub const SNAPSHOT_MAGIC: &[u8; 8] = b"SCHFLD01";

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn timeseries_csv(records: &[StateRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let row = [
            r.t,
            r.mass,
            r.energy,
            r.dissipation_acc,
            r.ito_f_acc,
            r.ito_m_acc,
            r.entropy,
            r.sup_abs_phi,
            r.confinement_l2,
        ];
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn write_timeseries(records: &[StateRecord], path: &Path) -> Result<()> {
    write_atomic(path, timeseries_csv(records).as_bytes())
}

pub fn snapshot_bytes(field: &SpectralField) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(8 + 16 + 8 * (grid.dim() + field.coeffs().len()));
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&(grid.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(grid.modes_per_axis() as u64).to_le_bytes());
    for l in grid.lengths() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for a in field.coeffs() {
        out.extend_from_slice(&a.to_le_bytes());
    }
    out
}

pub fn write_snapshot(field: &SpectralField, path: &Path) -> Result<()> {
    write_atomic(path, &snapshot_bytes(field))
}

/// Decoded snapshot: box, modes and coefficients in storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub lengths: Vec<f64>,
    pub modes: usize,
    pub coeffs: Vec<f64>,
}

impl Snapshot {
    /// Rebuilds the field on a fresh grid with the given collocation density.
    pub fn into_field(self, oversample: f64, backend: Backend) -> Result<SpectralField> {
        let grid = Arc::new(SpectralGrid::new(&self.lengths, self.modes, oversample, backend)?);
        SpectralField::new(grid, self.coeffs)
    }
}

pub fn parse_snapshot(bytes: &[u8], path: &Path) -> Result<Snapshot> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 24 || &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(bad("missing SCHFLD01 header".into()));
    }
    let word = |i: usize| -> [u8; 8] { bytes[i..i + 8].try_into().expect("8-byte slice") };
    let dim = u64::from_le_bytes(word(8)) as usize;
    let modes = u64::from_le_bytes(word(16)) as usize;
    if !(1..=2).contains(&dim) || modes == 0 {
        return Err(bad(format!("invalid header: dim = {dim}, modes = {modes}")));
    }
    let n_coeffs = modes
        .checked_pow(dim as u32)
        .ok_or_else(|| bad("mode count overflows".into()))?;
    let expected = 24 + 8 * (dim + n_coeffs);
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let lengths = (0..dim).map(|d| f64::from_le_bytes(word(24 + 8 * d))).collect();
    let coeffs = (0..n_coeffs)
        .map(|k| f64::from_le_bytes(word(24 + 8 * (dim + k))))
        .collect();
    Ok(Snapshot {
        lengths,
        modes,
        coeffs,
    })
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_snapshot(&bytes, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub pass: bool,
    pub detail: String,
}

/// Everything needed to reproduce a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `simulate`, `study <axis>` or `check <kind>`.
    pub command: Vec<String>,
    /// Canonical config text, defaults resolved.
    pub config: String,
    pub seed: u64,
    pub paths: usize,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<PathBuf>,
    pub verdicts: Vec<Verdict>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        write_atomic(path, json.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

pub fn code_version() -> String {
    format!("stochch {}", env!("CARGO_PKG_VERSION"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_snapshot_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        for lengths in [vec![1.5], vec![1.0, 2.5]] {
            let grid = Arc::new(SpectralGrid::new(&lengths, 5, 1.5, Backend::Fast).unwrap());
            let f = SpectralField::zeros(grid.clone());
            let p = dir.path().join("zero.bin");
            write_snapshot(&f, &p).unwrap();
            let snap = read_snapshot(&p).unwrap();
            assert_eq!(snap.lengths, lengths);
            let back = snap.into_field(1.5, Backend::Fast).unwrap();
            assert_eq!(back.coeffs(), f.coeffs());
            let mut g = SpectralField::zeros(grid);
            g.coeffs_mut()[3] = -0.125;
            let bytes = snapshot_bytes(&g);
            assert_eq!(&bytes[..8], b"SCHFLD01");
            assert_eq!(parse_snapshot(&bytes, &p).unwrap().coeffs, g.coeffs());
        }
    }

    #[test]
    fn corrupt_snapshots_are_rejected() {
        let p = Path::new("x.bin");
        assert!(matches!(parse_snapshot(b"NOTMAGIC", p), Err(Error::Format { .. })));
        let grid = Arc::new(SpectralGrid::interval(1.0, 3).unwrap());
        let mut bytes = snapshot_bytes(&SpectralField::zeros(grid));
        bytes.pop();
        assert!(matches!(parse_snapshot(&bytes, p), Err(Error::Format { .. })));
    }

    #[test]
    fn csv_header_is_stable() {
        assert_eq!(
            timeseries_csv(&[]),
            "t,mass,energy,dissipation_acc,ito_F_acc,ito_M_acc,entropy,sup_abs_phi,confinement_l2\n"
        );
    }

    #[test]
    fn manifest_round_trips_and_io_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            command: vec!["simulate".into()],
            config: "time.T = 1\n".into(),
            seed: 3,
            paths: 2,
            code_version: code_version(),
            wall_clock_seconds: 0.5,
            outputs: vec![PathBuf::from("a.csv")],
            verdicts: vec![Verdict {
                criterion: "x".into(),
                pass: true,
                detail: String::new(),
            }],
        };
        let p = dir.path().join("manifest.json");
        m.write(&p).unwrap();
        assert_eq!(RunManifest::read(&p).unwrap(), m);
        let missing = dir.path().join("nope").join("m.json");
        let err = m.write(&missing).unwrap_err().to_string();
        assert!(err.contains("nope"), "{err}");
    }
}
