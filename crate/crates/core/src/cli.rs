//! Building blocks for the command-line front end: run manifests, code
//! reference resolution, and the CSV renderers for the analyze and search
//! commands. Kept in the library so tests can exercise the exact output
//! surfaces.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError};
use crate::search::RankedCode;
use crate::trellis::{builtin_code, builtin_codes, TrellisCode, TrellisError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown code '{0}': not a built-in name or readable catalog file")]
    UnknownCode(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error(transparent)]
    Trellis(#[from] TrellisError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Everything needed to reproduce a run: the subcommand, its full parameter
/// set, and the raw argument vector replayed by `sttc-af replay`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub params: BTreeMap<String, String>,
    pub args: Vec<String>,
    pub seed: u64,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], params: BTreeMap<String, String>, seed: u64) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs().to_string())
            .unwrap_or_default();
        Self {
            command: command.to_string(),
            params,
            args: args.to_vec(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }

    /// Writes the manifest next to an output file as `<out>.manifest.json`.
    pub fn write_alongside(&self, out: &Path) -> Result<(), CliError> {
        let path = manifest_path(out);
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::BadManifest(e.to_string()))?;
        std::fs::write(&path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::BadManifest(e.to_string()))
    }
}

pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Resolves `--code`: a built-in name first, then a catalog file path.
pub fn resolve_code(reference: &str) -> Result<TrellisCode, CliError> {
    if let Some(code) = builtin_code(reference) {
        return Ok(code);
    }
    let path = Path::new(reference);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: reference.to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| reference.to_string());
        return Ok(TrellisCode::from_catalog_str(&name, &text)?);
    }
    Err(CliError::UnknownCode(reference.to_string()))
}

pub fn list_codes() -> String {
    let mut out = String::from("name,antennas,states,inputs\n");
    for code in builtin_codes() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            code.name, code.m, code.num_states, code.num_inputs
        ));
    }
    out
}

/// Per-event analysis CSV: one row per error event with its spectrum and
/// Craig/Chernoff PEP at every grid SNR, followed by a summary comment block
/// with the design score and the union bound per SNR.
pub fn analyze_csv(
    code: &TrellisCode,
    n: usize,
    es_n0_grid_db: &[f64],
    max_len: usize,
) -> Result<String, AnalysisError> {
    let events = analysis::event_spectra(code, max_len)?;
    let score = analysis::score_events(&events, code.m, n)?;

    let mut header = String::from("event_id,length");
    for i in 1..=code.m {
        header.push_str(&format!(",lambda{i}"));
    }
    header.push_str(",rank");
    for &db in es_n0_grid_db {
        header.push_str(&format!(",craig_{db:.0}dB"));
    }
    for &db in es_n0_grid_db {
        header.push_str(&format!(",chernoff_{db:.0}dB"));
    }
    let mut out = header;
    out.push('\n');

    for (id, ev) in events.iter().enumerate() {
        let mut row = format!("{id},{}", ev.length);
        for l in &ev.spectrum.lambdas {
            row.push_str(&format!(",{l:.6e}"));
        }
        row.push_str(&format!(",{}", ev.spectrum.rank));
        let peps: Vec<analysis::PepEstimate> = es_n0_grid_db
            .iter()
            .map(|&db| analysis::pep(&ev.spectrum, n, 10f64.powf(db / 10.0)))
            .collect::<Result<_, _>>()?;
        for p in &peps {
            row.push_str(&format!(",{:.6e}", p.craig));
        }
        for p in &peps {
            row.push_str(&format!(",{:.6e}", p.chernoff));
        }
        out.push_str(&row);
        out.push('\n');
    }

    out.push_str(&format!(
        "# code={} criterion={} min_rank={} worst_metric={:.6e}\n",
        code.name,
        score.criterion.as_str(),
        score.min_rank,
        score.worst_metric
    ));
    for &db in es_n0_grid_db {
        let bound = analysis::union_bound(code, n, 10f64.powf(db / 10.0), max_len)?;
        out.push_str(&format!("# union_bound_{db:.0}dB={bound:.6e}\n"));
    }
    Ok(out)
}

/// Ranking CSV for the search command.
pub fn ranking_csv(ranked: &[RankedCode]) -> String {
    let mut out = String::from("rank,name_or_hash,min_rank,worst_metric,criterion\n");
    for r in ranked {
        out.push_str(&format!(
            "{},{},{},{:.6e},{}\n",
            r.rank_position,
            r.code.name,
            r.score.min_rank,
            r.score.worst_metric,
            r.score.criterion.as_str()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_builtin_and_file_and_unknown() {
        assert!(resolve_code("qpsk4_m2_tarokh").is_ok());
        assert!(matches!(
            resolve_code("no-such-code"),
            Err(CliError::UnknownCode(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mini.code");
        let code = builtin_code("qpsk4_m2_paper").unwrap();
        std::fs::write(&path, code.to_catalog_string()).unwrap();
        let loaded = resolve_code(path.to_str().unwrap()).unwrap();
        assert_eq!(loaded.m, 2);
        assert_eq!(loaded.num_states, 4);
    }

    #[test]
    fn analyze_csv_dispatches_criterion() {
        let tarokh = builtin_code("qpsk4_m2_tarokh").unwrap();
        let csv = analyze_csv(&tarokh, 2, &[10.0, 14.0], 3).unwrap();
        assert!(csv.contains("criterion=determinant"));
        assert!(csv.contains("union_bound_10dB="));

        let m4 = builtin_code("qpsk4_m4_paper").unwrap();
        let csv = analyze_csv(&m4, 2, &[10.0], 2).unwrap();
        assert!(csv.contains("criterion=log_eig"));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("result.csv");
        let mut params = BTreeMap::new();
        params.insert("code".into(), "qpsk4_m2_paper".into());
        let manifest = RunManifest::new(
            "analyze",
            &["analyze".into(), "--code".into(), "qpsk4_m2_paper".into()],
            params,
            42,
        );
        manifest.write_alongside(&out).unwrap();
        let loaded = RunManifest::read(&manifest_path(&out)).unwrap();
        assert_eq!(manifest, loaded);
    }
}
