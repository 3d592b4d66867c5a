//! Plain-text export formats and run manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file is a deterministic function of its inputs.

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::analytic::{MgfGrid, MgfMethod};
use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::generator::SequenceTrajectory;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn io_err(e: io::Error) -> Error {
    Error::Parse(format!("I/O error: {e}"))
}

/// Columns `k,tau_k,cardinality,max_height`; row 0 is the initial state.
pub fn write_trajectory_csv<W: Write>(tr: &Trajectory, mut w: W) -> Result<()> {
    writeln!(w, "k,tau_k,cardinality,max_height").map_err(io_err)?;
    for (k, tau, card, h) in tr.summary_rows() {
        writeln!(w, "{k},{tau},{card},{h}").map_err(io_err)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryJson<'a> {
    schema_version: u32,
    alpha: f64,
    horizon: f64,
    seed: u64,
    stop_reason: crate::engine::StopReason,
    jump_times: &'a [f64],
    states: Vec<crate::tree::EvolutionarySet>,
}

/// Full trajectory including every state.
pub fn write_trajectory_json<W: Write>(tr: &Trajectory, w: W) -> Result<()> {
    let doc = TrajectoryJson {
        schema_version: SCHEMA_VERSION,
        alpha: tr.alpha,
        horizon: tr.horizon,
        seed: tr.seed,
        stop_reason: tr.stop_reason(),
        jump_times: tr.jump_times(),
        states: tr.states().collect(),
    };
    serde_json::to_writer_pretty(w, &doc).map_err(|e| Error::Parse(e.to_string()))
}

/// Metadata written as `# key=value` lines above a sample file.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SampleHeader {
    pub sampler: String,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub horizon: Option<f64>,
    pub depth: Option<u32>,
    pub seed: u64,
    pub n: usize,
}

impl SampleHeader {
    fn lines(&self) -> Vec<String> {
        let mut out = vec![format!("# sampler={}", self.sampler)];
        let opt = |k: &str, v: Option<String>| v.map(|v| format!("# {k}={v}"));
        out.extend(opt("beta", self.beta.map(|x| x.to_string())));
        out.extend(opt("alpha", self.alpha.map(|x| x.to_string())));
        out.extend(opt("horizon", self.horizon.map(|x| x.to_string())));
        out.extend(opt("depth", self.depth.map(|x| x.to_string())));
        out.push(format!("# seed={}", self.seed));
        out.push(format!("# n={}", self.n));
        out
    }
}

pub fn write_samples<W: Write>(header: &SampleHeader, values: &[f64], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    for line in header.lines() {
        writeln!(w, "{line}").map_err(io_err)?;
    }
    for v in values {
        writeln!(w, "{v}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads values from a sample file, skipping `#` comment lines.
pub fn read_samples<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(io_err)?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| Error::Parse(format!("bad sample value {t:?}")))?,
        );
    }
    Ok(out)
}

/// `# beta=.. method=.. steps=.. tol=..` then `r,phi` rows.
pub fn write_mgf_csv<W: Write>(grid: &MgfGrid, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let tol = grid.tol.map_or("none".to_string(), |t| t.to_string());
    writeln!(
        w,
        "# beta={} method={} steps={} tol={}",
        grid.beta,
        grid.method.as_str(),
        grid.len() - 1,
        tol
    )
    .map_err(io_err)?;
    writeln!(w, "r,phi").map_err(io_err)?;
    for (r, p) in grid.points() {
        writeln!(w, "{r},{p}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Parses the `(r, phi)` rows of an MGF CSV; returns the method and values.
pub fn read_mgf_csv<R: BufRead>(r: R) -> Result<(MgfMethod, Vec<(f64, f64)>)> {
    let mut method = None;
    let mut rows = Vec::new();
    for line in r.lines() {
        let line = line.map_err(io_err)?;
        if let Some(meta) = line.strip_prefix('#') {
            for kv in meta.split_whitespace() {
                if let Some(m) = kv.strip_prefix("method=") {
                    method = Some(match m {
                        "ode" => MgfMethod::Ode,
                        "fixed-point" => MgfMethod::FixedPoint,
                        "closed-form" => MgfMethod::ClosedForm,
                        other => return Err(Error::Parse(format!("unknown method {other}"))),
                    });
                }
            }
            continue;
        }
        if line.starts_with("r,") || line.trim().is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("bad row {line:?}")))?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {s:?}")))
        };
        rows.push((parse(a)?, parse(b)?));
    }
    let method = method.ok_or_else(|| Error::Parse("missing method header".into()))?;
    Ok((method, rows))
}

/// Columns `k,tau_k,n_0,...,n_kmax`, padded with zeros to the final width.
pub fn write_sequence_csv<W: Write>(tr: &SequenceTrajectory, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let states: Vec<_> = tr.states().collect();
    let width = states.iter().map(|s| s.counts().len()).max().unwrap_or(1);
    let cols: Vec<String> = (0..width).map(|j| format!("n_{j}")).collect();
    writeln!(w, "k,tau_k,{}", cols.join(",")).map_err(io_err)?;
    for (k, s) in states.iter().enumerate() {
        let tau = if k == 0 { 0.0 } else { tr.jump_times()[k - 1] };
        let counts: Vec<String> = (0..width).map(|j| s.get(j).to_string()).collect();
        writeln!(w, "{k},{tau},{}", counts.join(",")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Describes one command invocation and the data files it produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<PathBuf>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn start(command: &str, parameters: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            parameters,
            seed,
            tool_version: TOOL_VERSION.to_string(),
            started_unix: unix_now(),
            finished_unix: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        self.finished_unix = unix_now();
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(path, text + "\n").map_err(io_err)
    }
}

/// Serialises `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err)
}

/// Creates `path` and writes through a buffered file handle.
pub fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::mgf_closed_form_half;
    use crate::engine::{simulate, SimConfig};
    use crate::generator::{simulate_sequence, SequenceConfig};

    #[test]
    fn trajectory_csv_rows() {
        let tr = simulate(&SimConfig::new(0.5, 2.0, 3)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,tau_k,cardinality,max_height");
        assert_eq!(lines[1], "0,0,1,0");
        assert_eq!(lines.len(), tr.jumps() + 2);
        let mut json = Vec::new();
        write_trajectory_json(&tr, &mut json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v["states"][0], serde_json::json!([""]));
    }

    #[test]
    fn samples_round_trip() {
        let header = SampleHeader {
            sampler: "recursive".into(),
            beta: Some(0.75),
            depth: Some(20),
            seed: 4,
            n: 3,
            ..Default::default()
        };
        let values = [1.0, 0.1 + 0.2, 1e-300];
        let mut buf = Vec::new();
        write_samples(&header, &values, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# sampler=recursive\n# beta=0.75\n# depth=20\n# seed=4\n# n=3\n"));
        assert_eq!(read_samples(&buf[..]).unwrap(), values);
    }

    #[test]
    fn mgf_csv_round_trip() {
        let g = mgf_closed_form_half(2.0, 100).unwrap();
        let mut buf = Vec::new();
        write_mgf_csv(&g, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("# beta=0.5 method=closed-form steps=100 tol=none\nr,phi\n"));
        let (m, rows) = read_mgf_csv(&buf[..]).unwrap();
        assert_eq!(m, MgfMethod::ClosedForm);
        assert_eq!(rows, g.points().collect::<Vec<_>>());
    }

    #[test]
    fn sequence_csv_is_padded() {
        let tr = simulate_sequence(&SequenceConfig::new(1.0, 2.0, 1)).unwrap();
        let mut buf = Vec::new();
        write_sequence_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]));
        assert!(text.lines().nth(1).unwrap().starts_with("0,0,1"));
    }
}
