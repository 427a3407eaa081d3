//! Trace CSV, edge CSV and the JSON summary sidecar.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pps_core::network::EdgeRecord;
use pps_core::solvers::{RunTrace, TraceRow};

/// Fixed column order of every trace file.
pub const TRACE_HEADER: [&str; 10] = [
    "t",
    "dual_value",
    "primal_gap",
    "gap",
    "cumulative_oracle_calls",
    "cumulative_bits",
    "r_t",
    "M_t",
    "alpha_t",
    "beta_t",
];

/// Shortest round-trip decimal; NaN becomes an empty field.
fn float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

fn parse_float(s: &str) -> Result<f64, String> {
    if s.is_empty() {
        Ok(f64::NAN)
    } else {
        s.parse().map_err(|e| format!("bad number {s:?}: {e}"))
    }
}

pub fn write_trace<W: Write>(out: W, trace: &RunTrace) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in &trace.rows {
        w.write_record([
            r.t.to_string(),
            float(r.dual_value),
            float(r.primal_gap),
            float(r.gap),
            r.calls.to_string(),
            r.bits.to_string(),
            r.r.to_string(),
            r.m.to_string(),
            float(r.alpha),
            float(r.beta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>, String> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(TRACE_HEADER) {
        return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let at = |k: usize| rec.get(k).ok_or_else(|| format!("row {}: missing column {}", i + 1, TRACE_HEADER[k]));
        let int = |k: usize| -> Result<u64, String> { at(k)?.parse().map_err(|e| format!("row {}: {e}", i + 1)) };
        let fl = |k: usize| -> Result<f64, String> { parse_float(at(k)?).map_err(|e| format!("row {}: {e}", i + 1)) };
        rows.push(TraceRow {
            t: int(0)? as usize,
            dual_value: fl(1)?,
            primal_gap: fl(2)?,
            gap: fl(3)?,
            calls: int(4)?,
            bits: int(5)?,
            r: int(6)? as usize,
            m: int(7)? as usize,
            alpha: fl(8)?,
            beta: fl(9)?,
        });
    }
    Ok(rows)
}

pub fn write_edges<W: Write>(out: W, edges: &[EdgeRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "src", "dst", "bits"])?;
    for e in edges {
        w.write_record([e.round.to_string(), e.src.to_string(), e.dst.to_string(), e.bits.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub solver: String,
    pub problem: String,
    /// SHA-256 of the resolved problem and topology.
    pub fingerprint: String,
    pub seed: u64,
    pub iterations: usize,
    pub final_dual_value: Option<f64>,
    pub final_primal_gap: Option<f64>,
    pub final_gap: Option<f64>,
    pub total_bits: u64,
    pub total_oracle_calls: u64,
    pub lipschitz: f64,
    pub radius: f64,
    pub epsilon_bound: f64,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

impl Summary {
    /// One-line human summary printed after a run.
    pub fn line(&self) -> String {
        let f = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.6e}"));
        format!(
            "{}: T={} dual_value={} gap={} bits={} oracle_calls={}",
            self.name,
            self.iterations,
            f(self.final_dual_value),
            f(self.final_gap),
            self.total_bits,
            self.total_oracle_calls
        )
    }
}

/// `dir/name.csv`, `dir/name.summary.json`, `dir/name.edges.csv`.
pub struct OutputPaths {
    pub trace: PathBuf,
    pub summary: PathBuf,
    pub edges: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: &Path, name: &str) -> Self {
        Self {
            trace: dir.join(format!("{name}.csv")),
            summary: dir.join(format!("{name}.summary.json")),
            edges: dir.join(format!("{name}.edges.csv")),
        }
    }

    /// Sidecar summary belonging to a trace file.
    pub fn summary_for(trace: &Path) -> PathBuf {
        let stem = trace.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        trace.with_file_name(format!("{stem}.summary.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: usize) -> TraceRow {
        TraceRow {
            t,
            dual_value: -1.25 + t as f64,
            primal_gap: f64::NAN,
            gap: 0.1 / (t + 1) as f64,
            calls: 2 * t as u64,
            bits: 100 * t as u64,
            r: 1,
            m: 3,
            alpha: 0.5,
            beta: 2.0,
        }
    }

    #[test]
    fn golden_header_and_rows() {
        let trace = RunTrace { rows: vec![row(0), row(1)], notes: vec![] };
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expected = "t,dual_value,primal_gap,gap,cumulative_oracle_calls,cumulative_bits,r_t,M_t,alpha_t,beta_t\n\
                        0,-1.25,,0.1,0,0,1,3,0.5,2.0\n\
                        1,-0.25,,0.05,2,100,1,3,0.5,2.0\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn read_back_preserves_values() {
        let trace = RunTrace { rows: (0..5).map(row).collect(), notes: vec![] };
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in back.iter().zip(&trace.rows) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.dual_value, b.dual_value);
            assert!(a.primal_gap.is_nan());
            assert_eq!(a.gap, b.gap);
            assert_eq!((a.calls, a.bits, a.r, a.m), (b.calls, b.bits, b.r, b.m));
        }
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_trace("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn sidecar_path() {
        assert_eq!(OutputPaths::summary_for(Path::new("out/run.csv")), PathBuf::from("out/run.summary.json"));
    }
}
