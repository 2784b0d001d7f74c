//! Benchmark and sweep records and their CSV form.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use sector_dmrg::dmrg::{Direction, Phase, SweepRecord};
use thiserror::Error;

pub const BENCH_HEADER: [&str; 5] = ["label", "size", "seconds", "flops", "gflops"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}, record {record}: {message}")]
    Format { path: PathBuf, record: usize, message: String },
}

/// One timed measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub label: String,
    /// D, p or N depending on the benchmark.
    pub size: u64,
    pub seconds: f64,
    pub flops: u64,
}

impl BenchRecord {
    pub fn gflops(&self) -> f64 {
        if self.seconds > 0.0 {
            self.flops as f64 / self.seconds / 1e9
        } else {
            0.0
        }
    }
}

/// 17 significant digits, enough to round-trip any finite double.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CsvError> {
    let file = File::create(path).map_err(|source| CsvError::Io { path: path.to_path_buf(), source })?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(file)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<(), CsvError> {
    w.flush().map_err(|source| CsvError::Io { path: path.to_path_buf(), source })
}

pub fn write_csv(records: &[BenchRecord], path: &Path) -> Result<(), CsvError> {
    let csv_err = |source| CsvError::Csv { path: path.to_path_buf(), source };
    let mut w = writer(path)?;
    w.write_record(BENCH_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.label.clone(),
            r.size.to_string(),
            format_f64(r.seconds),
            r.flops.to_string(),
            format_f64(r.gflops()),
        ])
        .map_err(csv_err)?;
    }
    finish(w, path)
}

pub fn read_csv(path: &Path) -> Result<Vec<BenchRecord>, CsvError> {
    let csv_err = |source| CsvError::Csv { path: path.to_path_buf(), source };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(BENCH_HEADER) {
        return Err(CsvError::Format { path: path.to_path_buf(), record: 0, message: "unexpected header".into() });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| CsvError::Format { path: path.to_path_buf(), record: i + 1, message: format!("bad {what}") };
        out.push(BenchRecord {
            label: rec[0].to_string(),
            size: rec[1].parse().map_err(|_| bad("size"))?,
            seconds: rec[2].parse().map_err(|_| bad("seconds"))?,
            flops: rec[3].parse().map_err(|_| bad("flops"))?,
        });
    }
    Ok(out)
}

pub const SWEEP_HEADER: [&str; 12] = [
    "phase",
    "direction",
    "position",
    "bond_dim",
    "energy",
    "truncation_error",
    "lanczos_iterations",
    "converged",
    "superblock_dim",
    "seconds",
    "flops",
    "counted_flops",
];

pub fn phase_label(p: Phase) -> String {
    match p {
        Phase::Warmup => "warmup".into(),
        Phase::Sweep(i) => format!("sweep{}", i + 1),
    }
}

pub fn write_sweep_csv(records: &[SweepRecord], path: &Path) -> Result<(), CsvError> {
    let csv_err = |source| CsvError::Csv { path: path.to_path_buf(), source };
    let mut w = writer(path)?;
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in records {
        let dir = match r.direction {
            Direction::LeftToRight => "right",
            Direction::RightToLeft => "left",
        };
        w.write_record([
            phase_label(r.phase),
            dir.to_string(),
            r.position.to_string(),
            r.bond_dim.to_string(),
            format_f64(r.energy),
            format_f64(r.truncation_error),
            r.lanczos_iterations.to_string(),
            r.converged.to_string(),
            r.superblock_dim.to_string(),
            format_f64(r.wall_seconds),
            r.flops.to_string(),
            r.counted_flops.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_list_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        write_csv(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "label,size,seconds,flops,gflops\n");
        assert!(read_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn one_record_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let r = BenchRecord { label: "sweep".into(), size: 64, seconds: 0.1, flops: 2_000_000_000 };
        write_csv(std::slice::from_ref(&r), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(!text.contains('\r'));
        assert_eq!(read_csv(&path).unwrap(), vec![r]);
    }

    #[test]
    fn awkward_values_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let recs: Vec<BenchRecord> = [0.1 + 0.2, 1e-300, 5e-324, f64::MAX, 1.0 / 3.0, 0.0]
            .iter()
            .enumerate()
            .map(|(i, &s)| BenchRecord { label: format!("a,\"b\" {i}"), size: i as u64, seconds: s, flops: u64::MAX - i as u64 })
            .collect();
        write_csv(&recs, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), recs);
    }

    #[test]
    fn gflops_definition() {
        let r = BenchRecord { label: String::new(), size: 1, seconds: 2.0, flops: 6_000_000_000 };
        assert_eq!(r.gflops(), 3.0);
    }
}
