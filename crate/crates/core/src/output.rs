//! Snapshot and monitor files.
//!
//! Snapshots are one CSV per field, `ny` rows of `nx` values with row 0 the
//! southernmost, written with 17 significant digits so they read back
//! bitwise. Optional binary PGM heatmaps put the northernmost row on top.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::integrate::RunSink;
use crate::monitor::{MonitorReport, CHECK_NAMES};
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    Csv,
    Pgm,
}

pub fn write_field_csv(path: &Path, f: &Field) -> Result<()> {
    let g = f.grid();
    let mut out = String::with_capacity(g.len() * 25);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:.16e}", f.at(i, j)));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a snapshot CSV onto `grid`, rejecting wrong shapes and negative
/// or non-finite values.
pub fn read_field_csv(path: &Path, grid: Grid2D) -> Result<Field> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != grid.ny() {
        return Err(bad(format!(
            "expected {} rows, found {}",
            grid.ny(),
            rows.len()
        )));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (r, row) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != grid.nx() {
            return Err(bad(format!(
                "row {}: expected {} values, found {}",
                r + 1,
                grid.nx(),
                cols.len()
            )));
        }
        for (c, tok) in cols.iter().enumerate() {
            let x: f64 = tok.trim().parse().map_err(|_| {
                bad(format!(
                    "row {}, column {}: cannot parse {tok:?}",
                    r + 1,
                    c + 1
                ))
            })?;
            if !x.is_finite() || x < 0.0 {
                return Err(bad(format!(
                    "row {}, column {}: value {x} is negative or non-finite",
                    r + 1,
                    c + 1
                )));
            }
            values.push(x);
        }
    }
    Field::from_values(grid, values)
}

/// 8-bit binary graymap mapping `[0, scale]` linearly onto `[0, 255]`.
pub fn write_field_pgm(path: &Path, f: &Field, scale: f64) -> Result<()> {
    let g = f.grid();
    let mut bytes = format!("P5\n{} {}\n255\n", g.nx(), g.ny()).into_bytes();
    for j in (0..g.ny()).rev() {
        for i in 0..g.nx() {
            let x = if scale > 0.0 { f.at(i, j) / scale } else { 0.0 };
            bytes.push((x.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn snapshot_path(dir: &Path, label: &str, step: u64, ext: &str) -> PathBuf {
    dir.join(format!("{label}_{step:06}.{ext}"))
}

/// Writes snapshots and the monitor time series into one directory.
pub struct OutputSink {
    dir: PathBuf,
    formats: Vec<SnapshotFormat>,
    running_max: [f64; 4],
    monitor: Option<BufWriter<File>>,
    pub files_written: usize,
}

pub const MONITOR_FILE: &str = "monitor.csv";

impl OutputSink {
    pub fn create(dir: &Path, formats: &[SnapshotFormat]) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MONITOR_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let mut header = String::from(
            "time,l1_cd,l1_cs,l1_m,min_cd,min_cs,min_m,min_v,max_v,sup_cd,sup_cs,sup_m",
        );
        for name in CHECK_NAMES {
            header.push_str(",status_");
            header.push_str(name);
        }
        writeln!(w, "{header}").map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            formats: formats.to_vec(),
            running_max: [0.0; 4],
            monitor: Some(w),
            files_written: 0,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn finish(&mut self) -> Result<()> {
        if let Some(mut w) = self.monitor.take() {
            let path = self.dir.join(MONITOR_FILE);
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

impl RunSink for OutputSink {
    fn on_snapshot(&mut self, step: u64, state: &State) -> Result<()> {
        for (k, (label, f)) in state.labels().iter().zip(state.fields()).enumerate() {
            self.running_max[k] = self.running_max[k].max(f.max());
            for fmt in &self.formats {
                match fmt {
                    SnapshotFormat::Csv => {
                        write_field_csv(&snapshot_path(&self.dir, label, step, "csv"), f)?
                    }
                    SnapshotFormat::Pgm => write_field_pgm(
                        &snapshot_path(&self.dir, label, step, "pgm"),
                        f,
                        self.running_max[k],
                    )?,
                }
                self.files_written += 1;
            }
        }
        Ok(())
    }

    fn on_monitor(&mut self, _step: u64, r: &MonitorReport) -> Result<()> {
        let path = self.dir.join(MONITOR_FILE);
        let Some(w) = self.monitor.as_mut() else {
            return Ok(());
        };
        let mut line = format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.time, r.l1_cd, r.l1_cs, r.l1_m, r.min_cd, r.min_cs, r.min_m, r.min_v, r.max_v,
            r.sup_cd, r.sup_cs, r.sup_m
        );
        for name in CHECK_NAMES {
            let status = r
                .check(name)
                .map(|c| c.status.to_string())
                .unwrap_or_default();
            line.push(',');
            line.push_str(&status);
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))
    }
}

impl Drop for OutputSink {
    fn drop(&mut self) {
        let _ = self.finish();
    }
}
