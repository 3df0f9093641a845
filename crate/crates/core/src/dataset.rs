//! Reading and writing ensembles.
//!
//! Two on-disk layouts are supported:
//!
//! * JSON-lines, one object `{"times": [...], "values": [[...], ...]}` per path;
//! * a directory of CSV files, one per path, with header `time,x1,...,xd`.
//!
//! Paths whose grid differs from the first path's grid are linearly
//! resampled onto it.

use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::json::fmt_f64;
use crate::path::{Ensemble, Path};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Record {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

fn assemble(paths: Vec<Path>) -> Result<Ensemble> {
    let grid = paths
        .first()
        .ok_or_else(|| Error::Parse("dataset contains no paths".into()))?
        .times()
        .to_vec();
    if paths.iter().all(|p| p.times() == grid.as_slice()) {
        Ensemble::new(paths)
    } else {
        Ensemble::resampled(&paths, &grid)
    }
}

/// Parses JSON-lines text. Blank lines are ignored.
pub fn parse_jsonl(text: &str) -> Result<Ensemble> {
    let mut paths = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        let p = Path::new(rec.times, rec.values)
            .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        paths.push(p);
    }
    assemble(paths)
}

pub fn read_jsonl(file: impl AsRef<FsPath>) -> Result<Ensemble> {
    parse_jsonl(&fs::read_to_string(file)?)
}

pub fn to_jsonl(ens: &Ensemble) -> String {
    let mut out = String::new();
    for p in ens {
        let rows: Vec<String> = (0..p.len())
            .map(|i| {
                let xs: Vec<String> = p.point(i).iter().map(|v| fmt_f64(*v)).collect();
                format!("[{}]", xs.join(","))
            })
            .collect();
        let ts: Vec<String> = p.times().iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&format!(
            "{{\"times\":[{}],\"values\":[{}]}}\n",
            ts.join(","),
            rows.join(",")
        ));
    }
    out
}

pub fn write_jsonl(ens: &Ensemble, file: impl AsRef<FsPath>) -> Result<()> {
    crate::json::write_atomic(file, to_jsonl(ens).as_bytes())
}

fn parse_csv(text: &str, name: &str) -> Result<Path> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{name}: empty file")))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len().saturating_sub(1);
    let expected = std::iter::once("time".to_string())
        .chain((1..=d).map(|k| format!("x{k}")))
        .collect::<Vec<_>>();
    if d == 0 || cols != expected {
        return Err(Error::Parse(format!("{name}: header must be time,x1,...,xd")));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            return Err(Error::Parse(format!("{name}: row {} has {} fields", n + 2, fields.len())));
        }
        let mut nums = fields.iter().map(|f| {
            f.parse::<f64>()
                .map_err(|_| Error::Parse(format!("{name}: row {}: bad number {f:?}", n + 2)))
        });
        times.push(nums.next().unwrap()?);
        for v in nums {
            values.push(v?);
        }
    }
    Path::from_flat(times, values, d).map_err(|e| Error::Parse(format!("{name}: {e}")))
}

/// Reads every `*.csv` file of `dir` in file-name order.
pub fn read_csv_dir(dir: impl AsRef<FsPath>) -> Result<Ensemble> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let paths = files
        .iter()
        .map(|f| parse_csv(&fs::read_to_string(f)?, &f.display().to_string()))
        .collect::<Result<Vec<_>>>()?;
    assemble(paths)
}

pub fn path_to_csv(p: &Path) -> String {
    let mut out = String::from("time");
    for k in 1..=p.dim() {
        out.push_str(&format!(",x{k}"));
    }
    out.push('\n');
    for i in 0..p.len() {
        out.push_str(&fmt_f64(p.times()[i]));
        for v in p.point(i) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Writes one `path_NNNNNN.csv` per member into `dir`, creating it if needed.
pub fn write_csv_dir(ens: &Ensemble, dir: impl AsRef<FsPath>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, p) in ens.iter().enumerate() {
        crate::json::write_atomic(dir.join(format!("path_{i:06}.csv")), path_to_csv(p).as_bytes())?;
    }
    Ok(())
}

/// Reads a CSV directory or a JSON-lines file depending on what `src` is.
pub fn load(src: impl AsRef<FsPath>) -> Result<Ensemble> {
    let src = src.as_ref();
    if src.is_dir() {
        read_csv_dir(src)
    } else {
        read_jsonl(src)
    }
}
