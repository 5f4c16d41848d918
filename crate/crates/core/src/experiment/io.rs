use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Scheme, TrialResult};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "scheme,n,k,trial,seed,se_bps_hz,ee_bits_per_joule,p_total_w,iters,converged,flags";
pub const AGG_HEADER: &str = "scheme,n,k,count,failed,se_mean,se_stderr,ee_mean,ee_stderr,p_total_mean,p_total_stderr";

/// Mean and standard error of one (scheme, K) group.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub scheme: Scheme,
    pub n: usize,
    pub k: usize,
    pub count: usize,
    pub failed: usize,
    pub se_mean: f64,
    pub se_stderr: f64,
    pub ee_mean: f64,
    pub ee_stderr: f64,
    pub p_total_mean: f64,
    pub p_total_stderr: f64,
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `results.csv` -> `results.agg.csv`.
pub fn aggregate_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.agg.csv"))
}

fn write_lines(path: &Path, header: &str, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{header}").map_err(io_err(path))?;
    for line in lines {
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the rows to `path` and the aggregates to the sibling `.agg.csv`.
/// Floats carry 17 significant digits. Fields never contain commas, so no
/// quoting is needed.
pub fn write_results(rows: &[TrialResult], aggregates: &[Aggregate], path: &Path) -> Result<()> {
    write_lines(
        path,
        CSV_HEADER,
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.scheme,
                r.n,
                r.k,
                r.trial,
                r.seed,
                f(r.se),
                f(r.ee),
                f(r.total_power),
                r.iterations,
                r.converged,
                r.flags.join(";")
            )
        }),
    )?;
    let agg = aggregate_path(path);
    write_lines(
        &agg,
        AGG_HEADER,
        aggregates.iter().map(|a| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                a.scheme,
                a.n,
                a.k,
                a.count,
                a.failed,
                f(a.se_mean),
                f(a.se_stderr),
                f(a.ee_mean),
                f(a.ee_stderr),
                f(a.p_total_mean),
                f(a.p_total_stderr)
            )
        }),
    )
}

/// Parses a file produced by [`write_results`].
pub fn read_results(path: &Path) -> Result<Vec<TrialResult>> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let header = reader.headers().map_err(|e| csv_err(e.to_string()))?;
    let header: Vec<&str> = header.iter().collect();
    if header.join(",") != CSV_HEADER {
        return Err(csv_err(format!("unexpected header `{}`", header.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(e.to_string()))?;
        let line = i + 2;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let bad = |j: usize| csv_err(format!("line {line}: bad value `{}` in column {}", field(j), j + 1));
        let int = |j: usize| field(j).parse::<usize>().map_err(|_| bad(j));
        let num = |j: usize| field(j).parse::<f64>().map_err(|_| bad(j));
        let flags = field(10);
        rows.push(TrialResult {
            scheme: field(0).parse().map_err(|_| bad(0))?,
            n: int(1)?,
            k: int(2)?,
            trial: int(3)?,
            seed: field(4).parse().map_err(|_| bad(4))?,
            se: num(5)?,
            ee: num(6)?,
            total_power: num(7)?,
            iterations: int(8)?,
            converged: field(9).parse().map_err(|_| bad(9))?,
            flags: if flags.is_empty() {
                Vec::new()
            } else {
                flags.split(';').map(str::to_string).collect()
            },
        });
    }
    Ok(rows)
}
