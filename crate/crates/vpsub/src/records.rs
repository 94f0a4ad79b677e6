//! Columnar text format for Monte Carlo records: one record per line,
//! `x_a p_a accepted x_b`, with `accepted` as 0/1. Lines starting with `#`
//! are comments.

use std::io::{BufRead, Write};

use vpsub_core::montecarlo::SampleRecord;

use crate::error::CliError;

pub const COLUMNS: &str = "x_a p_a accepted x_b";

/// Writes records with round-trip float formatting.
pub fn write<W: Write>(comments: &[String], records: &[SampleRecord], mut w: W) -> std::io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "# {COLUMNS}")?;
    for r in records {
        writeln!(w, "{:e} {:e} {} {:e}", r.x_a, r.p_a, u8::from(r.accepted), r.x_b)?;
    }
    w.flush()
}

pub fn read<R: BufRead>(reader: R) -> Result<Vec<SampleRecord>, CliError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || CliError::Format(format!("records line {}: expected `{COLUMNS}`", i + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let accepted = match f[2] {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        out.push(SampleRecord { x_a: num(f[0])?, p_a: num(f[1])?, accepted, x_b: num(f[3])? });
    }
    Ok(out)
}
