//! Reader and writer for the `alist` sparse parity-check format.
//!
//! Layout: `n m`, then the maximum column and row degrees, the `n` column
//! degrees, the `m` row degrees, one line of 1-based check indices per
//! column and one line of 1-based variable indices per row. Zero entries
//! (padding written by some tools) are ignored on input.

use std::io::{BufRead, Write};

use vpsub_core::reconciliation::LdpcCode;

use crate::error::CliError;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Format(format!("alist: {}", msg.into()))
}

pub fn read<R: BufRead>(reader: R) -> Result<LdpcCode, CliError> {
    let mut lines = reader.lines();
    let mut next_line = |what: &str| -> Result<Vec<usize>, CliError> {
        loop {
            let line = lines.next().ok_or_else(|| bad(format!("unexpected end of file reading {what}")))??;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            return line
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| bad(format!("bad integer {t:?} in {what}"))))
                .collect();
        }
    };
    let head = next_line("header")?;
    let [n, m] = head[..] else { return Err(bad("header must be `n m`")) };
    let maxes = next_line("maximum degrees")?;
    if maxes.len() != 2 {
        return Err(bad("second line must hold two maximum degrees"));
    }
    let col_deg = next_line("column degrees")?;
    let row_deg = next_line("row degrees")?;
    if col_deg.len() != n || row_deg.len() != m {
        return Err(bad(format!("expected {n} column and {m} row degrees")));
    }
    let mut columns = Vec::with_capacity(n);
    for (v, &d) in col_deg.iter().enumerate() {
        let entries: Vec<u32> = next_line("column lists")?.into_iter().filter(|&c| c != 0).map(|c| c as u32 - 1).collect();
        if entries.len() != d {
            return Err(bad(format!("column {} lists {} checks, degree says {d}", v + 1, entries.len())));
        }
        columns.push(entries);
    }
    let code = LdpcCode::from_columns(m, &columns).map_err(|e| bad(e.to_string()))?;
    for (c, &d) in row_deg.iter().enumerate() {
        let mut entries: Vec<u32> = next_line("row lists")?.into_iter().filter(|&v| v != 0).map(|v| v as u32 - 1).collect();
        entries.sort_unstable();
        if entries.len() != d || entries != code.row(c) {
            return Err(bad(format!("row {} disagrees with the column lists", c + 1)));
        }
    }
    Ok(code)
}

pub fn write<W: Write>(code: &LdpcCode, mut w: W) -> std::io::Result<()> {
    let max_col = code.variable_degrees().max().unwrap_or(0);
    let max_row = code.check_degrees().max().unwrap_or(0);
    writeln!(w, "{} {}", code.n(), code.m())?;
    writeln!(w, "{max_col} {max_row}")?;
    let join = |it: &mut dyn Iterator<Item = usize>| it.map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
    writeln!(w, "{}", join(&mut code.variable_degrees()))?;
    writeln!(w, "{}", join(&mut code.check_degrees()))?;
    for v in 0..code.n() {
        writeln!(w, "{}", join(&mut code.column(v).iter().map(|&c| c as usize + 1)))?;
    }
    for c in 0..code.m() {
        writeln!(w, "{}", join(&mut code.row(c).iter().map(|&v| v as usize + 1)))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use vpsub_core::reconciliation::{peg, DegreeProfile, PegOptions};

    #[test]
    fn round_trip() {
        let code = peg(400, 360, &DegreeProfile::rate_tenth(), PegOptions::default(), 2).unwrap();
        let mut buf = Vec::new();
        write(&code, &mut buf).unwrap();
        assert_eq!(read(&buf[..]).unwrap(), code);
    }

    #[test]
    fn accepts_zero_padding() {
        let text = "4 2\n2 4\n2 2 2 2\n4 4\n1 2\n1 2\n1 2\n1 2\n1 2 3 4\n1 2 3 4\n";
        let code = read(text.as_bytes()).unwrap();
        assert_eq!((code.n(), code.m()), (4, 2));
        let padded = "3 2\n2 3\n2 2 2\n3 3\n1 2\n2 1\n1 2\n1 2 3\n3 2 1 0\n";
        assert!(read(padded.as_bytes()).is_ok());
    }

    #[test]
    fn rejects_inconsistent_rows() {
        let text = "3 2\n2 3\n2 2 2\n3 3\n1 2\n1 2\n1 2\n1 2 3\n1 2\n";
        assert!(read(text.as_bytes()).is_err());
        assert!(read("3\n".as_bytes()).is_err());
    }
}
