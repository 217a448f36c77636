//! CSV output: comma separated, `.` decimals, LF line endings, header row.

use std::path::Path;

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// `|value - reference| / |reference|`, with `0` when both are equal.
pub fn rel_err(value: f64, reference: f64) -> f64 {
    if value == reference {
        0.0
    } else {
        (value - reference).abs() / reference.abs()
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}
