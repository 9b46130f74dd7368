//! CSV output shared by every exported table.

use std::io::Write;

use crate::error::{Error, Result};

/// Seventeen significant digits, enough to round-trip an `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_rows<W, R, I>(out: W, header: &[&str], rows: I) -> Result<()>
where
    W: Write,
    R: AsRef<[f64]>,
    I: IntoIterator<Item = R>,
{
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(header).map_err(io_error)?;
    for row in rows {
        writer
            .write_record(row.as_ref().iter().map(|&x| format_float(x)))
            .map_err(io_error)?;
    }
    writer.flush().map_err(|e| Error::Io(e.to_string()))
}

fn io_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
