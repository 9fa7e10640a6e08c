//! CSV output. Column names carry their units in brackets.

use std::path::Path;

use crate::error::{Error, Result};

/// Writes a header row and numeric rows. Values are printed with full
/// round-trip precision.
pub fn write_csv<R, I>(path: &Path, header: &[&str], rows: R) -> Result<()>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = f64>,
{
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(|v| format!("{v:e}")).collect();
        if cells.len() != header.len() {
            return Err(Error::InvalidParams(format!("row has {} cells, header has {}", cells.len(), header.len())));
        }
        w.write_record(&cells).map_err(to_err)?;
    }
    w.flush()?;
    Ok(())
}

fn to_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}
