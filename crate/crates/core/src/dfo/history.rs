//! Evaluation histories and fit traces as CSV.
//!
//! A history has columns `x0..x{n-1}, r0..r{o-1}, f`; a trace adds the
//! evaluation index and the running best.

use std::io::{Read, Write};
use std::path::Path;

use super::problem::EvaluationRecord;
use super::{DfoError, FitResult};

fn column_count(headers: &csv::StringRecord, prefix: char) -> usize {
    headers.iter().filter(|h| h.starts_with(prefix) && h[1..].parse::<usize>().is_ok()).count()
}

/// Reads a history; `f` is recomputed from the residuals and must agree
/// with the stored column.
pub fn read_history<R: Read>(reader: R) -> Result<Vec<EvaluationRecord>, DfoError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let n = column_count(&headers, 'x');
    let o = column_count(&headers, 'r');
    let expected: Vec<String> =
        (0..n).map(|j| format!("x{j}")).chain((0..o).map(|i| format!("r{i}"))).chain(["f".to_string()]).collect();
    if n == 0 || o == 0 || headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(DfoError::InconsistentHistory(format!(
            "expected header x0..x{{n-1}},r0..r{{o-1}},f; got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let vals: Vec<f64> = row
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| DfoError::InconsistentHistory(format!("row {k}: {e}")))?;
        let rec = EvaluationRecord::new(k, vals[..n].to_vec(), vals[n..n + o].to_vec());
        let stored = vals[n + o];
        if (stored - rec.f).abs() > 1e-9 * rec.f.abs().max(1e-300) {
            return Err(DfoError::InconsistentHistory(format!(
                "row {k}: f = {stored} but the residuals give {}",
                rec.f
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_history_file(path: &Path) -> Result<Vec<EvaluationRecord>, DfoError> {
    read_history(std::fs::File::open(path)?)
}

pub fn write_history<W: Write>(writer: W, records: &[EvaluationRecord]) -> Result<(), DfoError> {
    let mut w = csv::Writer::from_writer(writer);
    if let Some(first) = records.first() {
        let header: Vec<String> = (0..first.x.len())
            .map(|j| format!("x{j}"))
            .chain((0..first.residuals.len()).map(|i| format!("r{i}")))
            .chain(["f".to_string()])
            .collect();
        w.write_record(&header)?;
    }
    for rec in records {
        let row: Vec<String> = rec.x.iter().chain(&rec.residuals).chain([&rec.f]).map(f64::to_string).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per new evaluation: `index, f, best_f, x0..`.
pub fn write_trace<W: Write>(writer: W, result: &FitResult) -> Result<(), DfoError> {
    let mut w = csv::Writer::from_writer(writer);
    let n = result.best_x.len();
    let header: Vec<String> =
        ["index", "f", "best_f"].into_iter().map(String::from).chain((0..n).map(|j| format!("x{j}"))).collect();
    w.write_record(&header)?;
    for (rec, best) in result.trace.iter().zip(result.best_so_far()) {
        let row: Vec<String> = [rec.index.to_string(), rec.f.to_string(), best.to_string()]
            .into_iter()
            .chain(rec.x.iter().map(f64::to_string))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
