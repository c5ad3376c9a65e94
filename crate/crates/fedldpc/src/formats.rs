//! On-disk formats: calibration table, round records, alist, dataset CSV.
//!
//! Every CSV has a header row, `,` delimiters and `\n` line endings. Reals are
//! written with 17 significant digits so a table round-trips exactly.

use std::fmt::Write as _;
use std::path::Path;

use fedldpc_core::fl::{Dataset, RoundRecord};
use fedldpc_core::ldpc::ParityCheckMatrix;
use fedldpc_core::schedule::{CalibrationEntry, CalibrationTable, CellStatus};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{file}: line {line}: {reason}")]
    Line { file: String, line: usize, reason: String },
    #[error("{file}: {reason}")]
    File { file: String, reason: String },
}

fn line_err(file: &str, line: usize, reason: impl Into<String>) -> FormatError {
    FormatError::Line { file: file.to_string(), line, reason: reason.into() }
}

fn file_err(file: &str, reason: impl Into<String>) -> FormatError {
    FormatError::File { file: file.to_string(), reason: reason.into() }
}

pub const TABLE_HEADER: &str = "snr_db,q,ber,ci_halfwidth,frames,n,code_seed,mean_iters,errors,status";
const TABLE_CORE_COLUMNS: usize = 7;

pub const ROUNDS_HEADER: &str = "round,target_ber,q_r,measured_ber,mean_iters,energy_j,train_loss,test_acc";

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn status_name(s: CellStatus) -> &'static str {
    match s {
        CellStatus::Resolved => "resolved",
        CellStatus::UnderResolved => "under_resolved",
        CellStatus::Exact => "exact",
    }
}

fn parse_status(s: &str) -> Option<CellStatus> {
    match s {
        "resolved" => Some(CellStatus::Resolved),
        "under_resolved" => Some(CellStatus::UnderResolved),
        "exact" => Some(CellStatus::Exact),
        _ => None,
    }
}

pub fn write_table(t: &CalibrationTable) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for e in &t.entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            real(e.snr_db),
            e.q,
            real(e.ber),
            real(e.ci_halfwidth),
            e.frames,
            t.code_n,
            t.code_seed,
            real(e.mean_iters),
            e.error_bits,
            status_name(e.status)
        );
    }
    out
}

/// Reads a table. The first seven columns are required; a file with only
/// those charges `q` iterations per frame and marks every cell resolved.
pub fn read_table(text: &str, file: &str) -> Result<CalibrationTable, FormatError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| file_err(file, "empty table"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let full: Vec<&str> = TABLE_HEADER.split(',').collect();
    let extended = if columns == full {
        true
    } else if columns == full[..TABLE_CORE_COLUMNS] {
        false
    } else {
        return Err(line_err(file, 1, format!("header must be `{}` or its first seven columns", TABLE_HEADER)));
    };

    let mut code: Option<(usize, u64)> = None;
    let mut entries = Vec::new();
    for (i, line) in lines {
        let no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != columns.len() {
            return Err(line_err(file, no, format!("expected {} fields, found {}", columns.len(), f.len())));
        }
        let num = |idx: usize| -> Result<f64, FormatError> {
            f[idx]
                .parse::<f64>()
                .map_err(|_| line_err(file, no, format!("{} is not a number: {:?}", columns[idx], f[idx])))
        };
        let int = |idx: usize| -> Result<u64, FormatError> {
            f[idx]
                .parse::<u64>()
                .map_err(|_| line_err(file, no, format!("{} is not an unsigned integer: {:?}", columns[idx], f[idx])))
        };
        let snr_db = num(0)?;
        if snr_db.is_nan() {
            return Err(line_err(file, no, "snr_db is NaN"));
        }
        let q = u32::try_from(int(1)?).map_err(|_| line_err(file, no, "q out of range"))?;
        let ber = num(2)?;
        if !(0.0..=1.0).contains(&ber) {
            return Err(line_err(file, no, "ber must lie in [0, 1]"));
        }
        let ci_halfwidth = num(3)?;
        let frames = int(4)?;
        let this_code = (int(5)? as usize, int(6)?);
        match code {
            None => code = Some(this_code),
            Some(c) if c != this_code => return Err(line_err(file, no, "n and code_seed must match across rows")),
            Some(_) => {}
        }
        let (mean_iters, error_bits, status) = if extended {
            let status = parse_status(f[9]).ok_or_else(|| line_err(file, no, format!("unknown status {:?}", f[9])))?;
            (num(7)?, int(8)?, status)
        } else {
            (f64::from(q), 0, CellStatus::Resolved)
        };
        entries.push(CalibrationEntry { snr_db, q, ber, ci_halfwidth, frames, error_bits, mean_iters, status });
    }
    let (n, seed) = code.ok_or_else(|| file_err(file, "table has no rows"))?;
    Ok(CalibrationTable::new(n, seed, entries))
}

pub fn write_rounds(records: &[RoundRecord]) -> String {
    let mut out = String::from(ROUNDS_HEADER);
    out.push('\n');
    for r in records {
        let q = r.q_r.map(|q| q.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.round,
            real(r.target_ber),
            q,
            real(r.measured_ber),
            real(r.mean_iters),
            real(r.energy_j),
            real(r.train_loss),
            real(r.test_acc)
        );
    }
    out
}

/// Per-cell report with confidence intervals.
pub fn table_summary(t: &CalibrationTable) -> String {
    let mut out = format!("calibration table: n={} code_seed={} cells={}\n", t.code_n, t.code_seed, t.entries.len());
    for e in &t.entries {
        // An under-resolved cell records the upper end of its interval.
        let (label, lo, hi) = match e.status {
            CellStatus::UnderResolved => ("ber<=", e.ber - 2.0 * e.ci_halfwidth, e.ber),
            _ => ("ber=", e.ber - e.ci_halfwidth, e.ber + e.ci_halfwidth),
        };
        let _ = writeln!(
            out,
            "snr_db={:<6} q={:<3} {label}{:.3e} ci=[{:.3e}, {:.3e}] errors={} frames={} mean_iters={:.3} status={}",
            e.snr_db,
            e.q,
            e.ber,
            lo.max(0.0),
            hi,
            e.error_bits,
            e.frames,
            e.mean_iters,
            status_name(e.status)
        );
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// alist: sizes, maximum degrees, degree lists, then 1-based neighbour lists
/// per column and per row, zero-padded to the maximum degree.
pub fn write_alist(h: &ParityCheckMatrix) -> String {
    let (m, n) = (h.rows(), h.cols());
    let cols: Vec<Vec<usize>> = (0..n).map(|c| h.col_rows(c).collect()).collect();
    let rows: Vec<Vec<usize>> = (0..m).map(|r| h.row(r).to_vec()).collect();
    let max_col = cols.iter().map(Vec::len).max().unwrap_or(0);
    let max_row = rows.iter().map(Vec::len).max().unwrap_or(0);
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let padded = |v: &[usize], width: usize| {
        let mut x: Vec<usize> = v.iter().map(|i| i + 1).collect();
        x.resize(width, 0);
        join(&x)
    };
    let mut out = format!("{n} {m}\n{max_col} {max_row}\n");
    let _ = writeln!(out, "{}", join(&cols.iter().map(Vec::len).collect::<Vec<_>>()));
    let _ = writeln!(out, "{}", join(&rows.iter().map(Vec::len).collect::<Vec<_>>()));
    for c in &cols {
        let _ = writeln!(out, "{}", padded(c, max_col));
    }
    for r in &rows {
        let _ = writeln!(out, "{}", padded(r, max_row));
    }
    out
}

/// Parses alist text. Column and row lists must describe the same entries.
pub fn read_alist(text: &str, file: &str, seed: u64) -> Result<ParityCheckMatrix, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut next = |what: &str| -> Result<(usize, Vec<usize>), FormatError> {
        let (i, l) = lines.next().ok_or_else(|| file_err(file, format!("truncated before {what}")))?;
        let v = l
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| line_err(file, i + 1, format!("not an integer: {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((i + 1, v))
    };
    let (no, sizes) = next("sizes")?;
    let [n, m] = sizes[..] else { return Err(line_err(file, no, "expected `n m`")) };
    let (no, maxes) = next("maximum degrees")?;
    let [max_col, max_row] = maxes[..] else { return Err(line_err(file, no, "expected two maximum degrees")) };
    let (no, col_deg) = next("column degrees")?;
    if col_deg.len() != n || col_deg.iter().any(|&d| d > max_col) {
        return Err(line_err(file, no, format!("expected {n} column degrees up to {max_col}")));
    }
    let (no, row_deg) = next("row degrees")?;
    if row_deg.len() != m || row_deg.iter().any(|&d| d > max_row) {
        return Err(line_err(file, no, format!("expected {m} row degrees up to {max_row}")));
    }
    let mut by_col = Vec::new();
    for (c, &deg) in col_deg.iter().enumerate() {
        let (no, v) = next("column lists")?;
        let (used, pad) = v.split_at(deg.min(v.len()));
        if used.len() != deg || used.iter().any(|&r| r == 0 || r > m) || pad.iter().any(|&x| x != 0) {
            return Err(line_err(file, no, format!("bad neighbour list for column {}", c + 1)));
        }
        by_col.extend(used.iter().map(|&r| (r - 1, c)));
    }
    let mut by_row = Vec::new();
    for (r, &deg) in row_deg.iter().enumerate() {
        let (no, v) = next("row lists")?;
        let (used, pad) = v.split_at(deg.min(v.len()));
        if used.len() != deg || used.iter().any(|&c| c == 0 || c > n) || pad.iter().any(|&x| x != 0) {
            return Err(line_err(file, no, format!("bad neighbour list for row {}", r + 1)));
        }
        by_row.extend(used.iter().map(|&c| (r, c - 1)));
    }
    by_col.sort_unstable();
    by_row.sort_unstable();
    if by_col != by_row {
        return Err(file_err(file, "column and row lists disagree"));
    }
    ParityCheckMatrix::from_entries(m, n, &by_row, seed).map_err(|e| file_err(file, e.to_string()))
}

/// Numeric features plus one non-negative integer label column (the last one
/// when `label_column` is `None`). Classes are `0..=max label`.
pub fn read_dataset_csv(path: &Path, label_column: Option<usize>, has_header: bool) -> Result<Dataset, FormatError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| file_err(&file, e.to_string()))?;
    parse_dataset_csv(&text, &file, label_column, has_header)
}

pub fn parse_dataset_csv(
    text: &str,
    file: &str,
    label_column: Option<usize>,
    has_header: bool,
) -> Result<Dataset, FormatError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(has_header).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            line_err(file, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cols = record.len();
        if cols < 2 {
            return Err(line_err(file, line, "need at least one feature and a label"));
        }
        match width {
            None => width = Some(cols),
            Some(w) if w != cols => return Err(line_err(file, line, format!("expected {w} fields, found {cols}"))),
            Some(_) => {}
        }
        let label_at = label_column.unwrap_or(cols - 1);
        if label_at >= cols {
            return Err(line_err(file, line, format!("label column {label_at} beyond {cols} fields")));
        }
        for (j, field) in record.iter().enumerate() {
            if j == label_at {
                let y = field
                    .parse::<usize>()
                    .map_err(|_| line_err(file, line, format!("label is not a non-negative integer: {field:?}")))?;
                labels.push(y);
            } else {
                let x = field.parse::<f64>().ok().filter(|x| x.is_finite());
                features.push(x.ok_or_else(|| {
                    line_err(file, line, format!("field {} is not a finite number: {field:?}", j + 1))
                })?);
            }
        }
    }
    let width = width.ok_or_else(|| file_err(file, "no data rows"))?;
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    Dataset::new(features, labels, width - 1, classes).map_err(|e| file_err(file, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_table() -> CalibrationTable {
        let e = |snr_db: f64, q: u32, ber: f64, status| CalibrationEntry {
            snr_db,
            q,
            ber,
            ci_halfwidth: ber / 3.0,
            frames: 1234,
            error_bits: 77,
            mean_iters: 2.0 + 1.0 / 3.0,
            status,
        };
        CalibrationTable::new(
            1008,
            1,
            vec![
                e(2.5, 6, 1.0e-3 / 7.0, CellStatus::Resolved),
                e(2.5, 52, 1.0e-7, CellStatus::UnderResolved),
                e(f64::INFINITY, 6, 0.0, CellStatus::Exact),
            ],
        )
    }

    #[test]
    fn table_round_trips_exactly() {
        let t = sample_table();
        let text = write_table(&t);
        assert!(text.starts_with(TABLE_HEADER));
        assert!(!text.contains('\r'));
        assert_eq!(read_table(&text, "t").unwrap(), t);
        assert_eq!(write_table(&read_table(&text, "t").unwrap()), text);
    }

    #[test]
    fn seven_column_table_defaults() {
        let text = "snr_db,q,ber,ci_halfwidth,frames,n,code_seed\n2.5,6,1e-3,1e-4,100,1008,1\n";
        let t = read_table(text, "t").unwrap();
        assert_eq!(t.entries[0].mean_iters, 6.0);
        assert_eq!(t.entries[0].status, CellStatus::Resolved);
    }

    #[test]
    fn table_errors_name_the_line() {
        let text =
            "snr_db,q,ber,ci_halfwidth,frames,n,code_seed\n2.5,6,1e-3,1e-4,100,1008,1\n2.5,x,1e-3,1e-4,100,1008,1\n";
        let e = read_table(text, "t").unwrap_err().to_string();
        assert!(e.starts_with("t: line 3:"), "{e}");
        assert!(read_table("a,b\n", "t").is_err());
        assert!(read_table("", "t").is_err());
    }

    #[test]
    fn rounds_empty_budget_field() {
        let r = RoundRecord {
            round: 0,
            target_ber: 0.0,
            q_r: None,
            measured_ber: 0.0,
            mean_iters: 0.0,
            energy_j: 0.0,
            train_loss: 0.5,
            test_acc: 1.0,
            total_iterations: 0.0,
            frames: 0,
            saturated: false,
            model_error: 0.0,
            link_energy_j: 0.0,
            training_energy_j: 0.0,
        };
        let text = write_rounds(&[r]);
        let row = text.lines().nth(1).unwrap();
        assert_eq!(row.split(',').nth(2), Some(""));
        assert_eq!(row.split(',').count(), 8);
    }

    #[test]
    fn alist_round_trip() {
        let h = ParityCheckMatrix::regular(96, 3).unwrap();
        let text = write_alist(&h);
        let back = read_alist(&text, "h", 3).unwrap();
        assert_eq!(back.entries().collect::<Vec<_>>(), h.entries().collect::<Vec<_>>());
        assert_eq!(write_alist(&back), text);
    }

    #[test]
    fn alist_rejects_inconsistent_lists() {
        let text = "2 1\n1 2\n1 1\n2\n1\n1\n1 0\n";
        assert!(read_alist(text, "h", 0).is_err());
        assert!(read_alist("2 1\n", "h", 0).is_err());
    }

    #[test]
    fn dataset_csv() {
        let d = parse_dataset_csv("x1,x2,y\n0.5,1,0\n-1,2,1\n", "d", None, true).unwrap();
        assert_eq!((d.len(), d.dim(), d.classes()), (2, 2, 2));
        assert_eq!(d.x(1), &[-1.0, 2.0]);
        let d = parse_dataset_csv("2,0.5,1\n", "d", Some(0), false).unwrap();
        assert_eq!((d.y(0), d.x(0)), (2, &[0.5, 1.0][..]));
    }

    #[test]
    fn dataset_csv_errors_carry_line_numbers() {
        let e = parse_dataset_csv("x,y\n1,0\n2,zz\n", "d", None, true).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let e = parse_dataset_csv("x,y\n1,0\n1,2,0\n", "d", None, true).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        assert!(parse_dataset_csv("", "d", None, true).is_err());
        assert!(parse_dataset_csv("x,y\n", "d", None, true).is_err());
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    proptest! {
        #[test]
        fn table_reals_round_trip(ber in 0.0f64..=1.0, half in 0.0f64..1.0, iters in 0.0f64..100.0, snr in -10.0f64..10.0) {
            let e = CalibrationEntry { snr_db: snr, q: 4, ber, ci_halfwidth: half, frames: 9, error_bits: 3, mean_iters: iters, status: CellStatus::Resolved };
            let t = CalibrationTable::new(12, 5, vec![e]);
            prop_assert_eq!(read_table(&write_table(&t), "t").unwrap(), t);
        }
    }
}
