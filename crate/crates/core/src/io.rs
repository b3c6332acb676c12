//! Trace CSV and JSON serialization.
//!
//! CSV columns are fixed: `k, D_bk_ak, D_bkm1_ak, step_b, step_a, angle_rl,
//! angle_lr, ell_rl`, then `step_role, fixed_point_residual` for em traces,
//! then the coordinates `b_0.., a_0..`. Floats carry 17 significant digits;
//! undefined values are empty cells.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::alternator::{Orientation, StopReason, Trace};
use crate::diagnostics::{annotate, RowDiagnostics};
use crate::em::EmTrace;
use crate::error::{Error, Result};
use crate::legendre::Legendre;
use crate::Point;

pub const BASE_COLUMNS: [&str; 8] = ["k", "D_bk_ak", "D_bkm1_ak", "step_b", "step_a", "angle_rl", "angle_lr", "ell_rl"];
pub const EM_COLUMNS: [&str; 2] = ["step_role", "fixed_point_residual"];
pub const DIAG_COLUMNS: [&str; 3] = ["angle_rl", "angle_lr", "ell_rl"];

/// Scientific notation with 17 significant digits; NaN is an empty cell.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_float(cell: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(f64::NAN);
    }
    cell.parse().map_err(|_| Error::Config(format!("'{cell}' is not a number")))
}

/// A CSV table of strings with a header.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
        let headers = rdr.headers()?.iter().map(str::to_owned).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Ok(CsvTable { headers, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_from(file)
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Numeric column with empty cells as NaN.
    pub fn column(&self, name: &str) -> Result<Option<Vec<f64>>> {
        let Some(c) = self.column_index(name) else { return Ok(None) };
        self.rows.iter().map(|r| parse_float(&r[c])).collect::<Result<Vec<_>>>().map(Some)
    }

    /// Fill the empty cells of a column, adding the column when absent.
    /// Non-empty cells are never touched.
    pub fn fill_column(&mut self, name: &str, values: &[f64]) {
        let c = match self.column_index(name) {
            Some(c) => c,
            None => {
                self.headers.push(name.to_owned());
                for row in &mut self.rows {
                    row.push(String::new());
                }
                self.headers.len() - 1
            }
        };
        for (row, &v) in self.rows.iter_mut().zip(values) {
            if row[c].trim().is_empty() {
                row[c] = format_float(v);
            }
        }
    }

    /// Points stored in columns `{prefix}_0, {prefix}_1, …`; `None` where a row
    /// has empty cells.
    pub fn points(&self, prefix: &str) -> Result<Vec<Option<Point>>> {
        let cols: Vec<usize> = (0..)
            .map_while(|i| self.column_index(&format!("{prefix}_{i}")))
            .collect();
        if cols.is_empty() {
            return Ok(vec![None; self.rows.len()]);
        }
        self.rows
            .iter()
            .map(|r| {
                let vals = cols.iter().map(|&c| parse_float(&r[c])).collect::<Result<Vec<_>>>()?;
                Ok(if vals.iter().any(|v| v.is_nan()) { None } else { Some(DVector::from_vec(vals)) })
            })
            .collect()
    }
}

/// Build the trace table; diagnostic columns are filled when `diag` is given.
pub fn trace_table(trace: &Trace, diag: Option<&[RowDiagnostics]>, em: Option<&EmTrace>) -> CsvTable {
    let dim = trace.a.first().map_or(0, |p| p.len());
    let mut headers: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    if em.is_some() {
        headers.extend(EM_COLUMNS.iter().map(|s| s.to_string()));
    }
    headers.extend((0..dim).map(|i| format!("b_{i}")));
    headers.extend((0..dim).map(|i| format!("a_{i}")));
    let rows = trace
        .rows()
        .iter()
        .map(|r| {
            let k = r.k;
            let d = diag.and_then(|d| d.get(k));
            let mut row = vec![
                k.to_string(),
                format_float(r.d_bk_ak),
                format_float(r.d_bkm1_ak),
                format_float(r.step_b),
                format_float(r.step_a),
                format_float(d.map_or(f64::NAN, |d| d.angle_rl)),
                format_float(d.map_or(f64::NAN, |d| d.angle_lr)),
                format_float(d.map_or(f64::NAN, |d| d.ell_rl)),
            ];
            if let Some(em) = em {
                row.push(em.row_role(k));
                let last = k + 1 == trace.len();
                row.push(if last { format_float(em.fixed_point_residual) } else { String::new() });
            }
            match trace.b.get(k) {
                Some(b) => row.extend(b.iter().map(|&v| format_float(v))),
                None => row.extend(std::iter::repeat_n(String::new(), dim)),
            }
            row.extend(trace.a[k].iter().map(|&v| format_float(v)));
            row
        })
        .collect();
    CsvTable { headers, rows }
}

/// Trace table with diagnostics computed under `gen`.
pub fn annotated_trace_table(gen: &dyn Legendre, trace: &Trace, em: Option<&EmTrace>) -> CsvTable {
    let diag = annotate(gen, trace);
    trace_table(trace, Some(&diag), em)
}

/// Rebuild a trace from the table written by [`trace_table`]. The seed of an
/// rl trace is not stored, so block 0 of a rebuilt rl trace is undefined.
pub fn trace_from_table(table: &CsvTable, generator: &str, orientation: Orientation) -> Result<Trace> {
    let a = table.points("a")?;
    let b = table.points("b")?;
    let d_b_a = table.column("D_bk_ak")?.ok_or_else(|| Error::Config("trace CSV lacks D_bk_ak".into()))?;
    let d_bprev_a = table.column("D_bkm1_ak")?.ok_or_else(|| Error::Config("trace CSV lacks D_bkm1_ak".into()))?;
    let a: Vec<Point> = a
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Config("trace CSV lacks complete a_i columns".into()))?;
    let b: Vec<Point> = b.into_iter().map_while(|p| p).collect();
    let nb = b.len();
    Ok(Trace {
        generator: generator.to_owned(),
        orientation,
        seed: None,
        a,
        b,
        d_b_a: d_b_a.into_iter().take(nb).collect(),
        d_bprev_a,
        stop_reason: StopReason::MaxIterations,
        message: None,
        boundary_hits: 0,
        max_chain_excess: 0.0,
        chain_violations: 0,
    })
}

/// JSON form of a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub generator: String,
    pub orientation: Orientation,
    pub seed: Option<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d_b_a: Vec<Option<f64>>,
    pub d_bprev_a: Vec<Option<f64>>,
    pub stop_reason: StopReason,
    pub message: Option<String>,
    pub boundary_hits: usize,
    pub max_chain_excess: f64,
    pub chain_violations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_roles: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point_residual: Option<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl TraceRecord {
    pub fn new(trace: &Trace, em: Option<&EmTrace>) -> Self {
        let pts = |v: &[Point]| v.iter().map(|p| p.as_slice().to_vec()).collect();
        TraceRecord {
            generator: trace.generator.clone(),
            orientation: trace.orientation,
            seed: trace.seed.as_ref().map(|s| s.as_slice().to_vec()),
            a: pts(&trace.a),
            b: pts(&trace.b),
            d_b_a: trace.d_b_a.iter().map(|&v| finite(v)).collect(),
            d_bprev_a: trace.d_bprev_a.iter().map(|&v| finite(v)).collect(),
            stop_reason: trace.stop_reason,
            message: trace.message.clone(),
            boundary_hits: trace.boundary_hits,
            max_chain_excess: trace.max_chain_excess,
            chain_violations: trace.chain_violations,
            step_roles: em.map(|e| (0..trace.len()).map(|k| e.row_role(k)).collect()),
            fixed_point_residual: em.map(|e| e.fixed_point_residual),
        }
    }

    pub fn to_trace(&self) -> Trace {
        let pts = |v: &[Vec<f64>]| v.iter().map(|p| DVector::from_column_slice(p)).collect();
        Trace {
            generator: self.generator.clone(),
            orientation: self.orientation,
            seed: self.seed.as_deref().map(DVector::from_column_slice),
            a: pts(&self.a),
            b: pts(&self.b),
            d_b_a: self.d_b_a.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            d_bprev_a: self.d_bprev_a.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            stop_reason: self.stop_reason,
            message: self.message.clone(),
            boundary_hits: self.boundary_hits,
            max_chain_excess: self.max_chain_excess,
            chain_violations: self.chain_violations,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alternator::{run, RunConfig};
    use crate::legendre::euclidean;
    use crate::sets::SetSpec;

    fn sample() -> Trace {
        let g = euclidean(2);
        run(
            g.as_ref(),
            &SetSpec::affine(vec![0.0, 0.0], vec![vec![1.0, 0.0]]),
            &SetSpec::affine(vec![0.0, 0.0], vec![vec![1.0, 1.0]]),
            &DVector::from_vec(vec![1.0, 2.0]),
            &RunConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e-17, f64::MAX] {
            assert_eq!(parse_float(&format_float(v)).unwrap(), v);
        }
        assert_eq!(format_float(f64::NAN), "");
        assert!(parse_float("").unwrap().is_nan());
        assert_eq!(parse_float(&format_float(f64::INFINITY)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn csv_columns_and_round_trip() {
        let t = sample();
        let table = trace_table(&t, None, None);
        assert_eq!(&table.headers[..8], &BASE_COLUMNS.map(String::from));
        assert_eq!(&table.headers[8..], &["b_0", "b_1", "a_0", "a_1"].map(String::from));
        let mut buf = Vec::new();
        table.write_to(&mut buf).unwrap();
        let back = CsvTable::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, table);
        let rebuilt = trace_from_table(&back, "euclidean", Orientation::Rl).unwrap();
        assert_eq!(rebuilt.a, t.a);
        assert_eq!(rebuilt.b, t.b);
    }

    #[test]
    fn fill_never_overwrites() {
        let t = sample();
        let mut table = trace_table(&t, None, None);
        table.rows[1][5] = "0.5".into();
        let n = table.rows.len();
        table.fill_column("angle_rl", &vec![1.0; n]);
        assert_eq!(table.rows[1][5], "0.5");
        assert_eq!(parse_float(&table.rows[2][5]).unwrap(), 1.0);
    }

    #[test]
    fn json_round_trip() {
        let t = sample();
        let rec = TraceRecord::new(&t, None);
        let text = serde_json::to_string(&rec).unwrap();
        let back: TraceRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.to_trace().a, t.a);
    }
}
