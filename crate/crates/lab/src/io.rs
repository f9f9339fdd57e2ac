//! CSV and JSON formats.
//!
//! Every CSV file may start with `#` comment lines (run metadata and the
//! write timestamp); readers skip them. Floats are written in Rust's
//! shortest round-trip form, so reading a file back reproduces the values
//! bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use snot_core::discrete_ot::{PlanEntry, TransportPlan};
use snot_core::measures::EmpiricalMeasure;
use snot_core::nn::MlpParams;
use snot_core::schedule::TracePoint;
use snot_core::trainer::TrainRecord;
use snot_core::Matrix;

use crate::error::{LabError, Result};

pub const RECORD_HEADER: [&str; 6] = ["iter", "eps", "loss", "d_cost", "d_target", "wall_ms"];
pub const TRACE_HEADER: [&str; 3] = ["iter", "n", "eps"];
pub const PLAN_HEADER: [&str; 3] = ["i", "j", "mass"];

fn writer<W: Write>(mut w: W, comment: Option<&str>) -> Result<csv::Writer<W>> {
    if let Some(text) = comment {
        for line in text.lines() {
            writeln!(w, "# {line}").map_err(|e| LabError::io("<csv>", e))?;
        }
    }
    Ok(csv::WriterBuilder::new().flexible(true).from_writer(w))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(r)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(field: &str, what: &'static str) -> Result<f64> {
    field.trim().parse().map_err(|_| LabError::format(what, format!("not a number: {field:?}")))
}

fn parse_u64(field: &str, what: &'static str) -> Result<u64> {
    field.trim().parse().map_err(|_| LabError::format(what, format!("not an integer: {field:?}")))
}

fn check_header(headers: &csv::StringRecord, expected: &[&str], what: &'static str) -> Result<()> {
    if headers.iter().eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(LabError::format(what, format!("expected header {}, found {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(","))))
    }
}

/// `x0,...,x{d-1},w`.
pub fn write_measure<W: Write>(w: W, measure: &EmpiricalMeasure, comment: Option<&str>) -> Result<()> {
    let mut out = writer(w, comment)?;
    let d = measure.dim();
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    header.push("w".into());
    out.write_record(&header)?;
    for (i, &wt) in measure.weights().iter().enumerate() {
        out.write_record(measure.point(i).iter().map(|&v| num(v)).chain(std::iter::once(num(wt))))?;
    }
    out.flush().map_err(|e| LabError::io("<csv>", e))?;
    Ok(())
}

pub fn read_measure<R: Read>(r: R) -> Result<EmpiricalMeasure> {
    let mut rd = reader(r);
    let headers = rd.headers()?.clone();
    let d = headers.len().saturating_sub(1);
    let expected: Vec<String> = (0..d).map(|k| format!("x{k}")).chain(std::iter::once("w".to_string())).collect();
    if d == 0 || !headers.iter().eq(expected.iter().map(String::as_str)) {
        return Err(LabError::format("measure", "header must be x0,...,x{d-1},w"));
    }
    let mut data = Vec::new();
    let mut weights = Vec::new();
    for row in rd.records() {
        let row = row?;
        if row.len() != d + 1 {
            return Err(LabError::format("measure", format!("row with {} fields, expected {}", row.len(), d + 1)));
        }
        for f in row.iter().take(d) {
            data.push(parse_f64(f, "measure")?);
        }
        weights.push(parse_f64(&row[d], "measure")?);
    }
    let n = weights.len();
    Ok(EmpiricalMeasure::new(Matrix::from_vec(n, d, data)?, weights)?)
}

/// `i,j,mass`, one row per positive entry.
pub fn write_plan<W: Write>(w: W, plan: &TransportPlan, comment: Option<&str>) -> Result<()> {
    let mut out = writer(w, comment)?;
    out.write_record(PLAN_HEADER)?;
    for e in &plan.entries {
        out.write_record([e.source.to_string(), e.target.to_string(), num(e.mass)])?;
    }
    out.flush().map_err(|e| LabError::io("<csv>", e))?;
    Ok(())
}

pub fn read_plan<R: Read>(r: R) -> Result<Vec<PlanEntry>> {
    let mut rd = reader(r);
    check_header(rd.headers()?, &PLAN_HEADER, "plan")?;
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        if row.len() != 3 {
            return Err(LabError::format("plan", "expected 3 fields"));
        }
        out.push(PlanEntry {
            source: parse_u64(&row[0], "plan")? as usize,
            target: parse_u64(&row[1], "plan")? as usize,
            mass: parse_f64(&row[2], "plan")?,
        });
    }
    Ok(out)
}

/// `y0,...,y{d-1},V`.
pub fn write_potential<W: Write>(w: W, support: &Matrix, values: &[f64], comment: Option<&str>) -> Result<()> {
    if support.rows() != values.len() {
        return Err(LabError::format("potential", "support and values differ in length"));
    }
    let mut out = writer(w, comment)?;
    let mut header: Vec<String> = (0..support.cols()).map(|k| format!("y{k}")).collect();
    header.push("V".into());
    out.write_record(&header)?;
    for (row, &v) in support.iter_rows().zip(values) {
        out.write_record(row.iter().map(|&x| num(x)).chain(std::iter::once(num(v))))?;
    }
    out.flush().map_err(|e| LabError::io("<csv>", e))?;
    Ok(())
}

pub fn read_potential<R: Read>(r: R) -> Result<(Matrix, Vec<f64>)> {
    let mut rd = reader(r);
    let headers = rd.headers()?.clone();
    let d = headers.len().saturating_sub(1);
    let expected: Vec<String> = (0..d).map(|k| format!("y{k}")).chain(std::iter::once("V".to_string())).collect();
    if d == 0 || !headers.iter().eq(expected.iter().map(String::as_str)) {
        return Err(LabError::format("potential", "header must be y0,...,y{d-1},V"));
    }
    let mut data = Vec::new();
    let mut values = Vec::new();
    for row in rd.records() {
        let row = row?;
        if row.len() != d + 1 {
            return Err(LabError::format("potential", "wrong field count"));
        }
        for f in row.iter().take(d) {
            data.push(parse_f64(f, "potential")?);
        }
        values.push(parse_f64(&row[d], "potential")?);
    }
    Ok((Matrix::from_vec(values.len(), d, data)?, values))
}

/// Streaming writer for `iter,eps,loss,d_cost,d_target,wall_ms`.
pub struct RecordWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(w: W, comment: Option<&str>) -> Result<Self> {
        let mut out = writer(w, comment)?;
        out.write_record(RECORD_HEADER)?;
        Ok(Self { out })
    }

    pub fn push(&mut self, r: &TrainRecord) -> Result<()> {
        self.out.write_record([r.iter.to_string(), num(r.eps), num(r.loss), num(r.d_cost), num(r.d_target), r.wall_ms.to_string()])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| LabError::io("<csv>", e))
    }
}

pub fn write_records<W: Write>(w: W, records: &[TrainRecord], comment: Option<&str>) -> Result<()> {
    let mut out = RecordWriter::new(w, comment)?;
    for r in records {
        out.push(r)?;
    }
    out.finish()
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<TrainRecord>> {
    let mut rd = reader(r);
    check_header(rd.headers()?, &RECORD_HEADER, "train records")?;
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        if row.len() != 6 {
            return Err(LabError::format("train records", "expected 6 fields"));
        }
        out.push(TrainRecord {
            iter: parse_u64(&row[0], "train records")?,
            eps: parse_f64(&row[1], "train records")?,
            loss: parse_f64(&row[2], "train records")?,
            d_cost: parse_f64(&row[3], "train records")?,
            d_target: parse_f64(&row[4], "train records")?,
            wall_ms: parse_u64(&row[5], "train records")?,
        });
    }
    Ok(out)
}

/// `iter,n,eps`.
pub fn write_trace<W: Write>(w: W, trace: &[TracePoint], comment: Option<&str>) -> Result<()> {
    let mut out = writer(w, comment)?;
    out.write_record(TRACE_HEADER)?;
    for p in trace {
        out.write_record([p.iteration.to_string(), p.n.to_string(), num(p.eps)])?;
    }
    out.flush().map_err(|e| LabError::io("<csv>", e))?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<TracePoint>> {
    let mut rd = reader(r);
    check_header(rd.headers()?, &TRACE_HEADER, "schedule trace")?;
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        if row.len() != 3 {
            return Err(LabError::format("schedule trace", "expected 3 fields"));
        }
        out.push(TracePoint {
            iteration: parse_u64(&row[0], "schedule trace")?,
            n: parse_u64(&row[1], "schedule trace")?,
            eps: parse_f64(&row[2], "schedule trace")?,
        });
    }
    Ok(out)
}

const TENSOR_NAMES: [&str; 4] = ["w1", "b1", "w2", "b2"];

/// One line per tensor: `name,rows,cols,v0,v1,...` in row-major order,
/// under the header `tensor,rows,cols,values`.
pub fn write_checkpoint<W: Write>(w: W, p: &MlpParams, comment: Option<&str>) -> Result<()> {
    let mut out = writer(w, comment)?;
    out.write_record(["tensor", "rows", "cols", "values"])?;
    let shapes = [(p.hidden(), p.d_in()), (p.hidden(), 1), (p.d_out(), p.hidden()), (p.d_out(), 1)];
    for ((name, (rows, cols)), data) in TENSOR_NAMES.iter().zip(shapes).zip(p.tensors()) {
        let head = [name.to_string(), rows.to_string(), cols.to_string()];
        out.write_record(head.into_iter().chain(data.iter().map(|&v| num(v))))?;
    }
    out.flush().map_err(|e| LabError::io("<csv>", e))?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<MlpParams> {
    let mut rd = reader(r);
    check_header(rd.headers()?, &["tensor", "rows", "cols", "values"], "checkpoint")?;
    let mut tensors: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for (row, name) in rd.records().zip(TENSOR_NAMES) {
        let row = row?;
        if row.len() < 3 || &row[0] != name {
            return Err(LabError::format("checkpoint", format!("expected tensor {name}")));
        }
        let rows = parse_u64(&row[1], "checkpoint")? as usize;
        let cols = parse_u64(&row[2], "checkpoint")? as usize;
        let values = row.iter().skip(3).map(|f| parse_f64(f, "checkpoint")).collect::<Result<Vec<_>>>()?;
        if values.len() != rows * cols {
            return Err(LabError::format("checkpoint", format!("{name}: {} values for shape {rows}x{cols}", values.len())));
        }
        tensors.push((rows, cols, values));
    }
    if tensors.len() != 4 {
        return Err(LabError::format("checkpoint", "expected four tensors"));
    }
    let mut it = tensors.into_iter();
    let (r1, c1, w1) = it.next().unwrap();
    let (_, _, b1) = it.next().unwrap();
    let (r2, c2, w2) = it.next().unwrap();
    let (_, _, b2) = it.next().unwrap();
    Ok(MlpParams::from_parts(Matrix::from_vec(r1, c1, w1)?, b1, Matrix::from_vec(r2, c2, w2)?, b2)?)
}

/// Rows of any serde record type under a header of its field names.
pub fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T], comment: Option<&str>) -> Result<()> {
    let mut out = writer(w, comment)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| LabError::io("<csv>", e))?;
    Ok(())
}

pub fn read_rows<R: Read, T: DeserializeOwned>(r: R) -> Result<Vec<T>> {
    reader(r).deserialize().map(|row| row.map_err(LabError::from)).collect()
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| LabError::io(path, e))?;
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Opens `path` for buffered writing.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| LabError::io(path, e))
}

/// Opens `path` for reading.
pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| LabError::io(path, e))
}
