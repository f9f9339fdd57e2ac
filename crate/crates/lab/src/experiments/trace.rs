//! `schedule-trace`: the noise level at every iteration of a schedule.

use std::io::Write;

use snot_core::schedule::{trace, TracePoint};

use crate::config::TraceCommand;
use crate::error::Result;
use crate::io;
use crate::run::RunDir;

/// Writes `trace.csv` under `dir` and the same rows, without the header
/// comment, to `out`.
pub fn run<W: Write>(cfg: &TraceCommand, dir: Option<&RunDir>, out: W) -> Result<Vec<TracePoint>> {
    let points = trace(&cfg.schedule, cfg.iterations, cfg.batch_size);
    if let Some(dir) = dir {
        io::write_trace(io::create(&dir.path("trace.csv")?)?, &points, dir.comment())?;
    }
    io::write_trace(out, &points, None)?;
    Ok(points)
}
