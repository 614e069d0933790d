use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::{MetricSeries, Trace};

/// 17 significant digits, enough to round-trip an `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// `slot,metric,mean,stderr,n_trials`
pub fn write_metric_csv(path: &Path, series: &MetricSeries) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "slot,metric,mean,stderr,n_trials")?;
    for (slot, (m, s)) in series.mean.iter().zip(&series.stderr).enumerate() {
        writeln!(
            out,
            "{slot},{},{},{},{}",
            series.metric.name(),
            format_float(*m),
            format_float(*s),
            series.n_trials
        )?;
    }
    out.flush()
}

/// `param,algorithm,value`
pub fn write_summary_csv(path: &Path, rows: &[(String, String, f64)]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "param,algorithm,value")?;
    for (param, alg, value) in rows {
        writeln!(out, "{param},{alg},{}", format_float(*value))?;
    }
    out.flush()
}

/// `slot,truth_theta,estimate_theta,rate`
pub(super) fn write_trace_csv(path: &Path, trace: &Trace) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "slot,truth_theta,estimate_theta,rate")?;
    for (slot, ((t, e), r)) in trace
        .truth_theta
        .iter()
        .zip(&trace.estimate_theta)
        .zip(&trace.rate)
        .enumerate()
    {
        writeln!(out, "{slot},{},{},{}", format_float(*t), format_float(*e), format_float(*r))?;
    }
    out.flush()
}
