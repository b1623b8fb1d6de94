//! Fixed-format text output shared by all artifacts.

use std::io::{self, Write};

use serde::Serialize;

use crate::ivp::{MethodTag, SolutionTrace};
use crate::model::{v_unchecked, Params};

/// A number with 17 significant digits, locale-independent.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV line of numbers.
pub fn write_row<W: Write>(out: &mut W, values: &[f64]) -> io::Result<()> {
    let line: Vec<String> = values.iter().map(|&v| num(v)).collect();
    writeln!(out, "{}", line.join(","))
}

/// Trace as CSV `eta,w,wp,V`.
pub fn write_trace_csv<W: Write>(out: &mut W, trace: &SolutionTrace) -> io::Result<()> {
    writeln!(out, "eta,w,wp,V")?;
    for i in 0..trace.len() {
        let (w, wp) = (trace.ws[i], trace.wps[i]);
        write_row(out, &[trace.etas[i], w, wp, v_unchecked(w, wp, trace.params.p)])?;
    }
    Ok(())
}

/// Sidecar describing how a trace was produced.
#[derive(Debug, Clone, Serialize)]
pub struct TraceMetadata {
    pub params: Params,
    pub method_tag: MethodTag,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub samples: usize,
    pub quiescent_from: Option<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub version: &'static str,
}

impl TraceMetadata {
    pub fn new(trace: &SolutionTrace) -> Self {
        TraceMetadata {
            params: trace.params,
            method_tag: trace.method_tag,
            rel_tol: trace.params.rel_tol,
            abs_tol: trace.params.abs_tol,
            samples: trace.len(),
            quiescent_from: trace.quiescent_from,
            accepted_steps: trace.stats.accepted,
            rejected_steps: trace.stats.rejected,
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.25), "2.5000000000000000e-1");
    }
}
