//! Deterministic delimited-text report bodies.
//!
//! Every value is rendered through a fixed formatting routine so that a
//! report is byte-identical across runs, platforms, and worker counts; the
//! only volatile data (timestamp, wall time) lives in the separate manifest.

/// Render a float deterministically: 17 significant digits round-trip any
/// `f64` bit pattern exactly, scientific notation keeps records aligned.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

/// A flat record report: sections, key-value records, and delimited rows.
#[derive(Debug, Default, Clone)]
pub struct Report {
    lines: Vec<String>,
}

impl Report {
    pub fn new(title: &str) -> Self {
        Self { lines: vec![format!("report\t{title}")] }
    }

    pub fn section(&mut self, name: &str) {
        self.lines.push(format!("section\t{name}"));
    }

    pub fn kv(&mut self, key: &str, value: &str) {
        self.lines.push(format!("{key}\t{value}"));
    }

    pub fn kv_f(&mut self, key: &str, value: f64) {
        let v = fmt_f64(value);
        self.kv(key, &v);
    }

    pub fn kv_u(&mut self, key: &str, value: u64) {
        self.kv(key, &value.to_string());
    }

    /// One tab-delimited row (plot-ready columns).
    pub fn row(&mut self, fields: &[String]) {
        self.lines.push(fields.join("\t"));
    }

    pub fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }
}

/// Slope and `r²` of `ln y` against `x` — the geometric-decay fit used by
/// the truncation-error and residual-decay diagnostics.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    crate::ifs::fit_line(xs, &logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, -1.5, 1.0 / 3.0, 6.02e23, -2.2e-308, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn report_bytes_are_stable() {
        let build = || {
            let mut r = Report::new("demo");
            r.section("values");
            r.kv_f("pi", std::f64::consts::PI);
            r.row(&["1".into(), fmt_f64(0.5)]);
            r.render()
        };
        assert_eq!(build(), build());
        assert!(build().ends_with('\n'));
    }

    #[test]
    fn log_slope_recovers_geometric_rate() {
        let xs: Vec<f64> = (1..=6).map(|n| n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        let (slope, r2) = log_slope(&xs, &ys);
        assert!((slope + 0.7).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }
}
