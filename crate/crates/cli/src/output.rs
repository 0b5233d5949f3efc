//! CSV rendering with `#` comment headers.

use otto_core::optimize::{OptimaRow, SweepRecord};
use otto_core::stats::CycleStatistics;

/// Formats `x` with `digits` significant digits in the style of C's `%g`.
pub fn format_number(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Accumulates a CSV document: comment lines first, then one header and rows.
#[derive(Debug, Clone, Default)]
pub struct Document {
    comments: Vec<String>,
    header: Vec<&'static str>,
    rows: Vec<String>,
    digits: usize,
}

impl Document {
    pub fn new(columns: &[&'static str], digits: usize) -> Self {
        Document {
            comments: Vec::new(),
            header: columns.to_vec(),
            rows: Vec::new(),
            digits,
        }
    }

    /// Adds `# text`.
    pub fn comment(&mut self, text: impl AsRef<str>) {
        self.comments.push(format!("# {}", text.as_ref()));
    }

    /// Adds a `#error` line.
    pub fn error(&mut self, text: impl AsRef<str>) {
        self.comments.push(format!("#error {}", text.as_ref()));
    }

    pub fn num(&self, x: f64) -> String {
        format_number(x, self.digits)
    }

    pub fn opt(&self, x: Option<f64>) -> String {
        x.map(|v| self.num(v)).unwrap_or_default()
    }

    pub fn row(&mut self, fields: Vec<String>) {
        debug_assert_eq!(fields.len(), self.header.len());
        self.rows.push(fields.join(","));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.comments {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }
}

pub const Q_COLUMNS: &[&str] = &["tau_u", "r_u", "q_f", "q_b"];

pub const STATS_COLUMNS: &[&str] = &[
    "tau_u",
    "r_u",
    "q_f",
    "q_b",
    "w_mean",
    "w_var",
    "qh_mean",
    "qh_var",
    "work_output",
    "reliability_w",
    "efficiency",
    "eta2",
    "reliability_eta",
    "engine_regime",
];

pub const OPTIMA_COLUMNS: &[&str] = &[
    "tau_u", "r_star", "w_opt", "r_circ", "rw_opt", "r_odot", "eta_opt", "r_delta", "reta_opt",
];

impl Document {
    pub fn stats_row(&mut self, tau_u: f64, r_u: f64, q_f: f64, q_b: f64, s: &CycleStatistics) {
        let fields = vec![
            self.num(tau_u),
            self.num(r_u),
            self.num(q_f),
            self.num(q_b),
            self.num(s.w_mean),
            self.num(s.w_var),
            self.num(s.qh_mean),
            self.num(s.qh_var),
            self.num(s.work_output),
            self.opt(s.reliability_w),
            self.opt(s.efficiency),
            self.opt(s.eta2),
            self.opt(s.reliability_eta),
            s.engine_regime.to_string(),
        ];
        self.row(fields);
    }

    pub fn record_row(&mut self, r: &SweepRecord) {
        self.stats_row(r.tau_u, r.r_u, r.pair.q_f, r.pair.q_b, &r.stats);
    }

    pub fn optima_row(&mut self, row: &OptimaRow) {
        let mut fields = vec![self.num(row.tau_u)];
        for opt in [row.work, row.reliability_w, row.efficiency, row.reliability_eta] {
            fields.push(self.opt(opt.map(|o| o.r_u)));
            fields.push(self.opt(opt.map(|o| o.value)));
        }
        self.row(fields);
    }
}
