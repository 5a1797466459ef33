//! CSV emission shared by every exporter: `,` separator, `\n` line ends,
//! mandatory header and printf-style `%.9e` numbers.

use std::fmt::Write as _;

/// Formats `x` exactly like C's `printf("%.9e", x)`.
pub fn sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.9e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// An in-memory CSV document with a fixed header.
#[derive(Debug, Clone)]
pub struct Table {
    columns: usize,
    body: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut body = header.join(",");
        body.push('\n');
        Self { columns: header.len(), body }
    }

    /// Appends a row of numeric cells.
    pub fn push(&mut self, cells: &[f64]) {
        debug_assert_eq!(cells.len(), self.columns);
        let row: Vec<String> = cells.iter().map(|&x| sci(x)).collect();
        self.body.push_str(&row.join(","));
        self.body.push('\n');
    }

    /// Appends a row of preformatted cells.
    pub fn push_raw(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        let _ = writeln!(self.body, "{}", cells.join(","));
    }

    pub fn rows(&self) -> usize {
        self.body.lines().count() - 1
    }

    pub fn as_str(&self) -> &str {
        &self.body
    }

    pub fn into_string(self) -> String {
        self.body
    }
}
