use std::fmt::Write as _;

use sha2::{Digest, Sha256};

const SIGNIFICANT: usize = 9;

/// `%.9g`-style formatting: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros removed.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..SIGNIFICANT as i32).contains(&exp) {
        let decimals = (SIGNIFICANT as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Accumulates a CSV document: provenance preamble, header, rows, and a
/// trailing `#` summary block.
pub struct Csv {
    text: String,
    summary: Vec<String>,
}

impl Csv {
    pub fn new(config_hash: Option<&str>, command: &str) -> Self {
        let mut text = format!("# pdc-coupling {}\n", env!("CARGO_PKG_VERSION"));
        if let Some(h) = config_hash {
            text.push_str(&format!("# config_sha256: {h}\n"));
        }
        text.push_str(&format!("# command: {command}\n"));
        Self {
            text,
            summary: Vec::new(),
        }
    }

    pub fn meta(&mut self, line: impl AsRef<str>) {
        self.text.push_str(&format!("# {}\n", line.as_ref()));
    }

    pub fn header(&mut self, columns: &[String]) {
        self.text.push_str(&columns.join(","));
        self.text.push('\n');
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn summary(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    pub fn summary_lines(&self) -> &[String] {
        &self.summary
    }

    /// The CSV body followed by the summary as comment lines.
    pub fn render(&self) -> String {
        let mut out = self.text.clone();
        for line in &self.summary {
            out.push_str(&format!("# {line}\n"));
        }
        out
    }
}
