use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ParseNameError;

/// Fewest rows any fit accepts.
pub const MIN_ROWS: usize = 4;

/// What the first CSV column measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbscissaKind {
    IrisDiameter,
    PumpWaist,
    PreparationWaist,
}

impl AbscissaKind {
    pub fn name(&self) -> &'static str {
        match self {
            AbscissaKind::IrisDiameter => "iris_diameter",
            AbscissaKind::PumpWaist => "pump_waist",
            AbscissaKind::PreparationWaist => "preparation_waist",
        }
    }
}

impl fmt::Display for AbscissaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AbscissaKind {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [AbscissaKind::IrisDiameter, AbscissaKind::PumpWaist, AbscissaKind::PreparationWaist]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ParseNameError {
                what: "abscissa kind",
                given: s.to_string(),
                expected: "iris_diameter, pump_waist, preparation_waist".into(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataRow {
    /// Micrometres.
    pub abscissa: f64,
    pub value: f64,
    pub sigma: Option<f64>,
}

/// Measured points in file order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSet {
    pub kind: AbscissaKind,
    pub rows: Vec<DataRow>,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected header `abscissa_um,value[,sigma]`")]
    MissingHeader { line: usize },
    #[error("MalformedRow: line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("NonPositiveAbscissa: line {line}: {value}")]
    NonPositiveAbscissa { line: usize, value: f64 },
    #[error("line {line}: sigma must be positive, got {value}")]
    NonPositiveSigma { line: usize, value: f64 },
    #[error("a fit needs at least {MIN_ROWS} rows, found {found}")]
    TooFewRows { found: usize },
}

impl DataSet {
    /// Parses CSV text with header `abscissa_um,value` or
    /// `abscissa_um,value,sigma`. Blank lines and `#` lines are ignored.
    pub fn parse(text: &str, kind: AbscissaKind) -> Result<Self, DataError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (header_line, header) = lines.next().ok_or(DataError::TooFewRows { found: 0 })?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        let has_sigma = match columns.as_slice() {
            ["abscissa_um", "value"] => false,
            ["abscissa_um", "value", "sigma"] => true,
            _ => return Err(DataError::MissingHeader { line: header_line }),
        };
        let mut rows = Vec::new();
        for (line, text) in lines {
            let fields: Vec<&str> = text.split(',').map(str::trim).collect();
            if fields.len() != columns.len() {
                return Err(DataError::MalformedRow {
                    line,
                    reason: format!("expected {} columns, found {}", columns.len(), fields.len()),
                });
            }
            let number = |i: usize| -> Result<f64, DataError> {
                fields[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| DataError::MalformedRow {
                        line,
                        reason: format!("`{}` in column {} is not a finite number", fields[i], columns[i]),
                    })
            };
            let abscissa = number(0)?;
            let value = number(1)?;
            if abscissa <= 0.0 {
                return Err(DataError::NonPositiveAbscissa { line, value: abscissa });
            }
            let sigma = if has_sigma { Some(number(2)?) } else { None };
            if let Some(s) = sigma {
                if s <= 0.0 {
                    return Err(DataError::NonPositiveSigma { line, value: s });
                }
            }
            rows.push(DataRow { abscissa, value, sigma });
        }
        if rows.len() < MIN_ROWS {
            return Err(DataError::TooFewRows { found: rows.len() });
        }
        Ok(Self { kind, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn max_abscissa(&self) -> f64 {
        self.rows.iter().map(|r| r.abscissa).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes the dataset back in the input format.
    pub fn to_csv(&self) -> String {
        let with_sigma = self.rows.iter().any(|r| r.sigma.is_some());
        let mut out = String::from(if with_sigma { "abscissa_um,value,sigma\n" } else { "abscissa_um,value\n" });
        for r in &self.rows {
            match (with_sigma, r.sigma) {
                (true, Some(s)) => out.push_str(&format!("{},{},{}\n", r.abscissa, r.value, s)),
                (true, None) => out.push_str(&format!("{},{},1\n", r.abscissa, r.value)),
                _ => out.push_str(&format!("{},{}\n", r.abscissa, r.value)),
            }
        }
        out
    }
}

pub fn load_dataset(path: impl AsRef<Path>, kind: AbscissaKind) -> Result<DataSet, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    DataSet::parse(&text, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> String {
        let mut s = String::from("# measured 2024\nabscissa_um,value,sigma\n");
        for i in 1..=n {
            s.push_str(&format!("{},{},0.01\n", 100 * i, 0.1 * i as f64));
        }
        s
    }

    #[test]
    fn ten_rows_in_order() {
        let d = DataSet::parse(&rows(10), AbscissaKind::IrisDiameter).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d.rows[3].abscissa, 400.0);
        assert_eq!(d.rows[3].sigma, Some(0.01));
    }

    #[test]
    fn missing_column_names_line() {
        let mut text = rows(6);
        text.push_str("700,0.7\n");
        match DataSet::parse(&text, AbscissaKind::IrisDiameter) {
            Err(DataError::MalformedRow { line, .. }) => assert_eq!(line, 9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_only_is_too_few() {
        let err = DataSet::parse("abscissa_um,value\n", AbscissaKind::PumpWaist).unwrap_err();
        assert!(matches!(err, DataError::TooFewRows { found: 0 }));
    }

    #[test]
    fn sigma_column_is_optional() {
        let text = "abscissa_um,value\n1,2\n2,3\n3,4\n4,5\n";
        let d = DataSet::parse(text, AbscissaKind::PumpWaist).unwrap();
        assert!(d.rows.iter().all(|r| r.sigma.is_none()));
        assert_eq!(DataSet::parse(&d.to_csv(), AbscissaKind::PumpWaist).unwrap(), d);
    }

    #[test]
    fn rejects_bad_values() {
        let neg = "abscissa_um,value\n-1,2\n2,3\n3,4\n4,5\n";
        assert!(matches!(
            DataSet::parse(neg, AbscissaKind::PumpWaist),
            Err(DataError::NonPositiveAbscissa { line: 2, .. })
        ));
        let sig = "abscissa_um,value,sigma\n1,2,0\n2,3,1\n3,4,1\n4,5,1\n";
        assert!(matches!(
            DataSet::parse(sig, AbscissaKind::PumpWaist),
            Err(DataError::NonPositiveSigma { line: 2, .. })
        ));
        let word = "abscissa_um,value\n1,x\n2,3\n3,4\n4,5\n";
        assert!(matches!(
            DataSet::parse(word, AbscissaKind::PumpWaist),
            Err(DataError::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(
            DataSet::parse("x,y\n1,2\n", AbscissaKind::PumpWaist),
            Err(DataError::MissingHeader { line: 1 })
        ));
    }

    #[test]
    fn loads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, rows(5)).unwrap();
        assert_eq!(load_dataset(&path, AbscissaKind::PumpWaist).unwrap().len(), 5);
        assert!(matches!(
            load_dataset(dir.path().join("none.csv"), AbscissaKind::PumpWaist),
            Err(DataError::Io { .. })
        ));
    }
}
