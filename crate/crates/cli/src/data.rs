//! CSV ingestion.
//!
//! Recognized columns: `outcome`, `arm`, `x1..xK`, at most one of `stratum`,
//! `pair` or `cluster`, and an ignored `unit` identifier. Missing values and
//! unknown columns are rejected with their position.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use randinf::science::{Assignment, CovariateMatrix, ObservedData, Structure};

use crate::config::ArmCoding;
use crate::{invalid, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Stratum,
    Pair,
    Cluster,
}

impl LabelKind {
    pub fn column(&self) -> &'static str {
        match self {
            LabelKind::Stratum => "stratum",
            LabelKind::Pair => "pair",
            LabelKind::Cluster => "cluster",
        }
    }

    fn structure(&self, labels: Vec<usize>) -> Structure {
        match self {
            LabelKind::Stratum => Structure::Strata(labels),
            LabelKind::Pair => Structure::Pairs(labels),
            LabelKind::Cluster => Structure::Clusters(labels),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub headers: Vec<String>,
    pub records: Vec<Vec<String>>,
    pub outcome: Option<Vec<f64>>,
    pub arm: Option<Vec<i64>>,
    pub x: Option<DMatrix<f64>>,
    /// Dense 0-based labels in order of first appearance after sorting.
    pub labels: Option<(LabelKind, Vec<usize>)>,
}

enum Role {
    Unit,
    Outcome,
    Arm,
    Covariate(usize),
    Label(LabelKind),
}

fn role(name: &str) -> Option<Role> {
    match name {
        "unit" => Some(Role::Unit),
        "outcome" => Some(Role::Outcome),
        "arm" => Some(Role::Arm),
        "stratum" => Some(Role::Label(LabelKind::Stratum)),
        "pair" => Some(Role::Label(LabelKind::Pair)),
        "cluster" => Some(Role::Label(LabelKind::Cluster)),
        _ => name
            .strip_prefix('x')
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|&k| k >= 1 && !name[1..].starts_with('0'))
            .map(Role::Covariate),
    }
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "NaN" | "nan" | "null" | "NULL")
}

fn cell<'a>(records: &'a [Vec<String>], headers: &[String], row: usize, col: usize) -> CliResult<&'a str> {
    let v = records[row][col].as_str();
    if is_missing(v) {
        return Err(invalid(format!(
            "line {}, column {} ('{}'): missing value; missing data are not supported",
            row + 2,
            col + 1,
            headers[col]
        )));
    }
    Ok(v)
}

fn real(records: &[Vec<String>], headers: &[String], row: usize, col: usize) -> CliResult<f64> {
    let v = cell(records, headers, row, col)?;
    v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
        invalid(format!(
            "line {}, column {} ('{}'): '{v}' is not a finite real number",
            row + 2,
            col + 1,
            headers[col]
        ))
    })
}

fn integer(records: &[Vec<String>], headers: &[String], row: usize, col: usize) -> CliResult<i64> {
    let v = cell(records, headers, row, col)?;
    v.parse::<i64>().map_err(|_| {
        invalid(format!(
            "line {}, column {} ('{}'): '{v}' is not an integer",
            row + 2,
            col + 1,
            headers[col]
        ))
    })
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    parse_dataset(file).map_err(|e| match e {
        CliError::Validation(m) => invalid(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_dataset<R: Read>(reader: R) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| invalid(format!("header row: {e}")))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(invalid("missing header row"));
    }
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| invalid(format!("line {}: {e}", i + 2)))?;
        records.push(rec.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    }
    if records.is_empty() {
        return Err(invalid("no data rows"));
    }

    let (mut outcome_col, mut arm_col, mut label_col) = (None, None, None);
    let mut x_cols: Vec<(usize, usize)> = Vec::new();
    for (c, h) in headers.iter().enumerate() {
        if headers[..c].contains(h) {
            return Err(invalid(format!("column {} ('{h}') is duplicated", c + 1)));
        }
        match role(h) {
            Some(Role::Unit) => {}
            Some(Role::Outcome) => outcome_col = Some(c),
            Some(Role::Arm) => arm_col = Some(c),
            Some(Role::Covariate(k)) => x_cols.push((k, c)),
            Some(Role::Label(kind)) => {
                if let Some((other, _)) = label_col {
                    return Err(invalid(format!(
                        "columns '{}' and '{}' both give structure labels; use one",
                        LabelKind::column(&other),
                        h
                    )));
                }
                label_col = Some((kind, c));
            }
            None => {
                return Err(invalid(format!(
                    "column {} ('{h}') is not recognized; expected outcome, arm, x1..xK, stratum, pair, cluster or unit",
                    c + 1
                )))
            }
        }
    }
    x_cols.sort();
    for (j, (k, c)) in x_cols.iter().enumerate() {
        if *k != j + 1 {
            return Err(invalid(format!(
                "covariate columns must be x1..xK without gaps; column {} is '{}'",
                c + 1,
                headers[*c]
            )));
        }
    }

    let n = records.len();
    let outcome = outcome_col
        .map(|c| (0..n).map(|r| real(&records, &headers, r, c)).collect::<CliResult<Vec<_>>>())
        .transpose()?;
    let arm = arm_col
        .map(|c| (0..n).map(|r| integer(&records, &headers, r, c)).collect::<CliResult<Vec<_>>>())
        .transpose()?;
    let x = if x_cols.is_empty() {
        None
    } else {
        let mut m = DMatrix::zeros(n, x_cols.len());
        for r in 0..n {
            for (j, (_, c)) in x_cols.iter().enumerate() {
                m[(r, j)] = real(&records, &headers, r, *c)?;
            }
        }
        Some(m)
    };
    let labels = match label_col {
        None => None,
        Some((kind, c)) => {
            let raw = (0..n).map(|r| integer(&records, &headers, r, c)).collect::<CliResult<Vec<_>>>()?;
            let mut distinct = raw.clone();
            distinct.sort_unstable();
            distinct.dedup();
            let dense = raw.iter().map(|v| distinct.binary_search(v).expect("present")).collect();
            Some((kind, dense))
        }
    };
    Ok(Dataset {
        headers,
        records,
        outcome,
        arm,
        x,
        labels,
    })
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn covariates(&self) -> CliResult<Option<CovariateMatrix>> {
        self.x.clone().map(|m| CovariateMatrix::new(m).map_err(CliError::from)).transpose()
    }

    fn column_index(&self, name: &str) -> usize {
        self.headers.iter().position(|h| h == name).expect("column present")
    }

    pub fn assignment(&self, coding: ArmCoding) -> CliResult<Assignment> {
        let raw = self.arm.as_ref().ok_or_else(|| invalid("the data need an 'arm' column"))?;
        let col = self.column_index("arm");
        let mut arms = Vec::with_capacity(raw.len());
        for (r, &v) in raw.iter().enumerate() {
            let a = match coding {
                ArmCoding::OneBased if v >= 1 => (v - 1) as usize,
                ArmCoding::ZeroOne if v == 0 || v == 1 => v as usize,
                _ => {
                    return Err(invalid(format!(
                        "line {}, column {} ('arm'): arm {v} is not valid for {} coding",
                        r + 2,
                        col + 1,
                        match coding {
                            ArmCoding::OneBased => "1..Q",
                            ArmCoding::ZeroOne => "0/1",
                        }
                    )))
                }
            };
            arms.push(a);
        }
        let q = match coding {
            ArmCoding::OneBased => arms.iter().max().map_or(0, |m| m + 1),
            ArmCoding::ZeroOne => 2,
        };
        if q < 2 {
            return Err(invalid("at least two arms are required"));
        }
        let a = Assignment::new(arms, q)?;
        Ok(match &self.labels {
            Some((kind, l)) => a.with_structure(kind.structure(l.clone()))?,
            None => a,
        })
    }

    pub fn observed(&self, coding: ArmCoding) -> CliResult<ObservedData> {
        let y = self.outcome.clone().ok_or_else(|| invalid("the data need an 'outcome' column"))?;
        let a = self.assignment(coding)?;
        Ok(ObservedData::new(y, a, self.covariates()?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> CliResult<Dataset> {
        parse_dataset(s.as_bytes())
    }

    #[test]
    fn full_schema() {
        let d = parse("unit,outcome,arm,x1,x2,stratum\na,1.5,1,0,1,10\nb,2,2,1,0,10\nc,3,1,2,2,20\nd,4,2,3,1,20\n").unwrap();
        assert_eq!(d.n(), 4);
        assert_eq!(d.outcome.as_ref().unwrap()[0], 1.5);
        assert_eq!(d.x.as_ref().unwrap().ncols(), 2);
        assert_eq!(d.labels, Some((LabelKind::Stratum, vec![0, 0, 1, 1])));
        let obs = d.observed(ArmCoding::OneBased).unwrap();
        assert_eq!(obs.assignment.arms(), &[0, 1, 0, 1]);
        assert_eq!(obs.assignment.structure().kind(), "stratum");
    }

    #[test]
    fn zero_one_coding() {
        let d = parse("outcome,arm\n1,0\n2,1\n3,0\n4,1\n").unwrap();
        assert!(d.observed(ArmCoding::OneBased).is_err());
        assert_eq!(d.observed(ArmCoding::ZeroOne).unwrap().assignment.counts(), &[2, 2]);
    }

    #[test]
    fn diagnostics_name_row_and_column() {
        let e = parse("outcome,arm\n1,1\n,2\n").unwrap_err();
        assert!(e.to_string().contains("line 3, column 1 ('outcome'): missing value"), "{e}");
        let e = parse("outcome,arm\n1,1\nabc,2\n").unwrap_err();
        assert!(e.to_string().contains("line 3, column 1"), "{e}");
        let e = parse("outcome,arm,weight\n1,1,2\n").unwrap_err();
        assert!(e.to_string().contains("column 3 ('weight')"), "{e}");
        assert!(parse("outcome,arm,x2\n1,1,2\n").is_err());
        assert!(parse("outcome,arm,pair,cluster\n1,1,1,1\n").is_err());
        assert!(parse("outcome,arm\n1,1,3\n").is_err());
        let e = parse("outcome,arm\n1,1.5\n").unwrap_err();
        assert!(e.to_string().contains("not an integer"));
    }
}
