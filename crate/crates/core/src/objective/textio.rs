//! Plain-text formats for quadratic instances and domain-adaptation data.
//!
//! Both formats are whitespace separated and row-major. Blank lines and
//! anything after `#` are ignored.
//!
//! Quadratic instance: a header `d1 d2 N`, then for each of the `N` clients
//! the rows of `A` (d1×d1), `B` (d1×d2), `C` (d2×d2), then `a` (d1 values)
//! and `c` (d2 values).
//!
//! Dataset: a header `n_features n_classes n_points`, then one point per
//! line as `S <label> x_1 … x_p` for labeled source points or
//! `T - x_1 … x_p` for unlabeled target points.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::{DataPoint, Domain, DomainAdaptDataset, QuadraticSaddleSpec};
use crate::error::{FedError, Result};

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .flat_map(|(i, line)| {
                let content = line.split('#').next().unwrap_or("");
                content.split_whitespace().map(move |t| (i + 1, t))
            })
            .collect();
        Self { items, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.items.last().map_or(1, |(l, _)| *l)
    }

    fn next_raw(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let item = self.items.get(self.pos).copied().ok_or_else(|| FedError::Parse {
            line: self.last_line(),
            message: format!("unexpected end of input, expected {what}"),
        })?;
        self.pos += 1;
        Ok(item)
    }

    fn next<T: FromStr>(&mut self, what: &str) -> Result<T> {
        let (line, tok) = self.next_raw(what)?;
        tok.parse().map_err(|_| FedError::Parse {
            line,
            message: format!("expected {what}, found `{tok}`"),
        })
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.next::<f64>(what)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn finish(&self) -> Result<()> {
        match self.items.get(self.pos) {
            Some((line, tok)) => Err(FedError::Parse {
                line: *line,
                message: format!("trailing token `{tok}`"),
            }),
            None => Ok(()),
        }
    }
}

pub fn parse_quadratic_instance(text: &str) -> Result<Vec<QuadraticSaddleSpec>> {
    let mut t = Tokens::new(text);
    let d1: usize = t.next("d1")?;
    let d2: usize = t.next("d2")?;
    let n: usize = t.next("N")?;
    let mut specs = Vec::with_capacity(n);
    for _ in 0..n {
        let a_mat = t.matrix(d1, d1, "A entry")?;
        let b_mat = t.matrix(d1, d2, "B entry")?;
        let c_mat = t.matrix(d2, d2, "C entry")?;
        let a_vec = DVector::from_column_slice(t.matrix(1, d1, "a entry")?.as_slice());
        let c_vec = DVector::from_column_slice(t.matrix(1, d2, "c entry")?.as_slice());
        specs.push(QuadraticSaddleSpec::new(a_mat, b_mat, c_mat, a_vec, c_vec));
    }
    t.finish()?;
    Ok(specs)
}

fn write_rows(out: &mut String, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:?}", m[(r, c)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

pub fn format_quadratic_instance(specs: &[QuadraticSaddleSpec]) -> String {
    let (d1, d2) = specs.first().map_or((0, 0), |s| s.dims());
    let mut out = format!("{d1} {d2} {}\n", specs.len());
    for (i, s) in specs.iter().enumerate() {
        let _ = writeln!(out, "# client {i}");
        write_rows(&mut out, &s.a_mat);
        write_rows(&mut out, &s.b_mat);
        write_rows(&mut out, &s.c_mat);
        write_rows(&mut out, &DMatrix::from_row_slice(1, d1, s.a_vec.as_slice()));
        write_rows(&mut out, &DMatrix::from_row_slice(1, d2, s.c_vec.as_slice()));
    }
    out
}

/// Parses a dataset file; returns the dataset and its declared class count.
pub fn parse_dataset(text: &str) -> Result<(DomainAdaptDataset, usize)> {
    let mut t = Tokens::new(text);
    let n_features: usize = t.next("n_features")?;
    let n_classes: usize = t.next("n_classes")?;
    let n_points: usize = t.next("n_points")?;
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let (line, tag) = t.next_raw("domain tag")?;
        let (domain, label) = match tag {
            "S" => {
                let label: usize = t.next("label")?;
                if label >= n_classes {
                    return Err(FedError::Parse {
                        line,
                        message: format!("label {label} outside 0..{n_classes}"),
                    });
                }
                (Domain::Source, Some(label))
            }
            "T" => {
                let (l, dash) = t.next_raw("`-`")?;
                if dash != "-" {
                    return Err(FedError::Parse {
                        line: l,
                        message: format!("target points take `-` as label, found `{dash}`"),
                    });
                }
                (Domain::Target, None)
            }
            other => {
                return Err(FedError::Parse {
                    line,
                    message: format!("expected domain tag S or T, found `{other}`"),
                })
            }
        };
        let mut x = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            x.push(t.next::<f64>("feature")?);
        }
        points.push(DataPoint { x, label, domain });
    }
    t.finish()?;
    Ok((DomainAdaptDataset::new(n_features, points)?, n_classes))
}

pub fn format_dataset(data: &DomainAdaptDataset, n_classes: usize) -> String {
    let mut out = format!("{} {} {}\n", data.n_features(), n_classes, data.len());
    for p in data.points() {
        let head = match (p.domain, p.label) {
            (Domain::Source, Some(y)) => format!("S {y}"),
            _ => "T -".to_string(),
        };
        let xs: Vec<String> = p.x.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{head} {}", xs.join(" "));
    }
    out
}
