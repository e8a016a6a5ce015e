//! Real data from CSV: pick a response column, standardize the covariates,
//! prepend an intercept and spread the rows over K nodes.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::data::substream;
use crate::el::NodeDataset;
use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// Parameter names, `"(intercept)"` first.
    pub names: Vec<String>,
    pub family: EstimatingFunction,
    pub nodes: Vec<NodeDataset>,
    /// Column means and standard deviations used to standardize.
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

/// Regression model fitted to a CSV table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Linear,
    Logistic,
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "logistic" => Ok(Self::Logistic),
            _ => Err(Error::InvalidArgument(format!("model must be linear or logistic, got '{s}'"))),
        }
    }
}

/// Reads `path` (header row required). Covariates are every column except
/// `response`, or `covariates` when given.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    response: &str,
    covariates: Option<&[String]>,
    model: Model,
    k: usize,
    seed: u64,
) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let records = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<String>> = records.iter().map(|r| r.iter().map(str::to_owned).collect()).collect();
    from_table(&header, &rows, response, covariates, model, k, seed)
}

pub fn from_table(
    header: &[String],
    rows: &[Vec<String>],
    response: &str,
    covariates: Option<&[String]>,
    model: Model,
    k: usize,
    seed: u64,
) -> Result<Ingested> {
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Parse(format!("no column named '{name}'")))
    };
    let y_col = col(response)?;
    let x_cols: Vec<usize> = match covariates {
        Some(names) => names.iter().map(|n| col(n)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&c| c != y_col).collect(),
    };
    if x_cols.is_empty() {
        return Err(Error::InvalidArgument("need at least one covariate".into()));
    }
    let n = rows.len();
    if n < k || k == 0 {
        return Err(Error::InvalidArgument(format!("{n} rows cannot fill {k} nodes")));
    }
    let parse = |r: usize, c: usize| -> Result<f64> {
        let cell = rows[r].get(c).ok_or_else(|| Error::Parse(format!("row {} is short", r + 2)))?;
        let v: f64 = cell.parse().map_err(|_| Error::Parse(format!("row {}: '{cell}' is not a number", r + 2)))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("row {}: non-finite value", r + 2)));
        }
        Ok(v)
    };
    let y: Vec<f64> = (0..n).map(|r| parse(r, y_col)).collect::<Result<_>>()?;
    if model == Model::Logistic && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!("logistic response '{response}' must be 0/1")));
    }
    let mut x: Vec<Vec<f64>> = x_cols.iter().map(|&c| (0..n).map(|r| parse(r, c)).collect()).collect::<Result<_>>()?;
    let mut centers = Vec::new();
    let mut scales = Vec::new();
    for (column, &c) in x.iter_mut().zip(&x_cols) {
        let mean = column.iter().sum::<f64>() / n as f64;
        let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::InvalidArgument(format!("covariate '{}' is constant", header[c])));
        }
        column.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        centers.push(mean);
        scales.push(sd);
    }

    let d = x_cols.len() + 1;
    let family = match model {
        Model::Linear => EstimatingFunction::linear(d)?,
        Model::Logistic => EstimatingFunction::logistic(d)?,
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, 0));
    let (base, extra) = (n / k, n % k);
    let mut nodes = Vec::with_capacity(k);
    let mut at = 0;
    for node in 0..k {
        let size = base + usize::from(node < extra);
        let block: Vec<Vec<f64>> = order[at..at + size]
            .iter()
            .map(|&r| {
                let mut row = Vec::with_capacity(d + 1);
                row.push(y[r]);
                row.push(1.0);
                row.extend(x.iter().map(|col| col[r]));
                row
            })
            .collect();
        nodes.push(NodeDataset::from_rows(node, &block)?);
        at += size;
    }
    let mut names = vec!["(intercept)".to_owned()];
    names.extend(x_cols.iter().map(|&c| header[c].clone()));
    Ok(Ingested { names, family, nodes, centers, scales })
}
