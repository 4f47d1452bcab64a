//! Basis expansions φ(x). Every expansion starts with the constant 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One derived feature of a custom basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Transform {
    /// x_j
    Column { name: String, index: usize },
    /// x_j^k
    Power {
        name: String,
        index: usize,
        exponent: i32,
    },
    /// x_j * x_l
    Product {
        name: String,
        left: usize,
        right: usize,
    },
    /// 1{x_j > threshold}
    Indicator {
        name: String,
        index: usize,
        threshold: f64,
    },
}

impl Transform {
    pub fn name(&self) -> &str {
        match self {
            Transform::Column { name, .. }
            | Transform::Power { name, .. }
            | Transform::Product { name, .. }
            | Transform::Indicator { name, .. } => name,
        }
    }

    fn max_index(&self) -> usize {
        match self {
            Transform::Column { index, .. }
            | Transform::Power { index, .. }
            | Transform::Indicator { index, .. } => *index,
            Transform::Product { left, right, .. } => (*left).max(*right),
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Transform::Column { index, .. } => x[index],
            Transform::Power {
                index, exponent, ..
            } => x[index].powi(exponent),
            Transform::Product { left, right, .. } => x[left] * x[right],
            Transform::Indicator {
                index, threshold, ..
            } => {
                if x[index] > threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BasisKind {
    /// (1, x_1, ..., x_d)
    Identity,
    /// (1, x_1, ..., x_1^k, x_2, ..., x_d^k): per-coordinate powers, no
    /// interactions.
    Polynomial { degree: u32 },
    /// (1, t_1(x), ..., t_m(x)). An empty list gives the intercept-only basis.
    Custom { transforms: Vec<Transform> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub input_dim: usize,
    /// Declared sup-norm bound on the features. Checked against data by
    /// [`FeatureMatrix::within_bound`], never assumed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

impl BasisSpec {
    pub fn identity(input_dim: usize) -> Self {
        Self {
            kind: BasisKind::Identity,
            input_dim,
            bound: None,
        }
    }

    pub fn polynomial(input_dim: usize, degree: u32) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidBasis("polynomial degree must be >= 1".into()));
        }
        Ok(Self {
            kind: BasisKind::Polynomial { degree },
            input_dim,
            bound: None,
        })
    }

    pub fn custom(input_dim: usize, transforms: Vec<Transform>) -> Result<Self> {
        if let Some(t) = transforms.iter().find(|t| t.max_index() >= input_dim) {
            return Err(Error::InvalidBasis(format!(
                "transform '{}' references a column beyond input dimension {input_dim}",
                t.name()
            )));
        }
        Ok(Self {
            kind: BasisKind::Custom { transforms },
            input_dim,
            bound: None,
        })
    }

    pub fn intercept_only(input_dim: usize) -> Self {
        Self {
            kind: BasisKind::Custom {
                transforms: Vec::new(),
            },
            input_dim,
            bound: None,
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidBasis(format!("bound must be positive, got {bound}")));
        }
        self.bound = Some(bound);
        Ok(self)
    }

    /// Parses the command-line notation: `identity`, `poly:k`, or
    /// `intercept`.
    pub fn parse(text: &str, input_dim: usize) -> Result<Self> {
        let text = text.trim();
        match text {
            "identity" => Ok(Self::identity(input_dim)),
            "intercept" => Ok(Self::intercept_only(input_dim)),
            _ => {
                let degree = text
                    .strip_prefix("poly:")
                    .and_then(|k| k.parse::<u32>().ok())
                    .ok_or_else(|| {
                        Error::InvalidBasis(format!(
                            "unknown basis '{text}' (expected identity, intercept or poly:k)"
                        ))
                    })?;
                Self::polynomial(input_dim, degree)
            }
        }
    }

    /// Number of features p, intercept included.
    pub fn dim(&self) -> usize {
        1 + match &self.kind {
            BasisKind::Identity => self.input_dim,
            BasisKind::Polynomial { degree } => self.input_dim * *degree as usize,
            BasisKind::Custom { transforms } => transforms.len(),
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        match &self.kind {
            BasisKind::Identity => {
                names.extend((1..=self.input_dim).map(|j| format!("x{j}")));
            }
            BasisKind::Polynomial { degree } => {
                for j in 1..=self.input_dim {
                    names.push(format!("x{j}"));
                    names.extend((2..=*degree).map(|k| format!("x{j}^{k}")));
                }
            }
            BasisKind::Custom { transforms } => {
                names.extend(transforms.iter().map(|t| t.name().to_string()));
            }
        }
        names
    }

    /// φ(x).
    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        self.expand_into(x, &mut out)
            .map_err(|feature| match feature {
                None => Error::InvalidBasis(format!(
                    "input has {} covariates, basis expects {}",
                    x.len(),
                    self.input_dim
                )),
                Some(feature) => Error::NonFiniteFeature { row: 0, feature },
            })?;
        Ok(out)
    }

    /// Appends φ(x) to `out`. `Err(None)` on a dimension mismatch,
    /// `Err(Some(j))` if feature j is not finite.
    fn expand_into(&self, x: &[f64], out: &mut Vec<f64>) -> std::result::Result<(), Option<usize>> {
        if x.len() != self.input_dim {
            return Err(None);
        }
        let start = out.len();
        out.push(1.0);
        match &self.kind {
            BasisKind::Identity => out.extend_from_slice(x),
            BasisKind::Polynomial { degree } => {
                for &v in x {
                    let mut pow = v;
                    out.push(pow);
                    for _ in 1..*degree {
                        pow *= v;
                        out.push(pow);
                    }
                }
            }
            BasisKind::Custom { transforms } => out.extend(transforms.iter().map(|t| t.eval(x))),
        }
        match out[start..].iter().position(|v| !v.is_finite()) {
            Some(j) => Err(Some(j)),
            None => Ok(()),
        }
    }

    /// Expands every row. The result also records the largest absolute
    /// feature value.
    pub fn expand_dataset<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<FeatureMatrix> {
        let p = self.dim();
        let mut data = Vec::with_capacity(rows.len() * p);
        for (row, x) in rows.iter().enumerate() {
            let x = x.as_ref();
            self.expand_into(x, &mut data).map_err(|feature| match feature {
                None => Error::InvalidBasis(format!(
                    "row {row} has {} covariates, basis expects {}",
                    x.len(),
                    self.input_dim
                )),
                Some(feature) => Error::NonFiniteFeature { row, feature },
            })?;
        }
        let max_abs = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(FeatureMatrix {
            data,
            rows: rows.len(),
            cols: p,
            max_abs,
        })
    }
}

/// Row-major n × p matrix of expanded features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    max_abs: f64,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Empirical sup-norm of the features.
    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    pub fn within_bound(&self, spec: &BasisSpec) -> Option<bool> {
        spec.bound.map(|b| self.max_abs <= b)
    }

    /// Column means (zero vector when empty).
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        if self.rows > 0 {
            let n = self.rows as f64;
            mean.iter_mut().for_each(|m| *m /= n);
        }
        mean
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let max_abs = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        FeatureMatrix {
            data,
            rows: indices.len(),
            cols: self.cols,
            max_abs,
        }
    }
}
