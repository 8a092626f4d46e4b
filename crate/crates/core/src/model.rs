//! System model: linear dynamics, quadratic weights, noise and the
//! per-transmission penalty.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, symmetrize, PD_TOL, PSD_TOL};

/// `x_{k+1} = A x_k + B u_k + w_k` with stage cost
/// `|x|_Q^2 + |u|_R^2 + lambda * theta` and terminal cost `|x_T|_{QT}^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub qt: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
    pub lambda: f64,
    pub horizon: usize,
    pub x0_mean: DVector<f64>,
    pub x0_cov: DMatrix<f64>,
    pub seed: Option<u64>,
}

impl SystemModel {
    /// Model with `QT = Q`, zero initial mean and identity initial covariance.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        sigma_w: DMatrix<f64>,
        lambda: f64,
        horizon: usize,
    ) -> Self {
        let n = a.nrows();
        Self {
            qt: q.clone(),
            a,
            b,
            q,
            r,
            sigma_w,
            lambda,
            horizon,
            x0_mean: DVector::zeros(n),
            x0_cov: DMatrix::identity(n, n),
            seed: None,
        }
    }

    /// Position/velocity double integrator sampled at `ts`, with unit weights
    /// `Q = QT = I`, `R = 1`.
    pub fn double_integrator(ts: f64, sigma: f64, lambda: f64, horizon: usize) -> Self {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5 * ts * ts, ts]);
        Self::new(
            a,
            b,
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2) * sigma,
            lambda,
            horizon,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Checks every standing assumption and returns the model with its
    /// symmetric inputs replaced by their symmetric parts.
    pub fn validate(self) -> Result<Self> {
        validate_model(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_sigma_w(mut self, sigma_w: DMatrix<f64>) -> Self {
        self.sigma_w = sigma_w;
        self
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        doc.try_into()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from(self))?)
    }
}

fn dims(m: &DMatrix<f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

fn expect_shape(m: &DMatrix<f64>, rows: usize, cols: usize, name: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::DimensionMismatch(format!(
            "{name} is {}, expected {rows}x{cols}",
            dims(m)
        )));
    }
    Ok(())
}

fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

fn symmetric_psd(m: &DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    let s = symmetrize(m);
    let min = min_eigenvalue(&s);
    if min < -PSD_TOL || !min.is_finite() {
        return Err(Error::NotPsd {
            matrix: name,
            min_eigenvalue: min,
        });
    }
    Ok(s)
}

/// Validates a model; see [`SystemModel::validate`].
pub fn validate_model(model: SystemModel) -> Result<SystemModel> {
    let n = model.a.nrows();
    let m = model.b.ncols();
    if n == 0 {
        return Err(Error::DimensionMismatch("state dimension is zero".into()));
    }
    expect_shape(&model.a, n, n, "A")?;
    expect_shape(&model.b, n, m, "B")?;
    expect_shape(&model.q, n, n, "Q")?;
    expect_shape(&model.qt, n, n, "QT")?;
    expect_shape(&model.r, m, m, "R")?;
    expect_shape(&model.sigma_w, n, n, "Sigma_w")?;
    expect_shape(&model.x0_cov, n, n, "x0_cov")?;
    if model.x0_mean.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "x0_mean has length {}, expected {n}",
            model.x0_mean.len()
        )));
    }
    for (name, mat) in [
        ("A", &model.a),
        ("B", &model.b),
        ("Q", &model.q),
        ("QT", &model.qt),
        ("R", &model.r),
        ("Sigma_w", &model.sigma_w),
        ("x0_cov", &model.x0_cov),
    ] {
        if !all_finite(mat) {
            return Err(Error::DimensionMismatch(format!("{name} has non-finite entries")));
        }
    }
    if model.horizon == 0 {
        return Err(Error::NonPositiveHorizon);
    }
    if !(model.lambda.is_finite() && model.lambda >= 0.0) {
        return Err(Error::InvalidLambda(model.lambda));
    }

    let q = symmetric_psd(&model.q, "Q")?;
    let qt = symmetric_psd(&model.qt, "QT")?;
    let sigma_w = symmetric_psd(&model.sigma_w, "Sigma_w")?;
    let x0_cov = symmetric_psd(&model.x0_cov, "x0_cov")?;
    let r = symmetrize(&model.r);
    let r_min = if m == 0 { f64::INFINITY } else { min_eigenvalue(&r) };
    if r_min.is_nan() || r_min <= PD_TOL {
        return Err(Error::NotPd {
            matrix: "R",
            min_eigenvalue: r_min,
        });
    }

    Ok(SystemModel {
        q,
        qt,
        r,
        sigma_w,
        x0_cov,
        ..model
    })
}

/// JSON matrix: nested row-major arrays, or a bare number for a 1x1 matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixDoc {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixDoc {
    fn to_matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixDoc::Scalar(v) => Ok(DMatrix::from_element(1, 1, *v)),
            MatrixDoc::Rows(rows) => {
                let nrows = rows.len();
                let ncols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != ncols) {
                    return Err(Error::DimensionMismatch(format!("{name} has ragged rows")));
                }
                Ok(DMatrix::from_row_iterator(
                    nrows,
                    ncols,
                    rows.iter().flat_map(|r| r.iter().copied()),
                ))
            }
        }
    }

    fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixDoc::Rows(
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelDocument {
    #[serde(rename = "A")]
    a: MatrixDoc,
    #[serde(rename = "B")]
    b: MatrixDoc,
    #[serde(rename = "Q")]
    q: MatrixDoc,
    #[serde(rename = "QT", default, skip_serializing_if = "Option::is_none")]
    qt: Option<MatrixDoc>,
    #[serde(rename = "R")]
    r: MatrixDoc,
    #[serde(rename = "Sigma_w")]
    sigma_w: MatrixDoc,
    lambda: f64,
    #[serde(rename = "T")]
    horizon: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0_cov: Option<MatrixDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl TryFrom<ModelDocument> for SystemModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let a = doc.a.to_matrix("A")?;
        let n = a.nrows();
        let q = doc.q.to_matrix("Q")?;
        let qt = match &doc.qt {
            Some(m) => m.to_matrix("QT")?,
            None => q.clone(),
        };
        if doc.horizon < 1 {
            return Err(Error::NonPositiveHorizon);
        }
        Ok(SystemModel {
            b: doc.b.to_matrix("B")?,
            r: doc.r.to_matrix("R")?,
            sigma_w: doc.sigma_w.to_matrix("Sigma_w")?,
            lambda: doc.lambda,
            horizon: doc.horizon as usize,
            x0_mean: doc
                .x0_mean
                .map(DVector::from_vec)
                .unwrap_or_else(|| DVector::zeros(n)),
            x0_cov: match &doc.x0_cov {
                Some(m) => m.to_matrix("x0_cov")?,
                None => DMatrix::identity(n, n),
            },
            seed: doc.seed,
            a,
            q,
            qt,
        })
    }
}

impl From<&SystemModel> for ModelDocument {
    fn from(m: &SystemModel) -> Self {
        ModelDocument {
            a: MatrixDoc::from_matrix(&m.a),
            b: MatrixDoc::from_matrix(&m.b),
            q: MatrixDoc::from_matrix(&m.q),
            qt: Some(MatrixDoc::from_matrix(&m.qt)),
            r: MatrixDoc::from_matrix(&m.r),
            sigma_w: MatrixDoc::from_matrix(&m.sigma_w),
            lambda: m.lambda,
            horizon: m.horizon as i64,
            x0_mean: Some(m.x0_mean.iter().copied().collect()),
            x0_cov: Some(MatrixDoc::from_matrix(&m.x0_cov)),
            seed: m.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn case_study() -> SystemModel {
        SystemModel::new(
            DMatrix::identity(2, 2),
            dmatrix![0.0; 1.0],
            DMatrix::identity(2, 2),
            dmatrix![1.0],
            DMatrix::identity(2, 2) * 0.5,
            100.0,
            25,
        )
    }

    #[test]
    fn accepts_case_study_parameters() {
        let m = case_study().validate().unwrap();
        assert_eq!(m.horizon, 25);
        assert_eq!(m.lambda, 100.0);
    }

    #[test]
    fn rejects_zero_r() {
        let mut m = case_study();
        m.r = dmatrix![0.0];
        assert!(matches!(m.validate(), Err(Error::NotPd { matrix: "R", .. })));
    }

    #[test]
    fn rejects_indefinite_q() {
        let mut m = case_study();
        m.q = dmatrix![1.0, 0.0; 0.0, -0.5];
        assert!(matches!(m.validate(), Err(Error::NotPsd { matrix: "Q", .. })));
    }

    #[test]
    fn rejects_bad_shapes_and_scalars() {
        let mut m = case_study();
        m.b = dmatrix![0.0; 1.0; 2.0];
        assert!(matches!(m.validate(), Err(Error::DimensionMismatch(_))));

        let mut m = case_study();
        m.horizon = 0;
        assert!(matches!(m.validate(), Err(Error::NonPositiveHorizon)));

        let m = case_study().with_lambda(-1.0);
        assert!(matches!(m.validate(), Err(Error::InvalidLambda(_))));
    }

    #[test]
    fn symmetrizes_inputs() {
        let mut m = case_study();
        m.q = dmatrix![2.0, 1.0; 0.0, 2.0];
        let v = m.validate().unwrap();
        assert_eq!(v.q, dmatrix![2.0, 0.5; 0.5, 2.0]);
    }

    #[test]
    fn validate_is_idempotent() {
        let mut m = case_study();
        m.sigma_w = dmatrix![1.0, 0.3; 0.1, 1.0];
        let once = m.validate().unwrap();
        let twice = once.clone().validate().unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn json_defaults() {
        let text = r#"{"A": [[1.0]], "B": [[1.0]], "Q": [[2.0]], "R": 1.0,
                       "Sigma_w": [[0.5]], "lambda": 0.3, "T": 2}"#;
        let m = SystemModel::from_json_str(text).unwrap().validate().unwrap();
        assert_eq!(m.qt, dmatrix![2.0]);
        assert_eq!(m.x0_mean.len(), 1);
        assert_eq!(m.x0_mean[0], 0.0);
        assert_eq!(m.x0_cov, dmatrix![1.0]);
        assert_eq!(m.seed, None);
    }

    #[test]
    fn json_round_trip() {
        let mut m = SystemModel::double_integrator(0.1, 0.5, 100.0, 25);
        m.seed = Some(9);
        let back = SystemModel::from_json_str(&m.to_json_string().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn json_rejects_ragged_and_negative_horizon() {
        let text = r#"{"A": [[1.0, 0.0], [1.0]], "B": [[1.0]], "Q": [[1.0]], "R": 1.0,
                       "Sigma_w": [[0.5]], "lambda": 0.3, "T": 2}"#;
        assert!(SystemModel::from_json_str(text).is_err());
        let text = r#"{"A": [[1.0]], "B": [[1.0]], "Q": [[1.0]], "R": 1.0,
                       "Sigma_w": [[0.5]], "lambda": 0.3, "T": -1}"#;
        assert!(matches!(SystemModel::from_json_str(text), Err(Error::NonPositiveHorizon)));
    }
}
