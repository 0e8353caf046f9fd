//! Kernel PCA with a polynomial kernel `(gamma·⟨a, b⟩ + coef0)^degree`.
//!
//! The centered Gram matrix of the fitting rows is diagonalized with cyclic
//! Jacobi rotations. The leading `target_dim` eigenvectors are stored scaled
//! by `1/sqrt(eigenvalue)`, so projecting a centered kernel row onto them
//! gives the usual kernel-PCA coordinates (`sqrt(λ)·v` on the fitting rows).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, symmetric_eigen, Matrix};
use crate::{Error, Result, Scalar};

pub const EIGEN_TOLERANCE: f64 = 1e-9;
pub const EIGEN_MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub degree: u32,
    /// `None` means `1 / d`.
    pub gamma: Option<f64>,
    pub coef0: f64,
    pub target_dim: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            gamma: None,
            coef0: 1.0,
            target_dim: 2,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::InvalidConfig(
                "kernel degree must be at least 1".into(),
            ));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::InvalidConfig("kernel gamma must be positive".into()));
            }
        }
        if self.target_dim == 0 {
            return Err(Error::InvalidConfig("target_dim must be at least 1".into()));
        }
        Ok(())
    }

    pub fn gamma_for(&self, dim: usize) -> f64 {
        self.gamma.unwrap_or(1.0 / dim.max(1) as f64)
    }
}

/// Polynomial kernel with an explicit `gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolyKernel<T> {
    pub degree: u32,
    pub gamma: T,
    pub coef0: T,
}

impl<T: Scalar> PolyKernel<T> {
    pub fn from_config(cfg: &KernelConfig, dim: usize) -> Self {
        Self {
            degree: cfg.degree,
            gamma: T::from_f64_lossy(cfg.gamma_for(dim)),
            coef0: T::from_f64_lossy(cfg.coef0),
        }
    }

    pub fn eval(&self, a: &[T], b: &[T]) -> Result<T> {
        if a.len() != b.len() {
            return Err(Error::DimMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        Ok(self.eval_unchecked(a, b))
    }

    fn eval_unchecked(&self, a: &[T], b: &[T]) -> T {
        (self.gamma * dot(a, b) + self.coef0).powi(self.degree as i32)
    }
}

pub fn poly_kernel<T: Scalar>(a: &[T], b: &[T], cfg: &KernelConfig) -> Result<T> {
    PolyKernel::from_config(cfg, a.len()).eval(a, b)
}

pub fn gram_matrix<T: Scalar>(rows: &Matrix<T>, kernel: &PolyKernel<T>) -> Matrix<T> {
    let m = rows.rows();
    let mut k = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = kernel.eval_unchecked(rows.row(i), rows.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Double centering `K − 1K − K1 + 1K1` with `1` the matrix of `1/m`.
pub fn center_kernel<T: Scalar>(k: &Matrix<T>) -> Result<Matrix<T>> {
    if !k.is_square() {
        return Err(Error::DimMismatch {
            expected: k.rows(),
            got: k.cols(),
        });
    }
    let (row_means, grand) = kernel_means(k);
    let m = k.rows();
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] = k[(i, j)] - row_means[i] - row_means[j] + grand;
        }
    }
    Ok(out)
}

fn kernel_means<T: Scalar>(k: &Matrix<T>) -> (Vec<T>, T) {
    let m = T::from_usize_lossy(k.rows().max(1));
    let row_means: Vec<T> = k
        .iter_rows()
        .map(|r| r.iter().copied().sum::<T>() / m)
        .collect();
    let grand = row_means.iter().copied().sum::<T>() / m;
    (row_means, grand)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KpcaModel<T> {
    kernel: PolyKernel<T>,
    train: Matrix<T>,
    row_means: Vec<T>,
    grand_mean: T,
    eigenvalues: Vec<T>,
    /// `m × p`; column `j` has squared norm `1 / eigenvalues[j]`.
    alphas: Matrix<T>,
}

impl<T: Scalar> KpcaModel<T> {
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn alphas(&self) -> &Matrix<T> {
        &self.alphas
    }

    pub fn kernel(&self) -> &PolyKernel<T> {
        &self.kernel
    }

    pub fn target_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn input_dim(&self) -> usize {
        self.train.cols()
    }
}

/// Fits kernel PCA on `rows` (`m × d`), keeping `cfg.target_dim` components.
pub fn fit<T: Scalar>(rows: &Matrix<T>, cfg: &KernelConfig) -> Result<KpcaModel<T>> {
    cfg.validate()?;
    let p = cfg.target_dim;
    let m = rows.rows();
    if m < p + 1 {
        return Err(Error::DegenerateKernel {
            found: m.saturating_sub(1),
            needed: p,
        });
    }
    let kernel = PolyKernel::from_config(cfg, rows.cols());
    let gram = gram_matrix(rows, &kernel);
    let (row_means, grand_mean) = kernel_means(&gram);
    let centered = center_kernel(&gram)?;
    let eig = symmetric_eigen(
        &centered,
        T::from_f64_lossy(EIGEN_TOLERANCE),
        EIGEN_MAX_SWEEPS,
    )?;

    let largest = eig.values.first().copied().unwrap_or_else(T::zero).abs();
    let cutoff = largest * T::epsilon() * T::from_usize_lossy(m);
    let positive = eig
        .values
        .iter()
        .take_while(|&&v| v > cutoff && v > T::zero())
        .count();
    if positive < p {
        return Err(Error::DegenerateKernel {
            found: positive,
            needed: p,
        });
    }

    let mut alphas = Matrix::zeros(m, p);
    for j in 0..p {
        let mut v = eig.vectors.column(j);
        let lead = (0..m)
            .max_by(|&a, &b| {
                v[a].abs()
                    .partial_cmp(&v[b].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.cmp(&a))
            })
            .unwrap_or(0);
        if v[lead] < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let scale = T::one() / eig.values[j].sqrt();
        for (i, x) in v.into_iter().enumerate() {
            alphas[(i, j)] = x * scale;
        }
    }
    Ok(KpcaModel {
        kernel,
        train: rows.clone(),
        row_means,
        grand_mean,
        eigenvalues: eig.values[..p].to_vec(),
        alphas,
    })
}

/// Projects `rows` (`q × d`) onto the fitted components (`q × p`).
pub fn transform<T: Scalar>(model: &KpcaModel<T>, rows: &Matrix<T>) -> Result<Matrix<T>> {
    if rows.cols() != model.train.cols() {
        return Err(Error::DimMismatch {
            expected: model.train.cols(),
            got: rows.cols(),
        });
    }
    let m = model.train.rows();
    let p = model.target_dim();
    let mut out = Matrix::zeros(rows.rows(), p);
    let mut k = vec![T::zero(); m];
    let inv_m = T::one() / T::from_usize_lossy(m);
    for (r, x) in rows.iter_rows().enumerate() {
        for (j, kv) in k.iter_mut().enumerate() {
            *kv = model.kernel.eval_unchecked(x, model.train.row(j));
        }
        let mean = k.iter().copied().sum::<T>() * inv_m;
        for (j, kv) in k.iter_mut().enumerate() {
            *kv = *kv - mean - model.row_means[j] + model.grand_mean;
        }
        for c in 0..p {
            let mut acc = T::zero();
            for (j, &kv) in k.iter().enumerate() {
                acc += kv * model.alphas[(j, c)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// CSV `row_index,pc1,pc2[,...]`.
pub fn write_projections<T: Scalar>(
    row_index: &[usize],
    proj: &Matrix<T>,
    path: &Path,
) -> Result<()> {
    let mut out = String::from("row_index");
    for c in 0..proj.cols() {
        out.push_str(&format!(",pc{}", c + 1));
    }
    out.push('\n');
    for (idx, row) in row_index.iter().zip(proj.iter_rows()) {
        out.push_str(&idx.to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
