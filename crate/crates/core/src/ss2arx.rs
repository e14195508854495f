//! Equivalent state-space to ARX transformation.
//!
//! With an observer gain `L` and `M = A − LC`, the affine model
//! `x⁺ = Ax + Bu + e`, `y = Cx + h` satisfies
//!
//! ```text
//! y_k = Σ_{i=1..p} Ψ_i y_{k−i} + Σ_{i=1..p} Ω_i u_{k−i} + ζ + C M^p x_{k−p}
//! ```
//!
//! with `Ψ_i = C M^{i−1} L`, `Ω_i = C M^{i−1} B` and
//! `ζ = Σ C M^{i−1} (e − L h) + h`. Placing the eigenvalues of `M` at (or
//! near) zero makes the last term vanish (or become negligible), giving an
//! ARX model of order `p`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linearization::LinearSsModel;

/// Multivariable ARX model
/// `y_k = Σ Ψ_i y_{k−i} + Σ Ω_i u_{k−i} + ζ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxModel {
    pub psi: Vec<DMatrix<f64>>,
    pub omega: Vec<DMatrix<f64>>,
    pub zeta: DVector<f64>,
}

impl ArxModel {
    pub fn new(
        psi: Vec<DMatrix<f64>>,
        omega: Vec<DMatrix<f64>>,
        zeta: DVector<f64>,
    ) -> Result<Self> {
        let model = Self { psi, omega, zeta };
        model.validate()?;
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.psi.len()
    }

    pub fn n_y(&self) -> usize {
        self.zeta.len()
    }

    pub fn n_u(&self) -> usize {
        self.omega.first().map_or(0, |m| m.ncols())
    }

    /// Length of one channel's parameter vector, `p (n_y + n_u) + 1`.
    pub fn theta_len(&self) -> usize {
        theta_len(self.order(), self.n_y(), self.n_u())
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.psi.len();
        if p == 0 {
            return Err(Error::InvalidArgument(
                "ARX order must be at least 1".into(),
            ));
        }
        check_len("ARX Omega count", p, self.omega.len())?;
        let n_y = self.zeta.len();
        let n_u = self.omega[0].ncols();
        for (psi, omega) in self.psi.iter().zip(&self.omega) {
            check_len("Psi rows", n_y, psi.nrows())?;
            check_len("Psi cols", n_y, psi.ncols())?;
            check_len("Omega rows", n_y, omega.nrows())?;
            check_len("Omega cols", n_u, omega.ncols())?;
        }
        let finite = self
            .psi
            .iter()
            .chain(&self.omega)
            .all(|m| m.iter().all(|v| v.is_finite()))
            && self.zeta.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument(
                "ARX model has non-finite coefficients".into(),
            ));
        }
        Ok(())
    }
}

pub fn theta_len(p: usize, n_y: usize, n_u: usize) -> usize {
    p * (n_y + n_u) + 1
}

/// Per-output parameter vectors
/// `θ(j) = [Ψ₁(j,:), …, Ψ_p(j,:), Ω₁(j,:), …, Ω_p(j,:), ζ(j)]`.
pub fn flatten_theta(arx: &ArxModel) -> Vec<DVector<f64>> {
    let (p, n_y, n_u) = (arx.order(), arx.n_y(), arx.n_u());
    (0..n_y)
        .map(|j| {
            let mut theta = Vec::with_capacity(theta_len(p, n_y, n_u));
            for psi in &arx.psi {
                theta.extend(psi.row(j).iter());
            }
            for omega in &arx.omega {
                theta.extend(omega.row(j).iter());
            }
            theta.push(arx.zeta[j]);
            DVector::from_vec(theta)
        })
        .collect()
}

/// Inverse of [`flatten_theta`].
pub fn unflatten_theta(
    theta: &[DVector<f64>],
    p: usize,
    n_y: usize,
    n_u: usize,
) -> Result<ArxModel> {
    check_len("theta channel count", n_y, theta.len())?;
    let len = theta_len(p, n_y, n_u);
    let mut psi = vec![DMatrix::zeros(n_y, n_y); p];
    let mut omega = vec![DMatrix::zeros(n_y, n_u); p];
    let mut zeta = DVector::zeros(n_y);
    for (j, th) in theta.iter().enumerate() {
        check_len("theta length", len, th.len())?;
        let mut at = 0;
        for m in psi.iter_mut() {
            for c in 0..n_y {
                m[(j, c)] = th[at];
                at += 1;
            }
        }
        for m in omega.iter_mut() {
            for c in 0..n_u {
                m[(j, c)] = th[at];
                at += 1;
            }
        }
        zeta[j] = th[at];
    }
    ArxModel::new(psi, omega, zeta)
}

/// `φ = [y_{k−1}ᵀ, …, y_{k−p}ᵀ, u_{k−1}ᵀ, …, u_{k−p}ᵀ, 1]ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor(DVector<f64>);

impl Regressor {
    /// Builds the regressor from the `p` most recent outputs and inputs, most
    /// recent first.
    pub fn new(outputs: &[DVector<f64>], inputs: &[DVector<f64>]) -> Result<Self> {
        check_len("regressor input history", outputs.len(), inputs.len())?;
        let n_y = outputs.first().map_or(0, |y| y.len());
        let n_u = inputs.first().map_or(0, |u| u.len());
        let mut phi = Vec::with_capacity(theta_len(outputs.len(), n_y, n_u));
        for y in outputs {
            check_len("regressor output", n_y, y.len())?;
            phi.extend(y.iter());
        }
        for u in inputs {
            check_len("regressor input", n_u, u.len())?;
            phi.extend(u.iter());
        }
        phi.push(1.0);
        Ok(Self(DVector::from_vec(phi)))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sliding window of the last `p` measured outputs and applied inputs, most
/// recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxHistory {
    outputs: VecDeque<DVector<f64>>,
    inputs: VecDeque<DVector<f64>>,
}

impl ArxHistory {
    /// History padded with `p` copies of an operating point.
    pub fn constant(p: usize, y: &DVector<f64>, u: &DVector<f64>) -> Self {
        Self {
            outputs: std::iter::repeat(y.clone()).take(p).collect(),
            inputs: std::iter::repeat(u.clone()).take(p).collect(),
        }
    }

    /// History from explicit windows, most recent first.
    pub fn from_windows(outputs: Vec<DVector<f64>>, inputs: Vec<DVector<f64>>) -> Result<Self> {
        check_len("history input window", outputs.len(), inputs.len())?;
        if outputs.is_empty() {
            return Err(Error::InvalidArgument(
                "history must hold at least one sample".into(),
            ));
        }
        Ok(Self {
            outputs: outputs.into(),
            inputs: inputs.into(),
        })
    }

    pub fn order(&self) -> usize {
        self.outputs.len()
    }

    pub fn push_output(&mut self, y: DVector<f64>) {
        self.outputs.pop_back();
        self.outputs.push_front(y);
    }

    pub fn push_input(&mut self, u: DVector<f64>) {
        self.inputs.pop_back();
        self.inputs.push_front(u);
    }

    /// `i`-th most recent output, `i = 0` being the newest.
    pub fn output(&self, i: usize) -> &DVector<f64> {
        &self.outputs[i]
    }

    /// `i`-th most recent input, `i = 0` being the newest.
    pub fn input(&self, i: usize) -> &DVector<f64> {
        &self.inputs[i]
    }

    pub fn regressor(&self) -> Regressor {
        let outputs: Vec<_> = self.outputs.iter().cloned().collect();
        let inputs: Vec<_> = self.inputs.iter().cloned().collect();
        Regressor::new(&outputs, &inputs).expect("history windows have equal length")
    }
}

/// `y = Θ φ`.
pub fn arx_predict(arx: &ArxModel, phi: &Regressor) -> Result<DVector<f64>> {
    check_len("regressor length", arx.theta_len(), phi.len())?;
    let (p, n_y, n_u) = (arx.order(), arx.n_y(), arx.n_u());
    let v = phi.as_vector();
    let mut y = arx.zeta.clone();
    for i in 0..p {
        y += &arx.psi[i] * v.rows(i * n_y, n_y);
        y += &arx.omega[i] * v.rows(p * n_y + i * n_u, n_u);
    }
    Ok(y)
}

/// Observer gain with its closed-loop matrix `A − LC`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDesign {
    pub gain: DMatrix<f64>,
    pub poles: Vec<f64>,
    pub closed_loop: DMatrix<f64>,
    /// `‖(A − LC)^{n_x}‖₂`.
    pub residual_norm: f64,
}

impl ObserverDesign {
    /// `‖(A − LC)^p‖₂`.
    pub fn residual_norm_at(&self, p: usize) -> f64 {
        spectral_norm(&matrix_power(&self.closed_loop, p))
    }
}

pub(crate) fn matrix_power(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// `[C; CA; …; CA^{n−1}]`.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let n_y = c.nrows();
    let mut obs = DMatrix::zeros(n * n_y, n);
    let mut block = c.clone();
    for i in 0..n {
        obs.view_mut((i * n_y, 0), (n_y, n)).copy_from(&block);
        block = &block * a;
    }
    obs
}

pub fn observability_rank(a: &DMatrix<f64>, c: &DMatrix<f64>) -> usize {
    let obs = observability_matrix(a, c);
    let sv = obs.svd(false, false).singular_values;
    let tol = sv.max() * 1e-10;
    sv.iter().filter(|s| **s > tol).count()
}

/// Single-output pole placement by Ackermann's formula on the dual system:
/// `L = φ(A) O⁻¹ eₙ` with `φ(z) = Π (z − pᵢ)`.
pub fn place_observer_gain(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    poles: &[f64],
) -> Result<ObserverDesign> {
    let n = a.nrows();
    check_len("A columns", n, a.ncols())?;
    check_len("C columns", n, c.ncols())?;
    if c.nrows() != 1 {
        return Err(Error::UnsupportedDimension(format!(
            "observer pole placement supports a single output, got n_y = {}",
            c.nrows()
        )));
    }
    check_len("observer pole count", n, poles.len())?;
    let rank = observability_rank(a, c);
    if rank < n {
        return Err(Error::Unobservable { rank, n_x: n });
    }

    let obs = observability_matrix(a, c);
    let mut e_n = DVector::zeros(n);
    e_n[n - 1] = 1.0;
    let w = obs.lu().solve(&e_n).ok_or(Error::Unobservable {
        rank: n - 1,
        n_x: n,
    })?;
    let mut phi_a = DMatrix::<f64>::identity(n, n);
    for &pole in poles {
        phi_a = &phi_a * (a - DMatrix::identity(n, n) * pole);
    }
    let gain: DVector<f64> = phi_a * w;
    let gain = DMatrix::from_column_slice(n, 1, gain.as_slice());
    let closed_loop = a - &gain * c;
    let residual_norm = spectral_norm(&matrix_power(&closed_loop, n));
    Ok(ObserverDesign {
        gain,
        poles: poles.to_vec(),
        closed_loop,
        residual_norm,
    })
}

/// Observer-theory transformation to an order-`p` ARX model.
pub fn ss_to_arx(model: &LinearSsModel, gain: &DMatrix<f64>, p: usize) -> Result<ArxModel> {
    model.validate()?;
    if p == 0 {
        return Err(Error::InvalidArgument(
            "ARX order must be at least 1".into(),
        ));
    }
    check_len("observer gain rows", model.n_x(), gain.nrows())?;
    check_len("observer gain cols", model.n_y(), gain.ncols())?;
    let m = &model.a - gain * &model.c;
    let drift = &model.e - gain * &model.h;
    let mut psi = Vec::with_capacity(p);
    let mut omega = Vec::with_capacity(p);
    let mut zeta = model.h.clone();
    // c_pow = C M^{i-1}
    let mut c_pow = model.c.clone();
    for _ in 0..p {
        psi.push(&c_pow * gain);
        omega.push(&c_pow * &model.b);
        zeta += &c_pow * &drift;
        c_pow = &c_pow * &m;
    }
    ArxModel::new(psi, omega, zeta)
}

/// Coefficients `α₁…αₙ` with `det(zI − A) = zⁿ − α₁ zⁿ⁻¹ − … − αₙ`
/// (Faddeev–LeVerrier recursion).
pub fn characteristic_coefficients(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    // monic coefficients c_{n-1}, …, c_0 of zⁿ + c_{n-1} z^{n-1} + … + c_0
    let mut coeffs = Vec::with_capacity(n);
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut prev = 1.0;
    for k in 1..=n {
        m = a * &m + &eye * prev;
        let ck = -(a * &m).trace() / k as f64;
        coeffs.push(ck);
        prev = ck;
    }
    coeffs.into_iter().map(|c| -c).collect()
}

/// Cayley–Hamilton transformation to an ARX model of order `n_x`. Unique, but
/// sensitive to noise; used as a validation reference.
pub fn ss_to_arx_cayley(model: &LinearSsModel) -> Result<ArxModel> {
    model.validate()?;
    let n = model.n_x();
    let (n_y, n_u) = (model.n_y(), model.n_u());
    let alpha = characteristic_coefficients(&model.a);
    // β₀ = 1, βᵢ = −αᵢ, so Σ βᵢ A^{n−i} = 0.
    let beta: Vec<f64> = std::iter::once(1.0)
        .chain(alpha.iter().map(|a| -a))
        .collect();

    // Markov-like blocks C A^j B and C A^j e for j < n.
    let mut ca = Vec::with_capacity(n);
    let mut block = model.c.clone();
    for _ in 0..n {
        ca.push(block.clone());
        block = &block * &model.a;
    }

    let psi: Vec<DMatrix<f64>> = alpha
        .iter()
        .map(|&a| DMatrix::identity(n_y, n_y) * a)
        .collect();

    // Ω_m = Σ_{i=0}^{m−1} β_i C A^{m−1−i} B
    let omega: Vec<DMatrix<f64>> = (1..=n)
        .map(|m| {
            (0..m).fold(DMatrix::zeros(n_y, n_u), |acc, i| {
                acc + &ca[m - 1 - i] * &model.b * beta[i]
            })
        })
        .collect();

    // ζ = Σ_{i=0}^{n−1} β_i Σ_{j=1}^{n−i} C A^{j−1} e + h Σ_{i=0}^{n} β_i
    let mut zeta = &model.h * beta.iter().sum::<f64>();
    for (i, &b) in beta.iter().enumerate().take(n) {
        for j in 1..=(n - i) {
            zeta += &ca[j - 1] * &model.e * b;
        }
    }
    ArxModel::new(psi, omega, zeta)
}
