//! Galerkin spaces `V_h` on (0, 1): spectral truncation or P1 finite
//! elements on a uniform mesh.
//!
//! A [`DiscreteSpace`] carries the discrete operator `A_h` through its
//! eigenpairs `(lambda_{i,h}, e_{i,h})`, with `e_{i,h}` orthonormal in `H`,
//! and the coupling `Gamma[i][k] = (e_{i,h}, e_k)` to the continuous
//! eigenbasis of the [`SpectralModel`]. Discrete vectors returned by this
//! module are coordinates in the discrete eigenbasis unless a name says
//! `nodal`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::spectral::SpectralModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceVariant {
    /// `V_h = span{e_1, ..., e_m}`.
    Spectral { modes: usize },
    /// Continuous piecewise-linear elements on `elements` uniform cells.
    FemP1 { elements: usize },
}

#[derive(Debug, Clone)]
pub struct DiscreteSpace {
    variant: SpaceVariant,
    mesh_size: f64,
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    /// Columns: nodal coordinates of `e_{i,h}`, mass-orthonormal.
    eigvecs: DMatrix<f64>,
    /// `loads[j][k] = (phi_j, e_k)` for the basis functions `phi_j`.
    loads: DMatrix<f64>,
    /// `Gamma[i][k] = (e_{i,h}, e_k)`.
    coupling: DMatrix<f64>,
    continuous_eigenvalues: Vec<f64>,
}

impl DiscreteSpace {
    /// Span of the first `m` eigenfunctions of `A`. The effective mesh size
    /// is `lambda_{m+1}^{-1/2}`.
    pub fn spectral(modes: usize, model: &SpectralModel) -> Result<Self> {
        let k = model.modes();
        if modes == 0 || modes > k {
            return Err(invalid(format!(
                "spectral space needs 1 <= m <= K = {k}, got m = {modes}"
            )));
        }
        let lambdas = &model.eigenvalues()[..modes];
        let next = if modes < k {
            model.eigenvalue(modes)
        } else {
            // extend the Dirichlet formula one mode past the truncation
            let n = (modes + 1) as f64 * PI;
            if model.domain().starts_with("dirichlet-laplacian-1d") {
                n * n
            } else {
                model.eigenvalue(k - 1)
            }
        };
        let mut loads = DMatrix::zeros(modes, k);
        for i in 0..modes {
            loads[(i, i)] = 1.0;
        }
        Ok(Self {
            variant: SpaceVariant::Spectral { modes },
            mesh_size: next.powf(-0.5),
            mass: DMatrix::identity(modes, modes),
            stiffness: DMatrix::from_diagonal(&DVector::from_column_slice(lambdas)),
            eigenvalues: DVector::from_column_slice(lambdas),
            eigvecs: DMatrix::identity(modes, modes),
            coupling: loads.clone(),
            loads,
            continuous_eigenvalues: model.eigenvalues().to_vec(),
        })
    }

    /// P1 elements on `M` uniform cells of (0, 1), Dirichlet nodes removed.
    pub fn p1(elements: usize, model: &SpectralModel) -> Result<Self> {
        if elements < 2 {
            return Err(invalid(format!(
                "P1 space needs at least 2 elements, got {elements}"
            )));
        }
        let n = elements - 1;
        let h = 1.0 / elements as f64;
        let mut mass = DMatrix::zeros(n, n);
        let mut stiffness = DMatrix::zeros(n, n);
        for j in 0..n {
            mass[(j, j)] = 4.0 * h / 6.0;
            stiffness[(j, j)] = 2.0 / h;
            if j + 1 < n {
                mass[(j, j + 1)] = h / 6.0;
                mass[(j + 1, j)] = h / 6.0;
                stiffness[(j, j + 1)] = -1.0 / h;
                stiffness[(j + 1, j)] = -1.0 / h;
            }
        }
        let (eigenvalues, eigvecs) = generalized_eigen(&stiffness, &mass)?;

        // (phi_j, sqrt(2) sin(k pi x)) for the hat phi_j centred at x_j = j h
        let k = model.modes();
        let mut loads = DMatrix::zeros(n, k);
        for kk in 1..=k {
            let w = kk as f64 * PI;
            let factor = SQRT_2 * 2.0 * (1.0 - (w * h).cos()) / (h * w * w);
            for j in 0..n {
                let x = (j + 1) as f64 * h;
                loads[(j, kk - 1)] = factor * (w * x).sin();
            }
        }
        let coupling = eigvecs.tr_mul(&loads);
        Ok(Self {
            variant: SpaceVariant::FemP1 { elements },
            mesh_size: h,
            mass,
            stiffness,
            eigenvalues,
            eigvecs,
            loads,
            coupling,
            continuous_eigenvalues: model.eigenvalues().to_vec(),
        })
    }

    pub fn variant(&self) -> SpaceVariant {
        self.variant
    }

    /// Identifier used to tag discrete-basis Gaussian states.
    pub fn id(&self) -> String {
        match self.variant {
            SpaceVariant::Spectral { modes } => format!("spectral(m={modes},K={})", self.model_modes()),
            SpaceVariant::FemP1 { elements } => format!("p1(M={elements},K={})", self.model_modes()),
        }
    }

    /// `I(h)`.
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of continuous modes `K` the coupling is built against.
    pub fn model_modes(&self) -> usize {
        self.continuous_eigenvalues.len()
    }

    /// `h` (P1) or the effective `lambda_{m+1}^{-1/2}` (spectral).
    pub fn mesh_size(&self) -> f64 {
        self.mesh_size
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    /// Discrete eigenvalues `lambda_{i,h}`, nondecreasing.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn loads(&self) -> &DMatrix<f64> {
        &self.loads
    }

    fn check_continuous(&self, f: &[f64]) -> Result<DVector<f64>> {
        if f.len() > self.model_modes() {
            return Err(Error::Dimension {
                expected: self.model_modes(),
                got: f.len(),
            });
        }
        let mut v = DVector::zeros(self.model_modes());
        v.rows_mut(0, f.len()).copy_from_slice(f);
        Ok(v)
    }

    /// Discrete eigen-coordinates of a nodal vector: `V^T M u`.
    pub fn eigen_from_nodal(&self, nodal: &DVector<f64>) -> DVector<f64> {
        self.eigvecs.tr_mul(&(&self.mass * nodal))
    }

    pub fn nodal_from_eigen(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.eigvecs * xi
    }

    /// `P_h f`: solves `mass u = (phi_j, f)`, returned in eigen-coordinates.
    pub fn ph_project(&self, f: &[f64]) -> Result<DVector<f64>> {
        let f = self.check_continuous(f)?;
        let load = &self.loads * f;
        let u = spd_solve(&self.mass, load)?;
        Ok(self.eigen_from_nodal(&u))
    }

    /// `T_h f = A_h^{-1} P_h f`: solves `stiffness u = (phi_j, f)`.
    pub fn th_solve(&self, f: &[f64]) -> Result<DVector<f64>> {
        let f = self.check_continuous(f)?;
        let load = &self.loads * f;
        let u = spd_solve(&self.stiffness, load)?;
        Ok(self.eigen_from_nodal(&u))
    }

    /// Ritz projection `Pi_h v`: `((Pi_h v - v, w_h)) = 0` for all `w_h`,
    /// i.e. `stiffness u = (A^{1/2} phi_j, A^{1/2} v)`.
    pub fn ritz_project(&self, v: &[f64]) -> Result<DVector<f64>> {
        let v = self.check_continuous(v)?;
        let weighted = DVector::from_iterator(
            v.len(),
            v.iter()
                .zip(&self.continuous_eigenvalues)
                .map(|(c, l)| c * l),
        );
        let load = &self.loads * weighted;
        let u = spd_solve(&self.stiffness, load)?;
        Ok(self.eigen_from_nodal(&u))
    }

    /// Continuous coefficients `(w_h, e_k)` of a discrete vector, `Gamma^T xi`.
    pub fn embed(&self, xi: &DVector<f64>) -> DVector<f64> {
        self.coupling.tr_mul(xi)
    }

    /// `|A_h^{s} w_h|` in eigen-coordinates.
    pub fn discrete_power_norm(&self, xi: &DVector<f64>, s: f64) -> f64 {
        xi.iter()
            .zip(self.eigenvalues.iter())
            .map(|(c, l)| l.powf(2.0 * s) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `|A^{1/2} w_h|^2` computed directly from the function, not through
    /// `A_h`: `int |w'|^2` for P1.
    pub fn energy_norm_sq(&self, xi: &DVector<f64>) -> f64 {
        match self.variant {
            SpaceVariant::Spectral { .. } => xi
                .iter()
                .zip(self.eigenvalues.iter())
                .map(|(c, l)| l * c * c)
                .sum(),
            SpaceVariant::FemP1 { .. } => {
                let u = self.nodal_from_eigen(xi);
                let h = self.mesh_size;
                let n = u.len();
                let mut acc = 0.0;
                let mut prev = 0.0;
                for j in 0..=n {
                    let cur = if j < n { u[j] } else { 0.0 };
                    acc += (cur - prev).powi(2) / h;
                    prev = cur;
                }
                acc
            }
        }
    }

    /// `|T^{1/2} w_h|^2 = (A^{-1} w_h, w_h)` with the continuous operator.
    ///
    /// For P1 this is exact: with `W(x) = int_0^x w_h`, the solution of
    /// `-z'' = w_h` has `z' = c - W` with `c = int_0^1 W`, so
    /// `(A^{-1} w, w) = int z'^2 = int W^2 - (int W)^2`. `W` is piecewise
    /// quadratic and 3-point Gauss-Legendre integrates `W^2` exactly.
    pub fn continuous_dual_norm_sq(&self, xi: &DVector<f64>) -> f64 {
        match self.variant {
            SpaceVariant::Spectral { .. } => xi
                .iter()
                .zip(self.eigenvalues.iter())
                .map(|(c, l)| c * c / l)
                .sum(),
            SpaceVariant::FemP1 { elements } => {
                let u = self.nodal_from_eigen(xi);
                let h = self.mesh_size;
                let nodal = |j: usize| if j == 0 || j == elements { 0.0 } else { u[j - 1] };
                let gauss = [
                    (-(0.6f64).sqrt(), 5.0 / 9.0),
                    (0.0, 8.0 / 9.0),
                    ((0.6f64).sqrt(), 5.0 / 9.0),
                ];
                let (mut int_w, mut int_w2, mut base) = (0.0, 0.0, 0.0);
                for e in 0..elements {
                    let (a, b) = (nodal(e), nodal(e + 1));
                    for (g, wt) in gauss {
                        let s = 0.5 * (g + 1.0) * h;
                        let prim = base + a * s + (b - a) * s * s / (2.0 * h);
                        int_w += wt * 0.5 * h * prim;
                        int_w2 += wt * 0.5 * h * prim * prim;
                    }
                    base += 0.5 * h * (a + b);
                }
                int_w2 - int_w * int_w
            }
        }
    }

    /// Max over eigenpairs of `|S v - lambda M v| / (lambda |M v|)`.
    pub fn eigen_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            let v = self.eigvecs.column(i);
            let mv = &self.mass * v;
            let r = &self.stiffness * v - &mv * self.eigenvalues[i];
            worst = worst.max(r.norm() / (self.eigenvalues[i] * mv.norm()));
        }
        worst
    }

    /// `max |V^T M V - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.eigvecs.tr_mul(&(&self.mass * &self.eigvecs));
        (g - DMatrix::identity(self.dim(), self.dim())).amax()
    }

    /// `S_h(t) P_h - S(t)` as a `K x K` matrix in the continuous basis.
    pub fn semigroup_error_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t > 0.0) {
            return Err(invalid(format!(
                "semigroup error is only bounded for t > 0, got {t}"
            )));
        }
        let mut scaled = self.coupling.clone();
        for (i, l) in self.eigenvalues.iter().enumerate() {
            scaled.row_mut(i).scale_mut((-l * t).exp());
        }
        let mut e = self.coupling.tr_mul(&scaled);
        for (k, l) in self.continuous_eigenvalues.iter().enumerate() {
            e[(k, k)] -= (-l * t).exp();
        }
        Ok(e)
    }

    /// Operator norm of `S_h(t) P_h - S(t)` from `H` into `H`
    /// (`norm_index = 0`) or into `D(A^{1/2})` (`norm_index = 1`).
    pub fn semigroup_error(&self, t: f64, norm_index: u8) -> Result<f64> {
        let mut e = self.semigroup_error_matrix(t)?;
        match norm_index {
            0 => {}
            1 => {
                for (k, l) in self.continuous_eigenvalues.iter().enumerate() {
                    e.row_mut(k).scale_mut(l.sqrt());
                }
            }
            other => return Err(invalid(format!("norm index must be 0 or 1, got {other}"))),
        }
        Ok(linalg::op_norm(&e))
    }
}

/// Solves `S v = lambda M v` for symmetric `S` and SPD `M` by reduction with
/// the Cholesky factor of `M`.
fn generalized_eigen(
    stiffness: &DMatrix<f64>,
    mass: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = Cholesky::new(mass.clone()).ok_or_else(|| invalid("mass matrix is not SPD"))?;
    let l = chol.l();
    let linv_s = l
        .solve_lower_triangular(stiffness)
        .ok_or_else(|| invalid("singular mass factor"))?;
    let reduced = l
        .solve_lower_triangular(&linv_s.transpose())
        .ok_or_else(|| invalid("singular mass factor"))?;
    let (values, w) = linalg::sym_eigen_sorted(&reduced);
    let vecs = l
        .transpose()
        .solve_upper_triangular(&w)
        .ok_or_else(|| invalid("singular mass factor"))?;
    Ok((values, vecs))
}

fn spd_solve(m: &DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let chol = Cholesky::new(m.clone()).ok_or_else(|| invalid("matrix is not SPD"))?;
    Ok(chol.solve(&rhs))
}

/// Closed-form first eigenvalue of the uniform P1 Dirichlet problem,
/// `(6/h^2)(1 - cos(pi h)) / (2 + cos(pi h))`; more generally mode `i` uses
/// `i pi h`.
pub fn p1_exact_eigenvalue(elements: usize, i: usize) -> f64 {
    let h = 1.0 / elements as f64;
    let c = (i as f64 * PI * h).cos();
    6.0 / (h * h) * (1.0 - c) / (2.0 + c)
}
