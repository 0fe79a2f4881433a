//! Exact Gaussian laws of the mild solution `X_T` and of the fully discrete
//! theta-scheme solution `X_h^N`, and the weak and strong errors computed from
//! them without sampling.
//!
//! In the continuous eigenbasis the mild solution is
//! `X_T = S(T) x + int_0^T S(T - s) Q^{1/2} dW_s`, whose covariance follows
//! from the Ito isometry entrywise:
//! `C_ij = Q_ij (1 - exp(-(l_i + l_j) T)) / (l_i + l_j)`.
//!
//! In the discrete eigenbasis the scheme reads
//! `xi^{n+1}_i = F_i xi^n_i + sqrt(dt) G_i (P_h Q^{1/2} chi^{n+1})_i` with
//! `F_i = F(l_{i,h} dt)` and `G_i = (1 + theta dt l_{i,h})^{-1}`, so its
//! covariance is a geometric sum that also has a closed form.

use nalgebra::{DMatrix, DVector};

use crate::covariance::CovarianceModel;
use crate::error::{invalid, Error, Result};
use crate::fem1d::DiscreteSpace;
use crate::spectral::{SpectralModel, ThetaScheme};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Basis {
    /// First `K` eigenfunctions of `A`.
    Continuous { modes: usize },
    /// Eigenbasis of `A_h` for the space with this id.
    Discrete { space: String },
}

/// Mean and covariance of a Gaussian vector in a tagged basis.
#[derive(Debug, Clone)]
pub struct GaussianState {
    pub basis: Basis,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `E |X|^2_H`; the bases used here are `H`-orthonormal.
    pub fn second_moment(&self) -> f64 {
        self.mean.norm_squared() + self.cov.trace()
    }
}

/// Test functionals with closed-form Gaussian expectations. `g` lives in the
/// continuous eigenbasis and has finitely many nonzero modes.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// `cos((g, x) + phase)`: bounded with bounded first and second
    /// derivatives.
    Cosine { g: Vec<f64>, phase: f64 },
    /// `(g, x)`. Diagnostic only: unbounded.
    Linear { g: Vec<f64> },
    /// `(g, x)^2`. Diagnostic only: unbounded.
    Quadratic { g: Vec<f64> },
}

impl Functional {
    pub fn cosine(g: Vec<f64>, phase: f64) -> Self {
        Functional::Cosine { g, phase }
    }

    /// `cos((e_mode, x) + phase)` for a 1-based mode index.
    pub fn cosine_mode(mode: usize, phase: f64) -> Self {
        let mut g = vec![0.0; mode.max(1)];
        g[mode.max(1) - 1] = 1.0;
        Functional::Cosine { g, phase }
    }

    /// `cos(sum_{k <= band} x_k + phase)`: weights every retained mode equally.
    pub fn cosine_band(band: usize, phase: f64) -> Self {
        Functional::Cosine {
            g: vec![1.0; band],
            phase,
        }
    }

    pub fn direction(&self) -> &[f64] {
        match self {
            Functional::Cosine { g, .. } | Functional::Linear { g } | Functional::Quadratic { g } => g,
        }
    }

    /// Whether the functional is in the bounded-C^2 class the weak rate is
    /// stated for.
    pub fn is_bounded_c2(&self) -> bool {
        matches!(self, Functional::Cosine { .. })
    }

    /// Evaluates the functional at a point given in the same basis as `g`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let dot: f64 = self.direction().iter().zip(x).map(|(a, b)| a * b).sum();
        match self {
            Functional::Cosine { phase, .. } => (dot + phase).cos(),
            Functional::Linear { .. } => dot,
            Functional::Quadratic { .. } => dot * dot,
        }
    }

    /// Closed-form `E phi(Y)` for `Y ~ N(mean, cov)` and direction `g`
    /// already expressed in the state's basis.
    fn expect_with(&self, g: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let m = g.dot(mean);
        let v = g.dot(&(cov * g));
        match self {
            Functional::Cosine { phase, .. } => (m + phase).cos() * (-0.5 * v).exp(),
            Functional::Linear { .. } => m,
            Functional::Quadratic { .. } => m * m + v,
        }
    }
}

fn padded(x: &[f64], len: usize) -> Result<DVector<f64>> {
    if x.len() > len {
        return Err(Error::Dimension {
            expected: len,
            got: x.len(),
        });
    }
    let mut v = DVector::zeros(len);
    v.rows_mut(0, x.len()).copy_from_slice(x);
    Ok(v)
}

fn check_modes(model: &SpectralModel, q: &CovarianceModel) -> Result<()> {
    if q.modes() != model.modes() {
        return Err(Error::Dimension {
            expected: model.modes(),
            got: q.modes(),
        });
    }
    Ok(())
}

/// Stochastic convolution covariance over a window of length `tau`:
/// `C_ij = Q_ij (1 - exp(-(l_i + l_j) tau)) / (l_i + l_j)`.
pub fn convolution_covariance(model: &SpectralModel, q: &CovarianceModel, tau: f64) -> DMatrix<f64> {
    let l = model.eigenvalues();
    let k = model.modes();
    DMatrix::from_fn(k, k, |i, j| {
        let qij = q.matrix()[(i, j)];
        if qij == 0.0 {
            return 0.0;
        }
        let s = l[i] + l[j];
        -qij * (-s * tau).exp_m1() / s
    })
}

/// Law of the mild solution at time `horizon` started from coefficients `x`.
pub fn continuous_law(
    model: &SpectralModel,
    q: &CovarianceModel,
    x: &[f64],
    horizon: f64,
) -> Result<GaussianState> {
    check_modes(model, q)?;
    if !(horizon >= 0.0) {
        return Err(invalid("final time must be nonnegative"));
    }
    let x = padded(x, model.modes())?;
    let mean = DVector::from_vec(model.semigroup_apply(horizon, x.as_slice())?);
    Ok(GaussianState {
        basis: Basis::Continuous {
            modes: model.modes(),
        },
        mean,
        cov: convolution_covariance(model, q, horizon),
    })
}

/// Covariance of `P_h Q^{1/2} chi` in the discrete eigenbasis:
/// `Gamma Q Gamma^T`. For white noise this is exactly the identity on `V_h`
/// (`P_h P_h^*` restricted to `V_h`), independent of the truncation `K`.
pub fn projected_noise(space: &DiscreteSpace, q: &CovarianceModel) -> Result<DMatrix<f64>> {
    if q.modes() != space.model_modes() {
        return Err(Error::Dimension {
            expected: space.model_modes(),
            got: q.modes(),
        });
    }
    if q.is_white() {
        return Ok(DMatrix::identity(space.dim(), space.dim()));
    }
    let gamma = space.coupling();
    Ok(gamma * q.matrix() * gamma.transpose())
}

/// `sum_{k=0}^{n-1} r^k` given `one_minus_r = 1 - r` computed without
/// cancellation.
pub(crate) fn geometric_sum(r: f64, one_minus_r: f64, n: usize) -> f64 {
    if one_minus_r == 0.0 {
        return n as f64;
    }
    if r.abs() >= 1.0 {
        // only reachable with theta <= 1/2
        let mut acc = 0.0;
        let mut p = 1.0;
        for _ in 0..n {
            acc += p;
            p *= r;
        }
        return acc;
    }
    let one_minus_rn = if r > 0.0 {
        -((n as f64) * (-one_minus_r).ln_1p()).exp_m1()
    } else {
        1.0 - r.powi(n as i32)
    };
    one_minus_rn / one_minus_r
}

/// Per-mode scheme coefficients `F_i`, `1 - F_i` and `G_i`.
pub(crate) struct SchemeFactors {
    pub f: Vec<f64>,
    pub one_minus_f: Vec<f64>,
    pub g: Vec<f64>,
}

pub(crate) fn scheme_factors(eigenvalues: &[f64], scheme: &ThetaScheme) -> SchemeFactors {
    let theta = scheme.theta();
    let dt = scheme.dt();
    let mut f = Vec::with_capacity(eigenvalues.len());
    let mut one_minus_f = Vec::with_capacity(eigenvalues.len());
    let mut g = Vec::with_capacity(eigenvalues.len());
    for &l in eigenvalues {
        let z = l * dt;
        let denom = 1.0 + theta * z;
        f.push((1.0 - (1.0 - theta) * z) / denom);
        one_minus_f.push(z / denom);
        g.push(1.0 / denom);
    }
    SchemeFactors { f, one_minus_f, g }
}

/// Law of `X_h^N`:
/// `mean_i = F_i^N (P_h x)_i`,
/// `cov_ij = dt G_i G_j (Gamma Q Gamma^T)_ij (1 - (F_i F_j)^N) / (1 - F_i F_j)`.
pub fn discrete_law(
    space: &DiscreteSpace,
    q: &CovarianceModel,
    scheme: &ThetaScheme,
    x: &[f64],
) -> Result<GaussianState> {
    let qh = projected_noise(space, q)?;
    let lambdas = space.eigenvalues().as_slice();
    let SchemeFactors { f, one_minus_f, g } = scheme_factors(lambdas, scheme);
    let n = scheme.steps();
    let px = space.ph_project(x)?;
    let mean = DVector::from_iterator(
        space.dim(),
        px.iter().zip(&f).map(|(p, fi)| p * fi.powi(n as i32)),
    );
    let dt = scheme.dt();
    let cov = DMatrix::from_fn(space.dim(), space.dim(), |i, j| {
        let qij = qh[(i, j)];
        if qij == 0.0 {
            return 0.0;
        }
        let r = f[i] * f[j];
        let d = one_minus_f[i] + one_minus_f[j] - one_minus_f[i] * one_minus_f[j];
        dt * g[i] * g[j] * qij * geometric_sum(r, d, n)
    });
    Ok(GaussianState {
        basis: Basis::Discrete { space: space.id() },
        mean,
        cov: crate::linalg::symmetrize(&cov),
    })
}

/// Law of the space-discrete, time-continuous solution `X_h(T)`:
/// `mean_i = exp(-l_{i,h} T) (P_h x)_i`,
/// `cov_ij = (Gamma Q Gamma^T)_ij (1 - exp(-(l_{i,h} + l_{j,h}) T)) / (l_{i,h} + l_{j,h})`.
pub fn semidiscrete_law(
    space: &DiscreteSpace,
    q: &CovarianceModel,
    x: &[f64],
    horizon: f64,
) -> Result<GaussianState> {
    let qh = projected_noise(space, q)?;
    let l = space.eigenvalues();
    let px = space.ph_project(x)?;
    let mean = DVector::from_iterator(
        space.dim(),
        px.iter().zip(l.iter()).map(|(p, li)| p * (-li * horizon).exp()),
    );
    let cov = DMatrix::from_fn(space.dim(), space.dim(), |i, j| {
        let s = l[i] + l[j];
        -qh[(i, j)] * (-s * horizon).exp_m1() / s
    });
    Ok(GaussianState {
        basis: Basis::Discrete { space: space.id() },
        mean,
        cov: crate::linalg::symmetrize(&cov),
    })
}

/// Closed-form `E phi` under `state`. For a discrete-basis state the
/// direction is mapped by `(g, X_h) = (Gamma g) . xi`, so `space` must be the
/// space the state was computed on.
pub fn expect_functional(
    state: &GaussianState,
    phi: &Functional,
    space: Option<&DiscreteSpace>,
) -> Result<f64> {
    let g = match &state.basis {
        Basis::Continuous { modes } => padded(phi.direction(), *modes)?,
        Basis::Discrete { space: id } => {
            let space = space.ok_or_else(|| invalid("discrete state needs its space"))?;
            if &space.id() != id {
                return Err(invalid(format!(
                    "state belongs to {id}, got space {}",
                    space.id()
                )));
            }
            let gk = padded(phi.direction(), space.model_modes())?;
            space.coupling() * gk
        }
    };
    Ok(phi.expect_with(&g, &state.mean, &state.cov))
}

/// `|E phi(X_h^N) - E phi(X_T)|`, exact.
pub fn weak_error(
    model: &SpectralModel,
    space: &DiscreteSpace,
    q: &CovarianceModel,
    scheme: &ThetaScheme,
    x: &[f64],
    phi: &Functional,
) -> Result<f64> {
    let cont = continuous_law(model, q, x, scheme.horizon())?;
    let disc = discrete_law(space, q, scheme, x)?;
    let ec = expect_functional(&cont, phi, None)?;
    let ed = expect_functional(&disc, phi, Some(space))?;
    Ok((ed - ec).abs())
}

/// `E |X_h^N - X_T|_H^2` for the pair driven by the same Wiener process.
///
/// Expands as `|m_h - m_T|^2 + Tr C_h + Tr C_T - 2 E(U_h, U_T)`. The cross
/// term pairs the discrete kernel `F_i^{N-k-1} G_i` on step `k` with
/// `int_{t_k}^{t_{k+1}} exp(-l_j (T - s)) ds` and the coupling
/// `(Gamma Q)_ij`; the sum over steps is geometric with ratio
/// `F_i exp(-l_j dt)`.
pub fn strong_error_sq(
    model: &SpectralModel,
    space: &DiscreteSpace,
    q: &CovarianceModel,
    scheme: &ThetaScheme,
    x: &[f64],
) -> Result<f64> {
    let horizon = scheme.horizon();
    let cont = continuous_law(model, q, x, horizon)?;
    let disc = discrete_law(space, q, scheme, x)?;

    let embedded_mean = space.embed(&disc.mean);
    let mean_part =
        disc.mean.norm_squared() - 2.0 * embedded_mean.dot(&cont.mean) + cont.mean.norm_squared();

    let cross = cross_covariance_trace(model, space, q, scheme);
    let total = mean_part + disc.cov.trace() + cont.cov.trace() - 2.0 * cross;
    Ok(total.max(0.0))
}

/// `E (U_h^N, U_T)_H` for the centred parts.
fn cross_covariance_trace(
    model: &SpectralModel,
    space: &DiscreteSpace,
    q: &CovarianceModel,
    scheme: &ThetaScheme,
) -> f64 {
    let gamma = space.coupling();
    let gq = gamma * q.matrix();
    let SchemeFactors { f, one_minus_f, g } = scheme_factors(space.eigenvalues().as_slice(), scheme);
    let dt = scheme.dt();
    let n = scheme.steps();
    let lam = model.eigenvalues();
    let mut acc = 0.0;
    for j in 0..model.modes() {
        // int over one step of exp(-l_j (T - s)), up to the factor exp(-l_j m dt)
        let one_minus_e = -(-lam[j] * dt).exp_m1();
        let step_integral = one_minus_e / lam[j];
        let e = 1.0 - one_minus_e;
        for i in 0..space.dim() {
            let w = gamma[(i, j)] * gq[(i, j)];
            if w == 0.0 {
                continue;
            }
            let rho = f[i] * e;
            let d = one_minus_f[i] + f[i] * one_minus_e;
            acc += w * g[i] * step_integral * geometric_sum(rho, d, n);
        }
    }
    acc
}

/// `v(T - t, y) = E phi(y + int_t^T S(T - s) Q^{1/2} dW_s)`, the solution of
/// the backward Kolmogorov equation through its Gaussian representation.
pub fn kolmogorov_value(
    model: &SpectralModel,
    q: &CovarianceModel,
    horizon: f64,
    t: f64,
    y: &[f64],
    phi: &Functional,
) -> Result<f64> {
    check_modes(model, q)?;
    if !(0.0..=horizon).contains(&t) {
        return Err(invalid(format!("t = {t} outside [0, {horizon}]")));
    }
    let state = GaussianState {
        basis: Basis::Continuous {
            modes: model.modes(),
        },
        mean: padded(y, model.modes())?,
        cov: convolution_covariance(model, q, horizon - t),
    };
    expect_functional(&state, phi, None)
}

/// `||(S_h(N dt) - S_{h,dt}^N) P_h|| = sup_i |exp(-N z_i) - F(z_i)^N|` over
/// the discrete spectrum, `z_i = l_{i,h} dt`.
pub fn deterministic_error_norm(space: &DiscreteSpace, scheme: &ThetaScheme) -> f64 {
    let n = scheme.steps();
    let SchemeFactors { f, .. } = scheme_factors(space.eigenvalues().as_slice(), scheme);
    space
        .eigenvalues()
        .iter()
        .zip(&f)
        .map(|(l, fi)| ((-l * scheme.horizon()).exp() - fi.powi(n as i32)).abs())
        .fold(0.0, f64::max)
}

/// `M_n(t) = sup_i |F_i^{N-n-1} G_i - exp(-l_{i,h} (T - t))| l_{i,h}^{(1-gamma1)/2}`,
/// the kernel mismatch on `[t_n, t_{n+1})` measured in `D(A_h^{(1-gamma1)/2})`.
pub fn kernel_gap_mn(
    discrete_eigenvalues: &[f64],
    scheme: &ThetaScheme,
    gamma1: f64,
    step: usize,
    t: f64,
) -> Result<f64> {
    let n_steps = scheme.steps();
    if step + 1 > n_steps {
        return Err(invalid(format!("step {step} outside 0..{n_steps}")));
    }
    let power = scheme.steps() - step - 1;
    let horizon = scheme.horizon();
    let SchemeFactors { f, g, .. } = scheme_factors(discrete_eigenvalues, scheme);
    Ok(discrete_eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let discrete = f[i].powi(power as i32) * g[i];
            (discrete - (-l * (horizon - t)).exp()).abs() * l.powf((1.0 - gamma1) / 2.0)
        })
        .fold(0.0, f64::max))
}

/// Right-hand side `dt^{gamma/2} ((N - n - 1) dt)^{-(1 - gamma1 + gamma)/2}`
/// of the bound on [`kernel_gap_mn`] (without the constant).
pub fn kernel_gap_bound_shape(scheme: &ThetaScheme, gamma: f64, gamma1: f64, step: usize) -> f64 {
    let dt = scheme.dt();
    let remaining = (scheme.steps() - step - 1) as f64 * dt;
    dt.powf(gamma / 2.0) * remaining.powf(-(1.0 - gamma1 + gamma) / 2.0)
}
