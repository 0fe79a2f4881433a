//! Spectral representation of the self-adjoint operator `A`.
//!
//! All vectors are coefficient vectors in the eigenbasis `(e_n)` of `A`;
//! functions on the physical domain never appear here. Fractional powers and
//! the semigroup `S(t) = exp(-tA)` act diagonally on coefficients.

use std::f64::consts::{E, PI};

use crate::error::{invalid, Error, Result};

/// Eigen-structure of `A`: `A e_n = lambda_n e_n`, truncated to the first `K`
/// modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    eigenvalues: Vec<f64>,
    domain: String,
}

impl SpectralModel {
    /// Negative Dirichlet Laplacian on (0, 1): `lambda_n = (n pi)^2` with
    /// eigenfunctions `sqrt(2) sin(n pi x)`.
    pub fn dirichlet_laplacian_1d(modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(invalid("mode count must be at least 1"));
        }
        let eigenvalues = (1..=modes)
            .map(|n| {
                let k = n as f64 * PI;
                k * k
            })
            .collect();
        Ok(Self {
            eigenvalues,
            domain: "dirichlet-laplacian-1d on (0,1)".to_string(),
        })
    }

    /// Arbitrary positive nondecreasing spectrum.
    pub fn from_eigenvalues(eigenvalues: Vec<f64>, domain: impl Into<String>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(invalid("mode count must be at least 1"));
        }
        if !(eigenvalues[0] > 0.0) {
            return Err(invalid("smallest eigenvalue must be positive"));
        }
        if eigenvalues.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(invalid("eigenvalues must be nondecreasing"));
        }
        Ok(Self {
            eigenvalues,
            domain: domain.into(),
        })
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, n: usize) -> f64 {
        self.eigenvalues[n]
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    fn is_dirichlet_1d(&self) -> bool {
        self.domain.starts_with("dirichlet-laplacian-1d")
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() > self.modes() {
            return Err(Error::Dimension {
                expected: self.modes(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `|A^{s/2} u| = (sum lambda_n^s u_n^2)^{1/2}`. Negative `s` gives the
    /// dual norm of `D(A^{-s/2})`.
    pub fn frac_power_norm(&self, u: &[f64], s: f64) -> Result<f64> {
        self.check_len(u)?;
        let sum: f64 = u
            .iter()
            .zip(&self.eigenvalues)
            .map(|(&c, &l)| l.powf(s) * c * c)
            .sum();
        Ok(sum.sqrt())
    }

    /// `S(t) u = exp(-tA) u`.
    pub fn semigroup_apply(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(invalid(format!("semigroup time must be >= 0, got {t}")));
        }
        self.check_len(u)?;
        Ok(u
            .iter()
            .zip(&self.eigenvalues)
            .map(|(&c, &l)| c * (-l * t).exp())
            .collect())
    }

    /// `A^s` applied to coefficients.
    pub fn power_apply(&self, s: f64, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        Ok(u
            .iter()
            .zip(&self.eigenvalues)
            .map(|(&c, &l)| c * l.powf(s))
            .collect())
    }

    /// `Tr(A^{-alpha})` split into the retained modes and a rigorous bound on
    /// the discarded tail.
    ///
    /// The tail bound uses integral comparison for the 1-D Dirichlet spectrum:
    /// `sum_{n>K} (n pi)^{-2 alpha} <= pi^{-2 alpha} K^{1-2 alpha} / (2 alpha - 1)`.
    /// For other spectra no tail bound is known and `tail_bound` is infinite.
    pub fn trace_frac(&self, alpha: f64) -> Result<TraceEstimate> {
        if !(alpha > 0.0) {
            return Err(invalid("trace exponent alpha must be positive"));
        }
        if self.is_dirichlet_1d() && alpha <= 0.5 {
            return Ok(TraceEstimate::Divergent { alpha });
        }
        let finite_part: f64 = self.eigenvalues.iter().rev().map(|l| l.powf(-alpha)).sum();
        let tail_bound = if self.is_dirichlet_1d() {
            let k = self.modes() as f64;
            PI.powf(-2.0 * alpha) * k.powf(1.0 - 2.0 * alpha) / (2.0 * alpha - 1.0)
        } else {
            f64::INFINITY
        };
        Ok(TraceEstimate::Finite {
            finite_part,
            tail_bound,
        })
    }
}

/// Outcome of [`SpectralModel::trace_frac`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceEstimate {
    Finite { finite_part: f64, tail_bound: f64 },
    /// `Tr(A^{-alpha})` is infinite for this spectrum.
    Divergent { alpha: f64 },
}

impl TraceEstimate {
    pub fn is_divergent(&self) -> bool {
        matches!(self, TraceEstimate::Divergent { .. })
    }
}

/// Optimal constant in `sup_{x>=0} x^s e^{-tx} <= C(s) t^{-s}`: `C(s) = (s/e)^s`.
pub fn smoothing_constant(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        (s / E).powf(s)
    }
}

/// Amplification factor of the theta-scheme,
/// `F(z) = (1 - (1 - theta) z) / (1 + theta z)`.
pub fn theta_amplification(theta: f64, z: f64) -> f64 {
    (1.0 - (1.0 - theta) * z) / (1.0 + theta * z)
}

/// `lim_{z -> inf} F(z) = -(1 - theta) / theta`.
pub fn amplification_at_infinity(theta: f64) -> f64 {
    -(1.0 - theta) / theta
}

const LEROUX_GRID: usize = 1 << 14;
const LEROUX_LOG_MIN: f64 = -6.0;
const LEROUX_LOG_MAX: f64 = 6.0;

/// `sup_{z >= 0} |exp(-N z) - F(z)^N|`.
///
/// Dense scan over `2^14` log-spaced points in `[1e-6, 1e6]`, then a
/// golden-section refinement between the neighbours of the grid maximizer.
/// The `z -> inf` limit `|F(inf)|^N` is included since for `theta < 1` the
/// supremum can be approached only asymptotically.
pub fn leroux_gap(theta: f64, steps: usize) -> Result<f64> {
    if !(theta > 0.5 && theta <= 1.0) {
        return Err(invalid(format!(
            "leroux_gap needs 1/2 < theta <= 1, got {theta}"
        )));
    }
    if steps == 0 {
        return Err(invalid("step count must be positive"));
    }
    let n = steps as i32;
    let gap = |log_z: f64| {
        let z = 10f64.powf(log_z);
        ((-(steps as f64) * z).exp() - theta_amplification(theta, z).powi(n)).abs()
    };
    let h = (LEROUX_LOG_MAX - LEROUX_LOG_MIN) / (LEROUX_GRID - 1) as f64;
    let (mut best_j, mut best) = (0, f64::NEG_INFINITY);
    for j in 0..LEROUX_GRID {
        let v = gap(LEROUX_LOG_MIN + j as f64 * h);
        if v > best {
            best = v;
            best_j = j;
        }
    }
    let lo = LEROUX_LOG_MIN + best_j.saturating_sub(1) as f64 * h;
    let hi = LEROUX_LOG_MIN + (best_j + 1).min(LEROUX_GRID - 1) as f64 * h;
    let refined = golden_max(gap, lo, hi, 1e-12);
    let tail = amplification_at_infinity(theta).abs().powi(n);
    Ok(best.max(refined).max(tail))
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// Time discretization parameters of the theta-scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaScheme {
    theta: f64,
    dt: f64,
    steps: usize,
    horizon: f64,
}

impl ThetaScheme {
    /// Scheme with `1/2 < theta <= 1` and `dt = horizon / steps`.
    pub fn new(theta: f64, horizon: f64, steps: usize) -> Result<Self> {
        if !(theta > 0.5 && theta <= 1.0) {
            return Err(invalid(format!(
                "theta must satisfy 1/2 < theta <= 1, got {theta} (use the unstable override for demonstrations)"
            )));
        }
        Self::build(theta, horizon, steps)
    }

    /// Accepts any `theta` in `[0, 1]`. For `theta <= 1/2` the scheme is only
    /// conditionally stable; this exists to demonstrate the instability.
    pub fn new_allow_unstable(theta: f64, horizon: f64, steps: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(invalid(format!("theta must lie in [0, 1], got {theta}")));
        }
        Self::build(theta, horizon, steps)
    }

    fn build(theta: f64, horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("step count N must be positive"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("final time T must be positive"));
        }
        Ok(Self {
            theta,
            dt: horizon / steps as f64,
            steps,
            horizon,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `t_n = n dt`.
    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.dt
        }
    }

    pub fn is_unconditionally_stable(&self) -> bool {
        self.theta > 0.5
    }

    /// `F(lambda dt)`: one step of the homogeneous scheme on a mode.
    pub fn amplification(&self, lambda: f64) -> f64 {
        theta_amplification(self.theta, lambda * self.dt)
    }

    /// `(1 + theta dt lambda)^{-1}`: the implicit resolvent applied to noise.
    pub fn resolvent(&self, lambda: f64) -> f64 {
        1.0 / (1.0 + self.theta * self.dt * lambda)
    }
}
