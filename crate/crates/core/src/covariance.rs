//! Noise covariance `Q` in the eigenbasis of `A`, and the regularity
//! hypotheses tying `Q` to `A`.
//!
//! `Q` is stored as the dense matrix `Q_ij = (e_i, Q e_j)`. It need not be
//! diagonal: the kernel construction produces covariances that do not commute
//! with `A`.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Hypothesis, Result};
use crate::linalg;
use crate::spectral::SpectralModel;

/// How a covariance was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// `Q = I` (space-time white noise).
    White,
    /// `Q = A^{-beta0}`.
    DiagonalPower(f64),
    /// Convolution with a correlation `c` given by cosine coefficients.
    Kernel { terms: usize },
    /// `Q = 0`.
    Zero,
    Custom,
}

/// Recipe for a covariance, independent of the truncation level.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    White,
    DiagonalPower(f64),
    Kernel(Vec<f64>),
    Zero,
}

impl NoiseSpec {
    pub fn build(&self, model: &SpectralModel) -> Result<CovarianceModel> {
        match self {
            NoiseSpec::White => Ok(CovarianceModel::white(model.modes())),
            NoiseSpec::DiagonalPower(b) => CovarianceModel::diagonal_power(model, *b),
            NoiseSpec::Kernel(c) => CovarianceModel::from_kernel(model, c),
            NoiseSpec::Zero => Ok(CovarianceModel::zero(model.modes())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseSpec::White => "white",
            NoiseSpec::DiagonalPower(_) => "diagonal_power",
            NoiseSpec::Kernel(_) => "kernel",
            NoiseSpec::Zero => "zero",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceModel {
    matrix: DMatrix<f64>,
    kind: NoiseKind,
}

impl CovarianceModel {
    pub fn white(modes: usize) -> Self {
        Self {
            matrix: DMatrix::identity(modes, modes),
            kind: NoiseKind::White,
        }
    }

    pub fn zero(modes: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(modes, modes),
            kind: NoiseKind::Zero,
        }
    }

    /// `Q = diag(lambda_n^{-beta0})`, so that `A^{beta0} Q = I`.
    pub fn diagonal_power(model: &SpectralModel, beta0: f64) -> Result<Self> {
        if !(beta0 >= 0.0) {
            return Err(invalid(format!("beta0 must be >= 0, got {beta0}")));
        }
        let diag = nalgebra::DVector::from_iterator(
            model.modes(),
            model.eigenvalues().iter().map(|l| l.powf(-beta0)),
        );
        let kind = if beta0 == 0.0 {
            NoiseKind::White
        } else {
            NoiseKind::DiagonalPower(beta0)
        };
        Ok(Self {
            matrix: DMatrix::from_diagonal(&diag),
            kind,
        })
    }

    /// Covariance of `eta = q * W` on (0, 1), `Q f(x) = int c(x - y) f(y) dy`,
    /// with `c(r) = sum_m c_m cos(m pi r)`.
    ///
    /// Writing `cos(m pi (x - y))` as `cos cos + sin sin` separates the double
    /// integral into products of `C_im = int_0^1 sin(i pi x) cos(m pi x) dx`
    /// (equal to `2i / (pi (i^2 - m^2))` when `i + m` is odd, zero otherwise)
    /// and `int_0^1 sin(i pi x) sin(m pi x) dx = delta_im / 2`.
    pub fn from_kernel(model: &SpectralModel, cosine_coeffs: &[f64]) -> Result<Self> {
        if cosine_coeffs.is_empty() {
            return Err(invalid("kernel needs at least one cosine coefficient"));
        }
        let k = model.modes();
        let terms = cosine_coeffs.len();
        // scaled[m][i] = sqrt(2 |c_m|) C_im, with sign tracked separately
        let mut pos = DMatrix::<f64>::zeros(terms, k);
        let mut neg = DMatrix::<f64>::zeros(terms, k);
        for (m, &c) in cosine_coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let w = (2.0 * c.abs()).sqrt();
            let target = if c > 0.0 { &mut pos } else { &mut neg };
            for i in 1..=k {
                if (i + m) % 2 == 1 {
                    let (fi, fm) = (i as f64, m as f64);
                    let cim = 2.0 * fi / (std::f64::consts::PI * (fi * fi - fm * fm));
                    target[(m, i - 1)] = w * cim;
                }
            }
        }
        let mut matrix = pos.tr_mul(&pos) - neg.tr_mul(&neg);
        for i in 1..=k.min(terms - 1) {
            matrix[(i - 1, i - 1)] += 0.5 * cosine_coeffs[i];
        }
        let matrix = linalg::symmetrize(&matrix);
        let (values, _) = linalg::sym_eigen_sorted(&matrix);
        let largest = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| v < -linalg::PSD_TOLERANCE * largest)
        {
            return Err(Error::NotPositiveSemidefinite {
                index,
                value,
                largest,
            });
        }
        Ok(Self {
            matrix,
            kind: NoiseKind::Kernel { terms },
        })
    }

    /// Wraps an arbitrary matrix after checking symmetry and PSD.
    pub fn custom(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid("covariance matrix must be square"));
        }
        if linalg::relative_asymmetry(&matrix) > 1e-12 {
            return Err(invalid("covariance matrix must be symmetric"));
        }
        linalg::check_psd(&matrix)?;
        Ok(Self {
            matrix,
            kind: NoiseKind::Custom,
        })
    }

    pub fn modes(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn is_white(&self) -> bool {
        self.kind == NoiseKind::White
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Symmetric PSD square root `Q^{1/2}` (negative roundoff eigenvalues
    /// clamped to zero).
    pub fn sqrt(&self) -> Result<DMatrix<f64>> {
        match self.kind {
            NoiseKind::White | NoiseKind::Zero => Ok(self.matrix.clone()),
            NoiseKind::DiagonalPower(_) => Ok(self.matrix.map(f64::sqrt)),
            _ => linalg::psd_sqrt(&self.matrix),
        }
    }

    /// Truncated estimate of `||A^beta Q||`, together with the interpolation
    /// check `||A^{l beta} Q^l|| <= ||A^beta Q||^l` for `l in {1/4, 1/2, 3/4}`.
    pub fn regularity_estimate(
        &self,
        model: &SpectralModel,
        beta: f64,
    ) -> Result<RegularityEstimate> {
        if model.modes() != self.modes() {
            return Err(Error::Dimension {
                expected: self.modes(),
                got: model.modes(),
            });
        }
        let norm = linalg::op_norm(&scale_rows(model, &self.matrix, beta));
        let mut interpolation = Vec::new();
        for l in [0.25, 0.5, 0.75] {
            let ql = linalg::psd_power(&self.matrix, l)?;
            let lhs = linalg::op_norm(&scale_rows(model, &ql, l * beta));
            let rhs = norm.powf(l);
            interpolation.push(InterpolationCheck {
                exponent: l,
                lhs,
                rhs,
                holds: lhs <= rhs * (1.0 + 1e-8) + 1e-12,
            });
        }
        Ok(RegularityEstimate {
            beta,
            norm,
            interpolation,
        })
    }
}

fn scale_rows(model: &SpectralModel, m: &DMatrix<f64>, power: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, l) in model.eigenvalues().iter().enumerate() {
        let s = l.powf(power);
        out.row_mut(i).scale_mut(s);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationCheck {
    pub exponent: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityEstimate {
    pub beta: f64,
    /// `||Lambda^beta Q||` on the truncated basis.
    pub norm: f64,
    pub interpolation: Vec<InterpolationCheck>,
}

/// Two-resolution growth test for `||A^beta Q||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthCheck {
    pub at_k: f64,
    pub at_2k: f64,
    /// Estimates at `K` and `2K` differ by more than 10%.
    pub unbounded: bool,
}

pub fn regularity_growth(spec: &NoiseSpec, modes: usize, beta: f64) -> Result<GrowthCheck> {
    let coarse = SpectralModel::dirichlet_laplacian_1d(modes)?;
    let fine = SpectralModel::dirichlet_laplacian_1d(2 * modes)?;
    let at_k = spec.build(&coarse)?.regularity_estimate(&coarse, beta)?.norm;
    let at_2k = spec.build(&fine)?.regularity_estimate(&fine, beta)?.norm;
    let unbounded = (at_2k - at_k).abs() > 0.1 * at_k.abs().max(f64::MIN_POSITIVE);
    Ok(GrowthCheck {
        at_k,
        at_2k,
        unbounded,
    })
}

/// Regularity indices `(alpha, beta)` and the supremum of admissible weak
/// orders `gamma < gamma_sup = min(1 - alpha + beta, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RegularityIndices {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_sup: f64,
}

impl RegularityIndices {
    /// The admissible interval is open at `gamma_sup`.
    pub fn admits(&self, gamma: f64) -> bool {
        gamma > 0.0 && gamma < self.gamma_sup
    }

    /// Expected weak time order (upper end, not attained).
    pub fn weak_time_order(&self) -> f64 {
        self.gamma_sup
    }

    /// Expected weak space order `2 gamma_sup` in `h`.
    pub fn weak_space_order(&self) -> f64 {
        2.0 * self.gamma_sup
    }
}

/// Validates `(alpha, beta)` against the standing hypotheses and returns the
/// weak-order exponent range. Negative `beta` is not supported.
pub fn admissible_gamma(alpha: f64, beta: f64) -> Result<RegularityIndices> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Inadmissible {
            hypothesis: Hypothesis::Trace,
            detail: format!("alpha must be positive, got {alpha}"),
        });
    }
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::Inadmissible {
            hypothesis: Hypothesis::Covariance,
            detail: format!("only beta >= 0 is supported, got {beta}"),
        });
    }
    if beta > alpha || beta < (alpha - 1.0).min(0.0) {
        return Err(Error::Inadmissible {
            hypothesis: Hypothesis::Covariance,
            detail: format!("need min(alpha - 1, 0) <= beta <= alpha, got alpha = {alpha}, beta = {beta}"),
        });
    }
    let order = 1.0 - alpha + beta;
    if !(order > 0.0) {
        return Err(Error::Inadmissible {
            hypothesis: Hypothesis::Order,
            detail: format!("1 - alpha + beta = {order}"),
        });
    }
    Ok(RegularityIndices {
        alpha,
        beta,
        gamma_sup: order.min(1.0),
    })
}

/// [`admissible_gamma`] plus the trace condition for a concrete spectrum.
pub fn admissible_gamma_for(
    model: &SpectralModel,
    alpha: f64,
    beta: f64,
) -> Result<RegularityIndices> {
    if alpha > 0.0 && model.trace_frac(alpha)?.is_divergent() {
        return Err(Error::Inadmissible {
            hypothesis: Hypothesis::Trace,
            detail: format!("Tr(A^-{alpha}) diverges for {}", model.domain()),
        });
    }
    admissible_gamma(alpha, beta)
}

/// Reads cosine coefficients of a correlation kernel: one number per line,
/// blank lines and `#` comments ignored.
pub fn read_kernel_coefficients(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_kernel_coefficients(&text)
}

pub fn parse_kernel_coefficients(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            Error::Config(format!(
                "kernel file line {}: cannot parse '{line}' as a number",
                lineno + 1
            ))
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Config("kernel file contains no coefficients".into()));
    }
    Ok(out)
}
