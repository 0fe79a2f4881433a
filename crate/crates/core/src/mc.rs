//! Monte Carlo simulation of the theta-scheme with counter-based noise.
//!
//! Every standard normal is a pure function of `(seed, path, step, mode)`,
//! so results do not depend on evaluation order or on the number of worker
//! threads. Per-path values are collected in path order and reduced
//! sequentially.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::CovarianceModel;
use crate::error::{invalid, Error, Result};
use crate::fem1d::DiscreteSpace;
use crate::law::{projected_noise, scheme_factors, Functional, GaussianState, SchemeFactors};
use crate::linalg::{pairwise_sum, psd_sqrt};
use crate::spectral::ThetaScheme;

/// Deterministic map `(path, step, mode) -> N(0, 1)` for a fixed seed.
///
/// Path `p` is ChaCha8 stream `p`; the normals of step `n` occupy the
/// `width` consecutive 64-bit words starting at word `n * width`. Each word
/// becomes a uniform in `(0, 1)` with 53 random bits and then a normal via
/// the inverse distribution function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
    width: usize,
}

impl NoiseStream {
    pub fn new(seed: u64, width: usize) -> Result<Self> {
        if width == 0 {
            return Err(invalid("noise width must be positive"));
        }
        Ok(NoiseStream { seed, width })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn rng(&self, path: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path);
        rng
    }

    fn seek(&self, rng: &mut ChaCha8Rng, step: u64, mode: usize) {
        let word = (step as u128 * self.width as u128 + mode as u128) * 2;
        rng.set_word_pos(word);
    }

    pub fn normal(&self, path: u64, step: u64, mode: usize) -> f64 {
        assert!(mode < self.width, "mode {mode} outside width {}", self.width);
        let mut rng = self.rng(path);
        self.seek(&mut rng, step, mode);
        inverse_normal_cdf(open_uniform(rng.next_u64()))
    }

    /// Writes the first `out.len()` normals of `(path, step)` into `out`.
    pub fn fill_step(&self, path: u64, step: u64, out: &mut [f64]) {
        let mut rng = self.rng(path);
        self.fill_with(&mut rng, step, out);
    }

    fn fill_with(&self, rng: &mut ChaCha8Rng, step: u64, out: &mut [f64]) {
        assert!(out.len() <= self.width, "block wider than the stream");
        self.seek(rng, step, 0);
        for o in out.iter_mut() {
            *o = inverse_normal_cdf(open_uniform(rng.next_u64()));
        }
    }
}

fn open_uniform(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse standard normal distribution function, Wichura's algorithm AS241
/// (PPND16), relative accuracy about 1e-16 on `(0, 1)`.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability {p} outside (0, 1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_049e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub paths: usize,
}

/// Evaluates `value(path)` for `path in 0..paths` in parallel and reduces in
/// path order.
pub fn mc_expect<F>(paths: usize, value: F) -> Result<McEstimate>
where
    F: Fn(u64) -> f64 + Sync,
{
    if paths < 2 {
        return Err(invalid("need at least two paths"));
    }
    let values: Vec<f64> = (0..paths as u64).into_par_iter().map(&value).collect();
    Ok(summarize(&values))
}

pub(crate) fn summarize(values: &[f64]) -> McEstimate {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    McEstimate {
        estimate: mean,
        stderr: (var / n).sqrt(),
        paths: values.len(),
    }
}

/// Draws `X_h^N` paths of the theta-scheme in the discrete eigenbasis:
/// `xi^{n+1}_i = F_i xi^n_i + sqrt(dt) G_i (B_h zeta^{n+1})_i`, where
/// `B_h B_h^T = Gamma Q Gamma^T` and `zeta^{n+1}` are the stream's normals
/// for step `n` (0-based).
///
/// Any factor `B_h` with `B_h B_h^T = Gamma Q Gamma^T` gives the same law of
/// the noise increments; the symmetric square root is used.
#[derive(Debug, Clone)]
pub struct SchemeSampler {
    f: Vec<f64>,
    noise_scale: Vec<f64>,
    factor: Noise,
    start: DVector<f64>,
    steps: usize,
}

#[derive(Debug, Clone)]
enum Noise {
    None,
    Identity,
    Factor(DMatrix<f64>),
}

impl SchemeSampler {
    pub fn new(
        space: &DiscreteSpace,
        q: &CovarianceModel,
        scheme: &ThetaScheme,
        x: &[f64],
    ) -> Result<Self> {
        let qh = projected_noise(space, q)?;
        let factor = if qh.amax() == 0.0 {
            Noise::None
        } else if q.is_white() {
            Noise::Identity
        } else {
            Noise::Factor(psd_sqrt(&qh)?)
        };
        let SchemeFactors { f, g, .. } = scheme_factors(space.eigenvalues().as_slice(), scheme);
        let sq = scheme.dt().sqrt();
        Ok(SchemeSampler {
            f,
            noise_scale: g.iter().map(|gi| sq * gi).collect(),
            factor,
            start: space.ph_project(x)?,
            steps: scheme.steps(),
        })
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    pub fn sample(&self, stream: &NoiseStream, path: u64) -> DVector<f64> {
        let dim = self.dim();
        let mut xi = self.start.clone();
        if matches!(self.factor, Noise::None) {
            for (v, f) in xi.iter_mut().zip(&self.f) {
                *v *= f.powi(self.steps as i32);
            }
            return xi;
        }
        let mut rng = stream.rng(path);
        let mut zeta = DVector::zeros(dim);
        for n in 0..self.steps {
            stream.fill_with(&mut rng, n as u64, zeta.as_mut_slice());
            let increment = match &self.factor {
                Noise::Factor(b) => b * &zeta,
                _ => zeta.clone(),
            };
            for i in 0..dim {
                xi[i] = self.f[i] * xi[i] + self.noise_scale[i] * increment[i];
            }
        }
        xi
    }
}

pub fn simulate_scheme_path(
    space: &DiscreteSpace,
    q: &CovarianceModel,
    scheme: &ThetaScheme,
    x: &[f64],
    stream: &NoiseStream,
    path: u64,
) -> Result<DVector<f64>> {
    let sampler = SchemeSampler::new(space, q, scheme, x)?;
    check_width(stream, sampler.dim())?;
    Ok(sampler.sample(stream, path))
}

fn check_width(stream: &NoiseStream, needed: usize) -> Result<()> {
    if stream.width() < needed {
        return Err(Error::Dimension {
            expected: needed,
            got: stream.width(),
        });
    }
    Ok(())
}

/// `E phi(X_h^N)` by Monte Carlo over `paths` scheme paths.
pub fn mc_expect_functional(
    space: &DiscreteSpace,
    q: &CovarianceModel,
    scheme: &ThetaScheme,
    x: &[f64],
    phi: &Functional,
    stream: &NoiseStream,
    paths: usize,
) -> Result<McEstimate> {
    let sampler = SchemeSampler::new(space, q, scheme, x)?;
    check_width(stream, sampler.dim())?;
    let g = discrete_direction(space, phi)?;
    mc_expect(paths, |p| {
        let xi = sampler.sample(stream, p);
        phi.eval(&[g.dot(&xi)])
    })
}

/// `phi` rewritten to act on `(g, X_h)` as a scalar: the direction mapped
/// to discrete coordinates, `Gamma g`.
fn discrete_direction(space: &DiscreteSpace, phi: &Functional) -> Result<DVector<f64>> {
    let g = phi.direction();
    if g.len() > space.model_modes() {
        return Err(Error::Dimension {
            expected: space.model_modes(),
            got: g.len(),
        });
    }
    let mut gk = DVector::zeros(space.model_modes());
    gk.rows_mut(0, g.len()).copy_from_slice(g);
    Ok(space.coupling() * gk)
}

/// Exact sampler for a Gaussian state: `mean + C^{1/2} zeta` with the
/// normals of step 0.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(state: &GaussianState) -> Result<Self> {
        Ok(GaussianSampler {
            mean: state.mean.clone(),
            factor: psd_sqrt(&state.cov)?,
        })
    }

    pub fn sample(&self, stream: &NoiseStream, path: u64) -> DVector<f64> {
        let mut zeta = DVector::zeros(self.mean.len());
        stream.fill_step(path, 0, zeta.as_mut_slice());
        &self.mean + &self.factor * zeta
    }
}

/// Coarse-step normals from fine-step normals: the sum of `fine.len()`
/// consecutive blocks divided by `sqrt(fine.len())`.
pub fn aggregate_normals(fine: &[Vec<f64>]) -> Vec<f64> {
    let width = fine.first().map_or(0, Vec::len);
    let scale = (fine.len() as f64).sqrt();
    (0..width)
        .map(|m| fine.iter().fold(0.0, |acc, block| acc + block[m]) / scale)
        .collect()
}

/// One scheme path driven by an external noise vector per step.
struct CoupledPath<'a> {
    f: &'a [f64],
    noise_scale: &'a [f64],
    /// Maps the stream block to the projected noise `P_h Q^{1/2} zeta`.
    factor: &'a Noise,
    xi: DVector<f64>,
}

impl CoupledPath<'_> {
    fn step(&mut self, zeta: &DVector<f64>) {
        let increment = match self.factor {
            Noise::Factor(b) => b * zeta,
            Noise::Identity => zeta.clone(),
            Noise::None => return self.xi.iter_mut().zip(self.f).for_each(|(v, f)| *v *= f),
        };
        for i in 0..self.xi.len() {
            self.xi[i] = self.f[i] * self.xi[i] + self.noise_scale[i] * increment[i];
        }
    }
}

struct Prepared {
    f: Vec<f64>,
    noise_scale: Vec<f64>,
    factor: Noise,
    start: DVector<f64>,
}

fn prepare(space: &DiscreteSpace, scheme: &ThetaScheme, factor: Noise, x: &[f64]) -> Result<Prepared> {
    let SchemeFactors { f, g, .. } = scheme_factors(space.eigenvalues().as_slice(), scheme);
    let sq = scheme.dt().sqrt();
    Ok(Prepared {
        f,
        noise_scale: g.iter().map(|gi| sq * gi).collect(),
        factor,
        start: space.ph_project(x)?,
    })
}

/// Monte Carlo estimate of `E |X_coarse - X_fine|_H^2` with both schemes
/// driven by the same Brownian increments.
///
/// The coarse step `c` uses `aggregate_normals` of fine steps
/// `c r .. c r + r - 1` (`r` the step ratio). When both schemes live on the
/// same space the noise is drawn in its discrete eigenbasis (`I(h)` normals
/// per step); otherwise `K` ambient normals per step are projected onto each
/// space through `Gamma Q^{1/2}` and the difference is measured on the first
/// `K` modes.
#[allow(clippy::too_many_arguments)]
pub fn coupled_refinement_error(
    space_fine: &DiscreteSpace,
    space_coarse: &DiscreteSpace,
    q: &CovarianceModel,
    scheme_fine: &ThetaScheme,
    scheme_coarse: &ThetaScheme,
    x: &[f64],
    stream: &NoiseStream,
    paths: usize,
) -> Result<McEstimate> {
    if (scheme_fine.horizon() - scheme_coarse.horizon()).abs() > 1e-14 * scheme_fine.horizon() {
        return Err(invalid("schemes must share the final time"));
    }
    let (nf, nc) = (scheme_fine.steps(), scheme_coarse.steps());
    if nf < nc || nf % nc != 0 {
        return Err(invalid(format!(
            "fine steps {nf} are not an integer multiple of coarse steps {nc}"
        )));
    }
    let ratio = nf / nc;
    let same_space = space_fine.id() == space_coarse.id();

    let (fine, coarse, width) = if same_space {
        let qh = projected_noise(space_fine, q)?;
        let noise = if qh.amax() == 0.0 {
            Noise::None
        } else if q.is_white() {
            Noise::Identity
        } else {
            Noise::Factor(psd_sqrt(&qh)?)
        };
        (
            prepare(space_fine, scheme_fine, noise.clone(), x)?,
            prepare(space_coarse, scheme_coarse, noise, x)?,
            space_fine.dim(),
        )
    } else {
        let root = q.sqrt()?;
        (
            prepare(space_fine, scheme_fine, Noise::Factor(space_fine.coupling() * &root), x)?,
            prepare(space_coarse, scheme_coarse, Noise::Factor(space_coarse.coupling() * &root), x)?,
            q.modes(),
        )
    };
    check_width(stream, width)?;

    mc_expect(paths, |p| {
        let mut rng = stream.rng(p);
        let mut pf = CoupledPath {
            f: &fine.f,
            noise_scale: &fine.noise_scale,
            factor: &fine.factor,
            xi: fine.start.clone(),
        };
        let mut pc = CoupledPath {
            f: &coarse.f,
            noise_scale: &coarse.noise_scale,
            factor: &coarse.factor,
            xi: coarse.start.clone(),
        };
        let mut blocks = vec![vec![0.0; width]; ratio];
        for c in 0..nc {
            for (k, block) in blocks.iter_mut().enumerate() {
                stream.fill_with(&mut rng, (c * ratio + k) as u64, block);
                pf.step(&DVector::from_column_slice(block));
            }
            pc.step(&DVector::from_vec(aggregate_normals(&blocks)));
        }
        if same_space {
            (&pc.xi - &pf.xi).norm_squared()
        } else {
            (space_coarse.embed(&pc.xi) - space_fine.embed(&pf.xi)).norm_squared()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::discrete_law;
    use crate::spectral::SpectralModel;

    #[test]
    fn inverse_cdf_reference_values() {
        let cases = [
            (0.5, 0.0),
            (0.975, 1.959_963_984_540_054),
            (0.841_344_746_068_542_9, 1.0),
            (0.025, -1.959_963_984_540_054),
            (1e-10, -6.361_340_902_404_056),
            (0.999, 3.090_232_306_167_813_6),
        ];
        for (p, z) in cases {
            let got = inverse_normal_cdf(p);
            assert!((got - z).abs() <= 1e-13 * z.abs().max(1.0), "p={p}: {got} vs {z}");
        }
        let tiny = inverse_normal_cdf(1e-300);
        assert!(tiny < -37.0 && tiny > -37.1);
    }

    #[test]
    fn stream_is_a_pure_function_of_the_counter() {
        let s = NoiseStream::new(7, 5).unwrap();
        let mut block = vec![0.0; 5];
        s.fill_step(3, 11, &mut block);
        for (m, v) in block.iter().enumerate() {
            assert_eq!(s.normal(3, 11, m).to_bits(), v.to_bits());
        }
        assert_ne!(s.normal(3, 11, 0), s.normal(4, 11, 0));
        assert_ne!(s.normal(3, 11, 0), s.normal(3, 12, 0));
        let other = NoiseStream::new(8, 5).unwrap();
        assert_ne!(s.normal(3, 11, 0), other.normal(3, 11, 0));
    }

    #[test]
    fn moment_test() {
        let s = NoiseStream::new(2024, 10).unwrap();
        let n = 1_000_000usize;
        let values: Vec<f64> = (0..(n / 10) as u64)
            .into_par_iter()
            .flat_map_iter(|p| {
                let mut b = vec![0.0; 10];
                s.fill_step(p, 0, &mut b);
                b
            })
            .collect();
        let est = summarize(&values);
        let nf = n as f64;
        assert!(est.estimate.abs() <= 4.0 / nf.sqrt());
        let var = est.stderr.powi(2) * nf;
        assert!((var - 1.0).abs() <= 4.0 * (2.0 / nf).sqrt());
    }

    #[test]
    fn constant_functional() {
        let est = mc_expect(1000, |_| 1.0).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.stderr, 0.0);
        assert!(mc_expect(1, |_| 1.0).is_err());
    }

    #[test]
    fn zero_noise_path_is_deterministic() {
        let m = SpectralModel::dirichlet_laplacian_1d(8).unwrap();
        let space = DiscreteSpace::p1(6, &m).unwrap();
        let scheme = ThetaScheme::new(0.7, 1.0, 12).unwrap();
        let x = [1.0, 0.3, -0.2];
        let s = NoiseStream::new(1, 8).unwrap();
        let xi = simulate_scheme_path(&space, &CovarianceModel::zero(8), &scheme, &x, &s, 0).unwrap();
        let law = discrete_law(&space, &CovarianceModel::zero(8), &scheme, &x).unwrap();
        assert!((xi - law.mean).amax() < 1e-14);
    }

    #[test]
    fn aggregation_is_exact() {
        let blocks = vec![vec![0.5, -1.0], vec![0.25, 2.0], vec![-0.75, 1.0], vec![1.0, 0.0]];
        let agg = aggregate_normals(&blocks);
        assert_eq!(agg, vec![0.5, 1.0]);
        let single = aggregate_normals(&blocks[..1]);
        assert_eq!(single, blocks[0]);
    }

    #[test]
    fn identical_schemes_couple_to_zero() {
        let m = SpectralModel::dirichlet_laplacian_1d(8).unwrap();
        let space = DiscreteSpace::spectral(8, &m).unwrap();
        let scheme = ThetaScheme::new(1.0, 1.0, 16).unwrap();
        let s = NoiseStream::new(3, 8).unwrap();
        let q = CovarianceModel::white(8);
        let e = coupled_refinement_error(&space, &space, &q, &scheme, &scheme, &[], &s, 64).unwrap();
        assert_eq!(e.estimate, 0.0);
        let coarse = ThetaScheme::new(1.0, 1.0, 12).unwrap();
        assert!(coupled_refinement_error(&space, &space, &q, &scheme, &coarse, &[], &s, 8).is_err());
    }
}
