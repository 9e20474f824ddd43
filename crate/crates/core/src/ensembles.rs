//! Random interaction matrices `A = n^{-1/2} W` and initial vectors.
//!
//! All entry families are standardised unit draws `u` (mean 0, variance 1)
//! multiplied by the target scale, so the underlying draws do not depend on
//! `w`. Matrix entries are consumed in row-major order: the full `n × n`
//! grid for non-symmetric ensembles, the upper triangle `i ≤ j` (diagonal
//! included) for symmetric ones.

use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::SQRT_2;

use crate::rng::{stream_rng, Stream};
use crate::{Error, Matrix, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Rademacher,
    Uniform,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Rademacher => "rademacher",
            Family::Uniform => "uniform",
        }
    }

    /// One draw with mean 0 and variance 1.
    pub fn unit_draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Family::Gaussian => rng.sample(StandardNormal),
            Family::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Family::Uniform => (2.0 * rng.random::<f64>() - 1.0) * SQRT_3,
        }
    }

    /// `E{u⁴}` of the unit draw.
    pub fn unit_fourth_moment(self) -> f64 {
        match self {
            Family::Gaussian => 3.0,
            Family::Rademacher => 1.0,
            Family::Uniform => 1.8,
        }
    }

    /// Exponent α for which `P{|u| > λ} ≤ C e^{-C λ^α}` holds. Bounded
    /// families satisfy it for every α; we report the conventional 2.
    pub fn tail_alpha(self) -> f64 {
        2.0
    }

    /// CDF of the unit draw.
    pub fn unit_cdf(self, x: f64) -> f64 {
        match self {
            Family::Gaussian => 0.5 * libm::erfc(-x / SQRT_2),
            Family::Rademacher => {
                if x < -1.0 {
                    0.0
                } else if x < 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
            Family::Uniform => ((x + SQRT_3) / (2.0 * SQRT_3)).clamp(0.0, 1.0),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "rademacher" => Ok(Family::Rademacher),
            "uniform" => Ok(Family::Uniform),
            other => Err(Error::invalid(
                "family",
                format!("unknown family {other:?} (expected gaussian, rademacher or uniform)"),
            )),
        }
    }
}

/// Law of the unscaled entries `W_ij`: mean 0, standard deviation `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryLaw {
    pub family: Family,
    pub w: f64,
}

impl EntryLaw {
    pub fn new(family: Family, w: f64) -> Result<Self> {
        let law = EntryLaw { family, w };
        law.validate()?;
        Ok(law)
    }

    pub fn gaussian(w: f64) -> Result<Self> {
        Self::new(Family::Gaussian, w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(Error::invalid("w", format!("must be positive and finite, got {}", self.w)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawMoments {
    pub mean: f64,
    pub variance: f64,
    pub fourth_moment: f64,
    pub tail_alpha: f64,
}

/// Exact analytic moments of an entry law.
pub fn law_moments(law: &EntryLaw) -> LawMoments {
    let w2 = law.w * law.w;
    LawMoments {
        mean: 0.0,
        variance: w2,
        fourth_moment: law.family.unit_fourth_moment() * w2 * w2,
        tail_alpha: law.family.tail_alpha(),
    }
}

/// i.i.d. initial coordinates with `E{ξ} = mean`, `E{ξ²} = second_moment`.
///
/// Draws are `mean + sd·u` with `sd = √(second_moment − mean²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IidInitial {
    pub family: Family,
    pub mean: f64,
    pub second_moment: f64,
}

impl IidInitial {
    pub fn new(family: Family, mean: f64, second_moment: f64) -> Result<Self> {
        let law = IidInitial {
            family,
            mean,
            second_moment,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean.is_finite() && self.second_moment.is_finite()) {
            return Err(Error::NonFinite("initial law"));
        }
        if self.second_moment <= self.mean * self.mean {
            return Err(Error::invalid(
                "xi_second_moment",
                format!(
                    "must exceed mean² (got E{{ξ²}} = {}, mean = {})",
                    self.second_moment, self.mean
                ),
            ));
        }
        Ok(())
    }

    pub fn sd(&self) -> f64 {
        (self.second_moment - self.mean * self.mean).sqrt()
    }

    /// `√E{ξ²}`.
    pub fn rms(&self) -> f64 {
        self.second_moment.sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.mean + self.sd() * self.family.unit_draw(rng)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.family.unit_cdf((x - self.mean) / self.sd())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    Ones,
    Iid(IidInitial),
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialLaw::Ones => Ok(()),
            InitialLaw::Iid(law) => law.validate(),
        }
    }
}

/// Everything needed to reproduce one system draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub n: usize,
    pub symmetric: bool,
    pub entry_law: EntryLaw,
    pub initial_law: InitialLaw,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n", format!("must be at least 2, got {}", self.n)));
        }
        self.entry_law.validate()?;
        self.initial_law.validate()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }
}

/// Draw `A = n^{-1/2} W` for `spec`.
pub fn sample_matrix(spec: &EnsembleSpec) -> Result<Matrix> {
    spec.validate()?;
    let n = spec.n;
    let scale = spec.entry_law.w / (n as f64).sqrt();
    let family = spec.entry_law.family;
    let mut rng = stream_rng(spec.seed, Stream::Matrix);
    let mut a = Matrix::zeros(n, n);
    if spec.symmetric {
        for i in 0..n {
            for j in i..n {
                let v = family.unit_draw(&mut rng) * scale;
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
    } else {
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, family.unit_draw(&mut rng) * scale);
            }
        }
    }
    Ok(a)
}

/// Draw the initial vector `x(0)` for `spec`.
pub fn sample_initial(spec: &EnsembleSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(match spec.initial_law {
        InitialLaw::Ones => vec![1.0; spec.n],
        InitialLaw::Iid(law) => {
            let mut rng = stream_rng(spec.seed, Stream::Initial);
            (0..spec.n).map(|_| law.sample(&mut rng)).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, symmetric: bool, family: Family, w: f64, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            n,
            symmetric,
            entry_law: EntryLaw { family, w },
            initial_law: InitialLaw::Ones,
            seed,
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(sample_matrix(&spec(2, false, Family::Gaussian, 0.0, 1)).is_err());
        assert!(sample_matrix(&spec(2, false, Family::Gaussian, -1.0, 1)).is_err());
        assert!(sample_matrix(&spec(1, false, Family::Gaussian, 1.0, 1)).is_err());
        assert!(EntryLaw::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn symmetric_rademacher_magnitudes() {
        let a = sample_matrix(&spec(3, true, Family::Rademacher, 1.0, 7)).unwrap();
        let expected = 1.0 / 3f64.sqrt();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.get(i, j), a.get(j, i));
                assert_eq!(a.get(i, j).abs(), expected);
            }
        }
    }

    #[test]
    fn gaussian_entry_statistics_at_n_1000() {
        // √n·A_ij are n² draws with variance 1: the mean has SE 1/n = 0.001,
        // the sample variance has SE √(2/n²) ≈ 0.0014.
        let n = 1000;
        let a = sample_matrix(&spec(n, false, Family::Gaussian, 1.0, 42)).unwrap();
        let root_n = (n as f64).sqrt();
        let count = (n * n) as f64;
        let mean = a.as_slice().iter().map(|v| v * root_n).sum::<f64>() / count;
        let var = a
            .as_slice()
            .iter()
            .map(|v| (v * root_n - mean).powi(2))
            .sum::<f64>()
            / (count - 1.0);
        assert!(mean.abs() < 0.004, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn ones_initial_vector() {
        assert_eq!(sample_initial(&spec(4, false, Family::Gaussian, 1.0, 0)).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn iid_initial_mean() {
        let mut s = spec(10_000, false, Family::Gaussian, 1.0, 5);
        s.initial_law = InitialLaw::Iid(IidInitial::new(Family::Gaussian, 0.0, 1.0).unwrap());
        let x = sample_initial(&s).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn degenerate_initial_law_rejected() {
        assert!(IidInitial::new(Family::Gaussian, 1.0, 1.0).is_err());
        assert!(IidInitial::new(Family::Gaussian, 2.0, 1.0).is_err());
        let mut s = spec(4, false, Family::Gaussian, 1.0, 0);
        s.initial_law = InitialLaw::Iid(IidInitial {
            family: Family::Gaussian,
            mean: 1.0,
            second_moment: 1.0,
        });
        assert!(sample_initial(&s).is_err());
    }

    #[test]
    fn initial_stream_is_independent_of_matrix_stream() {
        let mut s = spec(8, false, Family::Gaussian, 1.0, 11);
        s.initial_law = InitialLaw::Iid(IidInitial::new(Family::Gaussian, 0.0, 1.0).unwrap());
        let x = sample_initial(&s).unwrap();
        let a = sample_matrix(&s).unwrap();
        assert!(x.iter().all(|v| !a.as_slice().contains(v)));
        let s_sym = EnsembleSpec { symmetric: true, ..s };
        assert_eq!(sample_initial(&s_sym).unwrap(), x);
    }

    #[test]
    fn analytic_moments() {
        let g = law_moments(&EntryLaw::gaussian(2.0).unwrap());
        assert_eq!(g.variance, 4.0);
        assert_eq!(g.fourth_moment, 48.0);
        assert_eq!(g.mean, 0.0);
        let r = law_moments(&EntryLaw::new(Family::Rademacher, 1.0).unwrap());
        assert_eq!(r.fourth_moment, 1.0);
        let u = law_moments(&EntryLaw::new(Family::Uniform, 1.0).unwrap());
        assert_eq!(u.variance, 1.0);
        assert!((u.fourth_moment - 1.8).abs() < 1e-15);
    }

    #[test]
    fn uniform_unit_draws_are_bounded() {
        let mut rng = stream_rng(1, Stream::Matrix);
        for _ in 0..1000 {
            assert!(Family::Uniform.unit_draw(&mut rng).abs() <= SQRT_3);
        }
    }
}
