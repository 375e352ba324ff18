use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bandit::sample_class;
use crate::error::{Error, Result};
use crate::math::{softmax, FeatureVector, LabelDistribution, WeightMatrix};

/// Name of the generator recorded in run manifests.
pub const RNG_NAME: &str = "ChaCha8Rng";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamMode {
    /// `y ~ σ(W* x)`.
    RealizableSoft,
    /// `y = argmax W* x`.
    RealizableHard,
    /// `y_t = t mod K`, independent of `x`.
    AdversarialRotating,
}

impl std::str::FromStr for StreamMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "realizable-soft" => Ok(StreamMode::RealizableSoft),
            "realizable-hard" => Ok(StreamMode::RealizableHard),
            "adversarial-rotating" => Ok(StreamMode::AdversarialRotating),
            other => Err(Error::config(format!("unknown stream mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub d: usize,
    pub k: usize,
    pub b: f64,
    pub r: f64,
    pub t: usize,
    pub seed: u64,
    pub mode: StreamMode,
}

impl StreamSpec {
    pub fn new(d: usize, k: usize, b: f64, r: f64, t: usize, seed: u64, mode: StreamMode) -> Self {
        StreamSpec { d, k, b, r, t, seed, mode }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 || self.k < 2 {
            return Err(Error::config("stream needs d ≥ 1 and K ≥ 2"));
        }
        if !(self.b >= 0.0 && self.b.is_finite() && self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::config("stream needs B ≥ 0 and R > 0"));
        }
        Ok(())
    }

    /// Generator seeded from `seed`.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        StreamSpec { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: FeatureVector,
    pub y: usize,
}

impl Example {
    pub fn label(&self, k: usize) -> LabelDistribution {
        LabelDistribution::basis(k, self.y).expect("generated label is in range")
    }
}

#[derive(Debug, Clone)]
pub struct Stream {
    /// The generating predictor; every row has norm `B`.
    pub w_star: WeightMatrix,
    pub examples: Vec<Example>,
}

/// Uniform draw from the radius-`radius` sphere in `n` dimensions.
pub fn sample_sphere<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-300 {
            return v * (radius / norm);
        }
    }
}

/// Uniform draw from the radius-`radius` ball in `n` dimensions.
pub fn sample_ball<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    let u: f64 = rng.random();
    sample_sphere(n, radius * u.powf(1.0 / n as f64), rng)
}

pub fn sample_comparator<R: Rng + ?Sized>(d: usize, k: usize, b: f64, rng: &mut R) -> WeightMatrix {
    let mut w = DMatrix::zeros(k, d);
    for i in 0..k {
        w.row_mut(i).copy_from(&sample_sphere(d, b, rng).transpose());
    }
    WeightMatrix::new(w).expect("sampled comparator is finite")
}

/// Draws `W*`, then `T` rounds of `(x, y)`. Deterministic given the generator state.
pub fn generate_stream<R: Rng + ?Sized>(spec: &StreamSpec, rng: &mut R) -> Result<Stream> {
    spec.validate()?;
    let w_star = sample_comparator(spec.d, spec.k, spec.b, rng);
    let mut examples = Vec::with_capacity(spec.t);
    for t in 0..spec.t {
        let x = FeatureVector::new(sample_ball(spec.d, spec.r, rng))?;
        let y = match spec.mode {
            StreamMode::RealizableSoft => sample_class(softmax(&w_star.apply(&x)?).as_slice(), rng),
            StreamMode::RealizableHard => w_star.apply(&x)?.argmax(),
            StreamMode::AdversarialRotating => t % spec.k,
        };
        examples.push(Example { x, y });
    }
    Ok(Stream { w_star, examples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_and_comparator_respect_bounds() {
        let spec = StreamSpec::new(4, 3, 1.5, 0.7, 500, 11, StreamMode::RealizableSoft);
        let s = generate_stream(&spec, &mut spec.rng()).unwrap();
        assert!(s.examples.iter().all(|e| e.x.norm() <= 0.7 + 1e-12));
        assert!((s.w_star.norm_2_inf() - 1.5).abs() < 1e-12);
        assert!(s.examples.iter().all(|e| e.y < 3));
    }

    #[test]
    fn same_seed_same_stream() {
        let spec = StreamSpec::new(3, 4, 1.0, 1.0, 50, 42, StreamMode::RealizableHard);
        let a = generate_stream(&spec, &mut spec.rng()).unwrap();
        let b = generate_stream(&spec, &mut spec.rng()).unwrap();
        assert_eq!(a.examples, b.examples);
        assert_eq!(a.w_star, b.w_star);
        let c = generate_stream(&spec.with_seed(43), &mut spec.with_seed(43).rng()).unwrap();
        assert_ne!(a.examples, c.examples);
    }

    #[test]
    fn rotating_labels_cycle() {
        let spec = StreamSpec::new(2, 3, 1.0, 1.0, 7, 0, StreamMode::AdversarialRotating);
        let s = generate_stream(&spec, &mut spec.rng()).unwrap();
        let ys: Vec<usize> = s.examples.iter().map(|e| e.y).collect();
        assert_eq!(ys, vec![0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = StreamSpec::new(2, 1, 1.0, 1.0, 7, 0, StreamMode::RealizableSoft);
        assert!(matches!(generate_stream(&spec, &mut spec.rng()), Err(Error::Config(_))));
    }
}
