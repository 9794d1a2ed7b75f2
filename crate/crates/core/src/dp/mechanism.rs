use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{l2_norm, PerExampleGradient};
use crate::seed;

/// Clip bound and noise multiplier. `clip = None` with `sigma = 0` is the
/// non-private optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mechanism {
    pub clip: Option<f64>,
    pub sigma: f64,
}

impl Mechanism {
    pub const NON_PRIVATE: Mechanism = Mechanism { clip: None, sigma: 0.0 };

    pub fn private(clip: f64, sigma: f64) -> Result<Mechanism> {
        if !(clip > 0.0) {
            return Err(Error::invalid("clip norm must be positive"));
        }
        if !(sigma >= 0.0) {
            return Err(Error::invalid("noise multiplier must be nonnegative"));
        }
        Ok(Mechanism {
            clip: Some(clip),
            sigma,
        })
    }

    pub fn is_private(&self) -> bool {
        self.clip.is_some() && self.sigma > 0.0
    }

    /// Standard deviation of the noise added to the gradient sum.
    pub fn noise_std(&self) -> f64 {
        match self.clip {
            Some(c) if self.sigma > 0.0 => self.sigma * c,
            _ => 0.0,
        }
    }
}

/// Scales `grad` by `min(1, c / ‖grad‖₂)`. Returns the norms before and after.
pub fn clip_in_place(grad: &mut [f64], c: f64) -> (f64, f64) {
    let norm = l2_norm(grad);
    if norm > c {
        let scale = c / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
        (norm, l2_norm(grad))
    } else {
        (norm, norm)
    }
}

pub fn clip(grad: &PerExampleGradient, c: f64) -> PerExampleGradient {
    let mut out = grad.clone();
    clip_in_place(&mut out.0, c);
    out
}

/// Running sum of (optionally clipped) per-example gradients.
#[derive(Debug, Clone)]
pub struct Aggregator {
    mechanism: Mechanism,
    sum: Vec<f64>,
    count: usize,
}

impl Aggregator {
    pub fn new(mechanism: Mechanism, len: usize) -> Aggregator {
        Aggregator {
            mechanism,
            sum: vec![0.0; len],
            count: 0,
        }
    }

    /// Clips `grad` in place (when the mechanism clips) and adds it to the
    /// sum. Returns (pre-clip, post-clip) L2 norms when clipping applies.
    pub fn add(&mut self, grad: &mut [f64]) -> Result<Option<(f64, f64)>> {
        if grad.len() != self.sum.len() {
            return Err(Error::Shape {
                expected: self.sum.len(),
                got: grad.len(),
            });
        }
        let norms = self.mechanism.clip.map(|c| clip_in_place(grad, c));
        for (s, g) in self.sum.iter_mut().zip(grad.iter()) {
            *s += g;
        }
        self.count += 1;
        Ok(norms)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `(sum + z) / denominator` with `z ~ N(0, σ²C² I)` drawn from `rng`.
    pub fn finish<R: Rng>(mut self, denominator: f64, rng: &mut R) -> Vec<f64> {
        let std = self.mechanism.noise_std();
        if std > 0.0 {
            for s in self.sum.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *s += std * z;
            }
        }
        for s in self.sum.iter_mut() {
            *s /= denominator;
        }
        self.sum
    }
}

/// Clipped, noised mean of a batch. Non-private mechanisms give the plain mean.
pub fn noisy_aggregate(grads: &[PerExampleGradient], mechanism: Mechanism, seed: u64) -> Result<Vec<f64>> {
    let first = grads.first().ok_or(Error::Empty("batch"))?;
    let mut agg = Aggregator::new(mechanism, first.0.len());
    let mut buf = Vec::new();
    for g in grads {
        buf.clear();
        buf.extend_from_slice(&g.0);
        agg.add(&mut buf)?;
    }
    let mut rng = seed::rng(seed, "noisy-aggregate");
    Ok(agg.finish(grads.len() as f64, &mut rng))
}
