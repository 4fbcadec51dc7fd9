//! Sample regions: axis-aligned boxes with an optional excluded ball.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("box bounds are inconsistent: {0}")]
    InvalidBox(String),
    #[error("could not draw {requested} points outside the excluded set after {attempts} attempts")]
    Exhausted { requested: usize, attempts: usize },
}

/// Points whose Euclidean norm over `coords` is below `radius` are excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub coords: Vec<usize>,
    pub radius: f64,
}

impl Exclusion {
    pub fn norm(&self, p: &[f64]) -> f64 {
        self.coords.iter().map(|&i| p[i] * p[i]).sum::<f64>().sqrt()
    }

    pub fn excludes(&self, p: &[f64]) -> bool {
        self.norm(p) < self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion: Option<Exclusion>,
}

impl SampleBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SamplingError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(SamplingError::InvalidBox(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i]) || !lower[i].is_finite() || !upper[i].is_finite()) {
            return Err(SamplingError::InvalidBox(format!(
                "axis {i}: [{}, {}]",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper, exclusion: None })
    }

    /// The cube `[-half_width, half_width]^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Self {
        Self::new(vec![-half_width; dim], vec![half_width; dim]).expect("valid cube")
    }

    pub fn with_exclusion(mut self, coords: Vec<usize>, radius: f64) -> Self {
        self.exclusion = Some(Exclusion { coords, radius });
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter().zip(&self.lower).zip(&self.upper).all(|((x, lo), hi)| lo <= x && x <= hi)
            && !self.excluded(p)
    }

    pub fn excluded(&self, p: &[f64]) -> bool {
        self.exclusion.as_ref().is_some_and(|e| e.excludes(p))
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// `count` uniform points (rejection sampling against the exclusion),
    /// deterministic in `seed`.
    pub fn uniform(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, SamplingError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let max_attempts = 1000 * count.max(1);
        let mut attempts = 0;
        while out.len() < count {
            if attempts >= max_attempts {
                return Err(SamplingError::Exhausted { requested: count, attempts });
            }
            attempts += 1;
            let p: Vec<f64> = self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                .collect();
            if !self.excluded(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Tensor grid with `per_axis` points on each of the first `axes`
    /// coordinates; remaining coordinates sit at the box centre. Excluded
    /// points are skipped.
    pub fn grid(&self, per_axis: usize, axes: usize) -> Vec<Vec<f64>> {
        let axes = axes.min(self.dim());
        let center = self.center();
        let per_axis = per_axis.max(1);
        let total = per_axis.pow(axes as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut p = center.clone();
            let mut rem = flat;
            for (a, slot) in p.iter_mut().enumerate().take(axes) {
                let k = rem % per_axis;
                rem /= per_axis;
                *slot = if per_axis == 1 {
                    center[a]
                } else {
                    self.lower[a] + (self.upper[a] - self.lower[a]) * k as f64 / (per_axis - 1) as f64
                };
            }
            if !self.excluded(&p) {
                out.push(p);
            }
        }
        out
    }
}
