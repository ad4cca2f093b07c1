use std::f64::consts::PI;

use super::sampling::{CoupledSample, LevelSampler, SampleCost};
use crate::error::Result;
use crate::params::SamplePoint;

/// Closed-form test model `g_l(xi) = sin(pi xi_1) + c1 2^(-alpha l) (1 + 0.1 xi_2)`.
///
/// A level-`l` evaluation costs `2^(cost_rate l)`; wall and work costs are both set to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSampler {
    pub alpha: f64,
    pub c1: f64,
    pub cost_rate: f64,
    pub max_level: usize,
}

impl SyntheticSampler {
    pub fn new(alpha: f64, c1: f64, max_level: usize) -> Self {
        SyntheticSampler { alpha, c1, cost_rate: 3.0, max_level }
    }

    pub fn eval(&self, level: usize, xi: &[f64; 3]) -> f64 {
        (PI * xi[0]).sin() + self.bias(level) * (1.0 + 0.1 * xi[1])
    }

    /// `E[g_l] = c1 2^(-alpha l)`.
    pub fn bias(&self, level: usize) -> f64 {
        self.c1 * (-self.alpha * level as f64).exp2()
    }

    pub fn cost(&self, level: usize) -> f64 {
        (self.cost_rate * level as f64).exp2()
    }
}

impl LevelSampler for SyntheticSampler {
    fn num_outputs(&self) -> usize {
        1
    }

    fn max_level(&self) -> usize {
        self.max_level
    }

    fn sample(&self, level: usize, point: &SamplePoint, coupled: bool) -> Result<CoupledSample> {
        let fine = vec![self.eval(level, &point.xi)];
        let (coarse, coarse_cost) = if coupled && level > 0 {
            (Some(vec![self.eval(level - 1, &point.xi)]), self.cost(level - 1))
        } else {
            (None, 0.0)
        };
        let c = [self.cost(level), coarse_cost];
        Ok(CoupledSample { fine, coarse, cost: SampleCost { wall: c, work: c } })
    }
}
