//! Univariate slice sampling with stepping out and shrinkage.

use rand::Rng;

#[derive(Clone, Copy, Debug)]
pub struct SliceTuning {
    pub width: f64,
    pub max_steps: u32,
}

impl Default for SliceTuning {
    fn default() -> Self {
        SliceTuning {
            width: 1.0,
            max_steps: 50,
        }
    }
}

/// One slice-sampling transition from `x0` targeting `exp(log_f)`.
pub fn slice_sample<R, F>(x0: f64, log_f: F, tuning: SliceTuning, rng: &mut R) -> f64
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    let f0 = log_f(x0);
    debug_assert!(f0.is_finite(), "slice sampler started outside the support");
    let u: f64 = 1.0 - rng.random::<f64>();
    let level = f0 + u.ln();
    let w = tuning.width;
    let mut lo = x0 - w * rng.random::<f64>();
    let mut hi = lo + w;
    let m = tuning.max_steps;
    let mut left_steps = (m as f64 * rng.random::<f64>()).floor() as u32;
    let mut right_steps = (m - 1).saturating_sub(left_steps);
    while left_steps > 0 && log_f(lo) > level {
        lo -= w;
        left_steps -= 1;
    }
    while right_steps > 0 && log_f(hi) > level {
        hi += w;
        right_steps -= 1;
    }
    loop {
        let x1 = lo + (hi - lo) * rng.random::<f64>();
        if log_f(x1) > level {
            return x1;
        }
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
        if hi - lo < 1e-14 * (1.0 + x0.abs()) {
            return x0;
        }
    }
}
