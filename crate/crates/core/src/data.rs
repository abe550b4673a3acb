use ndarray::{Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SbartError};
use crate::priors::GroupStructure;

/// Affine map between the original response scale and the internal scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseTransform {
    pub scale: f64,
    pub offset: f64,
}

impl ResponseTransform {
    pub fn identity() -> Self {
        ResponseTransform {
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub fn to_internal(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }

    pub fn to_original(&self, z: f64) -> f64 {
        z * self.scale + self.offset
    }
}

/// Preprocessed training set: predictors in `[0, 1]`, response on the
/// internal scale.
#[derive(Clone, Debug)]
pub struct TrainingData {
    x: Array2<f64>,
    y: Vec<f64>,
    pub transform: ResponseTransform,
    pub groups: Option<GroupStructure>,
}

impl TrainingData {
    pub fn new(x: Array2<f64>, y: Vec<f64>, transform: ResponseTransform) -> Result<Self> {
        let (n, p) = x.dim();
        if n < 2 || p < 1 {
            return Err(SbartError::data(format!("need n >= 2 and p >= 1, got n={n}, p={p}")));
        }
        if y.len() != n {
            return Err(SbartError::data(format!("x has {n} rows but y has {} entries", y.len())));
        }
        if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(SbartError::data("predictors must lie in [0, 1]"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SbartError::data("response has non-finite entries"));
        }
        // column-major so each predictor column is contiguous
        let x = Array2::from_shape_fn((n, p).f(), |(i, j)| x[[i, j]]);
        Ok(TrainingData {
            x,
            y,
            transform,
            groups: None,
        })
    }

    pub fn with_groups(mut self, groups: GroupStructure) -> Result<Self> {
        if groups.num_predictors() != self.p() {
            return Err(SbartError::structure(format!(
                "grouping covers {} predictors but data has {}",
                groups.num_predictors(),
                self.p()
            )));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let start = j * self.n();
        &self.x.as_slice_memory_order().expect("contiguous storage")[start..start + self.n()]
    }
}
