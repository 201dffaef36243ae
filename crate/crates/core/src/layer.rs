//! The affine-plus-ReLU layer map `y = max(0, W x + b)` and its hyperplane
//! arrangement.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{check_dim, check_same_dim, side_of, Hyperplane, SignPattern, Side, Vector};

/// One single-channel layer: square weights (rows `w_i`) and bias `b_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerMap {
    weights: DMatrix<f64>,
    bias: Vector,
}

impl LayerMap {
    pub fn new(weights: DMatrix<f64>, bias: Vector) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::DimensionMismatch { expected: weights.nrows(), found: weights.ncols() });
        }
        check_dim(weights.nrows())?;
        check_same_dim(weights.nrows(), bias.len())?;
        if !weights.iter().chain(bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        Ok(LayerMap { weights, bias })
    }

    /// Identity weights with a shared bias.
    pub fn identity(d: usize, bias: f64) -> Result<Self> {
        LayerMap::new(DMatrix::identity(d, d), Vector::from_element(d, bias))
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Vector {
        &self.bias
    }

    pub fn row(&self, i: usize) -> Vector {
        self.weights.row(i).transpose()
    }

    pub fn hyperplane(&self, i: usize) -> Hyperplane {
        // zero rows are reported by the consumers that need a proper plane
        Hyperplane::from_raw(self.row(i), self.bias[i])
    }

    pub fn hyperplanes(&self) -> Vec<Hyperplane> {
        (0..self.dim()).map(|i| self.hyperplane(i)).collect()
    }

    /// `W x + b` without the rectifier.
    pub fn pre_activation(&self, x: &Vector) -> Result<Vector> {
        check_same_dim(self.dim(), x.len())?;
        Ok(&self.weights * x + &self.bias)
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        if x.iter().any(|v| *v < -1e-9) {
            log::warn!("layer input outside the non-negative orthant: {:?}", x.as_slice());
        }
        Ok(self.pre_activation(x)?.map(|v| v.max(0.0)))
    }

    pub fn cell_signature(&self, x: &Vector, tol: f64) -> Result<SignPattern> {
        check_same_dim(self.dim(), x.len())?;
        Ok(SignPattern(self.hyperplanes().iter().map(|p| side_of(p, x, tol)).collect()))
    }

    /// Distinct open-cell signatures (`Zero` folded into `Minus`) realized by the
    /// grid `{0, h, 2h, ..} ^ d` inside `[0, box_radius]^d`.
    pub fn enumerate_cells(&self, box_radius: f64, resolution: f64) -> Result<BTreeSet<SignPattern>> {
        if !(box_radius >= 0.0 && resolution > 0.0) {
            return Err(Error::Config("enumerate_cells needs radius >= 0 and resolution > 0".into()));
        }
        let d = self.dim();
        let steps = (box_radius / resolution + 1e-9).floor() as usize + 1;
        let cap = 1usize.checked_shl(d as u32).unwrap_or(usize::MAX);
        let mut cells = BTreeSet::new();
        let mut idx = vec![0usize; d];
        let mut x = Vector::zeros(d);
        loop {
            for (k, &i) in idx.iter().enumerate() {
                x[k] = i as f64 * resolution;
            }
            let z = &self.weights * &x + &self.bias;
            cells.insert(SignPattern(
                z.iter().map(|v| if *v > 1e-9 { Side::Plus } else { Side::Minus }).collect(),
            ));
            if cells.len() >= cap {
                break;
            }
            // odometer
            let mut k = 0;
            loop {
                if k == d {
                    return Ok(cells);
                }
                idx[k] += 1;
                if idx[k] < steps {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
        Ok(cells)
    }
}

/// The output `y` split into its positive and zero components.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputPattern {
    pub values: Vector,
    pub positive_idx: Vec<usize>,
    pub zero_idx: Vec<usize>,
}

impl OutputPattern {
    pub fn of(y: &Vector, tol: f64) -> Result<Self> {
        let mut positive_idx = Vec::new();
        let mut zero_idx = Vec::new();
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite("output"));
            }
            if v < -tol {
                return Err(Error::NegativeOutput(i));
            }
            if v > tol {
                positive_idx.push(i);
            } else {
                zero_idx.push(i);
            }
        }
        Ok(OutputPattern { values: y.clone(), positive_idx, zero_idx })
    }
}
