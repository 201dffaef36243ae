//! Circulant layers built from short convolution kernels, their regular cone
//! description, and the nesting and contraction diagnostics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual_basis::build_dual_basis;
use crate::error::{Error, Result};
use crate::geometry::{intersect_planes, SignPattern, Side, Tolerances, Vector};
use crate::layer::LayerMap;
use crate::lp::{self, LpOutcome};
use crate::piece::AffinePiece;

/// Convolution taps with one shared bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    taps: Vec<f64>,
    bias: f64,
}

impl Kernel {
    pub fn new(taps: Vec<f64>, bias: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::DegenerateInput("kernel has no taps".into()));
        }
        if !taps.iter().all(|t| t.is_finite()) || !bias.is_finite() {
            return Err(Error::NonFinite("kernel"));
        }
        Ok(Kernel { taps, bias })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn support(&self) -> usize {
        self.taps.len()
    }
}

/// Row `i` holds the kernel starting at column `i`, wrapping around.
pub fn circulant_layer(kernel: &Kernel, d: usize) -> Result<LayerMap> {
    if kernel.support() > d {
        return Err(Error::DimensionMismatch { expected: d, found: kernel.support() });
    }
    let mut w = DMatrix::zeros(d, d);
    for i in 0..d {
        for (j, t) in kernel.taps.iter().enumerate() {
            w[(i, (i + j) % d)] = *t;
        }
    }
    LayerMap::new(w, Vector::from_element(d, kernel.bias))
}

/// True if every row is the previous one shifted right by one column and
/// all biases agree.
pub fn is_circulant(layer: &LayerMap, tol: f64) -> bool {
    let d = layer.dim();
    let w = layer.weights();
    let b = layer.bias();
    (0..d).all(|i| {
        (b[i] - b[0]).abs() <= tol && (0..d).all(|j| (w[(i, (i + j) % d)] - w[(0, j)]).abs() <= tol)
    })
}

/// Regular polyhedral cone of a circulant layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeDescriptor {
    pub apex: Vector,
    pub axis: Vector,
    /// Angle between each plane normal and the identity axis.
    pub half_angle: f64,
    pub row_sum: f64,
    pub bias: f64,
    /// Angle, inside the hyperplane orthogonal to the axis, between each
    /// normal and the matching coordinate normal. `None` when the normal is
    /// parallel to the axis.
    pub rotation_angles: Vec<Option<f64>>,
}

fn angle_between(a: &Vector, b: &Vector) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos()
}

pub fn cone_of(layer: &LayerMap, tol: &Tolerances) -> Result<ConeDescriptor> {
    let d = layer.dim();
    let scale = layer.weights().amax().max(1.0);
    if !is_circulant(layer, 1e-12 * scale) {
        return Err(Error::NotCirculant);
    }
    let row_sum: f64 = layer.row(0).sum();
    if row_sum.abs() < tol.eps_rank {
        return Err(Error::ApexAtInfinity { row_sum });
    }
    let bias = layer.bias()[0];
    let apex = Vector::from_element(d, -bias / row_sum);
    let axis = Vector::from_element(d, 1.0 / (d as f64).sqrt());
    let angles: Vec<f64> = (0..d).map(|i| angle_between(&layer.row(i), &axis)).collect();
    let spread = angles.iter().fold(0.0f64, |m, a| m.max((a - angles[0]).abs()));
    if spread > 1e-9 {
        return Err(Error::NotCirculant);
    }
    let project = |v: &Vector| v - &axis * axis.dot(v);
    let rotation_angles = (0..d)
        .map(|i| {
            let pw = project(&layer.row(i));
            let mut u = Vector::zeros(d);
            u[i] = 1.0;
            let pu = project(&u);
            (pw.norm() > tol.eps_rank).then(|| angle_between(&pw, &pu))
        })
        .collect();
    Ok(ConeDescriptor { apex, axis, half_angle: angles[0], row_sum, bias, rotation_angles })
}

/// `(S x)_k = x_{k-1}`, indices modulo `d`.
pub fn cyclic_shift(x: &Vector) -> Vector {
    let d = x.len();
    Vector::from_fn(d, |k, _| x[(k + d - 1) % d])
}

/// Largest `‖forward(S x) − S forward(x)‖` over random inputs in `[0, 2]^d`.
pub fn check_shift_equivariance(layer: &LayerMap, trials: usize, seed: u64) -> f64 {
    let d = layer.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x = Vector::from_fn(d, |_, _| rng.random_range(0.0..2.0));
        let lhs = layer.forward(&cyclic_shift(&x)).expect("dimension fixed by the layer");
        let rhs = cyclic_shift(&layer.forward(&x).expect("dimension fixed by the layer"));
        worst = worst.max((lhs - rhs).norm());
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NestingFailure {
    /// The positive span from the witness never reaches the matching
    /// coordinate face.
    MissesFace,
    /// The span reaches the matching face only on a further coordinate plane.
    ReachesOtherFace,
    /// Part of the coordinate face lies on the positive side of a plane of the
    /// subset, so the face is not contained in the cone.
    FaceNotContained,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetViolation {
    pub subset: Vec<usize>,
    pub failure: NestingFailure,
    pub witness: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetResult {
    pub subset: Vec<usize>,
    pub samples_checked: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NestingReport {
    pub fully_nested: bool,
    pub violated_subsets: Vec<SubsetViolation>,
    pub checked_subsets: usize,
    pub subsets: Vec<SubsetResult>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NestingOptions {
    pub samples_per_subset: usize,
    pub seed: u64,
    /// Witnesses are drawn from `[0, box_radius]^d`.
    pub box_radius: f64,
    pub tol: Tolerances,
}

impl Default for NestingOptions {
    fn default() -> Self {
        NestingOptions { samples_per_subset: 64, seed: 0, box_radius: 2.0, tol: Tolerances::default() }
    }
}

/// Nonempty subsets of `0..d`, by cardinality and then lexicographically.
pub fn ordered_subsets(d: usize, include_empty: bool) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0u64..(1u64 << d))
        .map(|mask| (0..d).filter(|i| mask & (1 << i) != 0).collect::<Vec<_>>())
        .filter(|s| include_empty || !s.is_empty())
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

pub fn check_nesting(layer: &LayerMap, samples_per_subset: usize, seed: u64) -> Result<NestingReport> {
    check_nesting_with(layer, &NestingOptions { samples_per_subset, seed, ..NestingOptions::default() })
}

pub fn check_nesting_with(layer: &LayerMap, opts: &NestingOptions) -> Result<NestingReport> {
    let d = layer.dim();
    if d > 12 {
        return Err(Error::InvalidDimension(d));
    }
    let tol = &opts.tol;
    let eps = 1e-9;
    let basis = build_dual_basis(layer, tol)?;
    let planes = layer.hyperplanes();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = NestingReport { fully_nested: true, violated_subsets: Vec::new(), checked_subsets: 0, subsets: Vec::new() };

    for subset in ordered_subsets(d, false) {
        report.checked_subsets += 1;
        let rest: Vec<usize> = (0..d).filter(|k| !subset.contains(k)).collect();
        let mut violation = face_containment(layer, &subset, &rest, opts.box_radius, eps);
        let mut checked = 0;

        if violation.is_none() {
            let sub_planes: Vec<_> = subset.iter().map(|&i| planes[i].clone()).collect();
            let samples = match intersect_planes(&sub_planes, d, tol) {
                Ok(m) => AffinePiece::from_subspace(&m, SignPattern::from_zero_set(d, &subset, Side::Zero))
                    .clip_box(0.0, opts.box_radius, tol)
                    .sample(opts.samples_per_subset, &mut rng, tol),
                Err(_) => Vec::new(),
            };
            let e = basis.columns(&subset);
            for x in samples {
                checked += 1;
                if let Some(failure) = span_meets_face(&x, &e, &subset, &rest, eps) {
                    violation = Some(SubsetViolation { subset: subset.clone(), failure, witness: x });
                    break;
                }
            }
        }

        let passed = violation.is_none();
        if let Some(v) = violation {
            report.fully_nested = false;
            report.violated_subsets.push(v);
        }
        report.subsets.push(SubsetResult { subset, samples_checked: checked, passed });
    }
    Ok(report)
}

// The coordinate face {x_I = 0} inside the box must sit on the non-positive
// side of every plane in I. The worst vertex sets x_k = R where w_ik > 0.
fn face_containment(layer: &LayerMap, subset: &[usize], rest: &[usize], radius: f64, eps: f64) -> Option<SubsetViolation> {
    let d = layer.dim();
    let w = layer.weights();
    for &i in subset {
        let mut z = Vector::zeros(d);
        for &k in rest {
            if w[(i, k)] > 0.0 {
                z[k] = radius;
            }
        }
        if w.row(i).dot(&z.transpose()) + layer.bias()[i] > eps {
            return Some(SubsetViolation { subset: subset.to_vec(), failure: NestingFailure::FaceNotContained, witness: z });
        }
    }
    None
}

// Does x + E alpha (alpha >= 0) reach {x_I = 0, x_rest >= 0}, and only on
// coordinate planes of I?
fn span_meets_face(x: &Vector, e: &DMatrix<f64>, subset: &[usize], rest: &[usize], eps: f64) -> Option<NestingFailure> {
    let p = subset.len();
    let mut e_ii = DMatrix::zeros(p, p);
    for (r, &i) in subset.iter().enumerate() {
        e_ii.row_mut(r).copy_from(&e.row(i));
    }
    let x_i = DVector::from_iterator(p, subset.iter().map(|&i| x[i]));
    let face_point = match e_ii.clone().lu().solve(&(-&x_i)) {
        Some(alpha) if e_ii.clone().svd(false, false).singular_values.min() > 1e-10 => {
            if alpha.iter().any(|a| *a < -eps) {
                return Some(NestingFailure::MissesFace);
            }
            x + e * alpha
        }
        _ => {
            // singular block: fall back to a feasibility program
            let d = x.len();
            let mut a = DMatrix::zeros(p + d + 2 * p, p);
            let mut b = DVector::zeros(p + d + 2 * p);
            for k in 0..p {
                a[(k, k)] = -1.0;
            }
            for r in 0..d {
                for k in 0..p {
                    a[(p + r, k)] = -e[(r, k)];
                }
                b[p + r] = x[r] + eps;
            }
            for (r, &i) in subset.iter().enumerate() {
                for k in 0..p {
                    a[(p + d + 2 * r, k)] = e[(i, k)];
                    a[(p + d + 2 * r + 1, k)] = -e[(i, k)];
                }
                b[p + d + 2 * r] = -x[i] + eps;
                b[p + d + 2 * r + 1] = x[i] + eps;
            }
            match lp::maximize(&DVector::zeros(p), &a, &b) {
                LpOutcome::Optimal { x: alpha, .. } => x + e * alpha,
                _ => return Some(NestingFailure::MissesFace),
            }
        }
    };
    for &k in rest {
        if face_point[k] < -eps {
            return Some(NestingFailure::MissesFace);
        }
        if x[k] > eps && face_point[k] <= eps {
            return Some(NestingFailure::ReachesOtherFace);
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternDimensions {
    pub pattern: SignPattern,
    /// Smallest dimension of a coordinate face holding a point with this pattern.
    pub source_dim: usize,
    /// Dimension of the output subspace the pattern maps to (number of active units).
    pub image_dim: usize,
    pub witness: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub patterns: Vec<PatternDimensions>,
    pub violations: Vec<PatternDimensions>,
    pub points_checked: usize,
}

impl ContractionReport {
    pub fn is_contracting(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionOptions {
    pub seed: u64,
    pub box_radius: f64,
    pub samples_per_face: usize,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        ContractionOptions { seed: 0, box_radius: 2.0, samples_per_face: 32 }
    }
}

pub fn check_contraction(layer: &LayerMap, seed: u64) -> Result<ContractionReport> {
    check_contraction_with(layer, &ContractionOptions { seed, ..ContractionOptions::default() })
}

/// Samples every coordinate face of `[0, R]^d` (corners included) and flags
/// output patterns whose active count exceeds the dimension of the face the
/// point came from.
pub fn check_contraction_with(layer: &LayerMap, opts: &ContractionOptions) -> Result<ContractionReport> {
    let d = layer.dim();
    if d > 8 {
        return Err(Error::InvalidDimension(d));
    }
    let r = opts.box_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut points: Vec<(Vector, usize)> = Vec::new();
    for mask in 0u32..(1 << d) {
        // corner with coordinates in {0, R}
        let corner = Vector::from_fn(d, |k, _| if mask & (1 << k) != 0 { r } else { 0.0 });
        points.push((corner, mask.count_ones() as usize));
        // free coordinates uniform in (0, R]
        for _ in 0..opts.samples_per_face {
            let x = Vector::from_fn(d, |k, _| if mask & (1 << k) != 0 { r * (1.0 - rng.random::<f64>()) } else { 0.0 });
            points.push((x, mask.count_ones() as usize));
        }
    }
    let mut table: BTreeMap<SignPattern, PatternDimensions> = BTreeMap::new();
    for (x, source_dim) in &points {
        let y = layer.pre_activation(x)?;
        let pattern = SignPattern(y.iter().map(|v| if *v > 1e-9 { Side::Plus } else { Side::Minus }).collect());
        let image_dim = pattern.count(Side::Plus);
        let entry = table.entry(pattern.clone()).or_insert_with(|| PatternDimensions {
            pattern,
            source_dim: *source_dim,
            image_dim,
            witness: x.clone(),
        });
        if *source_dim < entry.source_dim {
            entry.source_dim = *source_dim;
            entry.witness = x.clone();
        }
    }
    let patterns: Vec<PatternDimensions> = table.into_values().collect();
    let violations = patterns.iter().filter(|p| p.image_dim > p.source_dim).cloned().collect();
    Ok(ContractionReport { patterns, violations, points_checked: points.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn layer(taps: &[f64], bias: f64, d: usize) -> LayerMap {
        circulant_layer(&Kernel::new(taps.to_vec(), bias).unwrap(), d).unwrap()
    }

    #[test]
    fn three_tap_rows() {
        let l = layer(&[1.0, 2.0, 3.0], 0.0, 3);
        let w = l.weights();
        assert_eq!(w.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(w.row(1).iter().copied().collect::<Vec<_>>(), vec![3.0, 1.0, 2.0]);
        assert_eq!(w.row(2).iter().copied().collect::<Vec<_>>(), vec![2.0, 3.0, 1.0]);
    }

    #[test]
    fn single_tap_is_identity() {
        let l = layer(&[1.0], 0.0, 5);
        assert_eq!(l.weights(), &DMatrix::identity(5, 5));
    }

    #[test]
    fn two_node_rows() {
        let l = layer(&[0.7, 0.2], 0.0, 2);
        assert_eq!(l.weights(), &nalgebra::dmatrix![0.7, 0.2; 0.2, 0.7]);
    }

    #[test]
    fn kernel_longer_than_dimension() {
        let k = Kernel::new(vec![1.0, 1.0, 1.0], 0.0).unwrap();
        assert!(matches!(circulant_layer(&k, 2), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn cone_apex_examples() {
        let t = Tolerances::default();
        let c = cone_of(&layer(&[1.0, 0.0, 0.0], -0.5, 3), &t).unwrap();
        assert!((c.apex - dvector![0.5, 0.5, 0.5]).norm() < 1e-15);
        let c = cone_of(&layer(&[1.0, 0.0, 0.0], 0.0, 3), &t).unwrap();
        assert!(c.apex.norm() < 1e-15);
        let c = cone_of(&layer(&[0.6, 0.2, 0.2], -1.0, 3), &t).unwrap();
        assert!((c.apex - dvector![1.0, 1.0, 1.0]).norm() < 1e-12);
    }

    #[test]
    fn cone_errors() {
        let t = Tolerances::default();
        assert!(matches!(cone_of(&layer(&[1.0, -1.0], 0.3, 2), &t), Err(Error::ApexAtInfinity { .. })));
        let l = LayerMap::new(nalgebra::dmatrix![1.0, 0.2; 0.1, 1.0], dvector![0.0, 0.0]).unwrap();
        assert!(matches!(cone_of(&l, &t), Err(Error::NotCirculant)));
    }

    #[test]
    fn identity_rotation_is_zero() {
        let c = cone_of(&layer(&[1.0, 0.0, 0.0], -0.5, 3), &Tolerances::default()).unwrap();
        assert!(c.rotation_angles.iter().all(|a| a.unwrap().abs() < 1e-7));
        let c = cone_of(&layer(&[0.5, 0.5], -0.5, 2), &Tolerances::default()).unwrap();
        assert!(c.rotation_angles.iter().all(|a| a.is_none()));
    }

    #[test]
    fn identity_shift_error_is_zero() {
        assert_eq!(check_shift_equivariance(&layer(&[1.0], -0.3, 4), 20, 1), 0.0);
    }

    #[test]
    fn identity_is_nested_and_contracting() {
        let l = layer(&[1.0, 0.0, 0.0], -0.5, 3);
        let r = check_nesting(&l, 16, 3).unwrap();
        assert!(r.fully_nested, "{:?}", r.violated_subsets);
        assert_eq!(r.checked_subsets, 7);
        assert!(check_contraction(&l, 3).unwrap().is_contracting());
    }

    #[test]
    fn wide_angle_fails_both() {
        let l = layer(&[0.34, 0.33, 0.33], -0.1, 3);
        let r = check_nesting(&l, 16, 3).unwrap();
        assert!(!r.fully_nested);
        assert!(!r.violated_subsets.is_empty());
        let c = check_contraction(&l, 3).unwrap();
        assert!(!c.is_contracting());
    }

    #[test]
    fn subset_order() {
        let s = ordered_subsets(3, true);
        assert_eq!(s[0], Vec::<usize>::new());
        assert_eq!(s[1], vec![0]);
        assert_eq!(s[4], vec![0, 1]);
        assert_eq!(s[7], vec![0, 1, 2]);
    }
}
