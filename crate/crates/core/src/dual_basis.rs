//! Dual basis of a layer's hyperplane arrangement and exact single-layer
//! preimages `x* + cone(e_i : y_i = 0)` clipped to the non-negative orthant.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{check_same_dim, intersect_planes, numerical_rank, solve_affine, AffineSubspace, SignPattern, Side, Tolerances, Vector};
use crate::layer::{LayerMap, OutputPattern};
use crate::lp::{self, LpOutcome};
use crate::piece::AffinePiece;

const MAX_DRAWS: usize = 1_000_000;

/// Apex of the arrangement and the unit vectors `e_i` running along
/// `∩_{j != i} Π_j`, each pointing to the negative side of `Π_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualBasis {
    apex: Vector,
    vectors: Vec<Vector>,
}

impl DualBasis {
    pub fn apex(&self) -> &Vector {
        &self.apex
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &Vector {
        &self.vectors[i]
    }

    pub fn dim(&self) -> usize {
        self.apex.len()
    }

    /// The dual vectors as matrix columns.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.vectors)
    }

    /// Columns `e_i` for the given indices.
    pub fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            m.set_column(c, &self.vectors[i]);
        }
        m
    }
}

fn check_invertible(layer: &LayerMap, tol: &Tolerances) -> Result<()> {
    let d = layer.dim();
    for i in 0..d {
        if layer.row(i).norm() <= tol.eps_rank {
            return Err(Error::DegenerateInput(format!("weight row {i} is zero")));
        }
    }
    let rank = numerical_rank(layer.weights(), tol.eps_rank);
    if rank < d {
        return Err(Error::SingularArrangement { rank, dim: d });
    }
    Ok(())
}

pub fn build_dual_basis(layer: &LayerMap, tol: &Tolerances) -> Result<DualBasis> {
    check_invertible(layer, tol)?;
    let d = layer.dim();
    let planes = layer.hyperplanes();
    let apex = intersect_planes(&planes, d, tol)?;
    if apex.dim() != 0 {
        return Err(Error::SingularArrangement { rank: d - apex.dim(), dim: d });
    }
    let mut vectors = Vec::with_capacity(d);
    for i in 0..d {
        let others: Vec<_> = planes.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p.clone()).collect();
        let line = intersect_planes(&others, d, tol)?;
        if line.dim() != 1 {
            return Err(Error::SingularArrangement { rank: d - line.dim(), dim: d });
        }
        let mut e = line.direction_matrix().column(0).into_owned();
        let s = layer.row(i).dot(&e);
        if s.abs() <= tol.eps_rank {
            return Err(Error::SingularArrangement { rank: d - 1, dim: d });
        }
        if s > 0.0 {
            e = -e;
        }
        vectors.push(e);
    }
    Ok(DualBasis { apex: apex.base().clone(), vectors })
}

/// Exact preimage of one output through one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct PreimageSet {
    base: Vector,
    generators: Vec<(usize, Vector)>,
    ambient_dim: usize,
    target: Vector,
    // rows map a displacement to its dual-basis coordinates
    dual_coords: DMatrix<f64>,
}

impl PreimageSet {
    pub fn base(&self) -> &Vector {
        &self.base
    }

    pub fn generators(&self) -> &[(usize, Vector)] {
        &self.generators
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn target(&self) -> &Vector {
        &self.target
    }

    pub fn zero_idx(&self) -> Vec<usize> {
        self.generators.iter().map(|(i, _)| *i).collect()
    }

    pub fn generator_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.ambient_dim, self.generators.len());
        for (c, (_, e)) in self.generators.iter().enumerate() {
            m.set_column(c, e);
        }
        m
    }

    /// Dual-basis coordinates of `x - base`.
    pub fn coordinates(&self, x: &Vector) -> Vector {
        &self.dual_coords * (x - &self.base)
    }

    /// The set as a polyhedral piece (cone attached at the base, clipped to
    /// the orthant), tagged with the open-cell signature of its interior.
    pub fn to_piece(&self, tol: &Tolerances) -> Result<AffinePiece> {
        let d = self.ambient_dim;
        let sig = SignPattern::from_zero_set(d, &self.zero_idx(), Side::Minus);
        let point = AffinePiece::from_subspace(&AffineSubspace::point(self.base.clone())?, sig);
        Ok(point.extend_cone(&self.generator_matrix(), tol)?.clip_nonnegative(tol))
    }

    // constraints of the generator coefficients: alpha >= 0, base + E alpha >= 0
    fn coefficient_system(&self, extra_radius: Option<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.generators.len();
        let d = self.ambient_dim;
        let extra = if extra_radius.is_some() { p } else { 0 };
        let mut a = DMatrix::zeros(p + d + extra, p);
        let mut b = DVector::zeros(p + d + extra);
        for k in 0..p {
            a[(k, k)] = -1.0;
        }
        let e = self.generator_matrix();
        for r in 0..d {
            for k in 0..p {
                a[(p + r, k)] = -e[(r, k)];
            }
            b[p + r] = self.base[r];
        }
        if let Some(radius) = extra_radius {
            for k in 0..p {
                a[(p + d + k, k)] = 1.0;
                b[p + d + k] = radius;
            }
        }
        (a, b)
    }
}

pub fn preimage(layer: &LayerMap, y: &Vector, tol: &Tolerances) -> Result<PreimageSet> {
    let d = layer.dim();
    check_same_dim(d, y.len())?;
    let pattern = OutputPattern::of(y, tol.sign)?;
    let basis = build_dual_basis(layer, tol)?;

    // W x = y_hat - b with zero components pinned to the untranslated planes
    let mut rhs = -layer.bias();
    for &j in &pattern.positive_idx {
        rhs[j] += y[j];
    }
    let sol = solve_affine(layer.weights(), &rhs, tol).ok_or(Error::NoSolution)?;
    if sol.null.ncols() != 0 {
        return Err(Error::NoSolution);
    }
    let base = sol.base;

    let generators: Vec<(usize, Vector)> = pattern.zero_idx.iter().map(|&i| (i, basis.vector(i).clone())).collect();
    let mut dual_coords = layer.weights().clone();
    for i in 0..d {
        let s = layer.row(i).dot(basis.vector(i));
        dual_coords.row_mut(i).scale_mut(1.0 / s);
    }
    let set = PreimageSet { base, generators, ambient_dim: d, target: y.clone(), dual_coords };

    let (a, b) = set.coefficient_system(None);
    if set.generators.is_empty() {
        if set.base.iter().any(|v| *v < -tol.membership) {
            return Err(Error::EmptyPreimage);
        }
    } else if lp::feasible_point(&a, &b.add_scalar(tol.membership)).is_none() {
        return Err(Error::EmptyPreimage);
    }
    Ok(set)
}

/// Membership in the clipped preimage, using dual-basis coordinates: positive
/// components must match exactly (within `tol`), zero components need a
/// non-negative coefficient.
pub fn preimage_contains(p: &PreimageSet, x: &Vector, tol: f64) -> bool {
    if x.len() != p.ambient_dim || x.iter().any(|v| *v < -tol) {
        return false;
    }
    let alpha = p.coordinates(x);
    let zero = p.zero_idx();
    alpha.iter().enumerate().all(|(i, a)| if zero.contains(&i) { *a >= -tol } else { a.abs() <= tol })
}

/// `n` points `base + Σ α_i e_i` with coefficients drawn uniformly from the
/// part of `[0, radius]^p` that keeps the point in the orthant.
pub fn sample_preimage(p: &PreimageSet, n: usize, seed: u64, radius: f64) -> Result<Vec<Vector>> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    if p.generators.is_empty() {
        return Ok(vec![p.base.clone(); n]);
    }
    let k = p.generators.len();
    let (a, b) = p.coefficient_system(Some(radius));
    // tighten the sampling window to the bounding box of the feasible region
    let mut lo = vec![0.0; k];
    let mut hi = vec![radius; k];
    for j in 0..k {
        for (sign, slot) in [(1.0, &mut hi), (-1.0, &mut lo)] {
            let mut c = DVector::zeros(k);
            c[j] = sign;
            match lp::maximize(&c, &a, &b) {
                LpOutcome::Optimal { value, .. } => slot[j] = (sign * value).clamp(0.0, radius),
                _ => return Err(Error::SamplingExhausted { accepted: 0, draws: 0 }),
            }
        }
    }
    let e = p.generator_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut draws = 0;
    while out.len() < n {
        if draws >= MAX_DRAWS {
            return Err(Error::SamplingExhausted { accepted: out.len(), draws });
        }
        draws += 1;
        let alpha = DVector::from_fn(k, |j, _| if hi[j] > lo[j] { rng.random_range(lo[j]..=hi[j]) } else { lo[j] });
        let x = &p.base + &e * alpha;
        if x.iter().all(|v| *v >= -1e-12) {
            out.push(x.map(|v| v.max(0.0)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn identity_dual_basis() {
        let l = LayerMap::identity(2, -0.5).unwrap();
        let b = build_dual_basis(&l, &tol()).unwrap();
        assert!((b.apex() - dvector![0.5, 0.5]).norm() < 1e-12);
        assert!((b.vector(0) - dvector![-1.0, 0.0]).norm() < 1e-12);
        assert!((b.vector(1) - dvector![0.0, -1.0]).norm() < 1e-12);
    }

    #[test]
    fn singular_layer_rejected() {
        let l = LayerMap::new(dmatrix![1.0, 1.0; 1.0, 1.0], dvector![0.0, 0.0]).unwrap();
        assert!(matches!(build_dual_basis(&l, &tol()), Err(Error::SingularArrangement { rank: 1, dim: 2 })));
    }

    #[test]
    fn segment_preimage() {
        let l = LayerMap::identity(2, -0.5).unwrap();
        let p = preimage(&l, &dvector![0.0, 0.3], &tol()).unwrap();
        assert!((p.base() - dvector![0.5, 0.8]).norm() < 1e-12);
        assert_eq!(p.zero_idx(), vec![0]);
        assert!(preimage_contains(&p, &dvector![0.0, 0.8], 1e-9));
        assert!(preimage_contains(&p, &dvector![0.25, 0.8], 1e-9));
        assert!(!preimage_contains(&p, &dvector![0.6, 0.8], 1e-9));
        assert!(!preimage_contains(&p, &dvector![-0.1, 0.8], 1e-9));
    }

    #[test]
    fn positive_output_is_a_point() {
        let l = LayerMap::new(dmatrix![2.0, 1.0; 0.5, 1.0], dvector![-0.1, 0.2]).unwrap();
        let y = dvector![0.7, 0.9];
        let p = preimage(&l, &y, &tol()).unwrap();
        assert!(p.generators().is_empty());
        assert!((l.forward(p.base()).unwrap() - y).norm() < 1e-12);
        let s = sample_preimage(&p, 3, 1, 1.0).unwrap();
        assert!(s.iter().all(|x| x == p.base()));
    }

    #[test]
    fn unreachable_output() {
        // positive bias: small outputs would need negative inputs
        let l = LayerMap::identity(2, 0.5).unwrap();
        assert!(matches!(preimage(&l, &dvector![0.2, 0.7], &tol()), Err(Error::EmptyPreimage)));
        assert!(matches!(preimage(&l, &dvector![0.0, 0.7], &tol()), Err(Error::EmptyPreimage)));
    }

    #[test]
    fn negative_output_rejected() {
        let l = LayerMap::identity(2, -0.5).unwrap();
        assert!(matches!(preimage(&l, &dvector![-0.2, 0.0], &tol()), Err(Error::NegativeOutput(0))));
    }

    #[test]
    fn zero_output_cone_samples_map_to_zero() {
        let l = LayerMap::new(dmatrix![0.8, 0.1, 0.1; 0.1, 0.8, 0.1; 0.1, 0.1, 0.8], dvector![-0.5, -0.5, -0.5]).unwrap();
        let y = dvector![0.0, 0.0, 0.0];
        let p = preimage(&l, &y, &tol()).unwrap();
        assert!((p.base() - dvector![0.5, 0.5, 0.5]).norm() < 1e-12);
        assert_eq!(p.generators().len(), 3);
        for x in sample_preimage(&p, 200, 7, 2.0).unwrap() {
            assert!(preimage_contains(&p, &x, 1e-9));
            assert!(l.forward(&x).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let l = LayerMap::identity(3, -0.5).unwrap();
        let p = preimage(&l, &dvector![0.0, 0.2, 0.0], &tol()).unwrap();
        assert_eq!(sample_preimage(&p, 10, 42, 1.0).unwrap(), sample_preimage(&p, 10, 42, 1.0).unwrap());
    }

    #[test]
    fn piece_form_matches_membership() {
        let l = LayerMap::identity(2, -0.5).unwrap();
        let p = preimage(&l, &dvector![0.0, 0.3], &tol()).unwrap();
        let piece = p.to_piece(&tol()).unwrap();
        assert_eq!(piece.dim(), 1);
        assert!(piece.contains(&dvector![0.0, 0.8], 1e-9));
        assert!(!piece.contains(&dvector![-0.1, 0.8], 1e-9));
    }
}
