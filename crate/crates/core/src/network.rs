//! Stacks of equal-width layers and recursive preimages through them.

use nalgebra::{DMatrix, DVector};

use crate::circulant_cone::ordered_subsets;
use crate::dual_basis::{build_dual_basis, preimage, DualBasis};
use crate::error::{Error, Result};
use crate::geometry::{check_same_dim, SignPattern, Side, Tolerances, Vector};
use crate::layer::LayerMap;
use crate::piece::AffinePiece;

/// Faces thinner than this (in the smallest active coordinate) are dropped.
pub const THIN: f64 = 1e-9;

pub const DEFAULT_PIECE_BUDGET: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<LayerMap>,
}

impl Network {
    pub fn new(layers: Vec<LayerMap>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::DegenerateInput("network has no layers".into()))?;
        let d = first.dim();
        for l in &layers {
            check_same_dim(d, l.dim())?;
        }
        Ok(Network { layers })
    }

    pub fn dim(&self) -> usize {
        self.layers[0].dim()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerMap] {
        &self.layers
    }
}

pub fn net_forward(net: &Network, x: &Vector) -> Result<Vector> {
    let mut v = x.clone();
    for l in &net.layers {
        v = l.forward(&v)?;
    }
    Ok(v)
}

/// All activations: entry 0 is the input, entry `k` the output of layer `k - 1`.
pub fn net_activations(net: &Network, x: &Vector) -> Result<Vec<Vector>> {
    let mut out = vec![x.clone()];
    for l in &net.layers {
        let next = l.forward(out.last().expect("non-empty"))?;
        out.push(next);
    }
    Ok(out)
}

/// A preimage piece together with the index of the piece it maps into one
/// level up (`None` at the top level).
#[derive(Clone, Debug, PartialEq)]
pub struct LinkedPiece {
    pub piece: AffinePiece,
    pub parent: Option<usize>,
    pub zero_set: Vec<usize>,
}

/// `levels[k]` holds pieces in the input space of layer `k`; the last level
/// is the single-layer preimage of the target.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredPreimage {
    target: Vector,
    levels: Vec<Vec<LinkedPiece>>,
}

impl LayeredPreimage {
    pub fn target(&self) -> &Vector {
        &self.target
    }

    pub fn levels(&self) -> &[Vec<LinkedPiece>] {
        &self.levels
    }

    pub fn input_pieces(&self) -> &[LinkedPiece] {
        &self.levels[0]
    }

    pub fn piece_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// True if `x` lies in some input-level piece.
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.levels[0].iter().any(|p| p.piece.contains(x, tol))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreimageOptions {
    pub piece_budget: usize,
    pub tol: Tolerances,
}

impl Default for PreimageOptions {
    fn default() -> Self {
        PreimageOptions { piece_budget: DEFAULT_PIECE_BUDGET, tol: Tolerances::default() }
    }
}

/// Inverse affine data of one layer, computed once per pull-back pass.
#[derive(Clone, Debug)]
pub(crate) struct LayerInverse {
    winv: DMatrix<f64>,
    shift: DVector<f64>,
    basis: DualBasis,
}

impl LayerInverse {
    pub(crate) fn new(layer: &LayerMap, tol: &Tolerances) -> Result<Self> {
        let basis = build_dual_basis(layer, tol)?;
        let d = layer.dim();
        let winv = layer
            .weights()
            .clone()
            .try_inverse()
            .ok_or(Error::SingularArrangement { rank: d - 1, dim: d })?;
        let shift = -(&winv * layer.bias());
        Ok(LayerInverse { winv, shift, basis })
    }

    /// Inputs mapping onto `face` (a piece of outputs whose coordinates in
    /// `zero_set` vanish): the affine inverse of the face plus the positive
    /// span of the matching dual vectors, clipped to the orthant.
    pub(crate) fn span_face(&self, zero_set: &[usize], face: &AffinePiece, tol: &Tolerances) -> Result<Option<AffinePiece>> {
        let d = face.ambient_dim();
        let mapped = face.map_affine(&self.winv, &self.shift, tol)?;
        let spanned = mapped.extend_cone(&self.basis.columns(zero_set), tol)?;
        let sig = SignPattern::from_zero_set(d, zero_set, Side::Minus);
        Ok(spanned.clip_nonnegative(tol).reduce(tol).map(|p| p.with_signature(sig)))
    }
}

/// Splits a piece of the non-negative orthant by the coordinate planes it
/// touches: entry `(I, F)` is the part with `y_I = 0` whose remaining
/// coordinates can all be strictly positive.
pub fn orthant_faces(piece: &AffinePiece, tol: &Tolerances) -> Vec<(Vec<usize>, AffinePiece)> {
    let d = piece.ambient_dim();
    let can_vanish: Vec<bool> = (0..d).map(|i| piece.min_coordinate(i, tol).is_some_and(|m| m <= THIN)).collect();
    let mut out = Vec::new();
    for zero_set in ordered_subsets(d, true) {
        if zero_set.iter().any(|&i| !can_vanish[i]) {
            continue;
        }
        let face = if zero_set.is_empty() {
            piece.reduce(tol)
        } else {
            let mut e = DMatrix::zeros(zero_set.len(), d);
            for (r, &i) in zero_set.iter().enumerate() {
                e[(r, i)] = 1.0;
            }
            piece.restrict(&e, &DVector::zeros(zero_set.len()), tol).and_then(|f| f.reduce(tol))
        };
        let Some(face) = face else { continue };
        let active: Vec<usize> = (0..d).filter(|k| !zero_set.contains(k)).collect();
        if !active.is_empty() && !face.max_min_coordinate(&active, tol).is_some_and(|m| m > THIN) {
            continue;
        }
        out.push((zero_set, face));
    }
    out
}

/// Preimage of an output piece through one layer, one input piece per
/// realized zero set.
pub fn pull_back(piece: &AffinePiece, layer: &LayerMap, tol: &Tolerances) -> Result<Vec<(Vec<usize>, AffinePiece)>> {
    check_same_dim(layer.dim(), piece.ambient_dim())?;
    let inv = LayerInverse::new(layer, tol)?;
    pull_back_with(piece, &inv, tol)
}

pub(crate) fn pull_back_with(piece: &AffinePiece, inv: &LayerInverse, tol: &Tolerances) -> Result<Vec<(Vec<usize>, AffinePiece)>> {
    let mut out = Vec::new();
    for (zero_set, face) in orthant_faces(piece, tol) {
        if let Some(p) = inv.span_face(&zero_set, &face, tol)? {
            out.push((zero_set, p));
        }
    }
    Ok(out)
}

pub fn net_preimage(net: &Network, y: &Vector, tol: &Tolerances) -> Result<LayeredPreimage> {
    net_preimage_with(net, y, &PreimageOptions { tol: *tol, ..PreimageOptions::default() })
}

pub fn net_preimage_with(net: &Network, y: &Vector, opts: &PreimageOptions) -> Result<LayeredPreimage> {
    let tol = &opts.tol;
    let depth = net.depth();
    check_same_dim(net.dim(), y.len())?;
    let top_layer = &net.layers[depth - 1];
    let top = preimage(top_layer, y, tol)?;
    let top_piece = top.to_piece(tol)?.reduce(tol).ok_or(Error::EmptyPreimage)?;
    let mut levels: Vec<Vec<LinkedPiece>> = vec![Vec::new(); depth];
    levels[depth - 1].push(LinkedPiece { piece: top_piece, parent: None, zero_set: top.zero_idx() });
    let mut count = 1;
    for k in (0..depth - 1).rev() {
        let inv = LayerInverse::new(&net.layers[k], tol)?;
        let mut next = Vec::new();
        for (parent, linked) in levels[k + 1].iter().enumerate() {
            for (zero_set, piece) in pull_back_with(&linked.piece, &inv, tol)? {
                count += 1;
                if count > opts.piece_budget {
                    return Err(Error::PieceBudgetExceeded { budget: opts.piece_budget });
                }
                next.push(LinkedPiece { piece, parent: Some(parent), zero_set });
            }
        }
        if next.is_empty() {
            return Err(Error::EmptyPreimage);
        }
        levels[k] = next;
    }
    Ok(LayeredPreimage { target: y.clone(), levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn identity_stack_forward() {
        let l = LayerMap::identity(4, -0.2).unwrap();
        let net = Network::new(vec![l.clone(), l.clone(), l]).unwrap();
        let y = net_forward(&net, &Vector::from_element(4, 1.0)).unwrap();
        assert!((y - Vector::from_element(4, 0.4)).norm() < 1e-12);
    }

    #[test]
    fn mismatched_layers_rejected() {
        let a = LayerMap::identity(2, 0.0).unwrap();
        let b = LayerMap::identity(3, 0.0).unwrap();
        assert!(matches!(Network::new(vec![a, b]), Err(Error::DimensionMismatch { .. })));
        assert!(Network::new(vec![]).is_err());
    }

    #[test]
    fn single_layer_matches_dual_basis_preimage() {
        let l = LayerMap::identity(2, -0.5).unwrap();
        let net = Network::new(vec![l.clone()]).unwrap();
        let y = dvector![0.0, 0.3];
        let lp = net_preimage(&net, &y, &tol()).unwrap();
        assert_eq!(lp.levels().len(), 1);
        let p = preimage(&l, &y, &tol()).unwrap();
        let piece = &lp.input_pieces()[0].piece;
        assert!(piece.contains(p.base(), 1e-9));
        assert!(piece.contains(&dvector![0.0, 0.8], 1e-9));
        assert!(!piece.contains(&dvector![0.0, 0.9], 1e-9));
    }

    #[test]
    fn positive_output_inverts_to_a_point() {
        let a = LayerMap::new(dmatrix![1.0, 0.2; 0.3, 0.9], dvector![-0.1, -0.2]).unwrap();
        let b = LayerMap::new(dmatrix![0.8, 0.1; 0.1, 1.1], dvector![-0.05, -0.1]).unwrap();
        let net = Network::new(vec![a, b]).unwrap();
        let y = net_forward(&net, &dvector![1.3, 1.1]).unwrap();
        let lp = net_preimage(&net, &y, &tol()).unwrap();
        let pieces = lp.input_pieces();
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].piece.dim(), 0);
        assert!((net_forward(&net, pieces[0].piece.base()).unwrap() - y).norm() < 1e-8);
    }

    #[test]
    fn zero_output_through_two_layers_is_sound() {
        let a = LayerMap::identity(2, -0.5).unwrap();
        let b = LayerMap::identity(2, -0.4).unwrap();
        let net = Network::new(vec![a, b]).unwrap();
        let y = dvector![0.0, 0.0];
        let lp = net_preimage(&net, &y, &tol()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for lpc in lp.input_pieces() {
            for x in lpc.piece.clip_box(0.0, 2.0, &tol()).sample(50, &mut rng, &tol()) {
                assert!((net_forward(&net, &x).unwrap() - &y).norm() < 1e-8);
            }
        }
        // the preimage of 0 is the square [0, 0.9]^2
        assert!(lp.contains(&dvector![0.9, 0.9], 1e-9));
        assert!(lp.contains(&dvector![0.0, 0.45], 1e-9));
        assert!(!lp.contains(&dvector![0.95, 0.2], 1e-9));
    }

    #[test]
    fn budget_is_enforced() {
        let a = LayerMap::identity(3, -0.5).unwrap();
        let net = Network::new(vec![a.clone(), a.clone(), a]).unwrap();
        let opts = PreimageOptions { piece_budget: 2, ..PreimageOptions::default() };
        let err = net_preimage_with(&net, &Vector::zeros(3), &opts).unwrap_err();
        assert!(matches!(err, Error::PieceBudgetExceeded { budget: 2 }));
    }

    #[test]
    fn faces_of_the_unit_square() {
        let sq = AffinePiece::from_subspace(&crate::geometry::AffineSubspace::whole(2), SignPattern(vec![Side::Plus; 2]))
            .clip_box(0.0, 1.0, &tol());
        let faces = orthant_faces(&sq, &tol());
        let sets: Vec<Vec<usize>> = faces.iter().map(|(i, _)| i.clone()).collect();
        assert_eq!(sets, vec![vec![], vec![0], vec![1], vec![0, 1]]);
        assert_eq!(faces.iter().map(|(_, f)| f.dim()).collect::<Vec<_>>(), vec![2, 1, 1, 0]);
    }
}
