//! Piecewise-affine input manifolds that a network maps onto a prescribed
//! affine output manifold.
//!
//! The output manifold is cut by the coordinate planes of the output orthant;
//! each cut piece with zero set `I` is pulled back through the last layer by
//! the affine inverse plus the positive span of `e_i, i in I`. The resulting
//! input pieces are cut again by the coordinate planes of the previous layer's
//! output, and so on down to the network input. Edge pieces pulled back along
//! a single dual vector are exactly the linking patches between neighbouring
//! spanned patches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circulant_cone::ordered_subsets;
use crate::error::{Error, Result};
use crate::geometry::{affine_intersect, check_same_dim, intersect_planes, AffineSubspace, SignPattern, Side, Tolerances, Vector};
use crate::layer::LayerMap;
use crate::network::{net_forward, orthant_faces, LayerInverse, Network, DEFAULT_PIECE_BUDGET, THIN};
use crate::piece::AffinePiece;

/// Two pieces whose intersection has codimension at most one in the
/// smaller piece.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    pub a: usize,
    pub b: usize,
    pub shared: AffinePiece,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseManifold {
    pub pieces: Vec<AffinePiece>,
    /// Zero set of the layer-0 output face each piece was spanned from.
    pub zero_sets: Vec<Vec<usize>>,
    pub adjacency: Vec<Adjacency>,
    /// Number of pieces produced at each stage, from the output down.
    pub stage_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceOptions {
    /// Pieces are truncated to `[0, box_radius]^d` for adjacency, sampling
    /// and export; the pieces themselves keep their unbounded rays.
    pub box_radius: f64,
    pub piece_budget: usize,
    pub adjacency: bool,
    pub tol: Tolerances,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { box_radius: 4.0, piece_budget: DEFAULT_PIECE_BUDGET, adjacency: true, tol: Tolerances::default() }
    }
}

/// Intersections of `m` with every intersection of the layer's planes,
/// including `m` itself for the empty subset. Subsets come in order of size,
/// then lexicographically.
pub fn intersect_manifold(m: &AffineSubspace, layer: &LayerMap, tol: &Tolerances) -> Result<Vec<(Vec<usize>, AffinePiece)>> {
    let d = layer.dim();
    check_same_dim(d, m.ambient_dim())?;
    let planes = layer.hyperplanes();
    let mut out = Vec::new();
    for subset in ordered_subsets(d, true) {
        let sig = SignPattern::from_zero_set(d, &subset, Side::Zero);
        if subset.is_empty() {
            out.push((subset, AffinePiece::from_subspace(m, sig)));
            continue;
        }
        let chosen: Vec<_> = subset.iter().map(|&i| planes[i].clone()).collect();
        let Ok(flat) = intersect_planes(&chosen, d, tol) else { continue };
        if let Ok(s) = affine_intersect(m, &flat, tol) {
            out.push((subset, AffinePiece::from_subspace(&s, sig)));
        }
    }
    Ok(out)
}

/// Cuts a bounded or unbounded piece of a non-negative orthant by the
/// coordinate planes, keeping faces whose remaining coordinates can be
/// strictly positive.
pub fn intersect_piece(piece: &AffinePiece, tol: &Tolerances) -> Vec<(Vec<usize>, AffinePiece)> {
    orthant_faces(piece, tol)
}

/// Pulls tagged output pieces back through one layer.
pub fn backtrace_layer(pieces: &[(Vec<usize>, AffinePiece)], layer: &LayerMap, tol: &Tolerances) -> Result<Vec<AffinePiece>> {
    let inv = LayerInverse::new(layer, tol)?;
    let mut out = Vec::new();
    for (zero_set, piece) in pieces {
        check_same_dim(layer.dim(), piece.ambient_dim())?;
        if let Some(p) = inv.span_face(zero_set, piece, tol)? {
            out.push(p);
        }
    }
    Ok(out)
}

pub fn trace_manifold(net: &Network, m: &AffineSubspace, opts: &TraceOptions) -> Result<PiecewiseManifold> {
    let tol = &opts.tol;
    let d = net.dim();
    check_same_dim(d, m.ambient_dim())?;
    let coords = LayerMap::identity(d, 0.0)?;

    // the part of M inside the output orthant, split by coordinate planes
    let mut tagged: Vec<(Vec<usize>, AffinePiece)> = Vec::new();
    for (zero_set, piece) in intersect_manifold(m, &coords, tol)? {
        let Some(face) = piece.clip_nonnegative(tol).reduce(tol) else { continue };
        let active: Vec<usize> = (0..d).filter(|k| !zero_set.contains(k)).collect();
        if !active.is_empty() && !face.max_min_coordinate(&active, tol).is_some_and(|v| v > THIN) {
            continue;
        }
        tagged.push((zero_set, face));
    }
    if tagged.is_empty() {
        return Err(Error::EmptyPreimage);
    }

    let mut stage_sizes = vec![tagged.len()];
    let mut total = tagged.len();
    let mut pieces: Vec<(Vec<usize>, AffinePiece)> = Vec::new();
    for (k, layer) in net.layers().iter().enumerate().rev() {
        let inv = LayerInverse::new(layer, tol)?;
        pieces.clear();
        for (zero_set, face) in &tagged {
            if let Some(p) = inv.span_face(zero_set, face, tol)? {
                pieces.push((zero_set.clone(), p));
            }
        }
        total += pieces.len();
        stage_sizes.push(pieces.len());
        if total > opts.piece_budget {
            return Err(Error::PieceBudgetExceeded { budget: opts.piece_budget });
        }
        if pieces.is_empty() {
            return Err(Error::EmptyPreimage);
        }
        if k > 0 {
            tagged = pieces.iter().flat_map(|(_, p)| intersect_piece(p, tol)).collect();
            total += tagged.len();
            if total > opts.piece_budget {
                return Err(Error::PieceBudgetExceeded { budget: opts.piece_budget });
            }
        }
    }
    let (zero_sets, pieces): (Vec<_>, Vec<_>) = pieces.into_iter().unzip();
    let adjacency = if opts.adjacency { adjacency(&pieces, opts.box_radius, tol) } else { Vec::new() };
    Ok(PiecewiseManifold { pieces, zero_sets, adjacency, stage_sizes })
}

/// Adjacent pairs among `pieces` truncated to `[0, radius]^d`.
pub fn adjacency(pieces: &[AffinePiece], radius: f64, tol: &Tolerances) -> Vec<Adjacency> {
    let clipped: Vec<Option<AffinePiece>> = pieces.iter().map(|p| p.clip_box(0.0, radius, tol).reduce(tol)).collect();
    let boxes: Vec<Option<(Vector, Vector)>> = clipped.iter().map(|p| p.as_ref().and_then(|p| bounding_box(p, tol))).collect();
    let mut out = Vec::new();
    for a in 0..pieces.len() {
        for b in (a + 1)..pieces.len() {
            let (Some(pa), Some(pb)) = (&clipped[a], &clipped[b]) else { continue };
            let (Some((lo_a, hi_a)), Some((lo_b, hi_b))) = (&boxes[a], &boxes[b]) else { continue };
            let overlap = (0..lo_a.len()).all(|k| lo_a[k] <= hi_b[k] + 1e-7 && lo_b[k] <= hi_a[k] + 1e-7);
            if !overlap {
                continue;
            }
            let Some(shared) = pa.intersection(pb, tol) else { continue };
            let need = pa.dim().min(pb.dim()).saturating_sub(1);
            if shared.dim() >= need {
                out.push(Adjacency { a, b, shared });
            }
        }
    }
    out
}

fn bounding_box(p: &AffinePiece, tol: &Tolerances) -> Option<(Vector, Vector)> {
    let d = p.ambient_dim();
    let mut lo = Vector::zeros(d);
    let mut hi = Vector::zeros(d);
    for k in 0..d {
        let mut u = Vector::zeros(d);
        u[k] = 1.0;
        hi[k] = p.extreme_point(&u, tol)?[k];
        lo[k] = p.extreme_point(&(-u), tol)?[k];
    }
    Some((lo, hi))
}

/// Largest distance from `net_forward(x)` to `m` over `samples` points per
/// piece, drawn from the pieces truncated to `[0, radius]^d`.
pub fn pushforward_residual(
    net: &Network,
    m: &AffineSubspace,
    pieces: &[AffinePiece],
    samples: usize,
    radius: f64,
    seed: u64,
    tol: &Tolerances,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for p in pieces {
        for x in p.clip_box(0.0, radius, tol).sample(samples, &mut rng, tol) {
            worst = worst.max(m.distance(&net_forward(net, &x)?));
        }
    }
    Ok(worst)
}
