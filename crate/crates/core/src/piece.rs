//! Bounded (or half-open) affine fragments: a base point, orthonormal spanning
//! vectors and linear constraints on the span coefficients.
//!
//! A piece is the set `{ base + S t : R t <= l }`. An interval box on the
//! coefficients is the special case where every row of `R` is a signed unit
//! vector; intersections with half-spaces of the next layer need the general
//! form, so constraints are kept as an H-representation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{affine_intersect, solve_affine, AffineSubspace, SignPattern, Tolerances, Vector};
use crate::lp::{self, LpOutcome};

/// Coefficient constraints `rows * t <= limits` with unit-norm rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    rows: DMatrix<f64>,
    limits: DVector<f64>,
}

impl Bounds {
    fn none(k: usize) -> Self {
        Bounds { rows: DMatrix::zeros(0, k), limits: DVector::zeros(0) }
    }

    fn normalized(rows: DMatrix<f64>, limits: DVector<f64>, tol: f64) -> Self {
        let k = rows.ncols();
        let mut keep_rows: Vec<DVector<f64>> = Vec::with_capacity(rows.nrows());
        let mut keep_limits = Vec::with_capacity(rows.nrows());
        for i in 0..rows.nrows() {
            let r = rows.row(i).transpose();
            let n = r.norm();
            if n <= 1e-12 {
                if limits[i] < -tol {
                    // constant violated row: keep an explicit contradiction
                    keep_rows.push(DVector::zeros(k));
                    keep_limits.push(-1.0);
                }
                continue;
            }
            keep_rows.push(r / n);
            keep_limits.push(limits[i] / n);
        }
        let m = keep_rows.len();
        let mut out = DMatrix::zeros(m, k);
        for (i, r) in keep_rows.iter().enumerate() {
            out.row_mut(i).copy_from(&r.transpose());
        }
        Bounds { rows: out, limits: DVector::from_vec(keep_limits) }
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn limits(&self) -> &DVector<f64> {
        &self.limits
    }

    pub fn len(&self) -> usize {
        self.limits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.limits.is_empty()
    }

    fn relaxed(&self, tol: f64) -> DVector<f64> {
        self.limits.add_scalar(tol)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffinePiece {
    base: Vector,
    spanning: DMatrix<f64>,
    signature: SignPattern,
    bounds: Bounds,
}

/// Interval for one span coefficient; `None` marks an open end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientRange {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl AffinePiece {
    /// Unbounded piece covering a whole affine subspace.
    pub fn from_subspace(s: &AffineSubspace, signature: SignPattern) -> Self {
        AffinePiece {
            base: s.base().clone(),
            spanning: s.direction_matrix().clone(),
            signature,
            bounds: Bounds::none(s.dim()),
        }
    }

    /// Builds a piece from arbitrary (full column rank) spanning vectors;
    /// constraints are re-expressed in the orthonormalized coordinates.
    pub(crate) fn build(
        base: Vector,
        directions: DMatrix<f64>,
        rows: DMatrix<f64>,
        limits: DVector<f64>,
        signature: SignPattern,
        tol: &Tolerances,
    ) -> Result<Self> {
        let d = base.len();
        let k = directions.ncols();
        debug_assert_eq!(rows.ncols(), k);
        if k == 0 {
            return Ok(AffinePiece {
                base,
                spanning: DMatrix::zeros(d, 0),
                signature,
                bounds: Bounds::normalized(rows, limits, tol.membership),
            });
        }
        if k > d {
            return Err(Error::DegenerateInput(format!("{k} spanning vectors in dimension {d}")));
        }
        let qr = directions.qr();
        let q = qr.q();
        let r = qr.r();
        let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if (0..k).any(|i| r[(i, i)].abs() <= tol.eps_rank * scale.max(1e-300)) {
            return Err(Error::DegenerateInput("piece spanning vectors are linearly dependent".into()));
        }
        // t = R^{-1} t'  =>  rows * R^{-1}
        let new_rows = r
            .transpose()
            .solve_lower_triangular(&rows.transpose())
            .ok_or_else(|| Error::DegenerateInput("triangular solve failed".into()))?
            .transpose();
        Ok(AffinePiece {
            base,
            spanning: q.columns(0, k).into_owned(),
            signature,
            bounds: Bounds::normalized(new_rows, limits, tol.membership),
        })
    }

    pub fn base(&self) -> &Vector {
        &self.base
    }

    /// Orthonormal spanning vectors as matrix columns.
    pub fn spanning(&self) -> &DMatrix<f64> {
        &self.spanning
    }

    pub fn spanning_vectors(&self) -> Vec<Vector> {
        self.spanning.column_iter().map(|c| c.into_owned()).collect()
    }

    pub fn signature(&self) -> &SignPattern {
        &self.signature
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.spanning.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.base.len()
    }

    pub fn hull(&self) -> AffineSubspace {
        AffineSubspace::from_parts(self.base.clone(), self.spanning.clone())
    }

    pub(crate) fn with_signature(mut self, signature: SignPattern) -> Self {
        self.signature = signature;
        self
    }

    pub fn point_at(&self, t: &DVector<f64>) -> Vector {
        &self.base + &self.spanning * t
    }

    pub fn coefficients(&self, x: &Vector) -> DVector<f64> {
        self.spanning.transpose() * (x - &self.base)
    }

    /// Membership: `x` on the affine hull and inside all constraints, within `tol`.
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        if x.len() != self.ambient_dim() {
            return false;
        }
        let t = self.coefficients(x);
        if (x - self.point_at(&t)).norm() > tol {
            return false;
        }
        let slack = &self.bounds.rows * &t - &self.bounds.limits;
        slack.iter().all(|s| *s <= tol)
    }

    /// Distance of `x` from the affine hull, or the worst constraint
    /// violation, whichever is larger.
    pub fn residual(&self, x: &Vector) -> f64 {
        let t = self.coefficients(x);
        let off = (x - self.point_at(&t)).norm();
        let slack = (&self.bounds.rows * &t - &self.bounds.limits).iter().fold(0.0f64, |m, s| m.max(*s));
        off.max(slack)
    }

    /// Adds `g x <= h` (rows in ambient coordinates).
    pub(crate) fn constrain(&self, g: &DMatrix<f64>, h: &DVector<f64>, tol: &Tolerances) -> AffinePiece {
        let k = self.dim();
        let new_rows = g * &self.spanning;
        let new_limits = h - g * &self.base;
        let m0 = self.bounds.len();
        let mut rows = DMatrix::zeros(m0 + g.nrows(), k);
        let mut limits = DVector::zeros(m0 + g.nrows());
        rows.rows_mut(0, m0).copy_from(&self.bounds.rows);
        rows.rows_mut(m0, g.nrows()).copy_from(&new_rows);
        limits.rows_mut(0, m0).copy_from(&self.bounds.limits);
        limits.rows_mut(m0, g.nrows()).copy_from(&new_limits);
        AffinePiece {
            base: self.base.clone(),
            spanning: self.spanning.clone(),
            signature: self.signature.clone(),
            bounds: Bounds::normalized(rows, limits, tol.membership),
        }
    }

    /// Clips to the non-negative orthant.
    pub fn clip_nonnegative(&self, tol: &Tolerances) -> AffinePiece {
        let d = self.ambient_dim();
        self.constrain(&(-DMatrix::identity(d, d)), &DVector::zeros(d), tol)
    }

    /// Clips to the box `[lo, hi]^d`.
    pub fn clip_box(&self, lo: f64, hi: f64, tol: &Tolerances) -> AffinePiece {
        let d = self.ambient_dim();
        let mut g = DMatrix::zeros(2 * d, d);
        let mut h = DVector::zeros(2 * d);
        for i in 0..d {
            g[(i, i)] = 1.0;
            h[i] = hi;
            g[(d + i, i)] = -1.0;
            h[d + i] = -lo;
        }
        self.constrain(&g, &h, tol)
    }

    /// Restricts to `e x = f` (ambient coordinates). `None` if inconsistent.
    pub(crate) fn restrict(&self, e: &DMatrix<f64>, f: &DVector<f64>, tol: &Tolerances) -> Option<AffinePiece> {
        let rows = e * &self.spanning;
        let rhs = f - e * &self.base;
        if self.dim() == 0 {
            let scale = 1f64.max(f.norm());
            return (rhs.norm() <= tol.eps_solve * scale).then(|| self.clone());
        }
        self.restrict_params(&rows, &rhs, tol)
    }

    /// Restricts to `rows * t = rhs` in coefficient space.
    fn restrict_params(&self, rows: &DMatrix<f64>, rhs: &DVector<f64>, tol: &Tolerances) -> Option<AffinePiece> {
        let sol = solve_affine(rows, rhs, tol)?;
        let base = &self.base + &self.spanning * &sol.base;
        let spanning = &self.spanning * &sol.null;
        let new_rows = &self.bounds.rows * &sol.null;
        let new_limits = &self.bounds.limits - &self.bounds.rows * &sol.base;
        Some(AffinePiece {
            base,
            spanning,
            signature: self.signature.clone(),
            bounds: Bounds::normalized(new_rows, new_limits, tol.membership),
        })
    }

    /// Image under `x -> m x + v` for invertible `m`.
    pub(crate) fn map_affine(&self, m: &DMatrix<f64>, v: &DVector<f64>, tol: &Tolerances) -> Result<AffinePiece> {
        let base = m * &self.base + v;
        let dirs = m * &self.spanning;
        AffinePiece::build(
            base,
            dirs,
            self.bounds.rows.clone(),
            self.bounds.limits.clone(),
            self.signature.clone(),
            tol,
        )
    }

    /// Attaches non-negative multiples of the columns of `generators`.
    pub(crate) fn extend_cone(&self, generators: &DMatrix<f64>, tol: &Tolerances) -> Result<AffinePiece> {
        let k = self.dim();
        let p = generators.ncols();
        if p == 0 {
            return Ok(self.clone());
        }
        let d = self.ambient_dim();
        let mut dirs = DMatrix::zeros(d, k + p);
        dirs.columns_mut(0, k).copy_from(&self.spanning);
        dirs.columns_mut(k, p).copy_from(generators);
        let m0 = self.bounds.len();
        let mut rows = DMatrix::zeros(m0 + p, k + p);
        let mut limits = DVector::zeros(m0 + p);
        rows.view_mut((0, 0), (m0, k)).copy_from(&self.bounds.rows);
        limits.rows_mut(0, m0).copy_from(&self.bounds.limits);
        for j in 0..p {
            rows[(m0 + j, k + j)] = -1.0;
        }
        AffinePiece::build(self.base.clone(), dirs, rows, limits, self.signature.clone(), tol)
    }

    /// True when no point satisfies the constraints (with `membership` slack).
    pub fn is_empty(&self, tol: &Tolerances) -> bool {
        if self.dim() == 0 {
            return self.bounds.limits.iter().any(|l| *l < -tol.membership);
        }
        lp::feasible_point(&self.bounds.rows, &self.bounds.relaxed(tol.membership)).is_none()
    }

    /// Radius of the largest coefficient-space ball inside the piece, capped at 1.
    pub fn inner_radius(&self, tol: &Tolerances) -> f64 {
        if self.dim() == 0 {
            return if self.is_empty(tol) { f64::NEG_INFINITY } else { 0.0 };
        }
        lp::chebyshev_center(&self.bounds.rows, &self.bounds.limits, 1.0).1
    }

    /// Drops the piece to its true affine hull by detecting implicit
    /// equalities. `None` if the piece is empty.
    pub fn reduce(&self, tol: &Tolerances) -> Option<AffinePiece> {
        let mut piece = self.clone();
        let eps = tol.membership;
        loop {
            let k = piece.dim();
            if k == 0 {
                return (!piece.is_empty(tol)).then_some(piece);
            }
            if piece.bounds.is_empty() {
                return Some(piece);
            }
            let relaxed = piece.bounds.relaxed(eps);
            let (_, radius) = lp::chebyshev_center(&piece.bounds.rows, &relaxed, 1.0);
            if radius < 0.0 {
                return None;
            }
            if radius > 4.0 * eps {
                return Some(piece);
            }
            let mut eq_rows = Vec::new();
            for i in 0..piece.bounds.len() {
                let c = -piece.bounds.rows.row(i).transpose();
                match lp::maximize(&c, &piece.bounds.rows, &relaxed) {
                    LpOutcome::Optimal { value, .. } => {
                        let slack = piece.bounds.limits[i] + value;
                        if slack <= 8.0 * eps {
                            eq_rows.push(i);
                        }
                    }
                    LpOutcome::Infeasible => return None,
                    LpOutcome::Unbounded => {}
                }
            }
            if eq_rows.is_empty() {
                return Some(piece);
            }
            let mut rows = DMatrix::zeros(eq_rows.len(), k);
            let mut rhs = DVector::zeros(eq_rows.len());
            for (r, &i) in eq_rows.iter().enumerate() {
                rows.row_mut(r).copy_from(&piece.bounds.rows.row(i));
                rhs[r] = piece.bounds.limits[i];
            }
            let loose = Tolerances { eps_solve: tol.eps_solve.max(1e-6), ..*tol };
            let next = piece.restrict_params(&rows, &rhs, &loose)?;
            if next.dim() >= k {
                return Some(piece);
            }
            piece = next;
        }
    }

    /// Intersection of two pieces, reduced to its affine hull.
    pub fn intersection(&self, other: &AffinePiece, tol: &Tolerances) -> Option<AffinePiece> {
        let h = affine_intersect(&self.hull(), &other.hull(), tol).ok()?;
        let n = h.direction_matrix();
        let k = n.ncols();
        let mut all_rows = Vec::new();
        let mut all_limits = Vec::new();
        for p in [self, other] {
            // t_p = S_p^T (h + N u - base_p)
            let proj = p.spanning.transpose() * n;
            let shift = p.spanning.transpose() * (h.base() - &p.base);
            let r = &p.bounds.rows * proj;
            let l = &p.bounds.limits - &p.bounds.rows * shift;
            for i in 0..r.nrows() {
                all_rows.push(r.row(i).into_owned());
                all_limits.push(l[i]);
            }
        }
        let mut rows = DMatrix::zeros(all_rows.len(), k);
        for (i, r) in all_rows.iter().enumerate() {
            rows.row_mut(i).copy_from(r);
        }
        let piece = AffinePiece {
            base: h.base().clone(),
            spanning: n.clone(),
            signature: self.signature.clone(),
            bounds: Bounds::normalized(rows, DVector::from_vec(all_limits), tol.membership),
        };
        piece.reduce(tol)
    }

    /// Maximizer of `direction . x` over the piece, if bounded and non-empty.
    pub fn extreme_point(&self, direction: &Vector, tol: &Tolerances) -> Option<Vector> {
        if self.dim() == 0 {
            return (!self.is_empty(tol)).then(|| self.base.clone());
        }
        let c = self.spanning.transpose() * direction;
        match lp::maximize(&c, &self.bounds.rows, &self.bounds.relaxed(tol.membership)) {
            LpOutcome::Optimal { x, .. } => Some(self.point_at(&x)),
            _ => None,
        }
    }

    /// Minimum of one ambient coordinate over the piece (`-inf` when unbounded).
    pub(crate) fn min_coordinate(&self, axis: usize, tol: &Tolerances) -> Option<f64> {
        if self.dim() == 0 {
            return (!self.is_empty(tol)).then(|| self.base[axis]);
        }
        let c = -self.spanning.row(axis).transpose();
        match lp::maximize(&c, &self.bounds.rows, &self.bounds.relaxed(tol.membership)) {
            LpOutcome::Optimal { value, .. } => Some(self.base[axis] - value),
            LpOutcome::Unbounded => Some(f64::NEG_INFINITY),
            LpOutcome::Infeasible => None,
        }
    }

    /// `max over the piece of min_{j in axes} x_j`; `None` if empty.
    pub(crate) fn max_min_coordinate(&self, axes: &[usize], tol: &Tolerances) -> Option<f64> {
        let k = self.dim();
        let m0 = self.bounds.len();
        let m = m0 + axes.len() + 1;
        let mut rows = DMatrix::zeros(m, k + 1);
        let mut limits = DVector::zeros(m);
        rows.view_mut((0, 0), (m0, k)).copy_from(&self.bounds.rows);
        limits.rows_mut(0, m0).copy_from(&self.bounds.relaxed(tol.membership));
        for (r, &j) in axes.iter().enumerate() {
            // s - (base_j + S_j t) <= 0
            for c in 0..k {
                rows[(m0 + r, c)] = -self.spanning[(j, c)];
            }
            rows[(m0 + r, k)] = 1.0;
            limits[m0 + r] = self.base[j];
        }
        // cap s so the program stays bounded
        rows[(m - 1, k)] = 1.0;
        limits[m - 1] = 1.0;
        let mut c = DVector::zeros(k + 1);
        c[k] = 1.0;
        match lp::maximize(&c, &rows, &limits) {
            LpOutcome::Optimal { value, .. } => Some(value),
            _ => None,
        }
    }

    /// Per-coefficient extent of the piece.
    pub fn coefficient_ranges(&self, tol: &Tolerances) -> Vec<CoefficientRange> {
        let k = self.dim();
        let relaxed = self.bounds.relaxed(tol.membership);
        (0..k)
            .map(|i| {
                let mut c = DVector::zeros(k);
                c[i] = 1.0;
                let upper = match lp::maximize(&c, &self.bounds.rows, &relaxed) {
                    LpOutcome::Optimal { value, .. } => Some(value),
                    _ => None,
                };
                c[i] = -1.0;
                let lower = match lp::maximize(&c, &self.bounds.rows, &relaxed) {
                    LpOutcome::Optimal { value, .. } => Some(-value),
                    _ => None,
                };
                CoefficientRange { lower, upper }
            })
            .collect()
    }

    /// Extreme points found by optimizing along coordinate and random
    /// directions. The piece must be bounded.
    pub(crate) fn probe_vertices<R: Rng>(&self, extra: usize, rng: &mut R, tol: &Tolerances) -> Vec<DVector<f64>> {
        let k = self.dim();
        let relaxed = self.bounds.relaxed(tol.membership);
        let mut dirs: Vec<DVector<f64>> = Vec::with_capacity(2 * k + extra);
        for i in 0..k {
            for s in [1.0, -1.0] {
                let mut c = DVector::zeros(k);
                c[i] = s;
                dirs.push(c);
            }
        }
        for _ in 0..extra {
            dirs.push(DVector::from_fn(k, |_, _| rng.random::<f64>() * 2.0 - 1.0));
        }
        let mut verts: Vec<DVector<f64>> = Vec::new();
        for c in dirs {
            if let LpOutcome::Optimal { x, .. } = lp::maximize(&c, &self.bounds.rows, &relaxed) {
                if !verts.iter().any(|v| (v - &x).norm() <= 1e-12) {
                    verts.push(x);
                }
            }
        }
        verts
    }

    /// Points of a bounded piece: random convex combinations of probed
    /// extreme points. Empty when the piece is empty.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R, tol: &Tolerances) -> Vec<Vector> {
        let Some(piece) = self.reduce(tol) else { return Vec::new() };
        if piece.dim() == 0 {
            return vec![piece.base.clone(); n];
        }
        let verts = piece.probe_vertices(2 * piece.dim() + 4, rng, tol);
        if verts.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| {
                let w: Vec<f64> = verts.iter().map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let total: f64 = w.iter().sum();
                let mut t = DVector::zeros(piece.dim());
                for (v, wi) in verts.iter().zip(&w) {
                    t += v * (wi / total);
                }
                piece.point_at(&t)
            })
            .collect()
    }

    /// Ordered vertices of a two-dimensional bounded piece.
    pub fn polygon(&self, tol: &Tolerances) -> Vec<Vector> {
        if self.dim() != 2 {
            return Vec::new();
        }
        let rows = &self.bounds.rows;
        let limits = &self.bounds.limits;
        let m = rows.nrows();
        let mut pts: Vec<DVector<f64>> = Vec::new();
        let slack = 1e3 * tol.membership;
        for i in 0..m {
            for j in (i + 1)..m {
                let (a, b, c, d) = (rows[(i, 0)], rows[(i, 1)], rows[(j, 0)], rows[(j, 1)]);
                let det = a * d - b * c;
                if det.abs() < 1e-12 {
                    continue;
                }
                let (li, lj) = (limits[i], limits[j]);
                let t = DVector::from_vec(vec![(li * d - b * lj) / det, (a * lj - c * li) / det]);
                let ok = (rows * &t - limits).iter().all(|s| *s <= slack);
                if ok && !pts.iter().any(|p| (p - &t).norm() <= 1e-9) {
                    pts.push(t);
                }
            }
        }
        if pts.len() < 3 {
            return Vec::new();
        }
        let n = pts.len() as f64;
        let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
        let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
        pts.sort_by(|p, q| {
            let ap = (p[1] - cy).atan2(p[0] - cx);
            let aq = (q[1] - cy).atan2(q[0] - cx);
            ap.total_cmp(&aq)
        });
        pts.iter().map(|t| self.point_at(t)).collect()
    }

    /// End points of a one-dimensional bounded piece.
    pub fn segment(&self, tol: &Tolerances) -> Option<(Vector, Vector)> {
        if self.dim() != 1 {
            return None;
        }
        let dir = self.spanning.column(0).into_owned();
        let hi = self.extreme_point(&dir, tol)?;
        let lo = self.extreme_point(&(-dir), tol)?;
        Some((lo, hi))
    }

    /// Two-dimensional facets of a three-dimensional bounded piece.
    pub fn facets(&self, tol: &Tolerances) -> Vec<AffinePiece> {
        if self.dim() != 3 {
            return Vec::new();
        }
        let mut out = Vec::new();
        for i in 0..self.bounds.len() {
            let row = self.bounds.rows.rows(i, 1).into_owned();
            let rhs = DVector::from_element(1, self.bounds.limits[i]);
            if let Some(f) = self.restrict_params(&row, &rhs, tol).and_then(|f| f.reduce(tol)) {
                if f.dim() == 2 {
                    out.push(f);
                }
            }
        }
        out
    }
}
