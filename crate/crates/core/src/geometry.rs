//! Small dense linear algebra plus the affine primitives everything else is
//! built from: hyperplanes, sign tests and affine subspaces with orthonormal
//! direction sets.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Supported ambient dimensions.
pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 32;

/// Numerical thresholds shared by all modules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Singular values below `eps_rank * sigma_max` count as zero.
    pub eps_rank: f64,
    /// Relative residual above which a linear system is inconsistent.
    pub eps_solve: f64,
    /// Band around zero for sign classification.
    pub sign: f64,
    /// Slack used by membership tests and polyhedral feasibility.
    pub membership: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_rank: 1e-10,
            eps_solve: 1e-8,
            sign: 1e-9,
            membership: 1e-9,
        }
    }
}

impl Tolerances {
    pub const ENV_EPS_RANK: &'static str = "RELUCONE_EPS_RANK";
    pub const ENV_EPS_SOLVE: &'static str = "RELUCONE_EPS_SOLVE";
    pub const ENV_MEMBERSHIP: &'static str = "RELUCONE_MEMBERSHIP_TOL";

    /// Defaults with any `RELUCONE_*` environment overrides applied.
    pub fn from_env() -> Result<Self> {
        let mut tol = Tolerances::default();
        let read = |name: &str| -> Result<Option<f64>> {
            match std::env::var(name) {
                Ok(raw) => raw
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v > 0.0)
                    .map(Some)
                    .ok_or_else(|| Error::Config(format!("{name}: invalid tolerance {raw:?}"))),
                Err(_) => Ok(None),
            }
        };
        if let Some(v) = read(Self::ENV_EPS_RANK)? {
            tol.eps_rank = v;
        }
        if let Some(v) = read(Self::ENV_EPS_SOLVE)? {
            tol.eps_solve = v;
        }
        if let Some(v) = read(Self::ENV_MEMBERSHIP)? {
            tol.membership = v;
        }
        Ok(tol)
    }
}

/// Validates an ambient dimension against the supported range.
pub fn check_dim(d: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(Error::InvalidDimension(d))
    }
}

/// Validates a point: supported dimension and finite coordinates.
pub fn check_vector(v: &Vector) -> Result<()> {
    check_dim(v.len())?;
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("vector"))
    }
}

pub(crate) fn check_same_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Which side of a hyperplane a point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Minus,
    Zero,
    Plus,
}

impl Side {
    pub fn flipped(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
            Side::Zero => Side::Zero,
        }
    }

    fn symbol(self) -> char {
        match self {
            Side::Plus => '+',
            Side::Zero => '0',
            Side::Minus => '-',
        }
    }
}

/// The `w.x + b = 0` hyperplane.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperplane {
    normal: Vector,
    offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vector, offset: f64, tol: &Tolerances) -> Result<Self> {
        check_vector(&normal)?;
        if !offset.is_finite() {
            return Err(Error::NonFinite("hyperplane offset"));
        }
        if normal.norm() <= tol.eps_rank {
            return Err(Error::DegenerateInput("hyperplane normal is (near) zero".into()));
        }
        Ok(Hyperplane { normal, offset })
    }

    pub(crate) fn from_raw(normal: Vector, offset: f64) -> Self {
        Hyperplane { normal, offset }
    }

    /// The coordinate plane `x_axis = value`.
    pub fn coordinate(d: usize, axis: usize, value: f64) -> Self {
        let mut normal = Vector::zeros(d);
        normal[axis] = 1.0;
        Hyperplane { normal, offset: -value }
    }

    pub fn normal(&self) -> &Vector {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Signed value `w.x + b`.
    pub fn eval(&self, x: &Vector) -> f64 {
        self.normal.dot(x) + self.offset
    }

    pub fn negated(&self) -> Hyperplane {
        Hyperplane { normal: -&self.normal, offset: -self.offset }
    }

    /// The same hyperplane seen as an affine subspace of dimension `d - 1`.
    pub fn to_subspace(&self) -> AffineSubspace {
        let n2 = self.normal.norm_squared();
        let base = &self.normal * (-self.offset / n2);
        let unit = &self.normal / n2.sqrt();
        let basis = DMatrix::from_columns(&[unit]);
        AffineSubspace { base, directions: orthogonal_complement(&basis) }
    }
}

pub fn side_of(plane: &Hyperplane, x: &Vector, tol: f64) -> Side {
    let v = plane.eval(x);
    if v > tol {
        Side::Plus
    } else if v < -tol {
        Side::Minus
    } else {
        Side::Zero
    }
}

/// Cell signature of a point with respect to an arrangement.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SignPattern(pub Vec<Side>);

impl SignPattern {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn signs(&self) -> &[Side] {
        &self.0
    }

    /// Pattern with `Zero` on the given indices and `Plus` elsewhere.
    pub fn from_zero_set(d: usize, zeros: &[usize], zero_side: Side) -> Self {
        let mut signs = vec![Side::Plus; d];
        for &i in zeros {
            signs[i] = zero_side;
        }
        SignPattern(signs)
    }

    pub fn count(&self, side: Side) -> usize {
        self.0.iter().filter(|s| **s == side).count()
    }

    /// Collapses `Zero` into `Minus`, the convention for open-cell counting.
    pub fn open_cell(&self) -> SignPattern {
        SignPattern(
            self.0
                .iter()
                .map(|s| if *s == Side::Zero { Side::Minus } else { *s })
                .collect(),
        )
    }
}

impl fmt::Display for SignPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.symbol())?;
        }
        Ok(())
    }
}

/// `base + span(directions)` with orthonormal directions stored as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSubspace {
    base: Vector,
    directions: DMatrix<f64>,
}

impl AffineSubspace {
    /// Builds a subspace from arbitrary spanning vectors; they are
    /// orthonormalized and linearly dependent ones dropped.
    pub fn new(base: Vector, spanning: &[Vector], tol: &Tolerances) -> Result<Self> {
        check_vector(&base)?;
        for v in spanning {
            check_same_dim(base.len(), v.len())?;
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite("direction"));
            }
        }
        let d = base.len();
        let m = if spanning.is_empty() {
            DMatrix::zeros(d, 0)
        } else {
            DMatrix::from_columns(spanning)
        };
        Ok(AffineSubspace { base, directions: orthonormal_columns(&m, tol.eps_rank) })
    }

    pub fn point(p: Vector) -> Result<Self> {
        check_vector(&p)?;
        let d = p.len();
        Ok(AffineSubspace { base: p, directions: DMatrix::zeros(d, 0) })
    }

    pub fn whole(d: usize) -> Self {
        AffineSubspace { base: Vector::zeros(d), directions: DMatrix::identity(d, d) }
    }

    pub(crate) fn from_parts(base: Vector, directions: DMatrix<f64>) -> Self {
        debug_assert_eq!(base.len(), directions.nrows());
        AffineSubspace { base, directions }
    }

    pub fn base(&self) -> &Vector {
        &self.base
    }

    /// Orthonormal direction vectors as matrix columns.
    pub fn direction_matrix(&self) -> &DMatrix<f64> {
        &self.directions
    }

    pub fn directions(&self) -> Vec<Vector> {
        self.directions.column_iter().map(|c| c.into_owned()).collect()
    }

    pub fn dim(&self) -> usize {
        self.directions.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.base.len()
    }

    /// Orthogonal projection of `x` onto the subspace.
    pub fn project(&self, x: &Vector) -> Vector {
        let rel = x - &self.base;
        let coeffs = self.directions.transpose() * rel;
        &self.base + &self.directions * coeffs
    }

    pub fn distance(&self, x: &Vector) -> f64 {
        (x - self.project(x)).norm()
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.distance(x) <= tol
    }

    /// Same dimension and mutual containment of base points and directions.
    pub fn approx_eq(&self, other: &AffineSubspace, tol: f64) -> bool {
        if self.dim() != other.dim() || self.ambient_dim() != other.ambient_dim() {
            return false;
        }
        let spans = |a: &AffineSubspace, b: &AffineSubspace| {
            a.contains(&b.base, tol)
                && b.directions.column_iter().all(|c| {
                    let c = c.into_owned();
                    let proj = &a.directions * (a.directions.transpose() * &c);
                    (c - proj).norm() <= tol
                })
        };
        spans(self, other) && spans(other, self)
    }

    /// Implicit form: rows `n_k` with `n_k . x = n_k . base` cutting out the subspace.
    pub fn implicit_rows(&self) -> (DMatrix<f64>, Vector) {
        let normals = orthogonal_complement(&self.directions);
        let rows = normals.transpose();
        let rhs = &rows * &self.base;
        (rows, rhs)
    }
}

/// Intersection of at most `d` hyperplanes.
pub fn intersect_planes(planes: &[Hyperplane], d: usize, tol: &Tolerances) -> Result<AffineSubspace> {
    check_dim(d)?;
    if planes.len() > d {
        return Err(Error::DimensionMismatch { expected: d, found: planes.len() });
    }
    let mut rows = DMatrix::zeros(planes.len(), d);
    let mut rhs = Vector::zeros(planes.len());
    for (i, p) in planes.iter().enumerate() {
        check_same_dim(d, p.dim())?;
        if p.normal.norm() <= tol.eps_rank {
            return Err(Error::DegenerateInput(format!("plane {i} has a near-zero normal")));
        }
        rows.row_mut(i).copy_from(&p.normal.transpose());
        rhs[i] = -p.offset;
    }
    let sol = solve_affine(&rows, &rhs, tol).ok_or(Error::EmptyIntersection)?;
    Ok(AffineSubspace::from_parts(sol.base, sol.null))
}

pub fn affine_intersect(a: &AffineSubspace, b: &AffineSubspace, tol: &Tolerances) -> Result<AffineSubspace> {
    check_same_dim(a.ambient_dim(), b.ambient_dim())?;
    let (ra, ha) = a.implicit_rows();
    let (rb, hb) = b.implicit_rows();
    let d = a.ambient_dim();
    let m = ra.nrows() + rb.nrows();
    let mut rows = DMatrix::zeros(m, d);
    let mut rhs = Vector::zeros(m);
    rows.rows_mut(0, ra.nrows()).copy_from(&ra);
    rows.rows_mut(ra.nrows(), rb.nrows()).copy_from(&rb);
    rhs.rows_mut(0, ha.len()).copy_from(&ha);
    rhs.rows_mut(ha.len(), hb.len()).copy_from(&hb);
    let sol = solve_affine(&rows, &rhs, tol).ok_or(Error::EmptyIntersection)?;
    Ok(AffineSubspace::from_parts(sol.base, sol.null))
}

/// Solution set of `rows * x = rhs` as minimum-norm particular solution plus
/// an orthonormal null-space basis.
#[derive(Clone, Debug)]
pub(crate) struct LinearSolution {
    pub base: Vector,
    pub null: DMatrix<f64>,
}

/// Returns `None` when the system is inconsistent beyond `eps_solve`.
pub(crate) fn solve_affine(rows: &DMatrix<f64>, rhs: &Vector, tol: &Tolerances) -> Option<LinearSolution> {
    let n = rows.ncols();
    let m = rows.nrows();
    if n == 0 {
        let ok = rhs.iter().all(|r| r.abs() <= tol.eps_solve * 1f64.max(rhs.norm()));
        return ok.then(|| LinearSolution { base: Vector::zeros(0), null: DMatrix::zeros(0, 0) });
    }
    if m == 0 {
        return Some(LinearSolution { base: Vector::zeros(n), null: DMatrix::identity(n, n) });
    }
    let svd = rows.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let sigma_max = svd.singular_values.max();
    let threshold = tol.eps_rank * sigma_max;
    let mut base = Vector::zeros(n);
    let mut row_space = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > threshold && s > 0.0 {
            let vk = v_t.row(k).transpose();
            let coeff = u.column(k).dot(rhs) / s;
            base += &vk * coeff;
            row_space.push(vk);
        }
    }
    let residual = (rows * &base - rhs).norm();
    if residual > tol.eps_solve * 1f64.max(rhs.norm()) {
        return None;
    }
    let range = if row_space.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&row_space)
    };
    Some(LinearSolution { base, null: orthogonal_complement(&range) })
}

/// Orthonormal basis for the column span of `m` (modified Gram-Schmidt with
/// one re-orthogonalization pass). Columns whose residual falls below `eps`
/// relative to their original norm are dropped.
pub fn orthonormal_columns(m: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let d = m.nrows();
    let mut out: Vec<Vector> = Vec::with_capacity(m.ncols());
    let scale = m.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    for col in m.column_iter() {
        let mut v = col.into_owned();
        for _ in 0..2 {
            for q in &out {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let n = v.norm();
        if n > eps.max(1e-12) * scale.max(f64::MIN_POSITIVE) {
            out.push(v / n);
        }
    }
    if out.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// (orthonormal) columns of `basis`.
pub fn orthogonal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let target = n - basis.ncols().min(n);
    let mut found: Vec<Vector> = Vec::with_capacity(target);
    let mut used = vec![false; n];
    while found.len() < target {
        // pick the unit vector with the largest residual for stability
        let mut best: Option<(usize, Vector, f64)> = None;
        for j in (0..n).filter(|j| !used[*j]) {
            let mut v = Vector::zeros(n);
            v[j] = 1.0;
            for _ in 0..2 {
                for q in basis.column_iter() {
                    let c = q.dot(&v);
                    v -= q * c;
                }
                for q in &found {
                    let c = q.dot(&v);
                    v -= q * c;
                }
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|b| norm > b.2) {
                best = Some((j, v, norm));
            }
        }
        match best {
            Some((j, v, norm)) if norm > 1e-12 => {
                used[j] = true;
                found.push(v / norm);
            }
            _ => break,
        }
    }
    if found.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&found)
    }
}

/// Numerical rank from singular values relative to the largest one.
pub fn numerical_rank(m: &DMatrix<f64>, eps_rank: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > eps_rank * max).count()
}
