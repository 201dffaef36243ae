//! Scene export. JSON is the lossless form; OBJ and SVG are views of it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Hyperplane, Tolerances, Vector};
use crate::piece::AffinePiece;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    pub min: f64,
    pub max: f64,
}

impl Default for SceneBox {
    fn default() -> Self {
        SceneBox { min: 0.0, max: 2.0 }
    }
}

impl SceneBox {
    fn clamp(&self, x: &Vector) -> Vec<f64> {
        x.iter().map(|v| v.clamp(self.min, self.max)).collect()
    }

    fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.iter().all(|v| *v >= self.min - tol && *v <= self.max + tol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Plane,
    Preimage,
    ManifoldPiece,
    FlowLine,
    DualVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Geometry {
    Point { at: Vec<f64> },
    Segment { from: Vec<f64>, to: Vec<f64> },
    Polygon { vertices: Vec<Vec<f64>> },
    Ray { origin: Vec<f64>, direction: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub layer: usize,
    pub piece: usize,
    pub role: Role,
    pub geometry: Geometry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryExport {
    pub schema: u32,
    pub scenario: String,
    pub dimension: usize,
    pub scene_box: SceneBox,
    pub elements: Vec<Element>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

impl GeometryExport {
    pub fn new(scenario: &str, dimension: usize, scene_box: SceneBox) -> Self {
        GeometryExport {
            schema: SCHEMA_VERSION,
            scenario: scenario.to_string(),
            dimension,
            scene_box,
            elements: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn count(&self, role: Role) -> usize {
        self.elements.iter().filter(|e| e.role == role).count()
    }

    /// Adds the part of `piece` inside the scene box. Three-dimensional pieces
    /// are written as their facets; higher-dimensional ones are skipped.
    /// Returns the number of elements added.
    pub fn push_piece(&mut self, piece: &AffinePiece, layer: usize, id: usize, role: Role, tol: &Tolerances) -> usize {
        let b = self.scene_box;
        let Some(clipped) = piece.clip_box(b.min, b.max, tol).reduce(tol) else { return 0 };
        let mut geoms = Vec::new();
        match clipped.dim() {
            0 => geoms.push(Geometry::Point { at: b.clamp(clipped.base()) }),
            1 => {
                if let Some((p, q)) = clipped.segment(tol) {
                    geoms.push(Geometry::Segment { from: b.clamp(&p), to: b.clamp(&q) });
                }
            }
            2 => {
                let v = clipped.polygon(tol);
                if !v.is_empty() {
                    geoms.push(Geometry::Polygon { vertices: v.iter().map(|x| b.clamp(x)).collect() });
                }
            }
            3 => {
                for f in clipped.facets(tol) {
                    let v = f.polygon(tol);
                    if !v.is_empty() {
                        geoms.push(Geometry::Polygon { vertices: v.iter().map(|x| b.clamp(x)).collect() });
                    }
                }
            }
            _ => {}
        }
        let n = geoms.len();
        for geometry in geoms {
            self.elements.push(Element { layer, piece: id, role, geometry });
        }
        n
    }

    pub fn push_plane(&mut self, plane: &Hyperplane, layer: usize, id: usize, tol: &Tolerances) -> usize {
        let sig = crate::geometry::SignPattern(vec![crate::geometry::Side::Zero; plane.dim()]);
        let piece = AffinePiece::from_subspace(&plane.to_subspace(), sig);
        self.push_piece(&piece, layer, id, Role::Plane, tol)
    }

    pub fn push_segment(&mut self, from: &Vector, to: &Vector, layer: usize, id: usize, role: Role) {
        let b = self.scene_box;
        if let Some((p, q)) = clip_segment(from, to, &b) {
            self.elements.push(Element { layer, piece: id, role, geometry: Geometry::Segment { from: b.clamp(&p), to: b.clamp(&q) } });
        }
    }

    pub fn push_point(&mut self, at: &Vector, layer: usize, id: usize, role: Role) {
        if self.scene_box.contains(at, 1e-9) {
            let at = self.scene_box.clamp(at);
            self.elements.push(Element { layer, piece: id, role, geometry: Geometry::Point { at } });
        }
    }

    /// A ray is kept only when its origin lies in the scene box.
    pub fn push_ray(&mut self, origin: &Vector, direction: &Vector, layer: usize, id: usize, role: Role) {
        if self.scene_box.contains(origin, 1e-9) {
            let origin = self.scene_box.clamp(origin);
            self.elements.push(Element {
                layer,
                piece: id,
                role,
                geometry: Geometry::Ray { origin, direction: direction.iter().copied().collect() },
            });
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: GeometryExport = serde_json::from_str(s)?;
        if g.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported export schema {}", g.schema)));
        }
        Ok(g)
    }
}

// Liang-Barsky clipping against the scene box.
fn clip_segment(p: &Vector, q: &Vector, b: &SceneBox) -> Option<(Vector, Vector)> {
    let dir = q - p;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..p.len() {
        for (num, den) in [(p[k] - b.min, -dir[k]), (b.max - p[k], dir[k])] {
            if den.abs() < 1e-15 {
                if num < -1e-12 {
                    return None;
                }
            } else {
                let t = num / den;
                if den < 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
            }
        }
    }
    (t0 <= t1).then(|| (p + &dir * t0, p + &dir * t1))
}

fn ray_end(origin: &[f64], direction: &[f64], b: &SceneBox) -> Vector {
    let o = Vector::from_column_slice(origin);
    let d = Vector::from_column_slice(direction);
    let reach = (b.max - b.min) * (origin.len() as f64).sqrt() * 2.0 / d.norm().max(1e-300);
    clip_segment(&o, &(&o + &d * reach), b).map(|(_, q)| q).unwrap_or(o)
}

pub fn export_json(g: &GeometryExport, path: &Path) -> Result<()> {
    std::fs::write(path, g.to_json()?)?;
    Ok(())
}

/// Wavefront OBJ for three-dimensional scenes: polygons as faces, segments
/// and rays as lines, points as point elements.
pub fn to_obj(g: &GeometryExport) -> Result<String> {
    if g.dimension != 3 {
        return Err(Error::UnsupportedProjection(format!("OBJ output needs d = 3, scene has d = {}", g.dimension)));
    }
    let mut out = String::new();
    let _ = writeln!(out, "# {} ({} elements)", g.scenario, g.elements.len());
    let mut next = 1usize;
    let mut vertex = |out: &mut String, v: &[f64]| {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
        next += 1;
        next - 1
    };
    for e in &g.elements {
        let _ = writeln!(out, "g {}-{}-{}", role_name(e.role), e.layer, e.piece);
        match &e.geometry {
            Geometry::Point { at } => {
                let i = vertex(&mut out, at);
                let _ = writeln!(out, "p {i}");
            }
            Geometry::Segment { from, to } => {
                let i = vertex(&mut out, from);
                let j = vertex(&mut out, to);
                let _ = writeln!(out, "l {i} {j}");
            }
            Geometry::Ray { origin, direction } => {
                let end = ray_end(origin, direction, &g.scene_box);
                let i = vertex(&mut out, origin);
                let j = vertex(&mut out, end.as_slice());
                let _ = writeln!(out, "l {i} {j}");
            }
            Geometry::Polygon { vertices } => {
                let idx: Vec<String> = vertices.iter().map(|v| vertex(&mut out, v).to_string()).collect();
                let _ = writeln!(out, "f {}", idx.join(" "));
            }
        }
    }
    Ok(out)
}

pub fn export_obj(g: &GeometryExport, path: &Path) -> Result<()> {
    std::fs::write(path, to_obj(g)?)?;
    Ok(())
}

/// Planar view used by the SVG writer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// Keep two coordinate axes.
    Axes(usize, usize),
    /// Project onto the hyperplane orthogonal to `(1, .., 1)`.
    Identity,
}

impl std::str::FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "identity" {
            return Ok(Projection::Identity);
        }
        let parts: Vec<&str> = s.split(',').collect();
        if let [a, b] = parts[..] {
            if let (Ok(a), Ok(b)) = (a.trim().parse(), b.trim().parse()) {
                return Ok(Projection::Axes(a, b));
            }
        }
        Err(Error::UnsupportedProjection(format!("'{s}' (use 'identity' or 'i,j')")))
    }
}

fn projection_basis(p: Projection, d: usize) -> Result<(Vector, Vector)> {
    match p {
        Projection::Axes(a, b) => {
            if a >= d || b >= d || a == b {
                return Err(Error::UnsupportedProjection(format!("axes ({a}, {b}) in dimension {d}")));
            }
            let mut u = Vector::zeros(d);
            let mut v = Vector::zeros(d);
            u[a] = 1.0;
            v[b] = 1.0;
            Ok((u, v))
        }
        Projection::Identity => {
            if d < 3 {
                return Err(Error::UnsupportedProjection("identity-orthogonal view needs d >= 3".into()));
            }
            // (1,-1,0,..) and (1,1,-2,0,..) span a plane orthogonal to the axis
            let mut u = Vector::zeros(d);
            u[0] = 1.0;
            u[1] = -1.0;
            let mut v = Vector::zeros(d);
            v[0] = 1.0;
            v[1] = 1.0;
            v[2] = -2.0;
            Ok((u.normalize(), v.normalize()))
        }
    }
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Plane => "plane",
        Role::Preimage => "preimage",
        Role::ManifoldPiece => "manifold-piece",
        Role::FlowLine => "flow-line",
        Role::DualVector => "dual-vector",
    }
}

fn role_style(r: Role) -> &'static str {
    match r {
        Role::Plane => "fill:none;stroke:#888888;stroke-width:0.6",
        Role::Preimage => "fill:#555555;fill-opacity:0.45;stroke:#222222;stroke-width:0.6",
        Role::ManifoldPiece => "fill:#c0392b;fill-opacity:0.35;stroke:#7b241c;stroke-width:0.5",
        Role::FlowLine => "fill:none;stroke:#2e86c1;stroke-width:0.5",
        Role::DualVector => "fill:none;stroke:#117a65;stroke-width:1.2",
    }
}

pub fn to_svg(g: &GeometryExport, projection: Projection) -> Result<String> {
    let d = g.dimension;
    let (u, v) = projection_basis(projection, d)?;
    let b = g.scene_box;
    // project the box corners to fix the frame
    let corners: Vec<(f64, f64)> = (0u64..(1u64 << d.min(12)))
        .map(|mask| {
            let c = Vector::from_fn(d, |k, _| if k < 12 && mask & (1 << k) != 0 { b.max } else { b.min });
            (u.dot(&c), v.dot(&c))
        })
        .collect();
    let (min_x, max_x) = corners.iter().fold((f64::MAX, f64::MIN), |(lo, hi), c| (lo.min(c.0), hi.max(c.0)));
    let (min_y, max_y) = corners.iter().fold((f64::MAX, f64::MIN), |(lo, hi), c| (lo.min(c.1), hi.max(c.1)));
    let size = 600.0;
    let pad = 20.0;
    let scale = (size - 2.0 * pad) / (max_x - min_x).max(max_y - min_y).max(1e-12);
    let to_px = |p: &[f64]| {
        let x = Vector::from_column_slice(p);
        let px = pad + (u.dot(&x) - min_x) * scale;
        let py = size - pad - (v.dot(&x) - min_y) * scale;
        (px, py)
    };

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#);
    let _ = writeln!(out, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    for e in &g.elements {
        let style = role_style(e.role);
        let class = role_name(e.role);
        match &e.geometry {
            Geometry::Point { at } => {
                let (x, y) = to_px(at);
                let _ = writeln!(out, r#"<circle class="{class}" cx="{x:.3}" cy="{y:.3}" r="2" style="{style}"/>"#);
            }
            Geometry::Segment { from, to } => {
                let (x1, y1) = to_px(from);
                let (x2, y2) = to_px(to);
                let _ = writeln!(out, r#"<line class="{class}" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" style="{style}"/>"#);
            }
            Geometry::Ray { origin, direction } => {
                let end = ray_end(origin, direction, &b);
                let (x1, y1) = to_px(origin);
                let (x2, y2) = to_px(end.as_slice());
                let _ = writeln!(out, r#"<line class="{class}" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" style="{style}"/>"#);
            }
            Geometry::Polygon { vertices } => {
                let pts: Vec<String> = vertices
                    .iter()
                    .map(|p| {
                        let (x, y) = to_px(p);
                        format!("{x:.3},{y:.3}")
                    })
                    .collect();
                let _ = writeln!(out, r#"<polygon class="{class}" points="{}" style="{style}"/>"#, pts.join(" "));
            }
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn export_svg(g: &GeometryExport, path: &Path, projection: Projection) -> Result<()> {
    std::fs::write(path, to_svg(g, projection)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AffineSubspace, SignPattern, Side};
    use nalgebra::dvector;

    #[test]
    fn empty_export_is_valid_json() {
        let g = GeometryExport::new("empty", 3, SceneBox::default());
        let s = g.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["elements"].as_array().unwrap().len(), 0);
        assert_eq!(v["schema"], 1);
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let mut g = GeometryExport::new("rt", 3, SceneBox::default());
        g.push_point(&dvector![0.1, 1.0 / 3.0, 0.7], 0, 0, Role::Preimage);
        g.push_segment(&dvector![0.0, 0.0, 0.0], &dvector![3.0, 3.0, 3.0], 1, 2, Role::FlowLine);
        g.summary.insert("x".into(), serde_json::json!(0.1 + 0.2));
        let s = g.to_json().unwrap();
        assert_eq!(GeometryExport::from_json(&s).unwrap().to_json().unwrap(), s);
    }

    #[test]
    fn segments_are_clipped_to_the_box() {
        let mut g = GeometryExport::new("clip", 2, SceneBox::default());
        g.push_segment(&dvector![-1.0, 1.0], &dvector![3.0, 1.0], 0, 0, Role::FlowLine);
        match &g.elements[0].geometry {
            Geometry::Segment { from, to } => {
                assert_eq!(from, &vec![0.0, 1.0]);
                assert_eq!(to, &vec![2.0, 1.0]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn plane_becomes_a_polygon() {
        let t = Tolerances::default();
        let mut g = GeometryExport::new("plane", 3, SceneBox::default());
        let plane = Hyperplane::new(dvector![1.0, 1.0, 1.0], -1.0, &t).unwrap();
        assert_eq!(g.push_plane(&plane, 0, 0, &t), 1);
        let obj = to_obj(&g).unwrap();
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 1);
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 3);
    }

    #[test]
    fn obj_needs_three_dimensions() {
        let g = GeometryExport::new("flat", 2, SceneBox::default());
        assert!(matches!(to_obj(&g), Err(Error::UnsupportedProjection(_))));
    }

    #[test]
    fn svg_projections() {
        let t = Tolerances::default();
        let mut g = GeometryExport::new("svg", 2, SceneBox::default());
        let sq = AffinePiece::from_subspace(&AffineSubspace::whole(2), SignPattern(vec![Side::Minus; 2])).clip_box(0.0, 1.0, &t);
        g.push_piece(&sq, 0, 0, Role::Preimage, &t);
        let svg = to_svg(&g, Projection::Axes(0, 1)).unwrap();
        assert!(svg.contains("<polygon"));
        assert!(matches!(to_svg(&g, Projection::Identity), Err(Error::UnsupportedProjection(_))));
        assert!(matches!(to_svg(&g, Projection::Axes(0, 0)), Err(Error::UnsupportedProjection(_))));
    }

    #[test]
    fn projection_parsing() {
        assert_eq!("identity".parse::<Projection>().unwrap(), Projection::Identity);
        assert_eq!("0,2".parse::<Projection>().unwrap(), Projection::Axes(0, 2));
        assert!("diag".parse::<Projection>().is_err());
    }
}
