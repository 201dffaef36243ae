//! Scenario configuration (JSON, `schema: 1`) and the task runner behind the
//! command-line tool.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::circulant_cone::{check_contraction_with, check_nesting_with, circulant_layer, cone_of, ContractionOptions, Kernel, NestingOptions};
use crate::dual_basis::{build_dual_basis, preimage};
use crate::error::{Error, Result};
use crate::export::{GeometryExport, Role, SceneBox};
use crate::geometry::{check_dim, orthogonal_complement, AffineSubspace, Tolerances, Vector, MAX_DIM};
use crate::layer::LayerMap;
use crate::manifold_trace::{pushforward_residual, trace_manifold, TraceOptions};
use crate::network::{net_activations, net_forward, net_preimage_with, Network, PreimageOptions};
use crate::piece::AffinePiece;

pub const CONFIG_SCHEMA: u32 = 1;

const BUNDLED: &[(&str, &str)] = &[
    ("fig1-preimage", include_str!("../scenarios/fig1-preimage.json")),
    ("fig2-bias-only", include_str!("../scenarios/fig2-bias-only.json")),
    ("fig3-identity", include_str!("../scenarios/fig3-identity.json")),
    ("fig3-wide", include_str!("../scenarios/fig3-wide.json")),
    ("fig4-triangle", include_str!("../scenarios/fig4-triangle.json")),
];

/// Names of the scenarios shipped with the library.
pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

/// Shared bias or one bias per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BiasSpec {
    Shared(f64),
    PerUnit(Vec<f64>),
}

/// A layer given either by convolution taps (circulant) or by a full weight
/// matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    pub bias: BiasSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_rank: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_solve: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub membership: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub base: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

fn default_samples() -> usize {
    200
}
fn default_subset_samples() -> usize {
    64
}
fn default_radius() -> f64 {
    2.0
}
fn default_resolution() -> f64 {
    0.1
}
fn default_flow_grid() -> usize {
    6
}
fn default_piece_samples() -> usize {
    100
}
fn default_exact_tolerance() -> f64 {
    1e-8
}
fn default_trace_tolerance() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Task {
    Preimage {
        target: Vec<f64>,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_exact_tolerance")]
        residual_tolerance: f64,
    },
    Nesting {
        #[serde(default = "default_subset_samples")]
        samples_per_subset: usize,
        #[serde(default = "default_radius")]
        box_radius: f64,
    },
    ContractionFlow {
        targets: Vec<Vec<f64>>,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_flow_grid")]
        flow_grid: usize,
        #[serde(default = "default_radius")]
        box_radius: f64,
        #[serde(default = "default_exact_tolerance")]
        residual_tolerance: f64,
    },
    ManifoldTrace {
        manifold: ManifoldSpec,
        /// Also trace the manifold shifted by this distance along its unit
        /// normal (oriented away from the origin) and report the separation.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parallel_offset: Option<f64>,
        #[serde(default = "default_piece_samples")]
        samples_per_piece: usize,
        #[serde(default = "default_trace_tolerance")]
        residual_tolerance: f64,
    },
    Cells {
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_resolution")]
        resolution: f64,
    },
}

impl Task {
    /// The name used in configs and on the command line.
    pub fn kind(&self) -> &'static str {
        match self {
            Task::Preimage { .. } => "preimage",
            Task::Nesting { .. } => "nesting",
            Task::ContractionFlow { .. } => "contraction-flow",
            Task::ManifoldTrace { .. } => "manifold-trace",
            Task::Cells { .. } => "cells",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub dimension: usize,
    #[serde(default)]
    pub seed: u64,
    pub layers: Vec<LayerSpec>,
    pub task: Task,
    #[serde(default)]
    pub scene_box: SceneBox,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_len(what: &str, v: &[f64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(config_err(format!("{what} has {} entries, expected {d}", v.len())));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(config_err(format!("{what} has non-finite entries")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(s).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json(&s)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, src) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| config_err(format!("unknown scenario '{name}' (known: {})", bundled_names().join(", "))))?;
        Self::from_json(src)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(config_err(format!("unsupported schema {} (expected {CONFIG_SCHEMA})", self.schema)));
        }
        let d = self.dimension;
        check_dim(d).map_err(|_| config_err(format!("dimension {d} outside 2..={MAX_DIM}")))?;
        if self.layers.is_empty() {
            return Err(config_err("at least one layer is required"));
        }
        for (k, l) in self.layers.iter().enumerate() {
            match (&l.taps, &l.weights) {
                (Some(t), None) => {
                    if t.is_empty() || t.len() > d {
                        return Err(config_err(format!("layer {k}: kernel support {} must be in 1..={d}", t.len())));
                    }
                    check_len(&format!("layer {k} taps"), t, t.len())?;
                }
                (None, Some(w)) => {
                    if w.len() != d {
                        return Err(config_err(format!("layer {k}: weights need {d} rows")));
                    }
                    for (i, row) in w.iter().enumerate() {
                        check_len(&format!("layer {k} weight row {i}"), row, d)?;
                    }
                }
                _ => return Err(config_err(format!("layer {k}: give exactly one of 'taps' or 'weights'"))),
            }
            match &l.bias {
                BiasSpec::Shared(b) if !b.is_finite() => return Err(config_err(format!("layer {k}: bias is not finite"))),
                BiasSpec::PerUnit(b) => check_len(&format!("layer {k} bias"), b, d)?,
                _ => {}
            }
        }
        let b = self.scene_box;
        if !(b.min.is_finite() && b.max.is_finite() && b.min < b.max) {
            return Err(config_err("scene_box needs finite min < max"));
        }
        for v in [self.tolerances.eps_rank, self.tolerances.eps_solve, self.tolerances.membership].into_iter().flatten() {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(format!("tolerance {v} must be positive")));
            }
        }
        match &self.task {
            Task::Preimage { target, samples, .. } => {
                check_len("target", target, d)?;
                if target.iter().any(|v| *v < 0.0) {
                    return Err(config_err("target must be non-negative"));
                }
                if *samples == 0 {
                    return Err(config_err("samples must be at least 1"));
                }
            }
            Task::Nesting { samples_per_subset, box_radius } => {
                if d > 12 {
                    return Err(config_err("nesting checks support d <= 12"));
                }
                if *samples_per_subset == 0 || !box_radius.is_finite() || *box_radius <= 0.0 {
                    return Err(config_err("nesting needs samples_per_subset >= 1 and box_radius > 0"));
                }
            }
            Task::ContractionFlow { targets, samples, box_radius, .. } => {
                if d > 8 {
                    return Err(config_err("contraction flows support d <= 8"));
                }
                for t in targets {
                    check_len("target", t, d)?;
                    if t.iter().any(|v| *v < 0.0) {
                        return Err(config_err("targets must be non-negative"));
                    }
                }
                if *samples == 0 || !box_radius.is_finite() || *box_radius <= 0.0 {
                    return Err(config_err("flow needs samples >= 1 and box_radius > 0"));
                }
            }
            Task::ManifoldTrace { manifold, samples_per_piece, parallel_offset, .. } => {
                check_len("manifold base", &manifold.base, d)?;
                for v in &manifold.directions {
                    check_len("manifold direction", v, d)?;
                }
                if parallel_offset.is_some() && manifold.directions.len() + 1 != d {
                    return Err(config_err("parallel_offset needs a hyperplane manifold (d - 1 directions)"));
                }
                if *samples_per_piece == 0 {
                    return Err(config_err("samples_per_piece must be at least 1"));
                }
            }
            Task::Cells { radius, resolution } => {
                if d > 16 {
                    return Err(config_err("cell enumeration supports d <= 16"));
                }
                if !(*radius > 0.0 && *resolution > 0.0) {
                    return Err(config_err("cells need radius > 0 and resolution > 0"));
                }
            }
        }
        Ok(())
    }

    /// Defaults, then environment overrides, then values from the config.
    pub fn resolved_tolerances(&self) -> Result<Tolerances> {
        let mut t = Tolerances::from_env()?;
        let o = &self.tolerances;
        if let Some(v) = o.eps_rank {
            t.eps_rank = v;
        }
        if let Some(v) = o.eps_solve {
            t.eps_solve = v;
        }
        if let Some(v) = o.membership {
            t.membership = v;
        }
        Ok(t)
    }

    pub fn network(&self) -> Result<Network> {
        let d = self.dimension;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if let Some(taps) = &l.taps {
                    let bias = match &l.bias {
                        BiasSpec::Shared(b) => *b,
                        BiasSpec::PerUnit(_) => return Err(config_err("a tap layer takes one shared bias")),
                    };
                    circulant_layer(&Kernel::new(taps.clone(), bias)?, d)
                } else {
                    let w = l.weights.as_ref().expect("validated");
                    let m = DMatrix::from_fn(d, d, |i, j| w[i][j]);
                    let b = match &l.bias {
                        BiasSpec::Shared(b) => Vector::from_element(d, *b),
                        BiasSpec::PerUnit(b) => Vector::from_column_slice(b),
                    };
                    LayerMap::new(m, b)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers)
    }
}

/// Export, human-readable report and largest forward residual of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutcome {
    pub export: GeometryExport,
    pub report: String,
    pub max_residual: f64,
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    config.validate()?;
    let tol = config.resolved_tolerances()?;
    let net = config.network()?;
    let mut export = GeometryExport::new(&config.name, config.dimension, config.scene_box);
    let mut report = String::new();
    let _ = writeln!(report, "scenario {} (d = {}, {} layer(s), task {})", config.name, config.dimension, net.depth(), config.task.kind());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let (max_residual, tolerance) = match &config.task {
        Task::Preimage { target, samples, residual_tolerance } => {
            (run_preimage(&net, target, *samples, &tol, &mut rng, &mut export, &mut report)?, Some(*residual_tolerance))
        }
        Task::Nesting { samples_per_subset, box_radius } => {
            run_nesting(&net, *samples_per_subset, *box_radius, config.seed, &tol, &mut export, &mut report)?;
            (0.0, None)
        }
        Task::ContractionFlow { targets, samples, flow_grid, box_radius, residual_tolerance } => {
            let r = run_flow(&net, targets, *samples, *flow_grid, *box_radius, config.seed, &tol, &mut rng, &mut export, &mut report)?;
            (r, Some(*residual_tolerance))
        }
        Task::ManifoldTrace { manifold, parallel_offset, samples_per_piece, residual_tolerance } => {
            let r = run_trace(&net, manifold, *parallel_offset, *samples_per_piece, config.seed, &tol, &mut export, &mut report)?;
            (r, Some(*residual_tolerance))
        }
        Task::Cells { radius, resolution } => {
            run_cells(&net, *radius, *resolution, config.seed, &tol, &mut export, &mut report)?;
            (0.0, None)
        }
    };
    export.summary.insert("max_residual".into(), json!(max_residual));
    let _ = writeln!(report, "max forward residual {max_residual:.3e}");
    if let Some(t) = tolerance {
        export.summary.insert("residual_tolerance".into(), json!(t));
        if max_residual.is_nan() || max_residual > t {
            return Err(Error::ResidualTooLarge { residual: max_residual, tolerance: t });
        }
    }
    Ok(ScenarioOutcome { export, report, max_residual })
}

fn push_layer_frame(net: &Network, k: usize, tol: &Tolerances, export: &mut GeometryExport) {
    for (i, plane) in net.layers()[k].hyperplanes().iter().enumerate() {
        if plane.normal().norm() > tol.eps_rank {
            export.push_plane(plane, k, i, tol);
        }
    }
}

fn push_dual_vectors(layer: &LayerMap, k: usize, tol: &Tolerances, export: &mut GeometryExport) {
    if let Ok(basis) = build_dual_basis(layer, tol) {
        let reach = (export.scene_box.max - export.scene_box.min) * 4.0;
        for (i, e) in basis.vectors().iter().enumerate() {
            export.push_segment(basis.apex(), &(basis.apex() + e * reach), k, i, Role::DualVector);
        }
    }
}

fn run_preimage(
    net: &Network,
    target: &[f64],
    samples: usize,
    tol: &Tolerances,
    rng: &mut ChaCha8Rng,
    export: &mut GeometryExport,
    report: &mut String,
) -> Result<f64> {
    let y = Vector::from_column_slice(target);
    let last = net.depth() - 1;
    let top = preimage(&net.layers()[last], &y, tol)?;
    let _ = writeln!(report, "base point {:?}, generators along e_i for i in {:?}", top.base().as_slice(), top.zero_idx());
    export.summary.insert("base".into(), json!(top.base().as_slice()));
    export.summary.insert("zero_set".into(), json!(top.zero_idx()));
    export.summary.insert("target".into(), json!(target));

    push_layer_frame(net, 0, tol, export);
    if net.depth() == 1 {
        push_dual_vectors(&net.layers()[0], 0, tol, export);
        for (i, e) in top.generators() {
            export.push_ray(top.base(), e, 0, *i, Role::Preimage);
        }
    }
    let layered = net_preimage_with(net, &y, &PreimageOptions { tol: *tol, ..PreimageOptions::default() })?;
    let sizes: Vec<usize> = layered.levels().iter().map(Vec::len).collect();
    export.summary.insert("level_sizes".into(), json!(sizes));
    let b = export.scene_box;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for (id, lp) in layered.input_pieces().iter().enumerate() {
        export.push_piece(&lp.piece, 0, id, Role::Preimage, tol);
        for x in lp.piece.clip_box(b.min.max(0.0), b.max, tol).sample(samples, rng, tol) {
            worst = worst.max((net_forward(net, &x)? - &y).norm());
            checked += 1;
        }
    }
    export.summary.insert("piece_count".into(), json!(layered.input_pieces().len()));
    export.summary.insert("samples_checked".into(), json!(checked));
    let _ = writeln!(report, "{} input piece(s), {checked} samples checked", layered.input_pieces().len());
    Ok(worst)
}

fn run_nesting(
    net: &Network,
    samples_per_subset: usize,
    box_radius: f64,
    seed: u64,
    tol: &Tolerances,
    export: &mut GeometryExport,
    report: &mut String,
) -> Result<()> {
    let mut nested = Vec::new();
    let mut violated = Vec::new();
    let mut contraction = Vec::new();
    let mut angles = Vec::new();
    for (k, layer) in net.layers().iter().enumerate() {
        let opts = NestingOptions { samples_per_subset, seed, box_radius, tol: *tol };
        let n = check_nesting_with(layer, &opts)?;
        let c = check_contraction_with(layer, &ContractionOptions { seed, box_radius, ..ContractionOptions::default() })?;
        let angle = cone_of(layer, tol).ok().map(|c| c.half_angle.to_degrees());
        let _ = writeln!(
            report,
            "layer {k}: fully nested {}, {} of {} subsets violated, {} dimension-increasing pattern(s){}",
            n.fully_nested,
            n.violated_subsets.len(),
            n.checked_subsets,
            c.violations.len(),
            angle.map(|a| format!(", normal-to-axis angle {a:.2} deg")).unwrap_or_default()
        );
        for v in &n.violated_subsets {
            let _ = writeln!(report, "  subset {:?}: {:?} at {:?}", v.subset, v.failure, v.witness.as_slice());
        }
        push_layer_frame(net, k, tol, export);
        push_dual_vectors(layer, k, tol, export);
        for (i, v) in c.violations.iter().enumerate() {
            export.push_segment(&v.witness, &layer.forward(&v.witness)?, k, i, Role::FlowLine);
        }
        nested.push(n.fully_nested);
        violated.push(n.violated_subsets.len());
        contraction.push(c.violations.len());
        angles.push(angle);
    }
    export.summary.insert("fully_nested".into(), json!(nested));
    export.summary.insert("violated_subsets".into(), json!(violated));
    export.summary.insert("contraction_violations".into(), json!(contraction));
    export.summary.insert("half_angle_deg".into(), json!(angles));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_flow(
    net: &Network,
    targets: &[Vec<f64>],
    samples: usize,
    flow_grid: usize,
    box_radius: f64,
    seed: u64,
    tol: &Tolerances,
    rng: &mut ChaCha8Rng,
    export: &mut GeometryExport,
    report: &mut String,
) -> Result<f64> {
    let d = net.dim();
    let mut nested = Vec::new();
    for (k, layer) in net.layers().iter().enumerate() {
        let n = check_nesting_with(layer, &NestingOptions { seed, box_radius, tol: *tol, ..NestingOptions::default() })?;
        let _ = writeln!(report, "layer {k}: fully nested {}", n.fully_nested);
        nested.push(n.fully_nested);
        push_layer_frame(net, k, tol, export);
    }
    export.summary.insert("fully_nested".into(), json!(nested));

    let b = export.scene_box;
    let mut worst = 0.0f64;
    let mut coverage = Vec::new();
    let mut piece_id = 0;
    for t in targets {
        let y = Vector::from_column_slice(t);
        let layered = net_preimage_with(net, &y, &PreimageOptions { tol: *tol, ..PreimageOptions::default() })?;
        for lp in layered.input_pieces() {
            export.push_piece(&lp.piece, 0, piece_id, Role::Preimage, tol);
            piece_id += 1;
            for x in lp.piece.clip_box(b.min.max(0.0), b.max, tol).sample(samples, rng, tol) {
                worst = worst.max((net_forward(net, &x)? - &y).norm());
            }
        }
        // fraction of a uniform sample of the scene box mapped onto the target
        let lo = b.min.max(0.0);
        let hits = (0..2000)
            .filter(|_| {
                let x = Vector::from_fn(d, |_, _| rng.random_range(lo..=b.max));
                layered.contains(&x, tol.membership)
            })
            .count();
        let frac = hits as f64 / 2000.0;
        let _ = writeln!(report, "target {t:?}: {} input piece(s), covers {:.1}% of the scene box", layered.input_pieces().len(), 100.0 * frac);
        coverage.push(frac);
    }
    export.summary.insert("coverage".into(), json!(coverage));

    // trajectories of a regular grid of inputs, one segment per layer
    let steps = flow_grid.max(2);
    let lo = b.min.max(0.0);
    let h = (b.max - lo) / (steps - 1) as f64;
    let total = steps.pow(d as u32);
    for n in 0..total {
        let mut idx = n;
        let x = Vector::from_fn(d, |_, _| {
            let i = idx % steps;
            idx /= steps;
            lo + h * i as f64
        });
        let path = net_activations(net, &x)?;
        for k in 0..net.depth() {
            if (&path[k + 1] - &path[k]).norm() > 1e-12 {
                export.push_segment(&path[k], &path[k + 1], k, n, Role::FlowLine);
            }
        }
    }
    Ok(worst)
}

fn unit_normal(m: &AffineSubspace) -> Vector {
    let n = orthogonal_complement(m.direction_matrix()).column(0).into_owned();
    let s: f64 = n.sum();
    let first = n.iter().find(|v| v.abs() > 1e-12).copied().unwrap_or(1.0);
    if s < -1e-12 || (s.abs() <= 1e-12 && first < 0.0) {
        -n
    } else {
        n
    }
}

#[allow(clippy::too_many_arguments)]
fn run_trace(
    net: &Network,
    spec: &ManifoldSpec,
    parallel_offset: Option<f64>,
    samples_per_piece: usize,
    seed: u64,
    tol: &Tolerances,
    export: &mut GeometryExport,
    report: &mut String,
) -> Result<f64> {
    let dirs: Vec<Vector> = spec.directions.iter().map(|v| Vector::from_column_slice(v)).collect();
    let m = AffineSubspace::new(Vector::from_column_slice(&spec.base), &dirs, tol)?;
    let b = export.scene_box;
    let opts = TraceOptions { box_radius: b.max, tol: *tol, ..TraceOptions::default() };
    let traced = trace_manifold(net, &m, &opts)?;
    let residual = pushforward_residual(net, &m, &traced.pieces, samples_per_piece, b.max, seed, tol)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut continuity = 0.0f64;
    for adj in &traced.adjacency {
        for x in adj.shared.sample(20, &mut rng, tol) {
            continuity = continuity.max(traced.pieces[adj.a].residual(&x)).max(traced.pieces[adj.b].residual(&x));
        }
    }
    let dims: Vec<usize> = traced.pieces.iter().map(AffinePiece::dim).collect();
    for (id, p) in traced.pieces.iter().enumerate() {
        export.push_piece(p, 0, id, Role::ManifoldPiece, tol);
    }
    export.summary.insert("piece_count".into(), json!(traced.pieces.len()));
    export.summary.insert("piece_dims".into(), json!(dims));
    export.summary.insert("stage_sizes".into(), json!(traced.stage_sizes));
    export.summary.insert("adjacent_pairs".into(), json!(traced.adjacency.len()));
    export.summary.insert("continuity_residual".into(), json!(continuity));
    let _ = writeln!(
        report,
        "{} input piece(s) (stages {:?}), {} adjacent pair(s), continuity residual {continuity:.3e}",
        traced.pieces.len(),
        traced.stage_sizes,
        traced.adjacency.len()
    );

    if let Some(offset) = parallel_offset {
        let shifted = AffineSubspace::new(m.base() + unit_normal(&m) * offset, &m.directions(), tol)?;
        let other = trace_manifold(net, &shifted, &TraceOptions { adjacency: false, ..opts })?;
        let other_residual = pushforward_residual(net, &shifted, &other.pieces, samples_per_piece, b.max, seed, tol)?;
        let sample_all = |pieces: &[AffinePiece], rng: &mut ChaCha8Rng| -> Vec<Vector> {
            pieces.iter().flat_map(|p| p.clip_box(0.0, b.max, tol).sample(samples_per_piece, rng, tol)).collect()
        };
        let xs = sample_all(&traced.pieces, &mut rng);
        let ys = sample_all(&other.pieces, &mut rng);
        let mut sep = f64::INFINITY;
        for x in &xs {
            for y in &ys {
                sep = sep.min((x - y).norm());
            }
        }
        export.summary.insert("parallel_offset".into(), json!(offset));
        export.summary.insert("parallel_piece_count".into(), json!(other.pieces.len()));
        export.summary.insert("min_separation".into(), json!(if sep.is_finite() { sep } else { -1.0 }));
        let _ = writeln!(report, "shifted manifold: {} piece(s), sampled separation {sep:.4}", other.pieces.len());
        return Ok(residual.max(other_residual));
    }
    Ok(residual)
}

fn run_cells(
    net: &Network,
    radius: f64,
    resolution: f64,
    seed: u64,
    tol: &Tolerances,
    export: &mut GeometryExport,
    report: &mut String,
) -> Result<()> {
    let d = net.dim();
    let mut counts = Vec::new();
    let mut violations = Vec::new();
    for (k, layer) in net.layers().iter().enumerate() {
        let cells = layer.enumerate_cells(radius, resolution)?;
        let _ = writeln!(report, "layer {k}: {} cell(s) (at most {})", cells.len(), 1u64 << d);
        counts.push(cells.len());
        if d <= 8 {
            let c = check_contraction_with(layer, &ContractionOptions { seed, box_radius: radius, ..ContractionOptions::default() })?;
            let _ = writeln!(report, "  pattern  source-dim -> image-dim");
            for (i, p) in c.patterns.iter().enumerate() {
                let _ = writeln!(report, "  {}  {} -> {}", p.pattern, p.source_dim, p.image_dim);
                export.push_segment(&p.witness, &layer.forward(&p.witness)?, k, i, Role::FlowLine);
            }
            violations.push(Some(c.violations.len()));
        } else {
            violations.push(None);
        }
        push_layer_frame(net, k, tol, export);
    }
    export.summary.insert("cell_count".into(), json!(counts));
    export.summary.insert("max_cells".into(), json!(1u64 << d));
    export.summary.insert("contraction_violations".into(), json!(violations));
    Ok(())
}
