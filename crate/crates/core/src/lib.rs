pub mod circulant_cone;
pub mod dual_basis;
pub mod error;
pub mod export;
pub mod geometry;
pub mod layer;
pub(crate) mod lp;
pub mod manifold_trace;
pub mod network;
pub mod piece;
pub mod scenario;

pub use error::{Error, Result};
pub use geometry::{AffineSubspace, Hyperplane, Side, SignPattern, Tolerances, Vector};
pub use layer::{LayerMap, OutputPattern};
pub use piece::AffinePiece;
pub use scenario::{bundled_names, run_scenario, ScenarioConfig, ScenarioOutcome, Task};
pub use dual_basis::{build_dual_basis, preimage, preimage_contains, sample_preimage, DualBasis, PreimageSet};
pub use circulant_cone::{check_contraction, check_nesting, check_shift_equivariance, circulant_layer, cone_of, ConeDescriptor, ContractionReport, Kernel, NestingReport};
pub use network::{net_forward, net_preimage, pull_back, LayeredPreimage, LinkedPiece, Network};
pub use manifold_trace::{backtrace_layer, intersect_manifold, trace_manifold, Adjacency, PiecewiseManifold, TraceOptions};
pub use export::{export_json, export_obj, export_svg, Element, Geometry, GeometryExport, Projection, Role, SceneBox};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
struct ReadmeDoctests;
