//! Geodesic segments on asymptotically conical manifolds: exact cone
//! geometry, perturbed conical metrics, geodesic integration, a discrete
//! min-max over sweepouts of curves and the asymptotic analysis of long
//! geodesics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ac_metric;
pub mod asymptotics;
pub mod cone_geometry;
pub mod discrete_curve;
pub mod error;
pub mod exec;
pub mod geodesic_flow;
pub mod linalg;
pub mod oracle;
pub mod sweepout_minmax;

pub use ac_metric::{MetricConfig, MetricSpec, Perturbation};
pub use cone_geometry::OpeningAngle;
pub use discrete_curve::DiscreteCurve;
pub use error::{GeoError, Result};
pub use exec::Execution;
