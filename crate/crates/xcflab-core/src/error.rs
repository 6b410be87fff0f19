use thiserror::Error;

pub type Result<T> = std::result::Result<T, XcfError>;

#[derive(Debug, Error)]
pub enum XcfError {
    #[error("metric is not positive definite at node {node:?}")]
    NonPositiveMetric { node: [usize; 3] },

    #[error("grid dims {dims:?} too small for stencil order {order} (need >= {needed} nodes per axis)")]
    StencilUnderflow {
        dims: [usize; 3],
        order: usize,
        needed: usize,
    },

    #[error("degenerate plane: |X ^ Y|^2 = {area2:.3e} below 1e-14")]
    DegeneratePlane { area2: f64 },

    #[error("Einstein tensor is not positive definite at node {node:?}")]
    NonPositiveEin { node: [usize; 3] },

    #[error("Einstein tensor degenerate at t = {t} (min eigenvalue {min_eig:.3e})")]
    EinDegenerate { t: f64, min_eig: f64 },

    #[error("structure constants violate the Jacobi identity (residual {residual:.3e})")]
    JacobiViolation { residual: f64 },

    #[error("dt = {dt:.3e} exceeds the CFL bound {bound:.3e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("evolution residuals need three consecutive states on one grid with equal dt")]
    MismatchedGrids,

    #[error("zero covector")]
    ZeroCovector,

    #[error("Richardson extraction did not settle: {detail}")]
    NonConvergentExtraction { detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(String),
}

impl From<serde_json::Error> for XcfError {
    fn from(e: serde_json::Error) -> Self {
        XcfError::Json(e.to_string())
    }
}
