//! Model persistence and export to CUSTOM function text.

mod bundle;
pub mod expr;
mod plumed;

pub use bundle::{
    load_model, save_model, write_atomic, BundleModel, CvOptions, LayerParams, LinearParams, MetadTemplate,
    ModelBundle, SCHEMA_VERSION,
};
pub use expr::{eval_expression, parse, Expr};
pub use plumed::{cv_expressions, cv_labels, emit_plumed, parse_custom_lines, round_trip_error, CustomLine, MAX_LINE};
