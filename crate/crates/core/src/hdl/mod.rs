//! Verilog generation for the accelerator.

pub mod emit;
pub mod lint;
pub mod memfile;
pub mod units;

pub use emit::{emit_all, render, EmitManifest, EmitPlan};
pub use lint::{lint_tree, LintIssue};
pub use memfile::{emit_memfile, parse_memfile};
