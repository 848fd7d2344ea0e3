//! Compiler toolchain that turns a trained CNN into a fixed-point FPGA
//! accelerator: manifest and weight ingestion, a float reference engine, a
//! bit-accurate datapath simulator, per-layer precision tuning, BRAM/DSP fit
//! checking, an analytic cycle model and Verilog emission.

pub mod binio;
pub mod datapath;
pub mod error;
pub mod fixed;
pub mod hdl;
pub mod model;
pub mod perf;
pub mod qplan;
pub mod reference;
pub mod resource;
pub mod tensor;
pub mod tuner;
pub mod weights;

pub use error::{Error, Result};
pub use fixed::{FixedValue, QFormat};
pub use model::{LayerSpec, NetworkSpec, TensorShape};
pub use qplan::QPlan;
pub use tensor::Tensor;
pub use weights::WeightBundle;
