//! Reverse-engineering of SVG charts into layered representations and
//! reusable, parameterized templates.

pub mod corpus;
pub mod data;
pub mod decompose;
pub mod dsl;
pub mod fidelity;
pub mod geom;
pub mod ir;
pub mod lmm;
pub mod preprocess;
pub mod prompts;
pub mod refine;
pub mod report;
pub mod svg;
pub mod synth;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;
