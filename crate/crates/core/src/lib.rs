pub mod discretization;
pub mod error;
pub mod mesh;
pub mod mlmc;
pub mod params;
pub mod qoi;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    struct Overview;
    #[doc = include_str!("../../../book/src/parameters.md")]
    struct Parameters;
    #[doc = include_str!("../../../book/src/mesh.md")]
    struct Mesh;
    #[doc = include_str!("../../../book/src/mlmc.md")]
    struct Mlmc;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
