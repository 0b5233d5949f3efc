pub mod charfn;
pub mod config;
pub mod cycle;
pub mod kernels;
pub mod error;
pub mod limits;
pub mod nonadiabatic;
pub mod optimize;
pub mod ode;
pub mod protocol;
pub mod special;
pub mod stats;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/engine.md")]
    pub struct Engine;
    #[doc = include_str!("../../../book/src/nonadiabaticity.md")]
    pub struct Nonadiabaticity;
    #[doc = include_str!("../../../book/src/statistics.md")]
    pub struct Statistics;
    #[doc = include_str!("../../../book/src/finite.md")]
    pub struct Finite;
    #[doc = include_str!("../../../book/src/optimization.md")]
    pub struct Optimization;
}
