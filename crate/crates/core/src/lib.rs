pub mod error;
mod quadrature;
pub mod velocity_grid;
pub mod maxwellian;
pub mod slab;
pub mod collision;
pub mod cns;
pub mod boltzmann;
pub mod entropy;
pub mod study;
