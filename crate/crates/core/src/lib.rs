pub mod integrals;
pub mod lattice;
pub mod volume;
pub mod grid;
pub mod legendre;
pub mod potential;
pub mod model;

#[cfg(test)]
mod properties;
