pub mod bound;
pub mod cli;
pub mod field;
pub mod invariants;
pub mod polytope;
pub mod relax;
pub mod sphergeo;
