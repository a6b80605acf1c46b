pub mod charts;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod vehicle;
pub mod pmp;
pub mod propagate;
pub mod shooting;
pub mod homotopy;
pub mod cli;
