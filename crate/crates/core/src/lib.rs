//! Numerical laboratory for the Type IIB flow of Hermitian metrics on flat
//! complex tori.

pub mod balance;
pub mod chern;
pub mod deriv;
pub mod diagnostics;
pub mod endo;
pub mod error;
pub mod flow;
pub mod forms;
pub mod grid;
pub mod linalg;
pub mod metric;
pub mod tensor;
pub mod verify;
