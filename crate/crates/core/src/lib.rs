//! Functional dynamic factor models for panels of curves, with
//! Nelson–Siegel and random-walk baselines, forecast evaluation and bond
//! trading backtests.

pub mod artime;
pub mod baselines;
pub mod cli;
pub mod doc;
pub mod eval;
pub mod fdfm;
pub mod io;
pub mod linalg;
pub mod models;
pub mod par;
pub mod sim;
pub mod spline;
pub mod trading;
