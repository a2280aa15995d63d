pub mod error;
pub mod integrate;
pub mod models;
pub mod quadrature;
pub mod verify;
pub mod scenarios;
pub mod cli;
