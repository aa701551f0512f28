pub mod events;
pub mod logic;
pub mod ltlf;
pub mod speclang;
pub mod sre;
pub mod syntax;
pub mod exec_deriv;
pub mod exec_naive;
pub mod cli;
