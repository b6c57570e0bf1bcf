pub mod blm;
pub mod corpus;
pub mod embed;
pub mod experiment;
pub mod models;
pub mod nn;
pub mod util;
