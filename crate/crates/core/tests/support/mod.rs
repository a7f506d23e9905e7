pub mod netgen;
pub mod hl7gen;
pub mod condgen;
