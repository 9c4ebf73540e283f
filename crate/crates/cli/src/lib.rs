pub mod experiments;
pub mod table;
