pub mod dense;
pub mod mc;
