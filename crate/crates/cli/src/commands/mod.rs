pub mod bound;
pub mod equiv;
pub mod fit;
pub mod fixture;
pub mod trade;
