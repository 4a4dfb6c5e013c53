pub mod factor;
pub mod mesh;
pub mod meshgen;
pub mod product;
