pub mod classifier;
pub mod corpus;
pub mod detector;
pub mod evaluation;
pub mod geometry;
pub mod masking;
pub mod ocr;
pub mod pipeline;
