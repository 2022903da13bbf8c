pub mod bench;
pub mod dataset;
pub mod explorer;
pub mod llm;
pub mod model;
pub mod parser;
pub mod raster;
pub mod sim;
