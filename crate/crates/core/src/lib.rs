pub mod ingest;
pub mod clean;
pub mod count;
pub mod excess;
pub mod knn;
pub mod markergap;
pub mod synth;
