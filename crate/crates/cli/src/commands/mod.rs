mod analysis;
mod comprehend;
mod ingest;
mod probe;
mod produce;

pub use analysis::{productivity, report};
pub use comprehend::{comprehend, model_name};
pub use ingest::{ingest, split};
pub use probe::probe;
pub use produce::produce;
