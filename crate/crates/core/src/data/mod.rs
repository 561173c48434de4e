//! Domain datasets: synthetic domain-shift benchmarks, the feature-file
//! format, and seeded splitting.

mod dataset;
mod feature_file;
mod split;
mod synthetic;

pub(crate) use dataset::to_hex;
pub use dataset::{DomainDataset, UnlabeledDataset};
pub use feature_file::{load_feature_file, parse_feature_text, save_feature_file, save_probability_rows};
pub use split::split;
pub use synthetic::{generate_domains, generate_domains_with_clean_labels, SyntheticDomain, SyntheticShiftConfig};
