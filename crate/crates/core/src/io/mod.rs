//! On-disk formats: the .bnnx model container, extractor bundles, and the
//! IDX / netpbm dataset parsers.

pub mod bundle;
mod bytes;
pub mod feature_file;
pub mod idx;
pub mod model_file;
pub mod pnm;

pub use bundle::{export_extractor, load_bundle, ExtractorBundle};
pub use feature_file::{read_feature_cache, write_feature_cache};
pub use idx::{parse_idx, write_idx_u8, IdxDataset};
pub use model_file::{load_model, save_model};
pub use pnm::{parse_pnm, write_pnm, PnmImage};
