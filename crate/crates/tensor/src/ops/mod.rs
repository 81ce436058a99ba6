mod conv;
mod elementwise;
pub(crate) mod linalg;
mod norm;
pub(crate) mod reduce;
mod shape;
mod softmax;

pub use conv::conv_output_size;
pub use elementwise::LOG_CLAMP;
pub use norm::{NormMode, RunningStats, LAYER_NORM_EPS};
