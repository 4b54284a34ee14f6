//! Dense networks with hand-written backpropagation, Adam and target blending.

mod adam;
mod gradcheck;
mod mlp;

pub use adam::{adam_step, OptState};
pub use gradcheck::{compare_gradients, finite_diff_check, squared_error, RELATIVE_FLOOR};
pub use mlp::{soft_update, Activation, Dense, ForwardCache, Gradients, MlpParams};
