//! Dense arrays, fixed-topology MLPs with explicit backpropagation, Adam,
//! and parameter checkpoints.

mod array;
mod checkpoint;
mod mlp;
mod params;

pub use array::NumArray;
pub use checkpoint::{load_params, save_params, ParamMap, ParamRecord};
pub use mlp::{
    backward, elu, forward, layer_norm, Activation, Dense, ForwardCache, Mlp, MlpSpec,
    LAYER_NORM_VAR_FLOOR,
};
pub use params::{Gradients, ParamSet, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
