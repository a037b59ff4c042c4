//! Minimal convolutional network machinery in 64-bit floats: same-padded
//! convolution layers, a three-layer model with analytic gradients, the L1
//! loss and the ADAM optimizer.

mod adam;
mod conv;
mod io;
pub(crate) mod loss;
mod model;
mod tensor;

pub use adam::AdamState;
pub use conv::{conv_forward, Activation, ConvLayerParams};
pub use io::{load_params, params_from_json, params_to_json, save_params, WeightsFile};
pub use loss::l1_loss_and_grad;
pub use model::{
    model_backward, model_forward, Arch, ForwardCache, Gradients, LayerGradients, ModelMeta,
    ModelParams, NUM_LAYERS,
};
pub use tensor::Tensor3;
