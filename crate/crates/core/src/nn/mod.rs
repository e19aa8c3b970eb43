//! Dense network primitives: matrices, layers, losses, backpropagation, Adam
//! and a logistic-regression trainer.

pub mod adam;
pub mod backprop;
pub mod layers;
pub mod logistic;
pub mod loss;
pub mod matrix;

pub use adam::AdamState;
pub use backprop::{backprop, head_backward, head_loss, trunk_backward, Gradients, HeadPass};
pub use layers::{
    forward_head, forward_trunk, DenseLayer, HeadParams, Heads, Parameters, TrunkCache, TrunkParams, CUT_DIM,
    HIDDEN_DIM,
};
pub use logistic::{train_logistic, LogisticConfig, LogisticModel};
pub use loss::{bce, bce_loss, sigmoid, PROB_EPS};
pub use matrix::Matrix;
