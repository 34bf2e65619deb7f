//! Closed-form gradients of the relaxed objectives, from per-bin partials
//! through soft histograms, relaxed distances and tanh down to the weights of
//! a linear hash model.

mod backprop;
mod batch;
mod bin_grads;
mod fd;
mod pipeline;

pub use backprop::{
    beta_matrices, fused_backprop, minibatch_backprop, naive_backprop, BatchJacobian, BetaMatrices,
};
pub use batch::BatchAffinities;
pub use bin_grads::{
    decomposition_holds, numeric_bin_grads, objective_bin_grads, HistogramGradients, QueryGradients,
};
pub use fd::{
    central_difference, finite_diff_check, kink_distance, random_case, run_gradcheck,
    run_gradcheck_with, FdOptions, FdReport, GradcheckCase, GradcheckOutcome,
};
pub use pipeline::{
    batch_forward, batch_objective, batch_objective_and_grad, model_backprop, BackpropPath,
    BatchEvaluation, BatchForward, ObjectiveSetup,
};
