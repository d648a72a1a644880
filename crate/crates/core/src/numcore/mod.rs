//! Dense `f64` tensors, a reverse-mode autodiff graph over a fixed set of
//! primitives, AdamW with StepLR, and the checkpoint container.

pub mod checkpoint;
mod graph;
pub mod init;
pub mod kernels;
mod optim;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use graph::{Gradients, Graph, Var};
pub use init::{init_params, inv_softplus, linear_weight, param_count, Init, ParamSpec};
pub use optim::{steplr, OptimConfig, OptimState, ParamStore};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) use graph::softplus;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op} at node {node}")]
    NonFinite { op: &'static str, node: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("missing input {0}")]
    MissingInput(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("graph intermediates were released for inference")]
    Released,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn identity_graph_forward() {
        let mut g = Graph::new();
        let x = g.input("x", Tensor::from_vec(vec![0.0; 3])).unwrap();
        g.set_output("y", x);
        let feeds: HashMap<_, _> = [("x".to_string(), Tensor::from_vec(vec![1.0, 2.0, 3.0]))].into();
        let out = g.forward(&feeds).unwrap();
        assert_eq!(out["y"].data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn silu_of_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.input("x", Tensor::from_vec(vec![0.0])).unwrap();
        let y = g.silu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0]);
    }

    #[test]
    fn matmul_of_ones() {
        let mut g = Graph::new();
        let a = g.input("a", Tensor::ones(&[2, 2])).unwrap();
        let b = g.input("b", Tensor::ones(&[2, 2])).unwrap();
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[2.0; 4]);
    }

    #[test]
    fn forward_requires_every_input() {
        let mut g = Graph::new();
        let x = g.input("x", Tensor::zeros(&[2])).unwrap();
        g.set_output("y", x);
        assert_eq!(g.forward(&HashMap::new()), Err(NumError::MissingInput("x".into())));
        let bad: HashMap<_, _> = [("x".to_string(), Tensor::zeros(&[3]))].into();
        assert!(matches!(g.forward(&bad), Err(NumError::ShapeMismatch { .. })));
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::full(&[2, 3], 0.3)).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.params["p"], Tensor::ones(&[2, 3]));
    }

    #[test]
    fn grad_of_square() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::from_vec(vec![3.0])).unwrap();
        let sq = g.mul(p, p).unwrap();
        let s = g.sum(sq).unwrap();
        assert_eq!(g.backward(s).unwrap().params["p"].data(), &[6.0]);
    }

    #[test]
    fn unused_param_gets_zero_grad() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::from_vec(vec![1.0])).unwrap();
        let _q = g.param("q", Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.params["q"], Tensor::zeros(&[2]));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::zeros(&[2])).unwrap();
        assert_eq!(g.backward(p).unwrap_err(), NumError::NonScalarLoss(vec![2]));
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::from_vec(vec![1000.0])).unwrap();
        assert!(matches!(g.exp(p), Err(NumError::NonFinite { op: "exp", .. })));
        assert!(g.input("nan", Tensor::from_vec(vec![f64::NAN])).is_err());
    }

    #[test]
    fn broadcast_add_grad_reduces() {
        let mut g = Graph::new();
        let x = g.input("x", Tensor::ones(&[3, 2])).unwrap();
        let b = g.param("b", Tensor::zeros(&[2])).unwrap();
        let y = g.add(x, b).unwrap();
        let s = g.sum(y).unwrap();
        assert_eq!(g.backward(s).unwrap().params["b"].data(), &[3.0, 3.0]);
    }
}
