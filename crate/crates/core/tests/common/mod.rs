//! Shared helpers for integration tests: central finite-difference oracle
//! and seeded random tensors.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfbimamba::numcore::{Graph, Tensor, Var};

pub const FD_EPS: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_FLOOR: f64 = 1e-8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

#[derive(Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    pub worst_rel: f64,
    pub failures: Vec<String>,
}

impl FdReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }

    pub fn merge(&mut self, label: String, other: FdReport) {
        self.checked += other.checked;
        self.worst_rel = self.worst_rel.max(other.worst_rel);
        self.failures
            .extend(other.failures.into_iter().map(|f| format!("{label}: {f}")));
    }
}

/// Compares `backward(loss)` for every parameter leaf against central
/// differences of the replayed forward pass. `inputs` must feed every
/// input leaf; at most `max_per_param` evenly spaced elements are probed
/// per parameter.
pub fn fd_check(g: &mut Graph, loss: Var, inputs: &HashMap<String, Tensor>, max_per_param: usize) -> FdReport {
    g.set_output("__loss", loss);
    g.forward(inputs).expect("base forward");
    let grads = g.backward(loss).expect("backward");
    let mut report = FdReport::default();
    let names: Vec<String> = g.param_names().iter().map(|s| s.to_string()).collect();
    let mut base_feeds = inputs.clone();
    for name in &names {
        base_feeds.insert(name.clone(), param_value(g, name));
    }
    let mut seen = std::collections::BTreeSet::new();
    for name in names {
        if !seen.insert(name.clone()) {
            continue;
        }
        let analytic = &grads.params[&name];
        let base = param_value(g, &name);
        let n = base.numel();
        let stride = (n / max_per_param.max(1)).max(1);
        for i in (0..n).step_by(stride) {
            let eval = |g: &mut Graph, delta: f64| {
                let mut t = base.clone();
                t.data_mut()[i] += delta;
                let mut feeds = base_feeds.clone();
                feeds.insert(name.clone(), t);
                g.forward(&feeds).expect("perturbed forward")["__loss"].item()
            };
            let plus = eval(g, FD_EPS);
            let minus = eval(g, -FD_EPS);
            let numeric = (plus - minus) / (2.0 * FD_EPS);
            let a = analytic.data()[i];
            let err = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            let rel = if scale > 0.0 { err / scale } else { 0.0 };
            report.checked += 1;
            // Below this magnitude the absolute floor is the binding rule.
            if scale >= FD_ABS_FLOOR / FD_REL_TOL {
                report.worst_rel = report.worst_rel.max(rel);
            }
            if err > FD_ABS_FLOOR && rel > FD_REL_TOL {
                report.failures.push(format!(
                    "{name}[{i}]: analytic {a:.10e} numeric {numeric:.10e} rel {rel:.2e}"
                ));
            }
        }
    }
    g.forward(&base_feeds).expect("restore forward");
    report
}

fn param_value(g: &Graph, name: &str) -> Tensor {
    g.param_value(name).expect("known parameter").clone()
}

pub mod gradcases;
pub mod oracles;
