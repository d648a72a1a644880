use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Tensor};

/// How a parameter tensor is initialised.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
    /// `ln(n + 1)` along the last axis (real S4D diagonal).
    LogRamp,
    /// `softplus⁻¹(dt)` with `dt` log-uniform in `[lo, hi]`.
    InvSoftplusLogUniform(f64, f64),
}

/// Declared parameter: the exact parameter count is the sum of the
/// element counts of a model's specs.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Linear layer weight `[fan_in][fan_out]` with the usual `1/sqrt(fan_in)` bound.
pub fn linear_weight(name: impl Into<String>, fan_in: usize, fan_out: usize) -> ParamSpec {
    ParamSpec::new(
        name,
        &[fan_in, fan_out],
        Init::Uniform(1.0 / (fan_in.max(1) as f64).sqrt()),
    )
}

pub fn param_count(specs: &[ParamSpec]) -> usize {
    specs.iter().map(ParamSpec::numel).sum()
}

/// Inverse of softplus for `y > 0`.
pub fn inv_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Deterministic initialisation: specs are filled in the order given.
pub fn init_params(specs: &[ParamSpec], seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for spec in specs {
        let n = spec.numel();
        let data: Vec<f64> = match spec.init {
            Init::Zeros => vec![0.0; n],
            Init::Const(v) => vec![v; n],
            Init::Uniform(b) => (0..n).map(|_| rng.gen_range(-b..=b)).collect(),
            Init::LogRamp => {
                let last = spec.shape.last().copied().unwrap_or(1).max(1);
                (0..n).map(|i| ((i % last) as f64 + 1.0).ln()).collect()
            }
            Init::InvSoftplusLogUniform(lo, hi) => (0..n)
                .map(|_| {
                    let dt = rng.gen_range(lo.ln()..=hi.ln()).exp();
                    inv_softplus(dt)
                })
                .collect(),
        };
        let t = Tensor::new(spec.shape.clone(), data).expect("spec shape");
        store.insert(spec.name.clone(), t);
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::softplus;

    #[test]
    fn inv_softplus_round_trips() {
        for y in [1e-3, 0.1, 1.0, 5.0] {
            assert!((softplus(inv_softplus(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn init_is_deterministic() {
        let specs = vec![linear_weight("w", 4, 3), ParamSpec::new("a", &[2, 3], Init::LogRamp)];
        assert_eq!(init_params(&specs, 5), init_params(&specs, 5));
        assert_ne!(init_params(&specs, 5)["w"], init_params(&specs, 6)["w"]);
        assert_eq!(init_params(&specs, 5)["a"].data()[..3], [0.0, 2f64.ln(), 3f64.ln()]);
        assert_eq!(param_count(&specs), 18);
    }
}
