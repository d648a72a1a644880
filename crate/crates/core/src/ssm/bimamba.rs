use serde::{Deserialize, Serialize};

use crate::numcore::{linear_weight as lin, Graph, Init, NumError, ParamSpec, ParamStore, Tensor, Var};

/// Geometry of one bidirectional selective-SSM layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiMambaConfig {
    /// Model width (channels entering and leaving the layer).
    pub width: usize,
    pub expand: usize,
    pub d_state: usize,
    /// Depthwise causal convolution width.
    pub conv_kernel: usize,
    /// Rank of the low-rank step-size projection.
    pub dt_rank: usize,
}

impl BiMambaConfig {
    pub fn new(width: usize, expand: usize, d_state: usize) -> Self {
        Self {
            width,
            expand,
            d_state,
            conv_kernel: 4,
            dt_rank: width.div_ceil(16).max(1),
        }
    }

    pub fn inner(&self) -> usize {
        self.expand * self.width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Reverse => "rev",
        }
    }
}

/// A BiMamba layer bound to a parameter-name prefix.
///
/// Input and gate projections and the output projection are shared; each
/// direction owns its causal convolution and selective SSM. With `tied`
/// set, the reverse direction reuses the forward direction's parameters.
#[derive(Clone, Debug)]
pub struct BiMamba {
    pub prefix: String,
    pub config: BiMambaConfig,
    pub tied: bool,
}

impl BiMamba {
    pub fn new(prefix: impl Into<String>, config: BiMambaConfig) -> Self {
        Self {
            prefix: prefix.into(),
            config,
            tied: false,
        }
    }

    fn name(&self, s: &str) -> String {
        format!("{}.{s}", self.prefix)
    }

    fn branch_name(&self, dir: Direction, s: &str) -> String {
        let tag = if self.tied { "fwd" } else { dir.tag() };
        format!("{}.{tag}.{s}", self.prefix)
    }

    fn branch_specs(&self, dir: Direction) -> Vec<ParamSpec> {
        let c = self.config;
        let e = c.inner();
        let n = |s: &str| self.branch_name(dir, s);
        vec![
            ParamSpec::new(
                n("conv.w"),
                &[e, c.conv_kernel],
                Init::Uniform(1.0 / (c.conv_kernel as f64).sqrt()),
            ),
            ParamSpec::new(n("conv.b"), &[e], Init::Zeros),
            lin(n("dt_down.w"), e, c.dt_rank),
            lin(n("dt_up.w"), c.dt_rank, e),
            ParamSpec::new(n("dt_up.b"), &[e], Init::InvSoftplusLogUniform(1e-3, 1e-1)),
            lin(n("b_proj.w"), e, c.d_state),
            ParamSpec::new(n("b_proj.b"), &[c.d_state], Init::Zeros),
            lin(n("c_proj.w"), e, c.d_state),
            ParamSpec::new(n("c_proj.b"), &[c.d_state], Init::Zeros),
            ParamSpec::new(n("log_a"), &[e, c.d_state], Init::LogRamp),
        ]
    }

    /// Every parameter of the layer, in initialisation order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let c = self.config;
        let e = c.inner();
        let mut specs = vec![
            lin(self.name("in_proj.w"), c.width, e),
            ParamSpec::new(self.name("in_proj.b"), &[e], Init::Zeros),
            lin(self.name("gate_proj.w"), c.width, e),
            ParamSpec::new(self.name("gate_proj.b"), &[e], Init::Zeros),
            lin(self.name("out_proj.w"), e, c.width),
            ParamSpec::new(self.name("out_proj.b"), &[c.width], Init::Zeros),
        ];
        specs.extend(self.branch_specs(Direction::Forward));
        if !self.tied {
            specs.extend(self.branch_specs(Direction::Reverse));
        }
        specs
    }

    fn linear(&self, g: &mut Graph, p: &ParamStore, x: Var, w: &str, b: &str) -> Result<Var, NumError> {
        let w = g.bind(p, w)?;
        let b = g.bind(p, b)?;
        let y = g.matmul(x, w)?;
        g.add(y, b)
    }

    /// Step size, input map and output map of one direction:
    /// `Δ = softplus(up(down(v)) + bias)`, `B = v·W_B + b_B`, `C = v·W_C + b_C`.
    pub fn selective_params(
        &self,
        g: &mut Graph,
        p: &ParamStore,
        dir: Direction,
        v: Var,
    ) -> Result<(Var, Var, Var), NumError> {
        let n = |s: &str| self.branch_name(dir, s);
        let down = g.bind(p, &n("dt_down.w"))?;
        let low = g.matmul(v, down)?;
        let pre = self.linear(g, p, low, &n("dt_up.w"), &n("dt_up.b"))?;
        let delta = g.softplus(pre)?;
        let bm = self.linear(g, p, v, &n("b_proj.w"), &n("b_proj.b"))?;
        let cm = self.linear(g, p, v, &n("c_proj.w"), &n("c_proj.b"))?;
        Ok((delta, bm, cm))
    }

    /// Causal conv → SiLU → selective SSM over `u: [batch][len][inner]`.
    fn branch(&self, g: &mut Graph, p: &ParamStore, dir: Direction, u: Var) -> Result<Var, NumError> {
        let n = |s: &str| self.branch_name(dir, s);
        let cw = g.bind(p, &n("conv.w"))?;
        let cb = g.bind(p, &n("conv.b"))?;
        let conv = g.conv_causal(u, cw)?;
        let conv = g.add(conv, cb)?;
        let v = g.silu(conv)?;
        let (delta, bm, cm) = self.selective_params(g, p, dir, v)?;
        let log_a = g.bind(p, &n("log_a"))?;
        let a = g.exp(log_a)?;
        let a = g.scale(a, -1.0)?;
        g.selective_scan(v, delta, a, bm, cm)
    }

    /// `x: [batch][len][width]` → same shape; each batch row is an
    /// independent sequence.
    ///
    /// ```text
    /// u = in_proj(x), gate = SiLU(gate_proj(x))
    /// y = ½(branch_fwd(u) + reverse(branch_rev(reverse(u))))
    /// out = x + out_proj(y ⊙ gate)
    /// ```
    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var, NumError> {
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 3 || shape[2] != self.config.width || shape[1] == 0 {
            return Err(NumError::ShapeMismatch {
                op: "bimamba",
                detail: format!("expected [batch][len>=1][{}], got {shape:?}", self.config.width),
            });
        }
        let u = self.linear(g, p, x, &self.name("in_proj.w"), &self.name("in_proj.b"))?;
        let gate = self.linear(g, p, x, &self.name("gate_proj.w"), &self.name("gate_proj.b"))?;
        let gate = g.silu(gate)?;
        let yf = self.branch(g, p, Direction::Forward, u)?;
        let ur = g.reverse_seq(u)?;
        let yr = self.branch(g, p, Direction::Reverse, ur)?;
        let yr = g.reverse_seq(yr)?;
        let sum = g.add(yf, yr)?;
        let avg = g.scale(sum, 0.5)?;
        let z = g.mul(avg, gate)?;
        let o = self.linear(g, p, z, &self.name("out_proj.w"), &self.name("out_proj.b"))?;
        g.add(x, o)
    }
}

/// Convenience: run one layer on a plain tensor `[batch][len][width]`.
pub fn bimamba_forward(layer: &BiMamba, params: &ParamStore, x: &Tensor) -> Result<Tensor, NumError> {
    let mut g = Graph::new();
    let xv = g.input("x", x.clone())?;
    let y = layer.forward(&mut g, params, xv)?;
    Ok(g.value(y).clone())
}
