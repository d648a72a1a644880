//! Discretisation, sequential and parallel scans, and the convolution-kernel
//! form of a time-invariant diagonal state-space model.
//!
//! Layouts are flat row-major: per-step per-channel quantities are `[len][d]`,
//! per-step per-channel per-state quantities are `[len][d][n]`, and the
//! output map `C` is shared across channels, `[len][n]`.

use rayon::prelude::*;

use super::SsmError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanShape {
    pub len: usize,
    pub channels: usize,
    pub state: usize,
}

impl ScanShape {
    fn lanes(&self) -> usize {
        self.channels * self.state
    }
}

/// Discrete transition and input injection, before an output map is attached.
#[derive(Clone, Debug, PartialEq)]
pub struct Discretized {
    pub shape: ScanShape,
    pub a_bar: Vec<f64>,
    pub bx: Vec<f64>,
}

impl Discretized {
    pub fn with_output(self, c: Vec<f64>) -> Result<ScanInputs, SsmError> {
        ScanInputs::new(self.shape, self.a_bar, self.bx, c)
    }
}

/// Everything a scan consumes: `h_t = a_bar_t ⊙ h_{t-1} + bx_t`, `y_t = ⟨c_t, h_t⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanInputs {
    shape: ScanShape,
    a_bar: Vec<f64>,
    bx: Vec<f64>,
    c: Vec<f64>,
}

impl ScanInputs {
    pub fn new(shape: ScanShape, a_bar: Vec<f64>, bx: Vec<f64>, c: Vec<f64>) -> Result<Self, SsmError> {
        let full = shape.len * shape.lanes();
        if a_bar.len() != full || bx.len() != full || c.len() != shape.len * shape.state {
            return Err(SsmError::Shape(format!(
                "{shape:?}: a_bar {}, bx {}, c {}",
                a_bar.len(),
                bx.len(),
                c.len()
            )));
        }
        Ok(Self { shape, a_bar, bx, c })
    }

    pub fn shape(&self) -> ScanShape {
        self.shape
    }

    pub fn a_bar(&self) -> &[f64] {
        &self.a_bar
    }

    pub fn bx(&self) -> &[f64] {
        &self.bx
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }
}

/// ZOH for the diagonal transition, Euler for the input matrix:
/// `a_bar = exp(Δ·A)`, `bx = Δ·B·x`.
///
/// `delta, x: [len][d]`, `a: [d][n]`, `b: [len][n]`.
pub fn discretize(shape: ScanShape, delta: &[f64], a: &[f64], b: &[f64], x: &[f64]) -> Result<Discretized, SsmError> {
    let ScanShape { len, channels, state } = shape;
    if delta.len() != len * channels
        || x.len() != len * channels
        || a.len() != channels * state
        || b.len() != len * state
    {
        return Err(SsmError::Shape(format!("discretize inputs do not match {shape:?}")));
    }
    if let Some(i) = delta.iter().position(|&d| d.is_nan() || d <= 0.0) {
        return Err(SsmError::NonPositiveDelta {
            index: i,
            value: delta[i],
        });
    }
    let mut a_bar = Vec::with_capacity(len * channels * state);
    let mut bx = Vec::with_capacity(len * channels * state);
    for t in 0..len {
        for d in 0..channels {
            let dt = delta[t * channels + d];
            let xi = x[t * channels + d];
            for n in 0..state {
                a_bar.push((dt * a[d * state + n]).exp());
                bx.push(dt * b[t * state + n] * xi);
            }
        }
    }
    Ok(Discretized { shape, a_bar, bx })
}

fn check_finite(y: &[f64]) -> Result<(), SsmError> {
    match y.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SsmError::NonFinite { index: i }),
        None => Ok(()),
    }
}

/// Reference recurrence with `h_0 = 0`; returns `y: [len][d]`.
pub fn scan_sequential(inp: &ScanInputs) -> Result<Vec<f64>, SsmError> {
    let ScanShape { len, channels, state } = inp.shape;
    let lanes = inp.shape.lanes();
    let mut h = vec![0.0; lanes];
    let mut y = vec![0.0; len * channels];
    for t in 0..len {
        let ct = &inp.c[t * state..(t + 1) * state];
        for d in 0..channels {
            let mut acc = 0.0;
            for (n, &c) in ct.iter().enumerate() {
                let i = d * state + n;
                let k = t * lanes + i;
                h[i] = inp.a_bar[k] * h[i] + inp.bx[k];
                acc += c * h[i];
            }
            y[t * channels + d] = acc;
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(SsmError::NonFinite { index: t });
        }
    }
    check_finite(&y)?;
    Ok(y)
}

/// Affine map `h ↦ a·h + b` composed left-to-right in time.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Affine {
    a: f64,
    b: f64,
}

impl Affine {
    const IDENTITY: Affine = Affine { a: 1.0, b: 0.0 };

    /// Apply `self` first, then `later`.
    fn then(self, later: Affine) -> Affine {
        Affine {
            a: later.a * self.a,
            b: later.a * self.b + later.b,
        }
    }
}

/// Work-efficient (up-sweep / down-sweep) inclusive scan of one lane.
fn blelloch_lane(elems: &[Affine]) -> Vec<f64> {
    let n = elems.len();
    let size = n.next_power_of_two();
    let mut tree = Vec::with_capacity(size);
    tree.extend_from_slice(elems);
    tree.resize(size, Affine::IDENTITY);
    let mut stride = 1;
    while stride < size {
        for i in (2 * stride - 1..size).step_by(2 * stride) {
            tree[i] = tree[i - stride].then(tree[i]);
        }
        stride *= 2;
    }
    tree[size - 1] = Affine::IDENTITY;
    while stride > 1 {
        stride /= 2;
        for i in (2 * stride - 1..size).step_by(2 * stride) {
            let left = tree[i - stride];
            tree[i - stride] = tree[i];
            tree[i] = tree[i].then(left);
        }
    }
    // tree now holds exclusive prefixes; h_t = (prefix ∘ elem_t) applied to 0.
    (0..n).map(|t| tree[t].then(elems[t]).b).collect()
}

/// Same contract as [`scan_sequential`], computed by an associative
/// balanced-tree scan over each `(channel, state)` lane.
pub fn scan_parallel(inp: &ScanInputs) -> Result<Vec<f64>, SsmError> {
    let ScanShape { len, channels, state } = inp.shape;
    let lanes = inp.shape.lanes();
    let states: Vec<Vec<f64>> = (0..lanes)
        .into_par_iter()
        .map(|lane| {
            let elems: Vec<Affine> = (0..len)
                .map(|t| Affine {
                    a: inp.a_bar[t * lanes + lane],
                    b: inp.bx[t * lanes + lane],
                })
                .collect();
            blelloch_lane(&elems)
        })
        .collect();
    let mut y = vec![0.0; len * channels];
    for t in 0..len {
        for d in 0..channels {
            let mut acc = 0.0;
            for n in 0..state {
                acc += inp.c[t * state + n] * states[d * state + n][t];
            }
            y[t * channels + d] = acc;
        }
    }
    check_finite(&y)?;
    Ok(y)
}

/// Convolution kernel of a time-invariant system,
/// `K_l[d] = Σ_n c[n]·a_bar[d][n]^l·b_bar[d][n]` for `l < len`; returns `[len][d]`.
pub fn ssm_kernel(a_bar: &[f64], b_bar: &[f64], c: &[f64], channels: usize, len: usize) -> Result<Vec<f64>, SsmError> {
    if len < 1 {
        return Err(SsmError::EmptyKernel);
    }
    let state = c.len();
    if a_bar.len() != channels * state || b_bar.len() != channels * state {
        return Err(SsmError::Shape(format!(
            "kernel: a_bar {}, b_bar {}, c {state}, channels {channels}",
            a_bar.len(),
            b_bar.len()
        )));
    }
    let mut k = vec![0.0; len * channels];
    let mut power: Vec<f64> = b_bar.to_vec();
    for l in 0..len {
        for d in 0..channels {
            let mut acc = 0.0;
            for n in 0..state {
                acc += c[n] * power[d * state + n];
            }
            k[l * channels + d] = acc;
        }
        for (p, a) in power.iter_mut().zip(a_bar) {
            *p *= a;
        }
    }
    Ok(k)
}

/// Per-channel causal convolution `y_t = Σ_{j≤t} K_j·x_{t-j}`; `x, kernel: [len][d]`.
pub fn causal_convolve(x: &[f64], kernel: &[f64], channels: usize) -> Vec<f64> {
    let len = x.len() / channels.max(1);
    let klen = kernel.len() / channels.max(1);
    let mut y = vec![0.0; x.len()];
    for t in 0..len {
        for j in 0..=t.min(klen.saturating_sub(1)) {
            for d in 0..channels {
                y[t * channels + d] += kernel[j * channels + d] * x[(t - j) * channels + d];
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(len: usize, channels: usize, state: usize) -> ScanShape {
        ScanShape { len, channels, state }
    }

    #[test]
    fn discretize_examples() {
        let s = shape(1, 1, 1);
        let d = discretize(s, &[1.0], &[0.0], &[1.0], &[1.0]).unwrap();
        assert_eq!(d.a_bar, vec![1.0]);
        let d = discretize(s, &[2f64.ln()], &[-1.0], &[1.0], &[1.0]).unwrap();
        assert!((d.a_bar[0] - 0.5).abs() < 1e-15);
        let d = discretize(s, &[0.1], &[-1.0], &[2.0], &[3.0]).unwrap();
        assert!((d.bx[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn discretize_rejects_nonpositive_delta() {
        let s = shape(2, 1, 1);
        let err = discretize(s, &[0.1, 0.0], &[-1.0], &[1.0, 1.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, SsmError::NonPositiveDelta { index: 1, .. }));
    }

    #[test]
    fn length_one_has_no_recurrence() {
        let inp = ScanInputs::new(
            shape(1, 2, 2),
            vec![0.3, 0.4, 0.5, 0.6],
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0.5, -1.0],
        )
        .unwrap();
        let y = scan_sequential(&inp).unwrap();
        assert_eq!(y, vec![0.5 - 2.0, 1.5 - 4.0]);
        assert_eq!(scan_parallel(&inp).unwrap(), y);
    }

    #[test]
    fn memoryless_when_transition_is_zero() {
        let len = 5;
        let bx: Vec<f64> = (0..len).map(|t| t as f64 + 1.0).collect();
        let inp = ScanInputs::new(shape(len, 1, 1), vec![0.0; len], bx.clone(), vec![2.0; len]).unwrap();
        let y = scan_sequential(&inp).unwrap();
        assert_eq!(y, bx.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
    }

    #[test]
    fn cumulative_sum_case() {
        let len = 9;
        let inp = ScanInputs::new(shape(len, 1, 2), vec![1.0; 2 * len], vec![1.0; 2 * len], {
            let mut c = vec![0.0; 2 * len];
            for t in 0..len {
                c[t * 2] = 1.0;
            }
            c
        })
        .unwrap();
        let expected: Vec<f64> = (1..=len).map(|t| t as f64).collect();
        assert_eq!(scan_sequential(&inp).unwrap(), expected);
        assert_eq!(scan_parallel(&inp).unwrap(), expected);
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(ssm_kernel(&[0.9], &[2.0], &[3.0], 1, 1).unwrap(), vec![6.0]);
        assert_eq!(ssm_kernel(&[0.5], &[1.0], &[1.0], 1, 3).unwrap(), vec![1.0, 0.5, 0.25]);
        assert_eq!(ssm_kernel(&[0.5], &[1.0], &[1.0], 1, 0), Err(SsmError::EmptyKernel));
    }

    #[test]
    fn bounded_state_over_long_sequence() {
        // A < 0, Δ > 0, bounded input: |h| ≤ max|B̃x| / (1 - max ã)
        let len = 100_000;
        let s = shape(len, 1, 2);
        let delta: Vec<f64> = (0..len).map(|t| 0.01 + 0.5 * ((t as f64) * 0.37).sin().abs()).collect();
        let x: Vec<f64> = (0..len).map(|t| ((t as f64) * 0.11).cos()).collect();
        let b = vec![1.0; 2 * len];
        let d = discretize(s, &delta, &[-0.5, -2.0], &b, &x).unwrap();
        let inp = d.with_output(vec![1.0; 2 * len]).unwrap();
        let y = scan_sequential(&inp).unwrap();
        let bound = 2.0 * 0.51 / (1.0 - (-0.01f64 * 0.5).exp());
        assert!(y.iter().all(|v| v.abs() <= bound));
    }
}
