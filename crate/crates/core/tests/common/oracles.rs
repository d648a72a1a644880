//! Randomised equivalence checks shared by the unit-style suites and the
//! acceptance run.

use rand::Rng;
use tfbimamba::ssm::{causal_convolve, discretize, scan_parallel, scan_sequential, ssm_kernel, ScanInputs, ScanShape};

use super::rng;

/// `‖a − b‖∞ / ‖b‖∞`, or the absolute error when `b` is all zeros.
pub fn normwise_rel(a: &[f64], b: &[f64]) -> f64 {
    let err = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

pub fn random_scan(seed: u64, len: usize) -> ScanInputs {
    let mut r = rng(seed);
    let shape = ScanShape {
        len,
        channels: r.gen_range(1..=4),
        state: r.gen_range(1..=8),
    };
    let lanes = len * shape.channels * shape.state;
    let a_bar = (0..lanes).map(|_| r.gen_range(0.0..1.0)).collect();
    let bx = (0..lanes).map(|_| r.gen_range(-1.0..1.0)).collect();
    let c = (0..len * shape.state).map(|_| r.gen_range(-1.0..1.0)).collect();
    ScanInputs::new(shape, a_bar, bx, c).unwrap()
}

/// Worst normwise relative error of the tree scan against the sequential
/// recurrence over `instances` random problems cycling through `lens`.
pub fn scan_equivalence(instances: usize, lens: &[usize], seed: u64) -> f64 {
    (0..instances)
        .map(|i| {
            let inp = random_scan(seed + i as u64, lens[i % lens.len()]);
            normwise_rel(&scan_parallel(&inp).unwrap(), &scan_sequential(&inp).unwrap())
        })
        .fold(0.0, f64::max)
}

/// Worst normwise relative error between the time-invariant scan and the
/// causal convolution with its kernel over `systems` random systems.
pub fn kernel_form(systems: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..systems {
        let mut r = rng(seed + s as u64);
        let shape = ScanShape {
            len: r.gen_range(1..=300),
            channels: r.gen_range(1..=4),
            state: r.gen_range(1..=8),
        };
        let (len, d, n) = (shape.len, shape.channels, shape.state);
        let dt: Vec<f64> = (0..d).map(|_| r.gen_range(0.01..1.0)).collect();
        let a: Vec<f64> = (0..d * n).map(|_| -r.gen_range(0.05..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..len * d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let delta: Vec<f64> = (0..len).flat_map(|_| dt.clone()).collect();
        let b_t: Vec<f64> = (0..len).flat_map(|_| b.clone()).collect();
        let c_t: Vec<f64> = (0..len).flat_map(|_| c.clone()).collect();
        let disc = discretize(shape, &delta, &a, &b_t, &x).unwrap();
        let y_scan = scan_sequential(&disc.with_output(c_t).unwrap()).unwrap();
        let a_bar: Vec<f64> = (0..d * n).map(|i| (dt[i / n] * a[i]).exp()).collect();
        let b_bar: Vec<f64> = (0..d * n).map(|i| dt[i / n] * b[i % n]).collect();
        let k = ssm_kernel(&a_bar, &b_bar, &c, d, len).unwrap();
        let y_conv = causal_convolve(&x, &k, d);
        worst = worst.max(normwise_rel(&y_conv, &y_scan));
    }
    worst
}
