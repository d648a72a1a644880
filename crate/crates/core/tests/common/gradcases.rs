//! Finite-difference cases for every graph primitive, a bidirectional layer
//! and a tiny full network.

use std::collections::HashMap;

use tfbimamba::net::{encode_target, NetConfig, TfMamba};
use tfbimamba::numcore::{init_params, Graph, Tensor, Var};
use tfbimamba::ssm::{BiMamba, BiMambaConfig};

use super::{fd_check, random_tensor, FdReport};

type Case = (&'static str, fn() -> FdReport);

pub const PRIMITIVES: &[Case] = &[
    ("matmul", matmul),
    ("elementwise", elementwise_binary_with_broadcast),
    ("unary", unary_nonlinearities),
    ("softplus_saturation", softplus_saturated_regions),
    ("pool_layout", pooling_and_layout),
    ("conv_same", conv_same_dilated),
    ("conv_causal", conv_causal_depthwise),
    ("selective_scan", selective_scan_all_inputs),
    ("bimamba", bimamba_layer_end_to_end),
];

/// `Σ y ⊙ R` with a fixed random `R`, so no gradient cancels by symmetry.
fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Var {
    let r = random_tensor(g.value(y).shape(), -1.0, 1.0, seed);
    let r = g.constant(r).unwrap();
    let p = g.mul(y, r).unwrap();
    g.sum(p).unwrap()
}

fn check(g: &mut Graph, y: Var) -> FdReport {
    let loss = weighted_sum(g, y, 999);
    fd_check(g, loss, &HashMap::new(), 64)
}

fn param(g: &mut Graph, name: &str, shape: &[usize], seed: u64) -> Var {
    g.param(name, random_tensor(shape, -1.0, 1.0, seed)).unwrap()
}

pub fn matmul() -> FdReport {
    let mut g = Graph::new();
    let a = param(&mut g, "a", &[2, 3, 4], 1);
    let b = param(&mut g, "b", &[4, 5], 2);
    let y = g.matmul(a, b).unwrap();
    check(&mut g, y)
}

pub fn elementwise_binary_with_broadcast() -> FdReport {
    let mut g = Graph::new();
    let a = param(&mut g, "a", &[3, 4], 1);
    let b = param(&mut g, "b", &[4], 2);
    let c = param(&mut g, "c", &[3, 4], 3);
    let s = g.add(a, b).unwrap();
    let d = g.sub(s, c).unwrap();
    let m = g.mul(d, b).unwrap();
    let y = g.mul(m, c).unwrap();
    check(&mut g, y)
}

pub fn unary_nonlinearities() -> FdReport {
    let mut g = Graph::new();
    let a = param(&mut g, "a", &[5, 3], 1);
    let s = g.silu(a).unwrap();
    let t = g.tanh(a).unwrap();
    let p = g.softplus(a).unwrap();
    let e = g.exp(a).unwrap();
    let k = g.scale(e, -0.7).unwrap();
    let y = g.concat_last(&[s, t, p, k]).unwrap();
    check(&mut g, y)
}

pub fn softplus_saturated_regions() -> FdReport {
    let mut g = Graph::new();
    let a = g
        .param("a", Tensor::from_vec(vec![-40.0, -31.0, -5.0, 0.0, 5.0, 31.0, 40.0]))
        .unwrap();
    let y = g.softplus(a).unwrap();
    check(&mut g, y)
}

pub fn pooling_and_layout() -> FdReport {
    let mut g = Graph::new();
    let a = param(&mut g, "a", &[9, 2, 3], 1);
    let p = g.mean_pool(a, 4).unwrap();
    let t = g.transpose01(p).unwrap();
    let r = g.reverse_seq(t).unwrap();
    let s = g.slice_last(r, 1, 2).unwrap();
    let f = g.reshape(s, &[2, 4]).unwrap();
    let z = g.mul(f, f).unwrap();
    check(&mut g, z)
}

pub fn conv_same_dilated() -> FdReport {
    let mut report = FdReport::default();
    for dilation in [1, 2, 3] {
        let mut g = Graph::new();
        let x = param(&mut g, "x", &[2, 7, 3], 1);
        let w = param(&mut g, "w", &[3, 3, 2], 2);
        let y = g.conv_same(x, w, dilation).unwrap();
        report.merge(format!("dilation {dilation}"), check(&mut g, y));
    }
    report
}

pub fn conv_causal_depthwise() -> FdReport {
    let mut g = Graph::new();
    let x = param(&mut g, "x", &[2, 6, 3], 1);
    let w = param(&mut g, "w", &[3, 4], 2);
    let y = g.conv_causal(x, w).unwrap();
    check(&mut g, y)
}

pub fn selective_scan_all_inputs() -> FdReport {
    let (b, l, d, n) = (2, 6, 3, 4);
    let mut g = Graph::new();
    let u = param(&mut g, "u", &[b, l, d], 1);
    let delta = g.param("delta", random_tensor(&[b, l, d], 0.05, 1.0, 2)).unwrap();
    let a = g.param("a", random_tensor(&[d, n], -2.0, -0.1, 3)).unwrap();
    let bm = param(&mut g, "b", &[b, l, n], 4);
    let cm = param(&mut g, "c", &[b, l, n], 5);
    let y = g.selective_scan(u, delta, a, bm, cm).unwrap();
    check(&mut g, y)
}

pub fn bimamba_layer_end_to_end() -> FdReport {
    let mut report = FdReport::default();
    for tied in [false, true] {
        let cfg = BiMambaConfig {
            width: 4,
            expand: 2,
            d_state: 3,
            conv_kernel: 3,
            dt_rank: 2,
        };
        let mut layer = BiMamba::new("blk", cfg);
        layer.tied = tied;
        let params = init_params(&layer.param_specs(), 7);
        let mut g = Graph::new();
        let x = g.input("x", random_tensor(&[2, 5, 4], -1.0, 1.0, 8)).unwrap();
        let y = layer.forward(&mut g, &params, x).unwrap();
        let loss = weighted_sum(&mut g, y, 9);
        let feeds: HashMap<_, _> = [("x".to_string(), g.value(x).clone())].into();
        report.merge(format!("tied={tied}"), fd_check(&mut g, loss, &feeds, 12));
    }
    report
}

pub fn tiny_network_end_to_end() -> FdReport {
    let cfg = NetConfig {
        model_width: 8,
        n_blocks: 2,
        expand_per_block: vec![1, 2],
        d_state: 4,
        n_bins: 16,
        ..NetConfig::default()
    };
    let model = TfMamba::new(cfg).unwrap();
    let params = model.init(21);
    let mut g = Graph::new();
    let x = g.input("x", random_tensor(&[12, 16, 4], -1.0, 1.0, 22)).unwrap();
    let pred = model.forward(&mut g, &params, x).unwrap();
    let az = [40.0, 95.5, 150.0];
    let target = encode_target(&az, &[true, false, true], 8.0, 25.0).unwrap();
    let loss = model.loss(&mut g, pred, &target, &[true, false, true]).unwrap();
    let feeds: HashMap<_, _> = [("x".to_string(), g.value(x).clone())].into();
    fd_check(&mut g, loss, &feeds, 6)
}
