//! Raw numeric loops behind the graph primitives. Everything here works on
//! flat row-major slices; shape checking happens in `graph`.

use rayon::prelude::*;

/// `c = a · b + beta · c` where `a` is `m×k` and `b` is `k×n`.
///
/// `a_t`/`b_t` select the transposed view of a stored `k×m` / `n×k` buffer.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c[..m * n].fill(0.0);
        } else {
            c[..m * n].iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe the row-major layouts
    // of the stated shapes and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Offset of tap `k` for a centred ("same") convolution.
fn same_offset(k: usize, taps: usize, dilation: usize) -> isize {
    (k as isize - ((taps - 1) / 2) as isize) * dilation as isize
}

fn valid_rows(len: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (len as isize - off).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

/// Centred dilated convolution along the sequence axis with full channel
/// mixing. `x: [b][len][cin]`, `w: [taps][cin][cout]` → `[b][len][cout]`.
#[allow(clippy::too_many_arguments)]
pub fn conv_same_forward(
    x: &[f64],
    w: &[f64],
    batch: usize,
    len: usize,
    cin: usize,
    cout: usize,
    taps: usize,
    dilation: usize,
) -> Vec<f64> {
    let mut y = vec![0.0; batch * len * cout];
    for k in 0..taps {
        let off = same_offset(k, taps, dilation);
        let (lo, hi) = valid_rows(len, off);
        if lo >= hi {
            continue;
        }
        let wk = &w[k * cin * cout..(k + 1) * cin * cout];
        for b in 0..batch {
            let xs = (b * len) as isize + lo as isize + off;
            let xs = &x[xs as usize * cin..];
            let ys = &mut y[(b * len + lo) * cout..(b * len + hi) * cout];
            gemm(hi - lo, cin, cout, xs, false, wk, false, 1.0, ys);
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn conv_same_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    batch: usize,
    len: usize,
    cin: usize,
    cout: usize,
    taps: usize,
    dilation: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    for k in 0..taps {
        let off = same_offset(k, taps, dilation);
        let (lo, hi) = valid_rows(len, off);
        if lo >= hi {
            continue;
        }
        let rows = hi - lo;
        let wk = &w[k * cin * cout..(k + 1) * cin * cout];
        for b in 0..batch {
            let xs = ((b * len) as isize + lo as isize + off) as usize;
            let dys = &dy[(b * len + lo) * cout..(b * len + hi) * cout];
            gemm(
                rows,
                cout,
                cin,
                dys,
                false,
                wk,
                true,
                1.0,
                &mut dx[xs * cin..(xs + rows) * cin],
            );
            gemm(
                cin,
                rows,
                cout,
                &x[xs * cin..(xs + rows) * cin],
                true,
                dys,
                false,
                1.0,
                &mut dw[k * cin * cout..(k + 1) * cin * cout],
            );
        }
    }
    (dx, dw)
}

/// Depthwise causal convolution. `x: [b][len][ch]`, `w: [ch][taps]`; output
/// step `t` sees inputs `t - taps + 1 ..= t`.
pub fn conv_causal_forward(x: &[f64], w: &[f64], batch: usize, len: usize, ch: usize, taps: usize) -> Vec<f64> {
    let mut y = vec![0.0; batch * len * ch];
    for b in 0..batch {
        for t in 0..len {
            let out = &mut y[(b * len + t) * ch..(b * len + t + 1) * ch];
            for k in 0..taps {
                let src = t as isize - (taps - 1 - k) as isize;
                if src < 0 {
                    continue;
                }
                let xin = &x[(b * len + src as usize) * ch..][..ch];
                for c in 0..ch {
                    out[c] += w[c * taps + k] * xin[c];
                }
            }
        }
    }
    y
}

pub fn conv_causal_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    batch: usize,
    len: usize,
    ch: usize,
    taps: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    for b in 0..batch {
        for t in 0..len {
            let g = &dy[(b * len + t) * ch..][..ch];
            for k in 0..taps {
                let src = t as isize - (taps - 1 - k) as isize;
                if src < 0 {
                    continue;
                }
                let row = (b * len + src as usize) * ch;
                for c in 0..ch {
                    dx[row + c] += w[c * taps + k] * g[c];
                    dw[c * taps + k] += x[row + c] * g[c];
                }
            }
        }
    }
    (dx, dw)
}

/// Shapes of one fused selective-scan call.
#[derive(Clone, Copy, Debug)]
pub struct ScanDims {
    pub batch: usize,
    pub len: usize,
    pub channels: usize,
    pub state: usize,
}

/// Selective scan with zero-order-hold transition and Euler input rule:
///
/// ```text
/// h_t[d][n] = exp(Δ_t[d]·A[d][n])·h_{t-1}[d][n] + Δ_t[d]·B_t[n]·u_t[d]
/// y_t[d]    = Σ_n C_t[n]·h_t[d][n]
/// ```
///
/// `u, delta: [b][len][d]`, `a: [d][n]`, `bm, cm: [b][len][n]`.
pub fn selective_scan_forward(u: &[f64], delta: &[f64], a: &[f64], bm: &[f64], cm: &[f64], dims: ScanDims) -> Vec<f64> {
    let ScanDims {
        len,
        channels: dc,
        state: ns,
        ..
    } = dims;
    let mut y = vec![0.0; dims.batch * len * dc];
    if y.is_empty() {
        return y;
    }
    y.par_chunks_mut(len * dc).enumerate().for_each(|(b, yb)| {
        let mut h = vec![0.0; dc * ns];
        for t in 0..len {
            let row = (b * len + t) * dc;
            let srow = (b * len + t) * ns;
            let bt = &bm[srow..srow + ns];
            let ct = &cm[srow..srow + ns];
            for d in 0..dc {
                let dt = delta[row + d];
                let dtu = dt * u[row + d];
                let hd = &mut h[d * ns..(d + 1) * ns];
                let ad = &a[d * ns..(d + 1) * ns];
                let mut acc = 0.0;
                for n in 0..ns {
                    let v = (dt * ad[n]).exp() * hd[n] + dtu * bt[n];
                    hd[n] = v;
                    acc += ct[n] * v;
                }
                yb[t * dc + d] = acc;
            }
        }
    });
    y
}

/// Gradients of [`selective_scan_forward`] with respect to
/// `(u, delta, a, bm, cm)`. States are recomputed per sequence.
pub fn selective_scan_backward(
    u: &[f64],
    delta: &[f64],
    a: &[f64],
    bm: &[f64],
    cm: &[f64],
    dy: &[f64],
    dims: ScanDims,
) -> [Vec<f64>; 5] {
    let ScanDims {
        batch,
        len,
        channels: dc,
        state: ns,
    } = dims;
    struct SeqGrad {
        du: Vec<f64>,
        ddelta: Vec<f64>,
        da: Vec<f64>,
        db: Vec<f64>,
        dc: Vec<f64>,
    }
    let per_seq: Vec<SeqGrad> = (0..batch)
        .into_par_iter()
        .map(|b| {
            let mut hs = vec![0.0; len * dc * ns];
            let mut abars = vec![0.0; len * dc * ns];
            let mut prev = vec![0.0; dc * ns];
            for t in 0..len {
                let row = (b * len + t) * dc;
                let srow = (b * len + t) * ns;
                let cur = &mut hs[t * dc * ns..(t + 1) * dc * ns];
                let ab = &mut abars[t * dc * ns..(t + 1) * dc * ns];
                for d in 0..dc {
                    let dt = delta[row + d];
                    let dtu = dt * u[row + d];
                    for n in 0..ns {
                        let i = d * ns + n;
                        ab[i] = (dt * a[i]).exp();
                        cur[i] = ab[i] * prev[i] + dtu * bm[srow + n];
                    }
                }
                prev.copy_from_slice(cur);
            }
            let mut g = SeqGrad {
                du: vec![0.0; len * dc],
                ddelta: vec![0.0; len * dc],
                da: vec![0.0; dc * ns],
                db: vec![0.0; len * ns],
                dc: vec![0.0; len * ns],
            };
            // dh carried from step t+1, already multiplied by its transition.
            let mut carry = vec![0.0; dc * ns];
            for t in (0..len).rev() {
                let row = (b * len + t) * dc;
                let srow = (b * len + t) * ns;
                let h_t = &hs[t * dc * ns..(t + 1) * dc * ns];
                for d in 0..dc {
                    let gy = dy[row + d];
                    let dt = delta[row + d];
                    let ud = u[row + d];
                    let mut g_dt = 0.0;
                    let mut g_u = 0.0;
                    for n in 0..ns {
                        let i = d * ns + n;
                        g.dc[t * ns + n] += gy * h_t[i];
                        let dh = gy * cm[srow + n] + carry[i];
                        let abar = abars[t * dc * ns + i];
                        let h_prev = if t > 0 { hs[(t - 1) * dc * ns + i] } else { 0.0 };
                        let g_abar = dh * h_prev;
                        g_dt += g_abar * abar * a[i] + dh * bm[srow + n] * ud;
                        g.da[i] += g_abar * abar * dt;
                        g.db[t * ns + n] += dh * dt * ud;
                        g_u += dh * dt * bm[srow + n];
                        carry[i] = dh * abar;
                    }
                    g.ddelta[t * dc + d] = g_dt;
                    g.du[t * dc + d] = g_u;
                }
            }
            g
        })
        .collect();
    let mut du = Vec::with_capacity(batch * len * dc);
    let mut ddelta = Vec::with_capacity(batch * len * dc);
    let mut da = vec![0.0; dc * ns];
    let mut db = Vec::with_capacity(batch * len * ns);
    let mut dcm = Vec::with_capacity(batch * len * ns);
    for g in per_seq {
        du.extend_from_slice(&g.du);
        ddelta.extend_from_slice(&g.ddelta);
        for (acc, v) in da.iter_mut().zip(&g.da) {
            *acc += v;
        }
        db.extend_from_slice(&g.db);
        dcm.extend_from_slice(&g.dc);
    }
    [du, ddelta, da, db, dcm]
}
