//! Block-autoregressive monotone network.
//!
//! Every layer is an affine map whose weight matrix is split into `dims x dims`
//! blocks, with only the lower-triangular blocks present. Diagonal blocks are
//! stored as logs and exponentiated on use, so the end-to-end Jacobian is
//! lower triangular with a strictly positive diagonal. Hidden layers are
//! followed by `asinh`.
//!
//! For each output dimension the log of its diagonal Jacobian block is carried
//! through the layers (a `block_out x 1` column per dimension) using
//! log-sum-exp, which keeps the log-determinant finite even where the
//! activation derivative underflows in linear space.

/// Shape of a flow network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowArch {
    pub dims: usize,
    pub layers: usize,
    /// Hidden units per input dimension.
    pub hidden: usize,
}

impl FlowArch {
    #[inline]
    pub fn block_in(&self, layer: usize) -> usize {
        if layer == 0 {
            1
        } else {
            self.hidden
        }
    }

    #[inline]
    pub fn block_out(&self, layer: usize) -> usize {
        if layer + 1 == self.layers {
            1
        } else {
            self.hidden
        }
    }

    fn triangle(&self) -> usize {
        self.dims * (self.dims + 1) / 2
    }

    /// `sum_l d(d+1)/2 * in_l * out_l`.
    pub fn weight_count(&self) -> usize {
        (0..self.layers)
            .map(|l| self.triangle() * self.block_in(l) * self.block_out(l))
            .sum()
    }

    /// `sum_l d * out_l`.
    pub fn bias_count(&self) -> usize {
        (0..self.layers).map(|l| self.dims * self.block_out(l)).sum()
    }

    fn max_width(&self) -> usize {
        self.dims * self.hidden.max(1)
    }

    fn weight_offset(&self, layer: usize) -> usize {
        (0..layer)
            .map(|l| self.triangle() * self.block_in(l) * self.block_out(l))
            .sum()
    }

    fn bias_offset(&self, layer: usize) -> usize {
        (0..layer).map(|l| self.dims * self.block_out(l)).sum()
    }
}

/// `asinh` through `ln_1p`, which avoids the `hypot` in the std version.
#[inline]
fn activate(y: f64) -> f64 {
    let a = y.abs();
    let r = if a > 1e150 {
        a.ln() + std::f64::consts::LN_2
    } else {
        let a2 = a * a;
        (a + a2 / (1.0 + (1.0 + a2).sqrt())).ln_1p()
    };
    r.copysign(y)
}

/// `log(d asinh(y) / dy) = -log(sqrt(1 + y^2))`.
#[inline]
fn log_activation_slope(y: f64) -> f64 {
    -(1.0f64).hypot(y).ln()
}

#[inline]
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Network parameters: weights (lower-triangular blocks, layer by layer,
/// block rows then block columns, each block row-major) and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNet {
    pub arch: FlowArch,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Per-layer activations saved by the forward pass for backpropagation.
struct LayerTape {
    input: Vec<f64>,
    pre: Vec<f64>,
    log_diag_in: Vec<f64>,
    log_diag_mid: Vec<f64>,
}

impl FlowNet {
    pub fn zeros(arch: FlowArch) -> Self {
        Self {
            arch,
            weights: vec![0.0; arch.weight_count()],
            biases: vec![0.0; arch.bias_count()],
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.arch.dims >= 1
            && self.arch.layers >= 1
            && self.arch.hidden >= 1
            && self.weights.len() == self.arch.weight_count()
            && self.biases.len() == self.arch.bias_count()
    }

    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn weight_index(&self, base: usize, a: usize, b: usize, i: usize, j: usize, o: usize, k: usize) -> usize {
        base + (i * (i + 1) / 2 + j) * a * b + o * a + k
    }

    /// Weights with the diagonal blocks exponentiated.
    fn effective_weights(&self) -> Vec<f64> {
        let arch = self.arch;
        let mut m = self.weights.clone();
        for l in 0..arch.layers {
            let (a, b) = (arch.block_in(l), arch.block_out(l));
            let wbase = arch.weight_offset(l);
            for i in 0..arch.dims {
                let block = wbase + (i * (i + 1) / 2 + i) * a * b;
                for w in &mut m[block..block + a * b] {
                    *w = w.exp();
                }
            }
        }
        m
    }

    /// Affine part of one layer, `pre = M x + c`, over effective weights `m`.
    #[inline]
    fn affine(&self, m: &[f64], layer: usize, input: &[f64], pre: &mut [f64]) {
        let arch = self.arch;
        let (a, b) = (arch.block_in(layer), arch.block_out(layer));
        let wbase = arch.weight_offset(layer);
        let bbase = arch.bias_offset(layer);
        let d = arch.dims;
        pre[..d * b].copy_from_slice(&self.biases[bbase..bbase + d * b]);
        for i in 0..d {
            for j in 0..=i {
                let block = wbase + (i * (i + 1) / 2 + j) * a * b;
                let xs = &input[j * a..(j + 1) * a];
                for o in 0..b {
                    // term-by-term, in the same order as `Plan`
                    let row = &m[block + o * a..block + (o + 1) * a];
                    for (w, x) in row.iter().zip(xs) {
                        pre[i * b + o] += w * x;
                    }
                }
            }
        }
    }

    /// Transforms one vector, returning the log-determinant. `z` receives
    /// the output.
    pub fn forward_one(&self, x: &[f64], z: &mut [f64]) -> f64 {
        let mut scratch = Scratch::new(self);
        self.forward_with(x, z, &mut scratch, true)
    }

    /// Transforms a contiguous batch of `dims`-vectors into `out`, with no
    /// log-determinant bookkeeping. The network is compiled into a flat plan
    /// once per call; per-item arithmetic does not depend on the batch
    /// boundaries.
    pub fn forward_batch(&self, xs: &[f64], out: &mut [f64]) {
        let d = self.arch.dims;
        debug_assert_eq!(xs.len(), out.len());
        let plan = Plan::compile(self);
        let mut cur = vec![0.0; plan.width];
        let mut next = vec![0.0; plan.width];
        for (x, z) in xs.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            cur[..d].copy_from_slice(x);
            for layer in &plan.layers {
                for (dst, row) in next.iter_mut().zip(&layer.rows) {
                    let terms = &plan.terms[row.start..row.end];
                    let mut acc = row.bias;
                    for &(src, w) in terms {
                        acc += w * cur[src];
                    }
                    *dst = if layer.hidden { activate(acc) } else { acc };
                }
                std::mem::swap(&mut cur, &mut next);
            }
            z.copy_from_slice(&cur[..d]);
        }
    }

    fn forward_with(&self, x: &[f64], z: &mut [f64], s: &mut Scratch, track: bool) -> f64 {
        let arch = self.arch;
        let d = arch.dims;
        s.cur[..d].copy_from_slice(x);
        if track {
            s.log_cur[..d].fill(0.0);
        }
        for l in 0..arch.layers {
            let (a, b) = (arch.block_in(l), arch.block_out(l));
            self.affine(&s.m, l, &s.cur, &mut s.next);
            if track {
                let wbase = arch.weight_offset(l);
                for i in 0..d {
                    for o in 0..b {
                        let terms = (0..a).map(|k| {
                            self.weights[self.weight_index(wbase, a, b, i, i, o, k)] + s.log_cur[i * a + k]
                        });
                        s.log_next[i * b + o] = log_sum_exp(terms);
                    }
                }
            }
            let hidden = l + 1 < arch.layers;
            for idx in 0..d * b {
                let y = s.next[idx];
                if hidden {
                    s.next[idx] = activate(y);
                    if track {
                        s.log_next[idx] += log_activation_slope(y);
                    }
                }
            }
            std::mem::swap(&mut s.cur, &mut s.next);
            if track {
                std::mem::swap(&mut s.log_cur, &mut s.log_next);
            }
        }
        z.copy_from_slice(&s.cur[..d]);
        if track {
            s.log_cur[..d].iter().sum()
        } else {
            0.0
        }
    }

    /// Forward pass that records every layer for [`backward`](Self::backward).
    fn forward_taped(&self, x: &[f64]) -> (Vec<f64>, f64, Vec<LayerTape>) {
        let arch = self.arch;
        let d = arch.dims;
        let mut cur = x.to_vec();
        let mut log_cur = vec![0.0; d];
        let m = self.effective_weights();
        let mut tape = Vec::with_capacity(arch.layers);
        for l in 0..arch.layers {
            let (a, b) = (arch.block_in(l), arch.block_out(l));
            let wbase = arch.weight_offset(l);
            let mut pre = vec![0.0; d * b];
            self.affine(&m, l, &cur, &mut pre);
            let mut log_mid = vec![0.0; d * b];
            for i in 0..d {
                for o in 0..b {
                    let terms = (0..a)
                        .map(|k| self.weights[self.weight_index(wbase, a, b, i, i, o, k)] + log_cur[i * a + k]);
                    log_mid[i * b + o] = log_sum_exp(terms);
                }
            }
            let (next, log_next) = if l + 1 < arch.layers {
                (
                    pre.iter().map(|&y| activate(y)).collect(),
                    log_mid.iter().zip(&pre).map(|(g, &y)| g + log_activation_slope(y)).collect(),
                )
            } else {
                (pre.clone(), log_mid.clone())
            };
            tape.push(LayerTape {
                input: std::mem::replace(&mut cur, next),
                pre,
                log_diag_in: std::mem::replace(&mut log_cur, log_next),
                log_diag_mid: log_mid,
            });
        }
        let logdet = log_cur.iter().sum();
        (cur, logdet, tape)
    }

    /// Per-sample log-likelihood under an isotropic normal latent with
    /// standard deviation `sigma`.
    pub fn log_likelihood_one(&self, x: &[f64], sigma: f64) -> f64 {
        let mut z = vec![0.0; self.arch.dims];
        let logdet = self.forward_one(x, &mut z);
        gaussian_log_density(&z, sigma) + logdet
    }

    /// Adds the gradient of the per-sample log-likelihood into `grad_w` and
    /// `grad_b`, returning the log-likelihood itself.
    pub fn backward(&self, x: &[f64], sigma: f64, grad_w: &mut [f64], grad_b: &mut [f64]) -> f64 {
        let arch = self.arch;
        let d = arch.dims;
        let (z, logdet, tape) = self.forward_taped(x);
        let value = gaussian_log_density(&z, sigma) + logdet;

        let inv_var = 1.0 / (sigma * sigma);
        let mut g_out: Vec<f64> = z.iter().map(|v| -v * inv_var).collect();
        let mut g_log: Vec<f64> = vec![1.0; d];

        for l in (0..arch.layers).rev() {
            let t = &tape[l];
            let (a, b) = (arch.block_in(l), arch.block_out(l));
            let wbase = arch.weight_offset(l);
            let bbase = arch.bias_offset(l);
            let hidden = l + 1 < arch.layers;

            let mut g_pre = vec![0.0; d * b];
            for idx in 0..d * b {
                if hidden {
                    let y = t.pre[idx];
                    let one_plus = 1.0 + y * y;
                    g_pre[idx] = g_out[idx] / one_plus.sqrt() - g_log[idx] * y / one_plus;
                } else {
                    g_pre[idx] = g_out[idx];
                }
            }
            let g_mid = &g_log;

            for (gb, gp) in grad_b[bbase..bbase + d * b].iter_mut().zip(&g_pre) {
                *gb += gp;
            }

            let mut g_in = vec![0.0; d * a];
            let mut g_log_in = vec![0.0; d * a];
            for i in 0..d {
                for j in 0..=i {
                    for o in 0..b {
                        let gy = g_pre[i * b + o];
                        for k in 0..a {
                            let wi = self.weight_index(wbase, a, b, i, j, o, k);
                            let w = self.weights[wi];
                            let xin = t.input[j * a + k];
                            if i == j {
                                let m = w.exp();
                                g_in[j * a + k] += gy * m;
                                let p = (w + t.log_diag_in[i * a + k] - t.log_diag_mid[i * b + o]).exp();
                                let gl = g_mid[i * b + o] * p;
                                grad_w[wi] += gy * xin * m + gl;
                                g_log_in[i * a + k] += gl;
                            } else {
                                g_in[j * a + k] += gy * w;
                                grad_w[wi] += gy * xin;
                            }
                        }
                    }
                }
            }
            g_out = g_in;
            g_log = g_log_in;
        }
        value
    }
}

/// `sum_k log N(z_k; 0, sigma^2)`.
#[inline]
pub fn gaussian_log_density(z: &[f64], sigma: f64) -> f64 {
    let norm = sigma.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
    let inv = 1.0 / (2.0 * sigma * sigma);
    z.iter().map(|v| -v * v * inv - norm).sum()
}

/// One output unit: bias plus a dot product over `terms[start..end]`.
struct PlanRow {
    bias: f64,
    start: usize,
    end: usize,
}

struct PlanLayer {
    rows: Vec<PlanRow>,
    hidden: bool,
}

/// Inference form of a network: every unit as a list of `(input, weight)`
/// pairs with diagonal blocks already exponentiated.
struct Plan {
    layers: Vec<PlanLayer>,
    terms: Vec<(usize, f64)>,
    width: usize,
}

impl Plan {
    fn compile(net: &FlowNet) -> Self {
        let arch = net.arch;
        let d = arch.dims;
        let m = net.effective_weights();
        let mut terms = Vec::with_capacity(m.len());
        let mut layers = Vec::with_capacity(arch.layers);
        for l in 0..arch.layers {
            let (a, b) = (arch.block_in(l), arch.block_out(l));
            let wbase = arch.weight_offset(l);
            let bbase = arch.bias_offset(l);
            let mut rows = Vec::with_capacity(d * b);
            for i in 0..d {
                for o in 0..b {
                    let start = terms.len();
                    for j in 0..=i {
                        for k in 0..a {
                            terms.push((j * a + k, m[net.weight_index(wbase, a, b, i, j, o, k)]));
                        }
                    }
                    rows.push(PlanRow {
                        bias: net.biases[bbase + i * b + o],
                        start,
                        end: terms.len(),
                    });
                }
            }
            layers.push(PlanLayer {
                rows,
                hidden: l + 1 < arch.layers,
            });
        }
        Self {
            layers,
            terms,
            width: arch.max_width().max(d),
        }
    }
}

struct Scratch {
    m: Vec<f64>,
    cur: Vec<f64>,
    next: Vec<f64>,
    log_cur: Vec<f64>,
    log_next: Vec<f64>,
}

impl Scratch {
    fn new(net: &FlowNet) -> Self {
        let w = net.arch.max_width().max(net.arch.dims);
        Self {
            m: net.effective_weights(),
            cur: vec![0.0; w],
            next: vec![0.0; w],
            log_cur: vec![0.0; w],
            log_next: vec![0.0; w],
        }
    }
}
