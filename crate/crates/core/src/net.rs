//! Self-contained feed-forward machinery: dense layers with residual
//! blocks, softmax classification and regression heads, focal and MSE
//! losses, and plain SGD with hand-written backpropagation.
//!
//! Residual blocks are pre-activation style, `h + W2*relu(W1*h + b1) + b2`,
//! so a block with zeroed second layer is exactly the identity and depth can
//! grow without disturbing a trained stack.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;
use rand::RngCore;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetError {
    /// A gradient component exceeded the blow-up bound.
    GradientExplosion,
    /// Parameter blob does not match the spec.
    ShapeMismatch,
}

impl fmt::Display for NetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetError::GradientExplosion => write!(f, "gradient magnitude exceeded 1e6"),
            NetError::ShapeMismatch => write!(f, "parameter count does not match spec"),
        }
    }
}

impl core::error::Error for NetError {}

/// Output head variants for the four policy networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    /// Two-way softmax (accept / reject).
    Binary,
    /// Four-way softmax (updating type).
    FourClass,
    /// One polar pair.
    Regress2,
    /// Two polar pairs.
    Regress4,
}

impl HeadKind {
    #[inline]
    pub fn out_dim(self) -> usize {
        match self {
            HeadKind::Binary | HeadKind::Regress2 => 2,
            HeadKind::FourClass | HeadKind::Regress4 => 4,
        }
    }

    #[inline]
    pub fn is_classification(self) -> bool {
        matches!(self, HeadKind::Binary | HeadKind::FourClass)
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Binary => "binary",
            HeadKind::FourClass => "four_class",
            HeadKind::Regress2 => "regress2",
            HeadKind::Regress4 => "regress4",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "binary" => Some(HeadKind::Binary),
            "four_class" => Some(HeadKind::FourClass),
            "regress2" => Some(HeadKind::Regress2),
            "regress4" => Some(HeadKind::Regress4),
            _ => None,
        }
    }
}

/// Architecture description; parameters are stored flat against this.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetSpec {
    pub input_dim: usize,
    pub n_residual_blocks: usize,
    pub hidden_width: usize,
    pub head: HeadKind,
}

impl NetSpec {
    /// The stock policy architecture: 29 inputs, 10 blocks, width 64.
    pub fn standard(head: HeadKind) -> Self {
        NetSpec {
            input_dim: 29,
            n_residual_blocks: 10,
            hidden_width: 64,
            head,
        }
    }

    pub fn with_dims(head: HeadKind, blocks: usize, width: usize) -> Self {
        NetSpec {
            input_dim: 29,
            n_residual_blocks: blocks,
            hidden_width: width,
            head,
        }
    }

    pub fn param_count(&self) -> usize {
        let w = self.hidden_width;
        let input = self.input_dim * w + w;
        let block = 2 * (w * w + w);
        let head = w * self.head.out_dim() + self.head.out_dim();
        input + self.n_residual_blocks * block + head
    }

    #[inline]
    fn input_off(&self) -> usize {
        0
    }

    #[inline]
    fn block_off(&self, b: usize) -> usize {
        let w = self.hidden_width;
        self.input_dim * w + w + b * 2 * (w * w + w)
    }

    #[inline]
    fn head_off(&self) -> usize {
        self.block_off(self.n_residual_blocks)
    }
}

/// Flat parameter vector plus a format version for the on-disk form.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub values: Vec<f64>,
    pub version: u32,
}

impl NetParams {
    pub fn zeros(spec: &NetSpec) -> Self {
        NetParams {
            values: vec![0.0; spec.param_count()],
            version: 1,
        }
    }

    /// He-scaled random dense layers; the head layer starts at zero so the
    /// initial policy is uniform.
    pub fn init<R: RngCore + ?Sized>(spec: &NetSpec, rng: &mut R) -> Self {
        let mut p = NetParams::zeros(spec);
        let w = spec.hidden_width;
        he_fill(&mut p.values, spec.input_off(), spec.input_dim, w, rng);
        for b in 0..spec.n_residual_blocks {
            let off = spec.block_off(b);
            he_fill(&mut p.values, off, w, w, rng);
            he_fill(&mut p.values, off + w * w + w, w, w, rng);
        }
        // Head stays zero.
        p
    }

    pub fn matches(&self, spec: &NetSpec) -> bool {
        self.values.len() == spec.param_count()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn he_fill<R: RngCore + ?Sized>(
    values: &mut [f64],
    off: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) {
    let scale = (2.0 / fan_in as f64).sqrt();
    for v in values[off..off + fan_in * fan_out].iter_mut() {
        *v = normal_sample(rng) * scale;
    }
    // Biases start at zero.
}

/// Box-Muller standard normal; avoids pulling a distribution type into the
/// public API.
fn normal_sample<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        if u1 > 1e-300 {
            let r = (-2.0 * u1.ln()).sqrt();
            return r * (2.0 * core::f64::consts::PI * u2).cos();
        }
    }
}

/// Append one identity-initialized residual block: the first dense layer is
/// random, the second is zero, so outputs are unchanged.
pub fn grow_with_identity_block<R: RngCore + ?Sized>(
    spec: &NetSpec,
    params: &NetParams,
    rng: &mut R,
) -> (NetSpec, NetParams) {
    let mut bigger = *spec;
    bigger.n_residual_blocks += 1;
    let mut out = NetParams::zeros(&bigger);
    let w = spec.hidden_width;
    let keep = spec.block_off(spec.n_residual_blocks);
    out.values[..keep].copy_from_slice(&params.values[..keep]);
    let new_off = bigger.block_off(spec.n_residual_blocks);
    he_fill(&mut out.values, new_off, w, w, rng);
    // Second layer of the new block stays zero (identity mapping).
    let head_src = spec.head_off();
    let head_dst = bigger.head_off();
    let head_len = w * spec.head.out_dim() + spec.head.out_dim();
    out.values[head_dst..head_dst + head_len]
        .copy_from_slice(&params.values[head_src..head_src + head_len]);
    (bigger, out)
}

/// Head output; at most four numbers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadOut {
    vals: [f64; 4],
    len: usize,
}

impl HeadOut {
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.vals[..self.len]
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0usize;
        for i in 1..self.len {
            if self.vals[i] > self.vals[best] {
                best = i;
            }
        }
        best
    }
}

/// Reusable forward/backward buffers sized for one spec.
#[derive(Clone, Debug)]
pub struct Workspace {
    /// Hidden state after the input layer and after each block.
    h_stack: Vec<f64>,
    /// Post-relu inner activations per block.
    t_stack: Vec<f64>,
    /// Scratch vectors.
    dh: Vec<f64>,
    dt: Vec<f64>,
    logits: [f64; 4],
}

impl Workspace {
    pub fn new(spec: &NetSpec) -> Self {
        let w = spec.hidden_width;
        Workspace {
            h_stack: vec![0.0; (spec.n_residual_blocks + 1) * w],
            t_stack: vec![0.0; spec.n_residual_blocks.max(1) * w],
            dh: vec![0.0; w],
            dt: vec![0.0; w],
            logits: [0.0; 4],
        }
    }
}

#[inline]
fn dense(
    values: &[f64],
    off: usize,
    input: &[f64],
    out: &mut [f64],
    fan_in: usize,
    fan_out: usize,
) {
    let wmat = &values[off..off + fan_in * fan_out];
    let bias = &values[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
    for j in 0..fan_out {
        let row = &wmat[j * fan_in..(j + 1) * fan_in];
        let mut acc = bias[j];
        for i in 0..fan_in {
            acc += row[i] * input[i];
        }
        out[j] = acc;
    }
}

fn softmax(z: &mut [f64]) {
    let mut m = f64::NEG_INFINITY;
    for &v in z.iter() {
        m = m.max(v);
    }
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Run the network. Classification heads return probabilities summing to
/// one; regression heads return raw values.
pub fn forward(spec: &NetSpec, params: &NetParams, x: &[f64], ws: &mut Workspace) -> HeadOut {
    debug_assert_eq!(x.len(), spec.input_dim);
    debug_assert!(params.matches(spec));
    let w = spec.hidden_width;
    let values = &params.values;

    // Input layer with relu.
    {
        let (h0, _) = ws.h_stack.split_at_mut(w);
        dense(values, spec.input_off(), x, h0, spec.input_dim, w);
        for v in h0.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    for b in 0..spec.n_residual_blocks {
        let off = spec.block_off(b);
        let (prev, rest) = ws.h_stack.split_at_mut((b + 1) * w);
        let h_in = &prev[b * w..];
        let h_out = &mut rest[..w];
        let t = &mut ws.t_stack[b * w..(b + 1) * w];
        dense(values, off, h_in, t, w, w);
        for v in t.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        dense(values, off + w * w + w, t, h_out, w, w);
        for j in 0..w {
            h_out[j] += h_in[j];
        }
    }

    let out_dim = spec.head.out_dim();
    let h_last = &ws.h_stack[spec.n_residual_blocks * w..(spec.n_residual_blocks + 1) * w];
    let mut z = [0.0f64; 4];
    dense(values, spec.head_off(), h_last, &mut z[..out_dim], w, out_dim);
    if spec.head.is_classification() {
        softmax(&mut z[..out_dim]);
    }
    ws.logits = z;
    HeadOut {
        vals: z,
        len: out_dim,
    }
}

/// Stateless forward for callers without a workspace.
pub fn forward_once(spec: &NetSpec, params: &NetParams, x: &[f64]) -> HeadOut {
    let mut ws = Workspace::new(spec);
    forward(spec, params, x, &mut ws)
}

/// Class-weighted focal term for one row: `alpha * (1-p)^gamma * (-ln p)`.
pub fn focal_term(p_true: f64, alpha: f64, gamma: f64) -> f64 {
    let p = p_true.clamp(PROB_FLOOR, 1.0);
    alpha * (1.0 - p).powf(gamma) * (-p.ln())
}

/// Loss configuration shared by all four heads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Class weight for the first (accept) class of the binary head; the
    /// second class gets `1 - alpha_a`.
    pub alpha_a: f64,
    /// Per-class weights for the four-way head.
    pub alpha_b: [f64; 4],
    /// Focusing exponent.
    pub gamma: f64,
    /// SGD learning rate.
    pub lr: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha_a: 0.5,
            alpha_b: [0.25; 4],
            gamma: 2.0,
            lr: 1e-5,
        }
    }
}

impl LossConfig {
    fn class_weight(&self, head: HeadKind, class: usize) -> f64 {
        match head {
            HeadKind::Binary => {
                if class == 0 {
                    self.alpha_a
                } else {
                    1.0 - self.alpha_a
                }
            }
            HeadKind::FourClass => self.alpha_b[class],
            _ => 1.0,
        }
    }
}

/// Rollup of focal loss over a batch of (probability vector, true class)
/// rows; the mean of the per-row terms.
pub fn focal_loss(rows: &[(&[f64], usize)], head: HeadKind, cfg: &LossConfig) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for &(probs, class) in rows {
        acc += focal_term(probs[class], cfg.class_weight(head, class), cfg.gamma);
    }
    acc / rows.len() as f64
}

/// Mean over rows of the summed squared component errors.
pub fn mse_loss(rows: &[(&[f64], &[f64])]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for &(pred, truth) in rows {
        for (a, b) in pred.iter().zip(truth.iter()) {
            acc += (a - b) * (a - b);
        }
    }
    acc / rows.len() as f64
}

/// Supervision target for one row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Regress([f64; 4], usize),
}

impl Target {
    pub fn regress2(v: [f64; 2]) -> Self {
        Target::Regress([v[0], v[1], 0.0, 0.0], 2)
    }

    pub fn regress4(v: [f64; 4]) -> Self {
        Target::Regress(v, 4)
    }
}

/// Per-row loss given the head output.
pub fn row_loss(out: &HeadOut, target: &Target, head: HeadKind, cfg: &LossConfig) -> f64 {
    match (head.is_classification(), target) {
        (true, Target::Class(c)) => focal_term(out.as_slice()[*c], cfg.class_weight(head, *c), cfg.gamma),
        (false, Target::Regress(y, n)) => {
            let mut acc = 0.0;
            for k in 0..*n {
                let d = out.as_slice()[k] - y[k];
                acc += d * d;
            }
            acc
        }
        _ => panic!("target kind does not match head"),
    }
}

/// Loss of one row from scratch; the finite-difference oracle leans on this.
pub fn loss_at(spec: &NetSpec, params: &NetParams, x: &[f64], target: &Target, cfg: &LossConfig) -> f64 {
    let out = forward_once(spec, params, x);
    row_loss(&out, target, spec.head, cfg)
}

/// Gradient of the row loss with respect to the head pre-softmax logits
/// (classification) or raw outputs (regression).
fn head_grad(out: &HeadOut, target: &Target, head: HeadKind, cfg: &LossConfig) -> [f64; 4] {
    let mut dz = [0.0f64; 4];
    match (head.is_classification(), target) {
        (true, Target::Class(c)) => {
            let probs = out.as_slice();
            let p = probs[*c].clamp(PROB_FLOOR, 1.0);
            let alpha = cfg.class_weight(head, *c);
            let g = cfg.gamma;
            if p >= 1.0 - 1e-15 {
                return dz;
            }
            // dL/dp for L = alpha (1-p)^g (-ln p)
            let dl_dp = alpha * (g * (1.0 - p).powf(g - 1.0) * p.ln() - (1.0 - p).powf(g) / p);
            for j in 0..out.len {
                let soft = p * (if j == *c { 1.0 } else { 0.0 } - probs[j]);
                dz[j] = dl_dp * soft;
            }
        }
        (false, Target::Regress(y, n)) => {
            for k in 0..*n {
                dz[k] = 2.0 * (out.as_slice()[k] - y[k]);
            }
        }
        _ => panic!("target kind does not match head"),
    }
    dz
}

/// Accumulate the gradient of one row into `grad` (same layout as params).
/// Requires `ws` to hold the forward state of exactly this row.
fn backward_into(
    spec: &NetSpec,
    params: &NetParams,
    x: &[f64],
    out: &HeadOut,
    target: &Target,
    cfg: &LossConfig,
    ws: &mut Workspace,
    grad: &mut [f64],
) {
    let w = spec.hidden_width;
    let out_dim = spec.head.out_dim();
    let values = &params.values;
    let dz = head_grad(out, target, spec.head, cfg);

    // Head layer.
    {
        let off = spec.head_off();
        let h_last = &ws.h_stack[spec.n_residual_blocks * w..(spec.n_residual_blocks + 1) * w];
        for j in 0..out_dim {
            let gz = dz[j];
            let row = &mut grad[off + j * w..off + (j + 1) * w];
            for i in 0..w {
                row[i] += gz * h_last[i];
            }
            grad[off + out_dim * w + j] += gz;
        }
        for i in 0..w {
            let mut acc = 0.0;
            for j in 0..out_dim {
                acc += values[off + j * w + i] * dz[j];
            }
            ws.dh[i] = acc;
        }
    }

    // Blocks, reversed.
    for b in (0..spec.n_residual_blocks).rev() {
        let off = spec.block_off(b);
        let off2 = off + w * w + w;
        let h_in_start = b * w;
        let t = &ws.t_stack[b * w..(b + 1) * w];

        // Through the second dense layer: h_out = h_in + W2 t + b2.
        for j in 0..w {
            let g = ws.dh[j];
            let row = &mut grad[off2 + j * w..off2 + (j + 1) * w];
            for i in 0..w {
                row[i] += g * t[i];
            }
            grad[off2 + w * w + j] += g;
        }
        for i in 0..w {
            let mut acc = 0.0;
            for j in 0..w {
                acc += values[off2 + j * w + i] * ws.dh[j];
            }
            // Relu gate: t[i] > 0 iff the inner unit fired.
            ws.dt[i] = if t[i] > 0.0 { acc } else { 0.0 };
        }
        // Through the first dense layer; the skip path keeps dh as-is.
        let h_in = &ws.h_stack[h_in_start..h_in_start + w];
        for j in 0..w {
            let g = ws.dt[j];
            if g != 0.0 {
                let row = &mut grad[off + j * w..off + (j + 1) * w];
                for i in 0..w {
                    row[i] += g * h_in[i];
                }
                grad[off + w * w + j] += g;
            }
        }
        for i in 0..w {
            let mut acc = 0.0;
            for j in 0..w {
                acc += values[off + j * w + i] * ws.dt[j];
            }
            ws.dh[i] += acc;
        }
    }

    // Input layer: h0 = relu(W x + b).
    {
        let off = spec.input_off();
        let nin = spec.input_dim;
        let h0 = &ws.h_stack[..w];
        for j in 0..w {
            if h0[j] > 0.0 {
                let g = ws.dh[j];
                let row = &mut grad[off + j * nin..off + (j + 1) * nin];
                for i in 0..nin {
                    row[i] += g * x[i];
                }
                grad[off + w * nin + j] += g;
            }
        }
    }
}

/// One SGD step over a mini-batch; returns the mean batch loss.
pub fn sgd_step(
    params: &mut NetParams,
    spec: &NetSpec,
    batch: &[(&[f64], Target)],
    cfg: &LossConfig,
    ws: &mut Workspace,
    grad: &mut Vec<f64>,
) -> Result<f64, NetError> {
    assert!(!batch.is_empty(), "empty batch");
    if !params.matches(spec) {
        return Err(NetError::ShapeMismatch);
    }
    grad.clear();
    grad.resize(spec.param_count(), 0.0);
    let mut loss = 0.0;
    for (x, target) in batch {
        let out = forward(spec, params, x, ws);
        loss += row_loss(&out, target, spec.head, cfg);
        backward_into(spec, params, x, &out, target, cfg, ws, grad);
    }
    let scale = 1.0 / batch.len() as f64;
    loss *= scale;
    let mut max_mag = 0.0f64;
    for g in grad.iter() {
        max_mag = max_mag.max(g.abs() * scale);
    }
    if max_mag > 1e6 {
        return Err(NetError::GradientExplosion);
    }
    let lr = cfg.lr;
    for (p, g) in params.values.iter_mut().zip(grad.iter()) {
        *p -= lr * g * scale;
    }
    Ok(loss)
}

/// Mean loss and (for classification) accuracy over a row set.
pub fn evaluate(
    spec: &NetSpec,
    params: &NetParams,
    rows: &[(&[f64], Target)],
    cfg: &LossConfig,
) -> (f64, f64) {
    if rows.is_empty() {
        return (0.0, 1.0);
    }
    let mut ws = Workspace::new(spec);
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, target) in rows {
        let out = forward(spec, params, x, &mut ws);
        loss += row_loss(&out, target, spec.head, cfg);
        if let Target::Class(c) = target {
            if out.argmax() == *c {
                correct += 1;
            }
        }
    }
    (
        loss / rows.len() as f64,
        correct as f64 / rows.len() as f64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_head_gives_uniform_probs() {
        for (head, want) in [(HeadKind::Binary, 0.5), (HeadKind::FourClass, 0.25)] {
            let spec = NetSpec::with_dims(head, 2, 16);
            let params = NetParams::init(&spec, &mut rng(1));
            let x = [0.3f64; 29];
            let out = forward_once(&spec, &params, &x);
            for &p in out.as_slice() {
                assert_relative_eq!(p, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let spec = NetSpec::with_dims(HeadKind::FourClass, 3, 24);
        let mut params = NetParams::init(&spec, &mut rng(2));
        // Randomize the head too.
        let off = spec.head_off();
        for (i, v) in params.values[off..].iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        let x: Vec<f64> = (0..29).map(|i| (i as f64 * 0.11).cos()).collect();
        let out = forward_once(&spec, &params, &x);
        let sum: f64 = out.as_slice().iter().sum();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn identity_block_preserves_outputs() {
        let spec = NetSpec::with_dims(HeadKind::Regress2, 3, 16);
        let mut params = NetParams::init(&spec, &mut rng(3));
        let off = spec.head_off();
        for (i, v) in params.values[off..].iter_mut().enumerate() {
            *v = ((i * 7 % 13) as f64 - 6.0) * 0.1;
        }
        let x: Vec<f64> = (0..29).map(|i| (i as f64 * 0.21).sin()).collect();
        let before = forward_once(&spec, &params, &x);
        let (spec2, params2) = grow_with_identity_block(&spec, &params, &mut rng(4));
        let after = forward_once(&spec2, &params2, &x);
        for (a, b) in before.as_slice().iter().zip(after.as_slice()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn focal_term_reference_values() {
        // gamma = 0 reduces to cross-entropy.
        assert_relative_eq!(focal_term(0.5, 1.0, 0.0), core::f64::consts::LN_2, epsilon = 1e-4);
        assert_eq!(focal_term(1.0, 1.0, 2.0), 0.0);
        // (1 - 0.9)^2 * (-ln 0.9)
        assert_relative_eq!(focal_term(0.9, 1.0, 2.0), 0.01 * 0.105360516, epsilon = 1e-9);
    }

    #[test]
    fn focal_term_strictly_decreasing_in_p() {
        let mut last = f64::INFINITY;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let v = focal_term(p, 1.0, 2.0);
            assert!(v < last, "focal not decreasing at p = {p}");
            last = v;
        }
    }

    #[test]
    fn mse_reference_values() {
        assert_eq!(mse_loss(&[(&[0.3, 0.7][..], &[0.3, 0.7][..])]), 0.0);
        // One polar pair.
        let l = mse_loss(&[(&[0.46, 0.25][..], &[0.55, 0.30][..])]);
        assert_relative_eq!(l, 0.0081 + 0.0025, epsilon = 1e-12);
        // Two polar pairs.
        let l4 = mse_loss(&[(
            &[0.57, 0.18, 0.32, 0.27][..],
            &[0.48, 0.19, 0.28, 0.24][..],
        )]);
        assert_relative_eq!(l4, 0.09f64.powi(2) + 0.01f64.powi(2) + 0.04f64.powi(2) + 0.03f64.powi(2), epsilon = 1e-12);
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let spec = NetSpec::with_dims(HeadKind::Binary, 2, 8);
        let mut params = NetParams::init(&spec, &mut rng(5));
        let snapshot = params.clone();
        let cfg = LossConfig {
            lr: 0.0,
            ..Default::default()
        };
        let x = [0.1f64; 29];
        let mut ws = Workspace::new(&spec);
        let mut grad = Vec::new();
        sgd_step(
            &mut params,
            &spec,
            &[(&x[..], Target::Class(0))],
            &cfg,
            &mut ws,
            &mut grad,
        )
        .unwrap();
        assert_eq!(params, snapshot);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        // Spot check on a small net; the full sweep lives in the
        // integration suite.
        let cases = [
            (HeadKind::Binary, Target::Class(1)),
            (HeadKind::FourClass, Target::Class(2)),
            (HeadKind::Regress2, Target::regress2([0.4, 0.6])),
            (HeadKind::Regress4, Target::regress4([0.2, 0.8, 0.5, 0.1])),
        ];
        for (ci, (head, target)) in cases.into_iter().enumerate() {
            let spec = NetSpec::with_dims(head, 2, 10);
            let mut params = NetParams::init(&spec, &mut rng(10 + ci as u64));
            // Give the head nonzero weights so class grads flow.
            let off = spec.head_off();
            for (i, v) in params.values[off..].iter_mut().enumerate() {
                *v = ((i % 7) as f64 - 3.0) * 0.05;
            }
            let x: Vec<f64> = (0..29).map(|i| ((i as f64) * 0.13).sin() * 0.5).collect();
            let cfg = LossConfig {
                gamma: 2.0,
                alpha_a: 0.35,
                alpha_b: [0.4, 0.2, 0.2, 0.2],
                lr: 0.0,
                ..Default::default()
            };
            let mut ws = Workspace::new(&spec);
            let mut grad = Vec::new();
            // lr = 0: run one step purely to collect the gradient.
            let out = forward(&spec, &params, &x, &mut ws);
            grad.resize(spec.param_count(), 0.0);
            backward_into(&spec, &params, &x, &out, &target, &cfg, &mut ws, &mut grad);

            let eps = 1e-6;
            for probe in [0usize, 3, 17, spec.head_off() + 1, spec.param_count() - 1] {
                let mut plus = params.clone();
                plus.values[probe] += eps;
                let mut minus = params.clone();
                minus.values[probe] -= eps;
                let fd = (loss_at(&spec, &plus, &x, &target, &cfg)
                    - loss_at(&spec, &minus, &x, &target, &cfg))
                    / (2.0 * eps);
                let scale = fd.abs().max(grad[probe].abs()).max(1e-8);
                assert!(
                    (fd - grad[probe]).abs() / scale < 1e-4,
                    "head {head:?} param {probe}: fd {fd} vs analytic {}",
                    grad[probe]
                );
            }
        }
    }

    #[test]
    fn learns_linearly_separable_toy() {
        let spec = NetSpec::with_dims(HeadKind::Binary, 1, 8);
        let mut params = NetParams::init(&spec, &mut rng(42));
        let cfg = LossConfig {
            lr: 0.05,
            gamma: 2.0,
            ..Default::default()
        };
        // Class by the sign of feature 0, with a clear margin.
        let mut rows: Vec<(Vec<f64>, Target)> = Vec::new();
        let mut r = rng(43);
        for _ in 0..200 {
            let mag: f64 = r.random_range(0.2..1.0);
            let v = if r.random::<bool>() { mag } else { -mag };
            let mut x = vec![0.0; 29];
            x[0] = v;
            for xi in x.iter_mut().skip(1) {
                *xi = r.random_range(-0.1..0.1);
            }
            rows.push((x, Target::Class(if v > 0.0 { 0 } else { 1 })));
        }
        let mut ws = Workspace::new(&spec);
        let mut grad = Vec::new();
        let mut steps = 0usize;
        'outer: for _ in 0..200 {
            for chunk in rows.chunks(32) {
                let batch: Vec<(&[f64], Target)> =
                    chunk.iter().map(|(x, t)| (x.as_slice(), *t)).collect();
                sgd_step(&mut params, &spec, &batch, &cfg, &mut ws, &mut grad).unwrap();
                steps += 1;
                if steps >= 10_000 {
                    break 'outer;
                }
            }
            let all: Vec<(&[f64], Target)> =
                rows.iter().map(|(x, t)| (x.as_slice(), *t)).collect();
            let (_, acc) = evaluate(&spec, &params, &all, &cfg);
            if acc == 1.0 {
                break;
            }
        }
        let all: Vec<(&[f64], Target)> = rows.iter().map(|(x, t)| (x.as_slice(), *t)).collect();
        let (_, acc) = evaluate(&spec, &params, &all, &cfg);
        assert_eq!(acc, 1.0, "toy set not separated after {steps} steps");
    }
}
