use super::TemporalError;
use crate::geometry::SeededRng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// One pre-norm transformer layer. Projection matrices are stored `[in][out]`
/// so a token row `y` maps to `y * W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub heads: usize,
    pub ln1_gamma: DVector<f64>,
    pub ln1_beta: DVector<f64>,
    pub wq: DMatrix<f64>,
    pub bq: DVector<f64>,
    pub wk: DMatrix<f64>,
    pub bk: DVector<f64>,
    pub wv: DMatrix<f64>,
    pub bv: DVector<f64>,
    pub wo: DMatrix<f64>,
    pub bo: DVector<f64>,
    pub ln2_gamma: DVector<f64>,
    pub ln2_beta: DVector<f64>,
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

pub const LAYER_TENSOR_NAMES: [&str; 16] = [
    "ln1_gamma", "ln1_beta", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2_gamma", "ln2_beta", "w1", "b1",
    "w2", "b2",
];

impl LayerParams {
    /// Zero projections and unit layer-norm scales: the layer is the identity.
    pub fn zeros(d: usize, heads: usize, hidden: usize) -> Self {
        let m = |r, c| DMatrix::zeros(r, c);
        let v = |n| DVector::zeros(n);
        Self {
            heads,
            ln1_gamma: DVector::from_element(d, 1.0),
            ln1_beta: v(d),
            wq: m(d, d),
            bq: v(d),
            wk: m(d, d),
            bk: v(d),
            wv: m(d, d),
            bv: v(d),
            wo: m(d, d),
            bo: v(d),
            ln2_gamma: DVector::from_element(d, 1.0),
            ln2_beta: v(d),
            w1: m(d, hidden),
            b1: v(hidden),
            w2: m(hidden, d),
            b2: v(d),
        }
    }

    /// Uniform fan-in initialization scaled by `gain`; biases and norms at rest.
    pub fn random(d: usize, heads: usize, hidden: usize, gain: f64, rng: &mut SeededRng) -> Self {
        let mut p = Self::zeros(d, heads, hidden);
        for w in [&mut p.wq, &mut p.wk, &mut p.wv, &mut p.wo, &mut p.w1, &mut p.w2] {
            let bound = gain * (3.0 / w.nrows() as f64).sqrt();
            w.iter_mut().for_each(|x| *x = rng.random_range(-bound..bound));
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.wq.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn validate(&self) -> Result<(), TemporalError> {
        let d = self.dim();
        if self.heads == 0 || !d.is_multiple_of(self.heads) {
            return Err(TemporalError::HeadMismatch { d, heads: self.heads });
        }
        let h = self.hidden();
        let ok = [&self.wq, &self.wk, &self.wv, &self.wo].iter().all(|w| w.shape() == (d, d))
            && self.w1.shape() == (d, h)
            && self.w2.shape() == (h, d)
            && self.b1.len() == h
            && [
                &self.ln1_gamma,
                &self.ln1_beta,
                &self.bq,
                &self.bk,
                &self.bv,
                &self.bo,
                &self.ln2_gamma,
                &self.ln2_beta,
                &self.b2,
            ]
            .iter()
            .all(|v| v.len() == d);
        if !ok {
            return Err(TemporalError::ShapeMismatch("layer tensors disagree on width".into()));
        }
        Ok(())
    }

    /// Tensors in [`LAYER_TENSOR_NAMES`] order, as `(rows, cols, storage)`.
    pub fn tensors(&self) -> [(usize, usize, &[f64]); 16] {
        fn m(x: &DMatrix<f64>) -> (usize, usize, &[f64]) {
            (x.nrows(), x.ncols(), x.as_slice())
        }
        fn v(x: &DVector<f64>) -> (usize, usize, &[f64]) {
            (x.len(), 1, x.as_slice())
        }
        [
            v(&self.ln1_gamma),
            v(&self.ln1_beta),
            m(&self.wq),
            v(&self.bq),
            m(&self.wk),
            v(&self.bk),
            m(&self.wv),
            v(&self.bv),
            m(&self.wo),
            v(&self.bo),
            v(&self.ln2_gamma),
            v(&self.ln2_beta),
            m(&self.w1),
            v(&self.b1),
            m(&self.w2),
            v(&self.b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 16] {
        [
            self.ln1_gamma.as_mut_slice(),
            self.ln1_beta.as_mut_slice(),
            self.wq.as_mut_slice(),
            self.bq.as_mut_slice(),
            self.wk.as_mut_slice(),
            self.bk.as_mut_slice(),
            self.wv.as_mut_slice(),
            self.bv.as_mut_slice(),
            self.wo.as_mut_slice(),
            self.bo.as_mut_slice(),
            self.ln2_gamma.as_mut_slice(),
            self.ln2_beta.as_mut_slice(),
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
        ]
    }

    fn zeros_like(&self) -> Self {
        let mut g = Self::zeros(self.dim(), self.heads, self.hidden());
        g.ln1_gamma.fill(0.0);
        g.ln2_gamma.fill(0.0);
        g
    }
}

fn affine(x: &DMatrix<f64>, w: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let mut y = x * w;
    for mut row in y.row_iter_mut() {
        row += b.transpose();
    }
    y
}

fn col_sums(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum()))
}

struct LnCache {
    xhat: DMatrix<f64>,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &DMatrix<f64>, gamma: &DVector<f64>, beta: &DVector<f64>) -> (DMatrix<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.row_iter_mut() {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
        inv_std.push(inv);
    }
    let mut y = xhat.clone();
    for mut row in y.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = *v * gamma[j] + beta[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &DMatrix<f64>,
    gamma: &DVector<f64>,
    cache: &LnCache,
    dgamma: &mut DVector<f64>,
    dbeta: &mut DVector<f64>,
) -> DMatrix<f64> {
    let (n, d) = dy.shape();
    let mut dx = DMatrix::zeros(n, d);
    let df = d as f64;
    for i in 0..n {
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            let g = dy[(i, j)];
            let xh = cache.xhat[(i, j)];
            dgamma[j] += g * xh;
            dbeta[j] += g;
            let dxh = g * gamma[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh;
        }
        mean_dxhat /= df;
        mean_dxhat_xhat /= df;
        for j in 0..d {
            let dxh = dy[(i, j)] * gamma[j];
            dx[(i, j)] = cache.inv_std[i] * (dxh - mean_dxhat - cache.xhat[(i, j)] * mean_dxhat_xhat);
        }
    }
    dx
}

/// Softmax down each column; columns are contiguous in nalgebra's layout.
fn softmax_columns(s: &mut DMatrix<f64>) {
    for mut col in s.column_iter_mut() {
        let max = col.max();
        col.iter_mut().for_each(|v| *v = (*v - max).exp());
        let sum = col.sum();
        col.iter_mut().for_each(|v| *v /= sum);
    }
}

/// Gradient through a row softmax: `p * (dp - <dp, p>)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(pi, di)| pi * (di - dot)).collect()
}

pub(crate) struct LayerCache {
    ln1: LnCache,
    y1: DMatrix<f64>,
    q: DMatrix<f64>,
    k: DMatrix<f64>,
    v: DMatrix<f64>,
    probs: Vec<DMatrix<f64>>,
    attn: DMatrix<f64>,
    ln2: LnCache,
    y2: DMatrix<f64>,
    h_pre: DMatrix<f64>,
    g: DMatrix<f64>,
}

fn check_input(p: &LayerParams, z: &DMatrix<f64>) -> Result<(), TemporalError> {
    p.validate()?;
    if z.ncols() != p.dim() {
        return Err(TemporalError::ShapeMismatch(format!(
            "tokens have width {}, layer expects {}",
            z.ncols(),
            p.dim()
        )));
    }
    Ok(())
}

/// Attention probabilities of head `h`, transposed: column `i` holds query `i`'s
/// distribution over keys.
fn head_probs_t(p: &LayerParams, q: &DMatrix<f64>, k: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    let dh = p.dim() / p.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut st = k.columns(h * dh, dh) * q.columns(h * dh, dh).transpose() * scale;
    softmax_columns(&mut st);
    st
}

fn head_probs(p: &LayerParams, q: &DMatrix<f64>, k: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    head_probs_t(p, q, k, h).transpose()
}

pub(crate) fn run_layer(p: &LayerParams, z: &DMatrix<f64>, keep: bool) -> (DMatrix<f64>, Option<LayerCache>) {
    let d = p.dim();
    let dh = d / p.heads;
    let (y1, ln1) = layer_norm(z, &p.ln1_gamma, &p.ln1_beta);
    let q = affine(&y1, &p.wq, &p.bq);
    let k = affine(&y1, &p.wk, &p.bk);
    let v = affine(&y1, &p.wv, &p.bv);
    let mut attn = DMatrix::zeros(z.nrows(), d);
    let mut probs = Vec::new();
    for h in 0..p.heads {
        let pt = head_probs_t(p, &q, &k, h);
        attn.columns_mut(h * dh, dh).copy_from(&pt.tr_mul(&v.columns(h * dh, dh)));
        if keep {
            probs.push(pt.transpose());
        }
    }
    let mid = z + affine(&attn, &p.wo, &p.bo);
    let (y2, ln2) = layer_norm(&mid, &p.ln2_gamma, &p.ln2_beta);
    let h_pre = affine(&y2, &p.w1, &p.b1);
    let g = h_pre.map(gelu);
    let out = &mid + affine(&g, &p.w2, &p.b2);
    let cache = keep.then_some(LayerCache {
        ln1,
        y1,
        q,
        k,
        v,
        probs,
        attn,
        ln2,
        y2,
        h_pre,
        g,
    });
    (out, cache)
}

/// `z' = z + MSA(LN(z))`, then `z' + MLP(LN(z'))`.
pub fn layer_forward(p: &LayerParams, z: &DMatrix<f64>) -> Result<DMatrix<f64>, TemporalError> {
    check_input(p, z)?;
    Ok(run_layer(p, z, false).0)
}

/// Per-head attention probability matrices for input `z`.
pub fn attention_weights(p: &LayerParams, z: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>, TemporalError> {
    check_input(p, z)?;
    let (y1, _) = layer_norm(z, &p.ln1_gamma, &p.ln1_beta);
    let q = affine(&y1, &p.wq, &p.bq);
    let k = affine(&y1, &p.wk, &p.bk);
    Ok((0..p.heads).map(|h| head_probs(p, &q, &k, h)).collect())
}

pub(crate) fn backward_cached(p: &LayerParams, c: &LayerCache, dout: &DMatrix<f64>) -> (LayerParams, DMatrix<f64>) {
    let d = p.dim();
    let dh = d / p.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut g = p.zeros_like();

    // MLP branch.
    g.w2 = c.g.transpose() * dout;
    g.b2 = col_sums(dout);
    let dg = dout * p.w2.transpose();
    let dh_pre = dg.zip_map(&c.h_pre, |a, x| a * gelu_grad(x));
    g.w1 = c.y2.transpose() * &dh_pre;
    g.b1 = col_sums(&dh_pre);
    let dy2 = &dh_pre * p.w1.transpose();
    let mut dmid = dout.clone();
    dmid += layer_norm_backward(&dy2, &p.ln2_gamma, &c.ln2, &mut g.ln2_gamma, &mut g.ln2_beta);

    // Attention branch.
    g.wo = c.attn.transpose() * &dmid;
    g.bo = col_sums(&dmid);
    let dattn = &dmid * p.wo.transpose();
    let n = dout.nrows();
    let mut dq = DMatrix::zeros(n, d);
    let mut dk = DMatrix::zeros(n, d);
    let mut dv = DMatrix::zeros(n, d);
    for h in 0..p.heads {
        let pr = &c.probs[h];
        let dout_h = dattn.columns(h * dh, dh);
        dv.columns_mut(h * dh, dh).copy_from(&(pr.transpose() * dout_h));
        let dp = dout_h * c.v.columns(h * dh, dh).transpose();
        let mut ds = DMatrix::zeros(n, n);
        for i in 0..n {
            let prow: Vec<f64> = pr.row(i).iter().copied().collect();
            let drow: Vec<f64> = dp.row(i).iter().copied().collect();
            for (j, v) in softmax_backward(&prow, &drow).into_iter().enumerate() {
                ds[(i, j)] = v * scale;
            }
        }
        dq.columns_mut(h * dh, dh).copy_from(&(&ds * c.k.columns(h * dh, dh)));
        dk.columns_mut(h * dh, dh).copy_from(&(ds.transpose() * c.q.columns(h * dh, dh)));
    }
    g.wq = c.y1.transpose() * &dq;
    g.bq = col_sums(&dq);
    g.wk = c.y1.transpose() * &dk;
    g.bk = col_sums(&dk);
    g.wv = c.y1.transpose() * &dv;
    g.bv = col_sums(&dv);
    let dy1 = &dq * p.wq.transpose() + &dk * p.wk.transpose() + &dv * p.wv.transpose();
    let dz = dmid + layer_norm_backward(&dy1, &p.ln1_gamma, &c.ln1, &mut g.ln1_gamma, &mut g.ln1_beta);
    (g, dz)
}

/// Parameter gradients and input gradient for upstream gradient `dout`.
pub fn layer_backward(
    p: &LayerParams,
    z: &DMatrix<f64>,
    dout: &DMatrix<f64>,
) -> Result<(LayerParams, DMatrix<f64>), TemporalError> {
    check_input(p, z)?;
    if dout.shape() != z.shape() {
        return Err(TemporalError::ShapeMismatch("upstream gradient shape differs from input".into()));
    }
    let (_, cache) = run_layer(p, z, true);
    Ok(backward_cached(p, &cache.expect("cache requested"), dout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::seeded_rng;

    fn random_tokens(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
        let mut rng = seeded_rng(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.5..1.5))
    }

    /// Layer with every tensor randomized, including biases and norm parameters.
    fn full_random(seed: u64, d: usize, heads: usize, hidden: usize) -> LayerParams {
        let mut rng = seeded_rng(seed);
        let mut p = LayerParams::random(d, heads, hidden, 1.0, &mut rng);
        for (k, t) in p.tensors_mut().into_iter().enumerate() {
            let base = if k == 0 || k == 10 { 1.0 } else { 0.0 };
            if t.len() == d || t.len() == hidden {
                t.iter_mut().for_each(|v| *v = base + rng.random_range(-0.3..0.3));
            }
        }
        p
    }

    /// Scalar-loop forward pass written independently of the matrix code.
    fn reference(p: &LayerParams, z: &DMatrix<f64>) -> Vec<Vec<f64>> {
        let (n, d) = z.shape();
        let dh = d / p.heads;
        let ln = |x: &[f64], g: &DVector<f64>, b: &DVector<f64>| -> Vec<f64> {
            let mean = x.iter().sum::<f64>() / d as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            (0..d).map(|j| (x[j] - mean) / (var + 1e-5).sqrt() * g[j] + b[j]).collect()
        };
        let lin = |x: &[f64], w: &DMatrix<f64>, b: &DVector<f64>| -> Vec<f64> {
            (0..w.ncols()).map(|o| b[o] + (0..w.nrows()).map(|i| x[i] * w[(i, o)]).sum::<f64>()).collect()
        };
        let rows: Vec<Vec<f64>> = (0..n).map(|i| z.row(i).iter().copied().collect()).collect();
        let y: Vec<Vec<f64>> = rows.iter().map(|r| ln(r, &p.ln1_gamma, &p.ln1_beta)).collect();
        let q: Vec<_> = y.iter().map(|r| lin(r, &p.wq, &p.bq)).collect();
        let k: Vec<_> = y.iter().map(|r| lin(r, &p.wk, &p.bk)).collect();
        let v: Vec<_> = y.iter().map(|r| lin(r, &p.wv, &p.bv)).collect();
        let mut attn = vec![vec![0.0; d]; n];
        for h in 0..p.heads {
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| (0..dh).map(|c| q[i][h * dh + c] * k[j][h * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let total: f64 = e.iter().sum();
                for c in 0..dh {
                    attn[i][h * dh + c] = (0..n).map(|j| e[j] / total * v[j][h * dh + c]).sum();
                }
            }
        }
        (0..n)
            .map(|i| {
                let o = lin(&attn[i], &p.wo, &p.bo);
                let mid: Vec<f64> = (0..d).map(|j| rows[i][j] + o[j]).collect();
                let y2 = ln(&mid, &p.ln2_gamma, &p.ln2_beta);
                let hdn: Vec<f64> = lin(&y2, &p.w1, &p.b1).into_iter().map(gelu).collect();
                let m = lin(&hdn, &p.w2, &p.b2);
                (0..d).map(|j| mid[j] + m[j]).collect()
            })
            .collect()
    }

    #[test]
    fn zero_branches_are_identity() {
        let z = random_tokens(1, 7, 8);
        let out = layer_forward(&LayerParams::zeros(8, 2, 16), &z).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn single_token_attends_to_itself() {
        let p = full_random(2, 8, 2, 16);
        let w = attention_weights(&p, &random_tokens(3, 1, 8)).unwrap();
        assert!(w.iter().all(|m| m[(0, 0)] == 1.0));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let p = full_random(4, 8, 4, 12);
        for m in attention_weights(&p, &random_tokens(5, 20, 8)).unwrap() {
            for row in m.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_scalar_reference() {
        let p = full_random(6, 8, 2, 16);
        let z = random_tokens(7, 6, 8);
        let got = layer_forward(&p, &z).unwrap();
        let want = reference(&p, &z);
        for i in 0..6 {
            for j in 0..8 {
                assert!((got[(i, j)] - want[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn head_and_width_mismatch() {
        let mut p = LayerParams::zeros(8, 3, 16);
        assert!(matches!(layer_forward(&p, &random_tokens(1, 2, 8)), Err(TemporalError::HeadMismatch { .. })));
        p.heads = 2;
        assert!(layer_forward(&p, &random_tokens(1, 2, 6)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = full_random(8, 8, 2, 16);
        let z = random_tokens(9, 5, 8);
        let (g, dz) = layer_backward(&p, &z, &DMatrix::zeros(5, 8)).unwrap();
        assert!(g.tensors().iter().all(|(_, _, t)| t.iter().all(|v| *v == 0.0)));
        assert!(dz.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn softmax_backward_matches_jacobian() {
        // Three tokens: J = diag(p) - p p^T, so dS = J dP and the entries sum to zero.
        let p = [0.2, 0.5, 0.3];
        let dp = [1.0, -2.0, 0.5];
        let got = softmax_backward(&p, &dp);
        for i in 0..3 {
            let want: f64 = (0..3).map(|j| (if i == j { p[i] } else { 0.0 } - p[i] * p[j]) * dp[j]).sum();
            assert!((got[i] - want).abs() < 1e-15);
        }
        // <p, dp> = 0.2 - 1.0 + 0.15 = -0.65.
        assert!((got[0] - 0.2 * 1.65).abs() < 1e-15);
        assert!((got[1] - 0.5 * -1.35).abs() < 1e-15);
        assert!((got[2] - 0.3 * 1.15).abs() < 1e-15);
        assert!(got.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = full_random(10, 8, 2, 12);
        let z = random_tokens(11, 5, 8);
        let up = random_tokens(12, 5, 8);
        let loss = |p: &LayerParams, z: &DMatrix<f64>| layer_forward(p, z).unwrap().dot(&up);
        let (g, dz) = layer_backward(&p, &z, &up).unwrap();
        let mut rng = seeded_rng(13);
        let h = 1e-5;
        for _ in 0..120 {
            let t = rng.random_range(0..16);
            let len = p.tensors()[t].2.len();
            let i = rng.random_range(0..len);
            let (mut plus, mut minus) = (p.clone(), p.clone());
            plus.tensors_mut()[t][i] += h;
            minus.tensors_mut()[t][i] -= h;
            let fd = (loss(&plus, &z) - loss(&minus, &z)) / (2.0 * h);
            let an = g.tensors()[t].2[i];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            assert!(rel < 1e-4 || (fd - an).abs() < 1e-9, "{}[{i}]: fd {fd} analytic {an}", LAYER_TENSOR_NAMES[t]);
        }
        for _ in 0..20 {
            let (r, c) = (rng.random_range(0..5), rng.random_range(0..8));
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[(r, c)] += h;
            zm[(r, c)] -= h;
            let fd = (loss(&p, &zp) - loss(&p, &zm)) / (2.0 * h);
            assert!((fd - dz[(r, c)]).abs() / fd.abs().max(1e-8) < 1e-4);
        }
    }
}
