//! Self-attention over all spatial positions of a feature map.
//!
//! With `X` the `C × N` matrix of one sample (`N = H·W`), `Q = W_q X + b_q`,
//! `K = W_k X + b_k`, `V = W_v X + b_v`, `A = softmax_rows(Qᵀ K)` and the
//! output is `X + γ · V Aᵀ`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::layers::init_weights;
use crate::tensor::{gemm, Tensor4};

#[derive(Clone, Debug, PartialEq)]
pub struct SelfAttention {
    pub query: Tensor4,
    pub query_bias: Vec<f64>,
    pub key: Tensor4,
    pub key_bias: Vec<f64>,
    pub value: Tensor4,
    pub value_bias: Vec<f64>,
    pub gamma: f64,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    input: Tensor4,
    samples: Vec<SampleCache>,
}

#[derive(Clone, Debug)]
struct SampleCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,
    agg: Vec<f64>,
}

impl AttentionCache {
    /// Row-stochastic `N × N` attention matrix of sample `n`.
    pub fn attention(&self, n: usize) -> &[f64] {
        &self.samples[n].attn
    }
}

#[derive(Clone, Debug)]
pub struct AttentionGrads {
    pub input: Tensor4,
    pub query: Tensor4,
    pub query_bias: Vec<f64>,
    pub key: Tensor4,
    pub key_bias: Vec<f64>,
    pub value: Tensor4,
    pub value_bias: Vec<f64>,
    pub gamma: f64,
}

/// Query/key width for `channels` input channels.
pub fn projection_width(channels: usize) -> usize {
    (channels / 8).max(1)
}

/// `W X + b` for a `rows × c` projection of a `c × npos` sample.
fn project(w: &Tensor4, b: &[f64], x: &[f64], c: usize, npos: usize) -> Vec<f64> {
    let rows = b.len();
    let mut out = vec![0.0; rows * npos];
    for (r, row) in out.chunks_mut(npos).enumerate() {
        row.fill(b[r]);
    }
    gemm((rows, c, npos), w.data(), false, x, false, 1.0, &mut out);
    out
}

impl SelfAttention {
    pub fn new(channels: usize, gamma: f64, rng: &mut impl Rng) -> Self {
        let cq = projection_width(channels);
        Self {
            query: init_weights([cq, channels, 1, 1], rng),
            query_bias: vec![0.0; cq],
            key: init_weights([cq, channels, 1, 1], rng),
            key_bias: vec![0.0; cq],
            value: init_weights([channels, channels, 1, 1], rng),
            value_bias: vec![0.0; channels],
            gamma,
        }
    }

    pub fn channels(&self) -> usize {
        self.value.batch()
    }

    pub fn param_count(&self) -> usize {
        self.query.len() + self.query_bias.len() + self.key.len() + self.key_bias.len() + self.value.len()
            + self.value_bias.len()
            + 1
    }

    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, AttentionCache)> {
        let [n, c, h, w] = x.shape();
        if c != self.channels() {
            return Err(Error::shape(format!(
                "attention expects {} channels, got {c}",
                self.channels()
            )));
        }
        let npos = h * w;
        let cq = self.query_bias.len();
        let samples: Vec<SampleCache> = (0..n)
            .into_par_iter()
            .map(|s| {
                let xs = x.sample(s);
                let q = project(&self.query, &self.query_bias, xs, c, npos);
                let k = project(&self.key, &self.key_bias, xs, c, npos);
                let v = project(&self.value, &self.value_bias, xs, c, npos);
                let mut attn = vec![0.0; npos * npos];
                gemm((npos, cq, npos), &q, true, &k, false, 0.0, &mut attn);
                for row in attn.chunks_mut(npos.max(1)) {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= sum);
                }
                let mut agg = vec![0.0; c * npos];
                gemm((c, npos, npos), &v, false, &attn, true, 0.0, &mut agg);
                SampleCache { q, k, v, attn, agg }
            })
            .collect();
        let mut out = x.clone();
        for (s, cache) in samples.iter().enumerate() {
            for (o, a) in out.sample_mut(s).iter_mut().zip(&cache.agg) {
                *o += self.gamma * a;
            }
        }
        Ok((
            out,
            AttentionCache {
                input: x.clone(),
                samples,
            },
        ))
    }

    pub fn backward(&self, cache: &AttentionCache, grad: &Tensor4) -> Result<AttentionGrads> {
        let x = &cache.input;
        grad.expect_same_shape(x, "attention gradient")?;
        let [n, c, h, w] = x.shape();
        let npos = h * w;
        let cq = self.query_bias.len();

        let per_sample: Vec<AttentionGrads> = (0..n)
            .into_par_iter()
            .map(|s| {
                let sc = &cache.samples[s];
                let xs = x.sample(s);
                let g = grad.sample(s);
                let gamma_grad: f64 = g.iter().zip(&sc.agg).map(|(a, b)| a * b).sum();
                let d_agg: Vec<f64> = g.iter().map(|v| self.gamma * v).collect();

                let mut dv = vec![0.0; c * npos];
                gemm((c, npos, npos), &d_agg, false, &sc.attn, false, 0.0, &mut dv);
                let mut ds = vec![0.0; npos * npos];
                gemm((npos, c, npos), &d_agg, true, &sc.v, false, 0.0, &mut ds);
                // softmax backward, row by row
                for (drow, arow) in ds.chunks_mut(npos.max(1)).zip(sc.attn.chunks(npos.max(1))) {
                    let dot: f64 = drow.iter().zip(arow).map(|(d, a)| d * a).sum();
                    for (d, a) in drow.iter_mut().zip(arow) {
                        *d = a * (*d - dot);
                    }
                }
                let mut dq = vec![0.0; cq * npos];
                gemm((cq, npos, npos), &sc.k, false, &ds, true, 0.0, &mut dq);
                let mut dk = vec![0.0; cq * npos];
                gemm((cq, npos, npos), &sc.q, false, &ds, false, 0.0, &mut dk);

                let mut dx = g.to_vec();
                let mut proj_grads = Vec::with_capacity(3);
                for (wt, dp, rows) in [(&self.query, &dq, cq), (&self.key, &dk, cq), (&self.value, &dv, c)] {
                    let mut dw = vec![0.0; rows * c];
                    gemm((rows, npos, c), dp, false, xs, true, 0.0, &mut dw);
                    let db: Vec<f64> = dp.chunks(npos.max(1)).map(|r| r.iter().sum()).collect();
                    gemm((c, rows, npos), wt.data(), true, dp, false, 1.0, &mut dx);
                    proj_grads.push((dw, db));
                }
                let mut it = proj_grads.into_iter();
                let (qw, qb) = it.next().expect("query");
                let (kw, kb) = it.next().expect("key");
                let (vw, vb) = it.next().expect("value");
                AttentionGrads {
                    input: Tensor4::new([1, c, h, w], dx).expect("sample shape"),
                    query: Tensor4::new(self.query.shape(), qw).expect("query shape"),
                    query_bias: qb,
                    key: Tensor4::new(self.key.shape(), kw).expect("key shape"),
                    key_bias: kb,
                    value: Tensor4::new(self.value.shape(), vw).expect("value shape"),
                    value_bias: vb,
                    gamma: gamma_grad,
                }
            })
            .collect();

        let inputs: Vec<Tensor4> = per_sample.iter().map(|g| g.input.clone()).collect();
        let mut total = AttentionGrads {
            input: Tensor4::stack(&inputs)?,
            query: Tensor4::zeros(self.query.shape()),
            query_bias: vec![0.0; cq],
            key: Tensor4::zeros(self.key.shape()),
            key_bias: vec![0.0; cq],
            value: Tensor4::zeros(self.value.shape()),
            value_bias: vec![0.0; c],
            gamma: 0.0,
        };
        for g in &per_sample {
            total.query.add_assign(&g.query)?;
            total.key.add_assign(&g.key)?;
            total.value.add_assign(&g.value)?;
            add_into(&mut total.query_bias, &g.query_bias);
            add_into(&mut total.key_bias, &g.key_bias);
            add_into(&mut total.value_bias, &g.value_bias);
            total.gamma += g.gamma;
        }
        Ok(total)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
        Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn closed_gate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let att = SelfAttention::new(8, 0.0, &mut rng);
        let x = random([2, 8, 3, 4], &mut rng);
        assert_eq!(att.forward(&x).unwrap().0, x);
    }

    #[test]
    fn single_position_adds_value_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut att = SelfAttention::new(4, 0.7, &mut rng);
        att.value_bias = vec![0.1, -0.2, 0.3, 0.0];
        let x = random([1, 4, 1, 1], &mut rng);
        let (out, cache) = att.forward(&x).unwrap();
        assert_eq!(cache.attention(0), &[1.0]);
        for o in 0..4 {
            let v: f64 = (0..4).map(|i| att.value.at(o, i, 0, 0) * x.data()[i]).sum::<f64>() + att.value_bias[o];
            assert!((out.data()[o] - (x.data()[o] + 0.7 * v)).abs() < 1e-14);
        }
    }

    #[test]
    fn rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let att = SelfAttention::new(4, 0.5, &mut rng);
        let x = random([1, 4, 5, 5], &mut rng);
        let (_, cache) = att.forward(&x).unwrap();
        for row in cache.attention(0).chunks(25) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let att = SelfAttention::new(8, 0.9, &mut rng);
        let x = random([1, 8, 1, 6], &mut rng);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let px = Tensor4::from_fn([1, 8, 1, 6], |_, c, _, i| x.at(0, c, 0, perm[i]));
        let (out, _) = att.forward(&x).unwrap();
        let (pout, _) = att.forward(&px).unwrap();
        for c in 0..8 {
            for i in 0..6 {
                assert!((pout.at(0, c, 0, i) - out.at(0, c, 0, perm[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let att = SelfAttention::new(8, 0.5, &mut rng);
        assert!(att.forward(&Tensor4::zeros([1, 4, 2, 2])).is_err());
    }
}
