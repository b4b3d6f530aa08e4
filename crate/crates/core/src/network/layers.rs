//! Differentiable building blocks. Each block has an `init_*` function that
//! registers its parameters under a name prefix and a forward function that
//! reads them back from a [`Bound`] store.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{concat, Bound, ParamStore, Tensor, Var};

/// Seeded parameter registration: weights uniform in ±1/sqrt(fan_in), biases zero.
pub struct Init {
    store: ParamStore,
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn finish(self) -> ParamStore {
        self.store
    }

    fn uniform(&mut self, name: String, rows: usize, cols: usize, fan_in: usize) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| self.rng.random_range(-bound..=bound))
            .collect();
        self.store
            .insert(name, Tensor::matrix(rows, cols, data).expect("sized by construction"));
    }

    fn constant(&mut self, name: String, rows: usize, cols: usize, value: f64) {
        self.store.insert(name, Tensor::full(rows, cols, value));
    }

    pub fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) {
        self.uniform(format!("{prefix}.w"), fan_in, fan_out, fan_in);
        self.constant(format!("{prefix}.b"), 1, fan_out, 0.0);
    }

    pub fn layer_norm(&mut self, prefix: &str, d: usize) {
        self.constant(format!("{prefix}.gamma"), 1, d, 1.0);
        self.constant(format!("{prefix}.beta"), 1, d, 0.0);
    }

    pub fn attention(&mut self, prefix: &str, d: usize) {
        for part in ["q", "k", "v", "o"] {
            self.linear(&format!("{prefix}.{part}"), d, d);
        }
    }

    pub fn transformer_layer(&mut self, prefix: &str, d: usize) {
        self.layer_norm(&format!("{prefix}.ln1"), d);
        self.attention(&format!("{prefix}.attn"), d);
        self.layer_norm(&format!("{prefix}.ln2"), d);
        self.linear(&format!("{prefix}.ffn.up"), d, 4 * d);
        self.linear(&format!("{prefix}.ffn.down"), 4 * d, d);
    }

    pub fn bilstm_layer(&mut self, prefix: &str, d: usize, hidden: usize) {
        for dir in ["fwd", "bwd"] {
            self.uniform(format!("{prefix}.{dir}.wx"), d, 4 * hidden, d);
            self.uniform(format!("{prefix}.{dir}.wh"), hidden, 4 * hidden, hidden);
            self.constant(format!("{prefix}.{dir}.b"), 1, 4 * hidden, 0.0);
        }
    }

    pub fn attention_pool(&mut self, prefix: &str, d: usize) {
        self.uniform(format!("{prefix}.query"), 1, d, d);
    }

    pub fn mlp_head(&mut self, prefix: &str, d_in: usize, d_hidden: usize, d_out: usize) {
        self.linear(&format!("{prefix}.fc1"), d_in, d_hidden);
        self.linear(&format!("{prefix}.fc2"), d_hidden, d_out);
    }
}

/// `x · W + b`.
pub fn linear<'t>(p: &Bound<'t, '_>, prefix: &str, x: Var<'t>) -> Result<Var<'t>> {
    x.matmul(p.get(&format!("{prefix}.w"))?)?
        .add_row(p.get(&format!("{prefix}.b"))?)
}

/// Row-wise layer normalization with learned scale and shift.
pub fn layer_norm<'t>(p: &Bound<'t, '_>, prefix: &str, x: Var<'t>) -> Result<Var<'t>> {
    x.layernorm()?
        .mul_row(p.get(&format!("{prefix}.gamma"))?)?
        .add_row(p.get(&format!("{prefix}.beta"))?)
}

/// Multi-head scaled dot-product attention: queries from `query_src`, keys
/// and values from `kv_src`. Output has `query_src`'s row count.
pub fn multi_head_attention<'t>(
    p: &Bound<'t, '_>,
    prefix: &str,
    query_src: Var<'t>,
    kv_src: Var<'t>,
    n_heads: usize,
) -> Result<Var<'t>> {
    let d = query_src.dims().1;
    if kv_src.dims().1 != d {
        return Err(Error::shape(
            "attention",
            format!("query width {d} vs key/value width {}", kv_src.dims().1),
        ));
    }
    if n_heads == 0 || d % n_heads != 0 {
        return Err(Error::InvalidArgument(format!(
            "width {d} not divisible by {n_heads} heads"
        )));
    }
    let dh = d / n_heads;
    let q = linear(p, &format!("{prefix}.q"), query_src)?;
    let k = linear(p, &format!("{prefix}.k"), kv_src)?;
    let v = linear(p, &format!("{prefix}.v"), kv_src)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let heads = (0..n_heads)
        .map(|h| {
            let qh = q.slice_cols(h * dh, dh)?;
            let kh = k.slice_cols(h * dh, dh)?;
            let vh = v.slice_cols(h * dh, dh)?;
            let weights = qh.matmul(kh.transpose()?)?.scale(scale)?.softmax(1)?;
            weights.matmul(vh)
        })
        .collect::<Result<Vec<_>>>()?;
    let merged = if n_heads == 1 { heads[0] } else { concat(&heads, 1)? };
    linear(p, &format!("{prefix}.o"), merged)
}

/// Pre-norm self-attention block followed by a pre-norm ReLU feed-forward
/// block (`d → 4d → d`), each with a residual connection.
pub fn transformer_layer<'t>(
    p: &Bound<'t, '_>,
    prefix: &str,
    z: Var<'t>,
    n_heads: usize,
) -> Result<Var<'t>> {
    let normed = layer_norm(p, &format!("{prefix}.ln1"), z)?;
    let attn = multi_head_attention(p, &format!("{prefix}.attn"), normed, normed, n_heads)?;
    let h = z.add(attn)?;
    let normed = layer_norm(p, &format!("{prefix}.ln2"), h)?;
    let up = linear(p, &format!("{prefix}.ffn.up"), normed)?.relu()?;
    let down = linear(p, &format!("{prefix}.ffn.down"), up)?;
    h.add(down)
}

fn lstm_direction<'t>(
    p: &Bound<'t, '_>,
    prefix: &str,
    z: Var<'t>,
    hidden: usize,
    reverse: bool,
) -> Result<Vec<Var<'t>>> {
    let tape = z.tape();
    let t_len = z.dims().0;
    let wh = p.get(&format!("{prefix}.wh"))?;
    let projected = z
        .matmul(p.get(&format!("{prefix}.wx"))?)?
        .add_row(p.get(&format!("{prefix}.b"))?)?;
    let mut h = tape.constant(Tensor::zeros(1, hidden));
    let mut c = tape.constant(Tensor::zeros(1, hidden));
    let mut outputs = vec![None; t_len];
    let steps: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..t_len).rev())
    } else {
        Box::new(0..t_len)
    };
    for t in steps {
        let gates = projected.slice_rows(t, 1)?.add(h.matmul(wh)?)?;
        let i = gates.slice_cols(0, hidden)?.sigmoid()?;
        let f = gates.slice_cols(hidden, hidden)?.sigmoid()?;
        let g = gates.slice_cols(2 * hidden, hidden)?.tanh()?;
        let o = gates.slice_cols(3 * hidden, hidden)?.sigmoid()?;
        c = f.mul(c)?.add(i.mul(g)?)?;
        h = o.mul(c.tanh()?)?;
        outputs[t] = Some(h);
    }
    Ok(outputs.into_iter().map(|h| h.expect("every step visited")).collect())
}

/// Bidirectional LSTM; output row `t` is `[forward_t, backward_t]`.
pub fn bilstm_layer<'t>(
    p: &Bound<'t, '_>,
    prefix: &str,
    z: Var<'t>,
    hidden: usize,
) -> Result<Var<'t>> {
    let fwd = lstm_direction(p, &format!("{prefix}.fwd"), z, hidden, false)?;
    let bwd = lstm_direction(p, &format!("{prefix}.bwd"), z, hidden, true)?;
    concat(&[concat(&fwd, 0)?, concat(&bwd, 0)?], 1)
}

/// Text queries attend over audio keys and values.
pub fn cross_attention<'t>(
    p: &Bound<'t, '_>,
    prefix: &str,
    text: Var<'t>,
    audio: Var<'t>,
    n_heads: usize,
) -> Result<Var<'t>> {
    multi_head_attention(p, prefix, text, audio, n_heads)
}

/// Softmax-weighted sum of rows, weights from a learned query vector.
pub fn attention_pool<'t>(p: &Bound<'t, '_>, prefix: &str, seq: Var<'t>) -> Result<Var<'t>> {
    let query = p.get(&format!("{prefix}.query"))?;
    let weights = seq.matmul(query.transpose()?)?.softmax(0)?;
    weights.transpose()?.matmul(seq)
}

pub fn mean_pool(seq: Var<'_>) -> Result<Var<'_>> {
    seq.mean(0)
}

/// `linear → ReLU → linear`, raw outputs.
pub fn mlp_head<'t>(p: &Bound<'t, '_>, prefix: &str, v: Var<'t>) -> Result<Var<'t>> {
    let hidden = linear(p, &format!("{prefix}.fc1"), v)?.relu()?;
    linear(p, &format!("{prefix}.fc2"), hidden)
}

/// Sinusoidal position codes, `[t_len, d]`.
pub fn positional_codes(t_len: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(t_len * d);
    for t in 0..t_len {
        for i in 0..d {
            let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = t as f64 * freq;
            data.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::matrix(t_len, d, data).expect("sized by construction")
}
