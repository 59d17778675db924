//! Model assembly on the gradkit tape.

use super::{is_complex_param, tokenizer, Error, ModelConfig, ParamStore, Result};
use crate::gradkit::{NodeId, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::sync::Arc;

pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

/// Node handles the trainer needs from one forward pass.
pub struct ForwardOut {
    /// Predicted next state, `[N, n, n]`, in normalized space.
    pub prediction: NodeId,
    /// Mean-pooled h_mix (pre positional encoding), `[1, e]`; the
    /// alignment loss compares these against reference text features.
    pub pooled_mix: NodeId,
}

impl Model {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let params = init_params(&cfg);
        Ok(Self { cfg, params })
    }

    pub fn from_parts(cfg: ModelConfig, params: ParamStore) -> Result<Self> {
        cfg.validate()?;
        for (name, got) in expected_shapes(&cfg) {
            match params.get(&name) {
                Some(t) if t.shape() == got.as_slice() => {}
                Some(t) => {
                    return Err(Error::WeightMismatch(format!(
                        "{name}: expected {:?}, found {:?}",
                        got,
                        t.shape()
                    )))
                }
                None => return Err(Error::WeightMismatch(format!("missing parameter {name}"))),
            }
        }
        Ok(Self { cfg, params })
    }

    /// Replace only `body.*` parameters from a weight file; the model is
    /// left untouched if any entry mismatches.
    pub fn load_body_weights(&mut self, path: &Path) -> Result<()> {
        let loaded = super::load_params(path)?;
        let mut staged: Vec<(String, Arc<Tensor>)> = Vec::new();
        let mut mismatches = Vec::new();
        for (name, current) in self.params.iter().filter(|(n, _)| n.starts_with("body.")) {
            match loaded.get(name) {
                Some(t) if t.shape() == current.shape() => staged.push((name.clone(), t.clone())),
                Some(t) => mismatches.push(format!(
                    "{name}: expected {:?}, file has {:?}",
                    current.shape(),
                    t.shape()
                )),
                None => mismatches.push(format!("{name}: missing from file")),
            }
        }
        if !mismatches.is_empty() {
            return Err(Error::WeightMismatch(mismatches.join("; ")));
        }
        for (name, t) in staged {
            self.params.insert(name, t);
        }
        Ok(())
    }

    /// Names of parameters trained during stage 1 (embedding network plus
    /// predictor); the transformer body stays frozen.
    pub fn stage1_trainable(&self) -> Vec<String> {
        self.params
            .keys()
            .filter(|n| !n.starts_with("body."))
            .cloned()
            .collect()
    }

    pub fn body_param_names(&self) -> Vec<String> {
        self.params
            .keys()
            .filter(|n| n.starts_with("body."))
            .cloned()
            .collect()
    }

    /// Full forward pass for one sample.
    pub fn forward(&self, tape: &mut Tape, input: &Tensor, metadata: &str) -> Result<ForwardOut> {
        let cfg = &self.cfg;
        let n = input.shape()[1];
        let c_in = cfg.input_channels();
        if input.shape() != [c_in, n, n] {
            return Err(Error::Config(format!(
                "input shape {:?} does not match [{c_in}, n, n]",
                input.shape()
            )));
        }
        let x = tape.constant(input.clone());
        let h_pde = self.embed_pde(tape, x, n)?;
        let h_meta = if cfg.use_metadata {
            let ids = tokenizer::tokenize(metadata, cfg.max_meta_len);
            let table = self.p(tape, "meta.embedding");
            Some(tape.embed(table, &ids)?)
        } else {
            None
        };
        let (h0, pooled_mix) = self.assemble(tape, h_meta, h_pde)?;
        let body_out = self.body_forward(tape, h0)?;
        let prediction = self.predict(tape, body_out, n)?;
        Ok(ForwardOut {
            prediction,
            pooled_mix,
        })
    }

    fn p(&self, tape: &mut Tape, name: &str) -> NodeId {
        tape.param(name, self.params[name].clone())
    }

    /// FNO stack and 1x1 projection: `[(N+d), n, n]` -> `[l, e]`.
    pub fn embed_pde(&self, tape: &mut Tape, x: NodeId, n: usize) -> Result<NodeId> {
        let cfg = &self.cfg;
        let c_in = cfg.input_channels();
        let x2 = tape.reshape(x, &[c_in, n * n])?;
        let lift_w = self.p(tape, "lift.w");
        let lift_b = self.p(tape, "lift.b");
        let mut h2 = tape.matmul(lift_w, x2)?;
        h2 = tape.add_col_vec(h2, lift_b)?;
        for layer in 0..cfg.fno_depth {
            let h3 = tape.reshape(h2, &[cfg.l, n, n])?;
            let w = self.p(tape, &format!("fno.{layer}.spectral"));
            let spec = tape.spectral_conv2d(h3, w, cfg.modes)?;
            let spec2 = tape.reshape(spec, &[cfg.l, n * n])?;
            let pw_w = self.p(tape, &format!("fno.{layer}.pw.w"));
            let pw_b = self.p(tape, &format!("fno.{layer}.pw.b"));
            let mut pw = tape.matmul(pw_w, h2)?;
            pw = tape.add_col_vec(pw, pw_b)?;
            let sum = tape.add(spec2, pw)?;
            h2 = tape.gelu(sum);
        }
        // Transpose, pointwise n^2 -> e, transpose back: [l, e].
        let ht = tape.transpose(h2)?;
        let proj_w = self.p(tape, "proj.w");
        let proj_b = self.p(tape, "proj.b");
        let mut he = tape.matmul(proj_w, ht)?;
        he = tape.add_col_vec(he, proj_b)?;
        Ok(tape.transpose(he)?)
    }

    /// Concatenate metadata and PDE tokens, add sinusoidal positions,
    /// apply the post-embedding layer norm. Returns the body input and the
    /// mean-pooled pre-encoding h_mix.
    pub fn assemble(&self, tape: &mut Tape, h_meta: Option<NodeId>, h_pde: NodeId) -> Result<(NodeId, NodeId)> {
        let cfg = &self.cfg;
        let h_mix = match h_meta {
            Some(m) => tape.concat(&[m, h_pde], 0)?,
            None => h_pde,
        };
        let seq = tape.value(h_mix).shape()[0];
        let pooled = tape.mean_axis(h_mix, 0)?;
        let pooled = tape.reshape(pooled, &[1, cfg.e])?;
        let pe = tape.constant(sinusoidal_positions(seq, cfg.e));
        let with_pe = tape.add(h_mix, pe)?;
        let ln = tape.layer_norm(with_pe, 1, cfg.layernorm_eps)?;
        let gain = self.p(tape, "embed_norm.gain");
        let bias = self.p(tape, "embed_norm.bias");
        let scaled = tape.mul_row_vec(ln, gain)?;
        let h0 = tape.add_row_vec(scaled, bias)?;
        Ok((h0, pooled))
    }

    /// Pre-layernorm transformer encoder stack with full bidirectional
    /// attention.
    pub fn body_forward(&self, tape: &mut Tape, mut h: NodeId) -> Result<NodeId> {
        let cfg = &self.cfg;
        let dk = cfg.e / cfg.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        for layer in 0..cfg.body_depth {
            let pre = format!("body.{layer}");
            let a = self.affine_norm(tape, h, &format!("{pre}.norm1"))?;
            let q = self.linear(tape, a, &format!("{pre}.attn.wq"), &format!("{pre}.attn.bq"))?;
            let k = self.linear(tape, a, &format!("{pre}.attn.wk"), &format!("{pre}.attn.bk"))?;
            let v = self.linear(tape, a, &format!("{pre}.attn.wv"), &format!("{pre}.attn.bv"))?;
            let mut heads = Vec::with_capacity(cfg.heads);
            for head in 0..cfg.heads {
                let (lo, hi) = (head * dk, (head + 1) * dk);
                let qh = tape.slice_cols(q, lo, hi)?;
                let kh = tape.slice_cols(k, lo, hi)?;
                let vh = tape.slice_cols(v, lo, hi)?;
                let kt = tape.transpose(kh)?;
                let scores = tape.matmul(qh, kt)?;
                let scaled = tape.scale(scores, scale);
                let attn = tape.softmax(scaled, 1)?;
                heads.push(tape.matmul(attn, vh)?);
            }
            let ctx = tape.concat(&heads, 1)?;
            let o = self.linear(tape, ctx, &format!("{pre}.attn.wo"), &format!("{pre}.attn.bo"))?;
            h = tape.add(h, o)?;

            let m = self.affine_norm(tape, h, &format!("{pre}.norm2"))?;
            let up = self.linear(tape, m, &format!("{pre}.mlp.w1"), &format!("{pre}.mlp.b1"))?;
            let act = tape.gelu(up);
            let down = self.linear(tape, act, &format!("{pre}.mlp.w2"), &format!("{pre}.mlp.b2"))?;
            h = tape.add(h, down)?;
        }
        Ok(h)
    }

    /// Mean over the sequence, linear map to `N * n^2`, reshape.
    pub fn predict(&self, tape: &mut Tape, h: NodeId, n: usize) -> Result<NodeId> {
        let cfg = &self.cfg;
        let pooled = tape.mean_axis(h, 0)?;
        let pooled = tape.reshape(pooled, &[1, cfg.e])?;
        let w = self.p(tape, "predictor.w");
        let b = self.p(tape, "predictor.b");
        let flat = tape.matmul(pooled, w)?;
        let flat = tape.add_row_vec(flat, b)?;
        Ok(tape.reshape(flat, &[cfg.n_quantities, n, n])?)
    }

    fn linear(&self, tape: &mut Tape, x: NodeId, w: &str, b: &str) -> Result<NodeId> {
        let w = self.p(tape, w);
        let b = self.p(tape, b);
        let y = tape.matmul(x, w)?;
        Ok(tape.add_row_vec(y, b)?)
    }

    fn affine_norm(&self, tape: &mut Tape, x: NodeId, prefix: &str) -> Result<NodeId> {
        let ln = tape.layer_norm(x, 1, self.cfg.layernorm_eps)?;
        let gain = self.p(tape, &format!("{prefix}.gain"));
        let bias = self.p(tape, &format!("{prefix}.bias"));
        let s = tape.mul_row_vec(ln, gain)?;
        Ok(tape.add_row_vec(s, bias)?)
    }
}

/// Fixed sinusoidal positional encoding, `[seq, e]`.
pub fn sinusoidal_positions(seq: usize, e: usize) -> Tensor {
    let mut t = Tensor::zeros(&[seq, e]);
    let d = t.data_mut();
    for pos in 0..seq {
        for i in 0..e / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / e as f64);
            d[pos * e + 2 * i] = (pos as f64 * freq).sin();
            d[pos * e + 2 * i + 1] = (pos as f64 * freq).cos();
        }
    }
    t
}

fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let c_in = cfg.input_channels();
    let ex = cfg.spectral_extent();
    let (l, e, n) = (cfg.l, cfg.e, cfg.n);
    let mut v: Vec<(String, Vec<usize>)> = vec![
        ("lift.w".into(), vec![l, c_in]),
        ("lift.b".into(), vec![l]),
        ("proj.w".into(), vec![e, n * n]),
        ("proj.b".into(), vec![e]),
        ("meta.embedding".into(), vec![cfg.vocab_size, e]),
        ("embed_norm.gain".into(), vec![e]),
        ("embed_norm.bias".into(), vec![e]),
        ("predictor.w".into(), vec![e, cfg.n_quantities * n * n]),
        ("predictor.b".into(), vec![cfg.n_quantities * n * n]),
    ];
    for i in 0..cfg.fno_depth {
        v.push((format!("fno.{i}.spectral"), vec![l, l, ex, ex, 2]));
        v.push((format!("fno.{i}.pw.w"), vec![l, l]));
        v.push((format!("fno.{i}.pw.b"), vec![l]));
    }
    for i in 0..cfg.body_depth {
        for w in ["wq", "wk", "wv", "wo"] {
            v.push((format!("body.{i}.attn.{w}"), vec![e, e]));
        }
        for b in ["bq", "bk", "bv", "bo"] {
            v.push((format!("body.{i}.attn.{b}"), vec![e]));
        }
        v.push((format!("body.{i}.norm1.gain"), vec![e]));
        v.push((format!("body.{i}.norm1.bias"), vec![e]));
        v.push((format!("body.{i}.norm2.gain"), vec![e]));
        v.push((format!("body.{i}.norm2.bias"), vec![e]));
        v.push((format!("body.{i}.mlp.w1"), vec![e, 4 * e]));
        v.push((format!("body.{i}.mlp.b1"), vec![4 * e]));
        v.push((format!("body.{i}.mlp.w2"), vec![4 * e, e]));
        v.push((format!("body.{i}.mlp.b2"), vec![e]));
    }
    v
}

fn init_params(cfg: &ModelConfig) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let mut store = ParamStore::new();
    let mut put = |store: &mut ParamStore, name: &str, t: Tensor| {
        store.insert(name.to_string(), Arc::new(t));
    };
    for (name, shape) in expected_shapes(cfg) {
        let t = if name.ends_with(".b")
            || name.ends_with("bias")
            || name.ends_with(".bq")
            || name.ends_with(".bk")
            || name.ends_with(".bv")
            || name.ends_with(".bo")
            || name.ends_with(".b1")
            || name.ends_with(".b2")
        {
            Tensor::zeros(&shape)
        } else if name.ends_with("gain") {
            Tensor::full(&shape, 1.0)
        } else if is_complex_param(&name) {
            // FNO-style uniform init scaled by 1/(c_in * c_out).
            let s = 1.0 / (cfg.l * cfg.l) as f64;
            Tensor::rand_uniform(&shape, 0.0, s, &mut rng)
        } else if name == "meta.embedding" {
            Tensor::rand_normal(&shape, 0.02, &mut rng)
        } else if name == "lift.w" {
            Tensor::rand_normal(&shape, (2.0 / cfg.input_channels() as f64).sqrt(), &mut rng)
        } else if name == "proj.w" {
            Tensor::rand_normal(&shape, 1.0 / cfg.n as f64, &mut rng)
        } else if name == "predictor.w" {
            Tensor::rand_normal(&shape, 1.0 / (cfg.e as f64).sqrt(), &mut rng)
        } else if name.contains(".mlp.w1") {
            Tensor::rand_normal(&shape, (2.0 / cfg.e as f64).sqrt(), &mut rng)
        } else if name.contains(".mlp.w2") {
            Tensor::rand_normal(&shape, (2.0 / (4 * cfg.e) as f64).sqrt(), &mut rng)
        } else if name.contains(".attn.w") {
            Tensor::rand_normal(&shape, 1.0 / (cfg.e as f64).sqrt(), &mut rng)
        } else if name.contains(".pw.w") {
            Tensor::rand_normal(&shape, (2.0 / cfg.l as f64).sqrt(), &mut rng)
        } else {
            Tensor::rand_normal(&shape, 0.02, &mut rng)
        };
        put(&mut store, &name, t);
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradkit::Tape;

    fn toy_cfg() -> ModelConfig {
        ModelConfig {
            l: 4,
            modes: 3,
            fno_depth: 2,
            e: 32,
            body_depth: 2,
            heads: 4,
            n: 16,
            init_seed: 11,
            max_meta_len: 24,
            ..Default::default()
        }
    }

    #[test]
    fn param_count_formula_matches_store() {
        for cfg in [toy_cfg(), ModelConfig::default()] {
            let model = Model::new(cfg.clone()).unwrap();
            let total: usize = model.params.values().map(|t| t.numel()).sum();
            assert_eq!(total, cfg.param_count(), "config {cfg:?}");
        }
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let model = Model::new(toy_cfg()).unwrap();
        let n = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = Tensor::rand_normal(&[6, n, n], 1.0, &mut rng);
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &input, "burgers nu=1.00000e-3").unwrap();
        assert_eq!(tape.value(out.prediction).shape(), &[4, n, n]);
        assert_eq!(tape.value(out.pooled_mix).shape(), &[1, 32]);
        let mut tape2 = Tape::new();
        let out2 = model.forward(&mut tape2, &input, "burgers nu=1.00000e-3").unwrap();
        assert_eq!(tape.value(out.prediction), tape2.value(out2.prediction));
    }

    #[test]
    fn metadata_off_reduces_sequence_to_l() {
        let mut cfg = toy_cfg();
        cfg.use_metadata = false;
        let model = Model::new(cfg).unwrap();
        let mut tape = Tape::new();
        let input = Tensor::zeros(&[6, 16, 16]);
        let x = tape.constant(input);
        let h_pde = model.embed_pde(&mut tape, x, 16).unwrap();
        let (h0, _) = model.assemble(&mut tape, None, h_pde).unwrap();
        assert_eq!(tape.value(h0).shape(), &[4, 32]);
    }

    #[test]
    fn metadata_on_extends_sequence() {
        let model = Model::new(toy_cfg()).unwrap();
        let meta = "advection beta=4.00000e-1";
        let ids = tokenizer::tokenize(meta, 24);
        let mut tape = Tape::new();
        let input = Tensor::zeros(&[6, 16, 16]);
        let x = tape.constant(input);
        let h_pde = model.embed_pde(&mut tape, x, 16).unwrap();
        let table = tape.param("meta.embedding", model.params["meta.embedding"].clone());
        let h_meta = tape.embed(table, &ids).unwrap();
        let (h0, _) = model.assemble(&mut tape, Some(h_meta), h_pde).unwrap();
        assert_eq!(tape.value(h0).shape(), &[ids.len() + 4, 32]);
    }

    #[test]
    fn positional_encoding_breaks_token_permutation() {
        // Swapping two PDE token rows and un-swapping the output must not
        // reproduce the unpermuted result; positions are really added.
        let model = Model::new(toy_cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = Tensor::rand_normal(&[4, 32], 1.0, &mut rng);
        let mut swapped = h.clone();
        for c in 0..32 {
            let tmp = swapped.data()[c];
            swapped.data_mut()[c] = swapped.data()[32 + c];
            swapped.data_mut()[32 + c] = tmp;
        }
        let mut tape = Tape::new();
        let a = tape.constant(h);
        let (out_a, _) = model.assemble(&mut tape, None, a).unwrap();
        let b = tape.constant(swapped);
        let (out_b, _) = model.assemble(&mut tape, None, b).unwrap();
        // Un-swap rows of out_b and compare.
        let va = tape.value(out_a).clone();
        let vb = tape.value(out_b).clone();
        let mut unswapped = vb.clone();
        for c in 0..32 {
            let tmp = unswapped.data()[c];
            unswapped.data_mut()[c] = unswapped.data()[32 + c];
            unswapped.data_mut()[32 + c] = tmp;
        }
        let diff: f64 = va
            .data()
            .iter()
            .zip(unswapped.data())
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-6, "positional encoding must break permutation symmetry");
    }

    #[test]
    fn assemble_rows_are_unit_variance_before_affine() {
        let model = Model::new(toy_cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Variance well above the layernorm eps so the eps bias stays
        // inside the 1e-6 tolerance.
        let h = Tensor::rand_normal(&[4, 32], 30.0, &mut rng);
        let mut tape = Tape::new();
        let hn = tape.constant(h);
        let pe = tape.constant(sinusoidal_positions(4, 32));
        let with_pe = tape.add(hn, pe).unwrap();
        let ln = tape.layer_norm(with_pe, 1, model.cfg.layernorm_eps).unwrap();
        for row in tape.value(ln).data().chunks(32) {
            let mean: f64 = row.iter().sum::<f64>() / 32.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 32.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_predictor_weights_give_constant_bias_field() {
        let mut model = Model::new(toy_cfg()).unwrap();
        let e = model.cfg.e;
        let nq = model.cfg.n_quantities;
        model
            .params
            .insert("predictor.w".into(), Arc::new(Tensor::zeros(&[e, nq * 256])));
        model
            .params
            .insert("predictor.b".into(), Arc::new(Tensor::full(&[nq * 256], 0.25)));
        let mut tape = Tape::new();
        let input = Tensor::zeros(&[6, 16, 16]);
        let out = model.forward(&mut tape, &input, "x").unwrap();
        for &v in tape.value(out.prediction).data() {
            assert_eq!(v, 0.25);
        }
    }

    #[test]
    fn spectral_path_resolution_transfer() {
        // The same FNO weights applied at n = 32 and n = 64 to the same
        // band-limited function agree at shared grid points.
        let cfg = toy_cfg();
        let model = Model::new(cfg.clone()).unwrap();
        let field = |n: usize| {
            let mut t = Tensor::zeros(&[cfg.l, n, n]);
            let d = t.data_mut();
            for ch in 0..cfg.l {
                for i in 0..n {
                    for j in 0..n {
                        let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
                        d[ch * n * n + i * n + j] = ((2.0 * std::f64::consts::PI
                            * (x + 2.0 * y))
                            .sin()
                            + ch as f64 * 0.1)
                            .cos();
                    }
                }
            }
            t
        };
        let run = |n: usize| {
            let mut tape = Tape::new();
            let x = tape.constant(field(n));
            let w = tape.param("w", model.params["fno.0.spectral"].clone());
            let y = tape.spectral_conv2d(x, w, cfg.modes).unwrap();
            tape.value(y).clone()
        };
        let coarse = run(32);
        let fine = run(64);
        for ch in 0..cfg.l {
            for i in 0..32 {
                for j in 0..32 {
                    let c = coarse.data()[ch * 32 * 32 + i * 32 + j];
                    let f = fine.data()[ch * 64 * 64 + (2 * i) * 64 + 2 * j];
                    assert!((c - f).abs() < 1e-6, "resolution transfer broke at {ch},{i},{j}");
                }
            }
        }
    }

    #[test]
    fn body_weight_load_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("body.upsw");
        let model = Model::new(toy_cfg()).unwrap();
        super::super::save_params(&path, &model.params).unwrap();

        let mut other = Model::new(ModelConfig {
            init_seed: 77,
            ..toy_cfg()
        })
        .unwrap();
        let before_embed = other.params["lift.w"].clone();
        other.load_body_weights(&path).unwrap();
        // Body now matches the saved model, embedder untouched.
        for name in other.body_param_names() {
            assert_eq!(other.params[&name], model.params[&name]);
        }
        assert_eq!(other.params["lift.w"], before_embed);

        // Mismatched config: error and the model is unmodified.
        let mut small = Model::new(ModelConfig {
            e: 16,
            heads: 4,
            ..toy_cfg()
        })
        .unwrap();
        let snapshot: Vec<Tensor> = small.params.values().map(|t| (**t).clone()).collect();
        let err = small.load_body_weights(&path).unwrap_err();
        assert!(err.to_string().contains("body."));
        for (t, s) in small.params.values().zip(&snapshot) {
            assert_eq!(&**t, s);
        }
    }

    #[test]
    fn forward_determinism_after_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("all.upsw");
        let model = Model::new(toy_cfg()).unwrap();
        super::super::save_params(&path, &model.params).unwrap();
        let loaded = Model::from_parts(toy_cfg(), super::super::load_params(&path).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let input = Tensor::rand_normal(&[6, 16, 16], 1.0, &mut rng);
        let mut t1 = Tape::new();
        let o1 = model.forward(&mut t1, &input, "m").unwrap();
        let mut t2 = Tape::new();
        let o2 = loaded.forward(&mut t2, &input, "m").unwrap();
        assert_eq!(t1.value(o1.prediction), t2.value(o2.prediction));
    }
}
