//! The annotator network: tag embedding table, linear image projection into
//! the initial hidden state, a single LSTM layer, and the tag classifier.
//!
//! Gate weights act on the concatenation `[h_{t-1}; x_t]`, hidden part first.
//! Column `j < H` of a gate matrix multiplies `h_{t-1}[j]`, column `H + k`
//! multiplies `x_t[k]`. Checkpoints depend on this layout.

mod gradcheck;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{affine, hadamard, log_sum_exp, sigmoid, softmax, Matrix, SeededRng, Vector};
use crate::ordering::OrderedSequence;

pub use gradcheck::{compare_gradients, gradient_check, ArrayCheck, GradCheckOptions, GradCheckReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Vocabulary size, START/STOP excluded.
    pub tag_count: usize,
}

impl ModelConfig {
    pub fn new(feature_dim: usize, embed_dim: usize, hidden_dim: usize, tag_count: usize) -> Result<Self> {
        let cfg = ModelConfig {
            feature_dim,
            embed_dim,
            hidden_dim,
            tag_count,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("feature_dim", self.feature_dim),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("tag_count", self.tag_count),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Classifier width: every tag plus STOP.
    pub fn output_dim(&self) -> usize {
        self.tag_count + 1
    }

    /// Embedding row reserved for START.
    pub fn start_index(&self) -> usize {
        self.tag_count
    }

    /// Classifier output reserved for STOP.
    pub fn stop_index(&self) -> usize {
        self.tag_count
    }

    fn gate_cols(&self) -> usize {
        self.hidden_dim + self.embed_dim
    }
}

/// Every trainable array. [`Gradients`] reuses the type with the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    /// `(tag_count + 1) × D`; the last row embeds START.
    pub embed: Matrix,
    pub proj_w: Matrix,
    pub proj_b: Vector,
    pub forget_w: Matrix,
    pub forget_b: Vector,
    pub input_w: Matrix,
    pub input_b: Vector,
    pub output_w: Matrix,
    pub output_b: Vector,
    pub cell_w: Matrix,
    pub cell_b: Vector,
    pub cls_w: Matrix,
    pub cls_b: Vector,
}

/// `∂L/∂θ`, one array per parameter array.
pub type Gradients = Parameters;

/// Names of the parameter arrays, in the order [`Parameters::arrays`] yields them.
pub const PARAM_NAMES: [&str; 13] = [
    "embed", "proj_w", "proj_b", "forget_w", "forget_b", "input_w", "input_b", "output_w",
    "output_b", "cell_w", "cell_b", "cls_w", "cls_b",
];

impl Parameters {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (h, gc) = (config.hidden_dim, config.gate_cols());
        Parameters {
            embed: Matrix::zeros(config.tag_count + 1, config.embed_dim),
            proj_w: Matrix::zeros(h, config.feature_dim),
            proj_b: vec![0.0; h],
            forget_w: Matrix::zeros(h, gc),
            forget_b: vec![0.0; h],
            input_w: Matrix::zeros(h, gc),
            input_b: vec![0.0; h],
            output_w: Matrix::zeros(h, gc),
            output_b: vec![0.0; h],
            cell_w: Matrix::zeros(h, gc),
            cell_b: vec![0.0; h],
            cls_w: Matrix::zeros(config.output_dim(), h),
            cls_b: vec![0.0; config.output_dim()],
        }
    }

    /// Glorot-uniform weights, zero biases except the forget gate (1.0), and
    /// embeddings uniform in ±0.08.
    pub fn init(config: &ModelConfig, rng: &mut SeededRng) -> Self {
        let glorot = |rows: usize, cols: usize, rng: &mut SeededRng| {
            Matrix::uniform(rows, cols, (6.0 / (rows + cols) as f64).sqrt(), rng)
        };
        let (h, gc) = (config.hidden_dim, config.gate_cols());
        let mut p = Parameters::zeros(config);
        p.embed = Matrix::uniform(config.tag_count + 1, config.embed_dim, 0.08, rng);
        p.proj_w = glorot(h, config.feature_dim, rng);
        p.forget_w = glorot(h, gc, rng);
        p.input_w = glorot(h, gc, rng);
        p.output_w = glorot(h, gc, rng);
        p.cell_w = glorot(h, gc, rng);
        p.cls_w = glorot(config.output_dim(), h, rng);
        p.forget_b = vec![1.0; h];
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, values) in z.arrays_mut() {
            values.fill(0.0);
        }
        z
    }

    /// `(name, (rows, cols), values)` for every array; biases are `(n, 1)`.
    pub fn arrays(&self) -> [(&'static str, (usize, usize), &[f64]); 13] {
        let m = |m: &Matrix| m.shape();
        let v = |v: &Vector| (v.len(), 1);
        [
            (PARAM_NAMES[0], m(&self.embed), self.embed.as_slice()),
            (PARAM_NAMES[1], m(&self.proj_w), self.proj_w.as_slice()),
            (PARAM_NAMES[2], v(&self.proj_b), &self.proj_b),
            (PARAM_NAMES[3], m(&self.forget_w), self.forget_w.as_slice()),
            (PARAM_NAMES[4], v(&self.forget_b), &self.forget_b),
            (PARAM_NAMES[5], m(&self.input_w), self.input_w.as_slice()),
            (PARAM_NAMES[6], v(&self.input_b), &self.input_b),
            (PARAM_NAMES[7], m(&self.output_w), self.output_w.as_slice()),
            (PARAM_NAMES[8], v(&self.output_b), &self.output_b),
            (PARAM_NAMES[9], m(&self.cell_w), self.cell_w.as_slice()),
            (PARAM_NAMES[10], v(&self.cell_b), &self.cell_b),
            (PARAM_NAMES[11], m(&self.cls_w), self.cls_w.as_slice()),
            (PARAM_NAMES[12], v(&self.cls_b), &self.cls_b),
        ]
    }

    pub fn arrays_mut(&mut self) -> [(&'static str, &mut [f64]); 13] {
        [
            (PARAM_NAMES[0], self.embed.as_mut_slice()),
            (PARAM_NAMES[1], self.proj_w.as_mut_slice()),
            (PARAM_NAMES[2], &mut self.proj_b),
            (PARAM_NAMES[3], self.forget_w.as_mut_slice()),
            (PARAM_NAMES[4], &mut self.forget_b),
            (PARAM_NAMES[5], self.input_w.as_mut_slice()),
            (PARAM_NAMES[6], &mut self.input_b),
            (PARAM_NAMES[7], self.output_w.as_mut_slice()),
            (PARAM_NAMES[8], &mut self.output_b),
            (PARAM_NAMES[9], self.cell_w.as_mut_slice()),
            (PARAM_NAMES[10], &mut self.cell_b),
            (PARAM_NAMES[11], self.cls_w.as_mut_slice()),
            (PARAM_NAMES[12], &mut self.cls_b),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.arrays().iter().map(|(_, _, v)| v.len()).sum()
    }

    /// Checks every array shape against `config`.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = Parameters::zeros(config);
        for ((name, want, _), (_, got, _)) in expected.arrays().iter().zip(self.arrays().iter()) {
            if want != got {
                return Err(Error::Dimension {
                    context: "parameter array",
                    expected: format!("{name} {}x{}", want.0, want.1),
                    actual: format!("{name} {}x{}", got.0, got.1),
                });
            }
        }
        Ok(())
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Parameters, scale: f64) {
        for ((_, dst), (_, _, src)) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, values) in self.arrays_mut() {
            values.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.arrays().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }
}

/// Intermediates of one time step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub input_index: usize,
    /// `[h_{t-1}; x_t]`.
    pub gate_input: Vector,
    pub c_prev: Vector,
    pub forget: Vector,
    pub input: Vector,
    pub output: Vector,
    pub candidate: Vector,
    pub c: Vector,
    pub tanh_c: Vector,
    pub h: Vector,
    /// Inverted-dropout mask applied to `h` before the classifier.
    pub mask: Option<Vector>,
    pub scores: Vector,
    pub probs: Vector,
}

impl StepCache {
    pub fn h_prev(&self) -> &[f64] {
        &self.gate_input[..self.h.len()]
    }

    pub fn x(&self) -> &[f64] {
        &self.gate_input[self.h.len()..]
    }
}

pub fn embed_tag(params: &Parameters, config: &ModelConfig, index: usize) -> Result<Vector> {
    if index > config.start_index() || index >= params.embed.rows() {
        return Err(Error::Index {
            context: "embedding table (tags and START)",
            index,
            limit: config.start_index() + 1,
        });
    }
    Ok(params.embed.row(index).to_vec())
}

/// Initial hidden state `h_0 = W_p·feature + b_p`.
pub fn project_image(params: &Parameters, feature: &[f64]) -> Result<Vector> {
    if feature.len() != params.proj_w.cols() {
        return Err(Error::dims("image feature", params.proj_w.cols(), feature.len()));
    }
    affine(&params.proj_w, feature, &params.proj_b)
}

/// One LSTM step. The returned cache holds `h_t` and `c_t` as `h` and `c`;
/// `scores`, `probs` and `mask` are left empty for [`score_tags`] to fill.
pub fn lstm_step(params: &Parameters, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> Result<StepCache> {
    let hidden = params.forget_b.len();
    if h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(Error::dims(
            "lstm state",
            format!("h and c of length {hidden}"),
            format!("h {}, c {}", h_prev.len(), c_prev.len()),
        ));
    }
    let mut gate_input = Vec::with_capacity(h_prev.len() + x.len());
    gate_input.extend_from_slice(h_prev);
    gate_input.extend_from_slice(x);

    let forget: Vector = affine(&params.forget_w, &gate_input, &params.forget_b)?
        .into_iter()
        .map(sigmoid)
        .collect();
    let input: Vector = affine(&params.input_w, &gate_input, &params.input_b)?
        .into_iter()
        .map(sigmoid)
        .collect();
    let output: Vector = affine(&params.output_w, &gate_input, &params.output_b)?
        .into_iter()
        .map(sigmoid)
        .collect();
    let candidate: Vector = affine(&params.cell_w, &gate_input, &params.cell_b)?
        .into_iter()
        .map(f64::tanh)
        .collect();

    let c: Vector = (0..hidden)
        .map(|j| forget[j] * c_prev[j] + input[j] * candidate[j])
        .collect();
    let tanh_c: Vector = c.iter().map(|v| v.tanh()).collect();
    let h = hadamard(&output, &tanh_c);
    Ok(StepCache {
        input_index: usize::MAX,
        gate_input,
        c_prev: c_prev.to_vec(),
        forget,
        input,
        output,
        candidate,
        c,
        tanh_c,
        h,
        mask: None,
        scores: Vec::new(),
        probs: Vec::new(),
    })
}

/// Tag scores `s = W_c·(h ⊙ mask) + b_c`; no mask at inference.
pub fn score_tags(params: &Parameters, h: &[f64], mask: Option<&[f64]>) -> Result<Vector> {
    match mask {
        Some(m) => {
            if m.len() != h.len() {
                return Err(Error::dims("dropout mask", h.len(), m.len()));
            }
            affine(&params.cls_w, &hadamard(h, m), &params.cls_b)
        }
        None => affine(&params.cls_w, h, &params.cls_b),
    }
}

/// Training-time dropout on the classifier input.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut SeededRng,
}

impl Dropout<'_> {
    /// Entries are 0 with probability `rate`, else `1 / (1 - rate)`.
    pub fn mask(&mut self, len: usize) -> Vector {
        let keep = 1.0 / (1.0 - self.rate);
        (0..len)
            .map(|_| if self.rng.uniform() < self.rate { 0.0 } else { keep })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Summed over time steps.
    pub loss: f64,
    pub steps: Vec<StepCache>,
}

/// Teacher-forced unroll over `target`, returning the summed cross-entropy.
pub fn sequence_forward(
    params: &Parameters,
    config: &ModelConfig,
    feature: &[f64],
    target: &OrderedSequence,
    mut dropout: Option<Dropout<'_>>,
) -> Result<ForwardPass> {
    target.validate(config.tag_count)?;
    if let Some(d) = &dropout {
        if !(0.0..1.0).contains(&d.rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", d.rate)));
        }
    }
    let mut h = project_image(params, feature)?;
    let mut c = vec![0.0; config.hidden_dim];
    let mut loss = 0.0;
    let mut steps = Vec::with_capacity(target.len());
    for (&x_index, &y) in target.inputs().iter().zip(target.targets()) {
        let x = embed_tag(params, config, x_index)?;
        let mut step = lstm_step(params, &h, &c, &x)?;
        step.input_index = x_index;
        step.mask = match dropout.as_mut() {
            Some(d) if d.rate > 0.0 => Some(d.mask(config.hidden_dim)),
            _ => None,
        };
        step.scores = score_tags(params, &step.h, step.mask.as_deref())?;
        step.probs = softmax(&step.scores);
        loss += log_sum_exp(&step.scores) - step.scores[y];
        h.clone_from(&step.h);
        c.clone_from(&step.c);
        steps.push(step);
    }
    Ok(ForwardPass { loss, steps })
}

/// Loss only, no dropout.
pub fn sequence_loss(
    params: &Parameters,
    config: &ModelConfig,
    feature: &[f64],
    target: &OrderedSequence,
) -> Result<f64> {
    Ok(sequence_forward(params, config, feature, target, None)?.loss)
}

/// Backpropagation through time for one sequence.
pub fn sequence_backward(
    params: &Parameters,
    config: &ModelConfig,
    steps: &[StepCache],
    feature: &[f64],
    target: &OrderedSequence,
) -> Result<Gradients> {
    let mut grads = Parameters::zeros(config);
    accumulate_backward(params, config, steps, feature, target, 1.0, &mut grads)?;
    Ok(grads)
}

/// Adds `scale · ∂L/∂θ` into `grads`.
pub fn accumulate_backward(
    params: &Parameters,
    config: &ModelConfig,
    steps: &[StepCache],
    feature: &[f64],
    target: &OrderedSequence,
    scale: f64,
    grads: &mut Gradients,
) -> Result<()> {
    let hidden = config.hidden_dim;
    if steps.len() != target.len() {
        return Err(Error::Sequence(format!(
            "{} cached steps for a target of length {}",
            steps.len(),
            target.len()
        )));
    }
    if feature.len() != config.feature_dim {
        return Err(Error::dims("image feature", config.feature_dim, feature.len()));
    }
    for (step, &x_index) in steps.iter().zip(target.inputs()) {
        if step.input_index != x_index || step.h.len() != hidden || step.probs.len() != config.output_dim() {
            return Err(Error::Sequence("cached steps do not match the target".into()));
        }
    }

    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    for (step, &y) in steps.iter().zip(target.targets()).rev() {
        // Softmax cross-entropy: ∂L/∂s = p - onehot(y).
        let mut ds: Vector = step.probs.iter().map(|p| p * scale).collect();
        ds[y] -= scale;

        let classifier_in = match &step.mask {
            Some(m) => hadamard(&step.h, m),
            None => step.h.clone(),
        };
        grads.cls_w.add_outer(&ds, &classifier_in);
        for (g, d) in grads.cls_b.iter_mut().zip(&ds) {
            *g += d;
        }
        let mut dh = params.cls_w.transpose_mul(&ds)?;
        if let Some(m) = &step.mask {
            dh.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
        }
        dh.iter_mut().zip(&dh_next).for_each(|(d, n)| *d += n);

        let mut dz_f = vec![0.0; hidden];
        let mut dz_i = vec![0.0; hidden];
        let mut dz_o = vec![0.0; hidden];
        let mut dz_g = vec![0.0; hidden];
        for j in 0..hidden {
            let (f, i, o, g, tc) = (
                step.forget[j],
                step.input[j],
                step.output[j],
                step.candidate[j],
                step.tanh_c[j],
            );
            let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
            dz_o[j] = dh[j] * tc * o * (1.0 - o);
            dz_f[j] = dc * step.c_prev[j] * f * (1.0 - f);
            dz_i[j] = dc * g * i * (1.0 - i);
            dz_g[j] = dc * i * (1.0 - g * g);
            dc_next[j] = dc * f;
        }

        let mut d_gate_input = vec![0.0; step.gate_input.len()];
        for (w, gw, gb, dz) in [
            (&params.forget_w, &mut grads.forget_w, &mut grads.forget_b, &dz_f),
            (&params.input_w, &mut grads.input_w, &mut grads.input_b, &dz_i),
            (&params.output_w, &mut grads.output_w, &mut grads.output_b, &dz_o),
            (&params.cell_w, &mut grads.cell_w, &mut grads.cell_b, &dz_g),
        ] {
            gw.add_outer(dz, &step.gate_input);
            gb.iter_mut().zip(dz.iter()).for_each(|(g, d)| *g += d);
            let back = w.transpose_mul(dz)?;
            d_gate_input.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
        }
        dh_next.copy_from_slice(&d_gate_input[..hidden]);
        let embed_row = grads.embed.row_mut(step.input_index);
        embed_row
            .iter_mut()
            .zip(&d_gate_input[hidden..])
            .for_each(|(g, d)| *g += d);
    }

    // h_0 is the image projection.
    grads.proj_w.add_outer(&dh_next, feature);
    grads.proj_b.iter_mut().zip(&dh_next).for_each(|(g, d)| *g += d);
    Ok(())
}

/// Small fully random problem (F=4, D=3, H=3, five tags, three-tag target)
/// used by the gradient check command and tests.
pub fn tiny_problem(seed: u64) -> (ModelConfig, Parameters, Vector, OrderedSequence) {
    let config = ModelConfig {
        feature_dim: 4,
        embed_dim: 3,
        hidden_dim: 3,
        tag_count: 5,
    };
    let mut rng = SeededRng::new(seed);
    let mut params = Parameters::zeros(&config);
    for (_, values) in params.arrays_mut() {
        values.iter_mut().for_each(|v| *v = rng.uniform_range(-0.8, 0.8));
    }
    let feature: Vector = (0..config.feature_dim).map(|_| rng.gaussian()).collect();
    let mut tags: Vec<usize> = (0..config.tag_count).collect();
    rng.shuffle(&mut tags);
    tags.truncate(3);
    let target = OrderedSequence::from_ordered_tags(&tags, config.tag_count)
        .expect("distinct in-range tags");
    (config, params, feature, target)
}

#[cfg(test)]
mod tests;
