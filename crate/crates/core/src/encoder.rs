//! Graph-convolution encoder, sigmoid-sum readout and projection head.
//!
//! All functions build on a [`Tape`] so the same code serves training and
//! inference. Row-vector convention throughout: a layer computes
//! `act(A_norm · X · W)` with one node per row.

use rand::SeedableRng;

use crate::augment::GraphView;
use crate::error::{Error, Result};
use crate::numerics::{Activation, Gradients, Matrix, Rng64, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub d_in: usize,
    pub hidden: Vec<usize>,
    /// Node representation size after the skip-concat projection.
    pub d: usize,
    /// Projection head output size.
    pub d_z: usize,
    pub activation: Activation,
    /// When false, only the last layer is projected to `d`.
    pub skip_concat: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_in: 64,
            hidden: vec![64, 64],
            d: 64,
            d_z: 32,
            activation: Activation::Relu,
            skip_concat: true,
        }
    }
}

impl EncoderConfig {
    /// Sizes used for full-scale parity runs.
    pub fn full_scale() -> Self {
        EncoderConfig {
            d_in: 1024,
            hidden: vec![1024, 1024],
            d: 1024,
            d_z: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.d_in == 0 || self.d == 0 || self.d_z == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("encoder dimensions must be >= 1".into()));
        }
        if !matches!(self.activation, Activation::Relu | Activation::Tanh) {
            return Err(Error::Config("encoder.activation must be relu or tanh".into()));
        }
        Ok(())
    }

    fn skip_rows(&self) -> usize {
        if self.skip_concat {
            self.hidden.iter().sum()
        } else {
            *self.hidden.last().expect("validated")
        }
    }
}

/// Learnable encoder state: a feature row per exercise, layer weights, the
/// skip-concat projection and a two-layer projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub features: Matrix,
    pub layers: Vec<Matrix>,
    pub skip: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl EncoderParams {
    /// Xavier-uniform weights, zero biases.
    pub fn init(cfg: &EncoderConfig, n_exercises: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng64::seed_from_u64(seed);
        let features = Matrix::xavier(n_exercises, cfg.d_in, &mut rng);
        let mut layers = Vec::with_capacity(cfg.hidden.len());
        let mut prev = cfg.d_in;
        for &h in &cfg.hidden {
            layers.push(Matrix::xavier(prev, h, &mut rng));
            prev = h;
        }
        Ok(EncoderParams {
            features,
            layers,
            skip: Matrix::xavier(cfg.skip_rows(), cfg.d, &mut rng),
            w1: Matrix::xavier(cfg.d, cfg.d, &mut rng),
            b1: Matrix::zeros(1, cfg.d),
            w2: Matrix::xavier(cfg.d, cfg.d_z, &mut rng),
            b2: Matrix::zeros(1, cfg.d_z),
        })
    }

    /// Stable tensor names used by checkpoints.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["features".to_string()];
        names.extend((0..self.layers.len()).map(|i| format!("layer{i}")));
        names.extend(["skip", "head.w1", "head.b1", "head.w2", "head.b2"].map(String::from));
        names
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut t = vec![&self.features];
        t.extend(self.layers.iter());
        t.extend([&self.skip, &self.w1, &self.b1, &self.w2, &self.b2]);
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut t = vec![&mut self.features];
        t.extend(self.layers.iter_mut());
        t.extend([&mut self.skip, &mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]);
        t
    }

    /// Rebuilds from tensors in [`EncoderParams::tensors`] order.
    pub fn from_tensors(mut t: Vec<Matrix>) -> Result<Self> {
        if t.len() < 6 {
            return Err(Error::Checkpoint("encoder needs at least 6 tensors".into()));
        }
        let head = t.split_off(t.len() - 5);
        let features = t.remove(0);
        let [skip, w1, b1, w2, b2]: [Matrix; 5] = head.try_into().expect("five");
        Ok(EncoderParams { features, layers: t, skip, w1, b1, w2, b2 })
    }

    /// Puts the parameters on `tape`. Only the feature rows listed in
    /// `exercises` are bound; `trainable` selects var vs constant leaves.
    pub fn bind(&self, tape: &mut Tape, exercises: &[usize], trainable: bool) -> Result<BoundEncoder> {
        let n = self.features.rows();
        let mut row_of = vec![usize::MAX; n];
        for (r, &e) in exercises.iter().enumerate() {
            if e >= n {
                return Err(Error::Lookup { kind: "exercise", id: e.to_string() });
            }
            row_of[e] = r;
        }
        let mut leaf = |m: &Matrix| if trainable { tape.var(m.clone()) } else { tape.constant(m.clone()) };
        Ok(BoundEncoder {
            features: leaf(&self.features.select_rows(exercises)),
            layers: self.layers.iter().map(&mut leaf).collect(),
            skip: leaf(&self.skip),
            w1: leaf(&self.w1),
            b1: leaf(&self.b1),
            w2: leaf(&self.w2),
            b2: leaf(&self.b2),
            exercises: exercises.to_vec(),
            row_of,
        })
    }
}

/// Encoder parameters placed on a tape.
#[derive(Debug, Clone)]
pub struct BoundEncoder {
    pub features: Var,
    pub layers: Vec<Var>,
    pub skip: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    exercises: Vec<usize>,
    row_of: Vec<usize>,
}

impl BoundEncoder {
    fn feature_rows(&self, exercises: &[usize]) -> Result<Vec<usize>> {
        exercises
            .iter()
            .map(|&e| match self.row_of.get(e) {
                Some(&r) if r != usize::MAX => Ok(r),
                _ => Err(Error::Lookup { kind: "bound exercise", id: e.to_string() }),
            })
            .collect()
    }

    /// Gradients in [`EncoderParams::tensors`] order; feature gradients are
    /// scattered back into a full-size table.
    pub fn gradients(&self, grads: &Gradients, params: &EncoderParams) -> Vec<Matrix> {
        let partial = grads.wrt(self.features);
        let mut features = Matrix::zeros(params.features.rows(), params.features.cols());
        for (r, &e) in self.exercises.iter().enumerate() {
            for (dst, src) in features.row_mut(e).iter_mut().zip(partial.row(r)) {
                *dst += src;
            }
        }
        let mut out = vec![features];
        out.extend(self.layers.iter().map(|v| grads.wrt(*v)));
        out.extend([self.skip, self.w1, self.b1, self.w2, self.b2].map(|v| grads.wrt(v)));
        out
    }
}

/// One graph convolution: `act(A_norm · X · W)`.
pub fn gc_layer(tape: &mut Tape, x: Var, a_norm: Var, w: Var, act: Activation) -> Result<Var> {
    let ax = tape.matmul(a_norm, x)?;
    let pre = tape.matmul(ax, w)?;
    Ok(tape.activate(pre, act))
}

#[derive(Debug, Clone)]
pub struct NodeEncoding {
    /// Output of each convolution layer.
    pub layers: Vec<Var>,
    /// Node representations, `n x d`.
    pub h: Var,
}

/// Runs the stacked convolutions over a view and projects the (concatenated)
/// layer outputs to node representations.
pub fn encode_nodes(tape: &mut Tape, view: &GraphView, enc: &BoundEncoder, cfg: &EncoderConfig) -> Result<NodeEncoding> {
    if view.n() == 0 {
        return Err(Error::Contract("cannot encode an empty view".into()));
    }
    let rows = enc.feature_rows(&view.exercises)?;
    let mut x = tape.gather_rows(enc.features, &rows)?;
    if view.feature_mask.iter().any(|k| !k) {
        x = tape.mul_const(x, view.mask_matrix())?;
    }
    let a = tape.constant(view.adjacency.clone());
    let mut layers = Vec::with_capacity(enc.layers.len());
    for &w in &enc.layers {
        x = gc_layer(tape, x, a, w, cfg.activation)?;
        layers.push(x);
    }
    let stacked = if cfg.skip_concat {
        tape.concat_cols(&layers)?
    } else {
        *layers.last().expect("at least one layer")
    };
    let h = tape.matmul(stacked, enc.skip)?;
    Ok(NodeEncoding { layers, h })
}

/// `sigmoid` of the column sums of `h`: one `1 x d` row per graph.
pub fn readout(tape: &mut Tape, h: Var) -> Var {
    let s = tape.sum_rows(h);
    tape.sigmoid(s)
}

/// Projection head `relu(h W1 + b1) W2 + b2`, applied row-wise.
pub fn project(tape: &mut Tape, h: Var, enc: &BoundEncoder) -> Result<Var> {
    let a = tape.matmul(h, enc.w1)?;
    let a = tape.add_row(a, enc.b1)?;
    let a = tape.relu(a);
    let z = tape.matmul(a, enc.w2)?;
    tape.add_row(z, enc.b2)
}
