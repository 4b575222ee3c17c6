//! Graph-recurrent autoencoder for 20-frame 3D pose sequences.
//!
//! Each frame passes through two graph convolutions over the skeleton, the
//! flattened joint features drive an encoder LSTM, and the final hidden state
//! is the latent vector. A decoder LSTM starts from the encoder's final
//! `(h, c)` and is fed a zero frame followed by the encoded frames in reverse
//! order; each output is read out to joint features and mapped back to
//! coordinates by a second pair of graph convolutions.
//!
//! On the h36m17 tree `Â` has an exact zero eigenvalue, so `Â Z W` alone
//! cannot produce every pose. The last decoder layer therefore adds a
//! per-joint term: `Â Z W + Z W_self`.

mod adjacency;
mod checkpoint;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, JointMap, Pose3D, NUM_JOINTS, SEQ_LEN};
use crate::kinematics::{self, KinematicsError};
use crate::tensor::{Adam, Tape, Tensor, TensorError, Var};

pub use adjacency::{build_adjacency, with_self_loops, SkeletonAdjacency};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

pub const COORDS: usize = 3;

#[derive(Debug, Error)]
pub enum GraeError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint does not match its config: {0}")]
    CheckpointMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

pub type Result<T> = std::result::Result<T, GraeError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraeConfig {
    pub gcn_hidden: usize,
    pub gcn_out: usize,
    pub lstm_hidden: usize,
    pub seq_len: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Sequences per optimizer step; 0 means the whole dataset.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GraeConfig {
    fn default() -> Self {
        Self {
            gcn_hidden: 32,
            gcn_out: 16,
            lstm_hidden: 128,
            seq_len: SEQ_LEN,
            learning_rate: 1e-3,
            epochs: 300,
            batch_size: 0,
            seed: 0,
        }
    }
}

impl GraeConfig {
    pub fn latent_dim(&self) -> usize {
        self.lstm_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GraeError::Config(m.to_string()));
        if self.gcn_hidden == 0 || self.gcn_out == 0 || self.lstm_hidden == 0 {
            return bad("layer widths must be positive");
        }
        if self.seq_len < 2 {
            return bad("seq_len must be at least 2");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

const GATES: usize = 4;
/// Tensors per LSTM: input weights, recurrent weights and bias for each gate (i, f, g, o).
const LSTM_PARAMS: usize = 3 * GATES;

const ENC_GCN1: usize = 0;
const ENC_GCN2: usize = 1;
const ENC_LSTM: usize = 2;
const DEC_LSTM: usize = ENC_LSTM + LSTM_PARAMS;
const READOUT_W: usize = DEC_LSTM + LSTM_PARAMS;
const READOUT_B: usize = READOUT_W + 1;
const DEC_GCN1: usize = READOUT_B + 1;
const DEC_GCN2: usize = DEC_GCN1 + 1;
const DEC_SELF: usize = DEC_GCN2 + 1;
const NUM_PARAMS: usize = DEC_SELF + 1;

/// Encoder output for one sequence: `latent` is the final hidden state and
/// `cell` the final cell state handed to the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub latent: Vec<f64>,
    pub cell: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub clip_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraeModel {
    config: GraeConfig,
    adjacency: SkeletonAdjacency,
    params: Vec<Tensor>,
}

pub fn param_names() -> Vec<String> {
    let lstm = |prefix: &str| {
        let mut v = Vec::new();
        for kind in ["w_x", "w_h", "b"] {
            for gate in ["i", "f", "g", "o"] {
                v.push(format!("{prefix}.{kind}_{gate}"));
            }
        }
        v
    };
    let mut names = vec!["enc_gcn1".to_string(), "enc_gcn2".to_string()];
    names.extend(lstm("enc_lstm"));
    names.extend(lstm("dec_lstm"));
    names.extend(["readout.w", "readout.b", "dec_gcn1", "dec_gcn2", "dec_self"].map(String::from));
    names
}

fn param_shapes(c: &GraeConfig) -> Vec<Vec<usize>> {
    let feat = NUM_JOINTS * c.gcn_out;
    let h = c.lstm_hidden;
    let lstm = || {
        let mut v = Vec::new();
        v.extend((0..GATES).map(|_| vec![feat, h]));
        v.extend((0..GATES).map(|_| vec![h, h]));
        v.extend((0..GATES).map(|_| vec![h]));
        v
    };
    let mut shapes = vec![vec![COORDS, c.gcn_hidden], vec![c.gcn_hidden, c.gcn_out]];
    shapes.extend(lstm());
    shapes.extend(lstm());
    shapes.push(vec![h, feat]);
    shapes.push(vec![feat]);
    shapes.push(vec![c.gcn_out, c.gcn_hidden]);
    shapes.push(vec![c.gcn_hidden, COORDS]);
    shapes.push(vec![c.gcn_hidden, COORDS]);
    shapes
}

/// `ReLU(Â X W)` for each layer in turn. `x` is `[nodes, f_in]`.
pub fn gcn_forward(adj: &SkeletonAdjacency, x: &Tensor, layers: &[Tensor]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let a = tape.constant(vec![adj.nodes, adj.nodes], adj.a_hat.clone())?;
    let mut h = tape.leaf(x);
    for w in layers {
        let w = tape.leaf(w);
        h = gcn_layer(&mut tape, a, h, w, true)?;
    }
    Ok(Tensor::new(tape.shape(h).to_vec(), tape.value(h).to_vec())?)
}

fn gcn_layer(tape: &mut Tape, a: Var, x: Var, w: Var, relu: bool) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    let y = tape.block_matmul(a, xw)?;
    Ok(if relu { tape.relu(y)? } else { y })
}

fn lstm_step(tape: &mut Tape, p: &[Var], x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let mut gate = |g: usize| -> Result<Var> {
        let a = tape.matmul(x, p[g])?;
        let b = tape.matmul(h, p[GATES + g])?;
        let s = tape.add(a, b)?;
        Ok(tape.add_bias(s, p[2 * GATES + g])?)
    };
    let (zi, zf, zg, zo) = (gate(0)?, gate(1)?, gate(2)?, gate(3)?);
    let i = tape.sigmoid(zi)?;
    let f = tape.sigmoid(zf)?;
    let g = tape.tanh(zg)?;
    let o = tape.sigmoid(zo)?;
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next)?;
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// A forward pass over a batch, recorded on a tape.
struct Pass {
    tape: Tape,
    params: Vec<Var>,
    adj: Var,
    batch: usize,
    frames: Vec<Var>,
    features: Vec<Var>,
}

impl GraeModel {
    pub fn new(config: GraeConfig, joint_map: &JointMap) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(config, &joint_map.edges, &mut rng)
    }

    /// Uniform `±1/sqrt(fan_in)` weights, zero biases.
    pub fn with_rng(config: GraeConfig, edges: &[(usize, usize)], rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let adjacency = build_adjacency(NUM_JOINTS, edges)?;
        let mut params = Vec::with_capacity(NUM_PARAMS);
        for shape in param_shapes(&config) {
            let t = if shape.len() == 1 {
                Tensor::parameter(shape.clone(), vec![0.0; shape[0]])?
            } else {
                Tensor::uniform(shape.clone(), 1.0 / (shape[0] as f64).sqrt(), rng)?
            };
            params.push(t);
        }
        Ok(Self { config, adjacency, params })
    }

    pub(crate) fn from_parts(config: GraeConfig, adjacency: SkeletonAdjacency, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        if params.len() != expected.len() {
            return Err(GraeError::CheckpointMismatch(format!("expected {} parameter arrays, found {}", expected.len(), params.len())));
        }
        for ((p, shape), name) in params.iter().zip(&expected).zip(param_names()) {
            if p.shape() != shape.as_slice() {
                return Err(GraeError::CheckpointMismatch(format!("{name} has shape {:?}, config implies {shape:?}", p.shape())));
            }
        }
        if adjacency.nodes != NUM_JOINTS || adjacency.a_hat.len() != NUM_JOINTS * NUM_JOINTS {
            return Err(GraeError::CheckpointMismatch("adjacency is not 17 x 17".into()));
        }
        Ok(Self { config, adjacency, params })
    }

    pub fn config(&self) -> &GraeConfig {
        &self.config
    }

    pub fn adjacency(&self) -> &SkeletonAdjacency {
        &self.adjacency
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim()
    }

    fn check_seq(&self, seq: &[Pose3D]) -> Result<()> {
        if seq.len() != self.config.seq_len {
            return Err(GraeError::Contract(format!("sequence has {} frames, model expects {}", seq.len(), self.config.seq_len)));
        }
        Ok(())
    }

    /// Records the input frames and the encoder graph convolutions.
    fn begin(&self, batch: &[&[Pose3D]]) -> Result<Pass> {
        for seq in batch {
            self.check_seq(seq)?;
        }
        if batch.is_empty() {
            return Err(GraeError::Contract("empty batch".into()));
        }
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p)).collect();
        let adj = tape.constant(vec![NUM_JOINTS, NUM_JOINTS], self.adjacency.a_hat.clone())?;
        let b = batch.len();
        let feat = NUM_JOINTS * self.config.gcn_out;
        let mut frames = Vec::with_capacity(self.config.seq_len);
        let mut features = Vec::with_capacity(self.config.seq_len);
        for t in 0..self.config.seq_len {
            let data: Vec<f64> = batch.iter().flat_map(|s| s[t].joints.iter().flatten().copied()).collect();
            let x = tape.constant(vec![b * NUM_JOINTS, COORDS], data)?;
            let h1 = gcn_layer(&mut tape, adj, x, params[ENC_GCN1], true)?;
            let h2 = gcn_layer(&mut tape, adj, h1, params[ENC_GCN2], true)?;
            features.push(tape.reshape(h2, vec![b, feat])?);
            frames.push(x);
        }
        Ok(Pass { tape, params, adj, batch: b, frames, features })
    }

    fn run_encoder(&self, pass: &mut Pass) -> Result<(Var, Var)> {
        let h0 = pass.tape.zeros(vec![pass.batch, self.config.lstm_hidden])?;
        let (mut h, mut c) = (h0, h0);
        let p = pass.params[ENC_LSTM..ENC_LSTM + LSTM_PARAMS].to_vec();
        for t in 0..self.config.seq_len {
            (h, c) = lstm_step(&mut pass.tape, &p, pass.features[t], h, c)?;
        }
        Ok((h, c))
    }

    /// Decoder outputs in decoding order (reconstructions of frames T-1 .. 0).
    fn run_decoder(&self, pass: &mut Pass, h: Var, c: Var) -> Result<Vec<Var>> {
        let (b, t_len) = (pass.batch, self.config.seq_len);
        let feat = NUM_JOINTS * self.config.gcn_out;
        let p = pass.params[DEC_LSTM..DEC_LSTM + LSTM_PARAMS].to_vec();
        let (mut h, mut c) = (h, c);
        let mut outputs = Vec::with_capacity(t_len);
        for s in 0..t_len {
            let input = if s == 0 { pass.tape.zeros(vec![b, feat])? } else { pass.features[t_len - s] };
            (h, c) = lstm_step(&mut pass.tape, &p, input, h, c)?;
            let r = pass.tape.matmul(h, pass.params[READOUT_W])?;
            let r = pass.tape.add_bias(r, pass.params[READOUT_B])?;
            let r = pass.tape.reshape(r, vec![b * NUM_JOINTS, self.config.gcn_out])?;
            let y = gcn_layer(&mut pass.tape, pass.adj, r, pass.params[DEC_GCN1], true)?;
            let mixed = gcn_layer(&mut pass.tape, pass.adj, y, pass.params[DEC_GCN2], false)?;
            let own = pass.tape.matmul(y, pass.params[DEC_SELF])?;
            outputs.push(pass.tape.add(mixed, own)?);
        }
        Ok(outputs)
    }

    /// Mean squared reconstruction error over every frame, joint and coordinate.
    fn record_loss(&self, batch: &[&[Pose3D]]) -> Result<(Pass, Var)> {
        let mut pass = self.begin(batch)?;
        let (h, c) = self.run_encoder(&mut pass)?;
        let outputs = self.run_decoder(&mut pass, h, c)?;
        let t_len = self.config.seq_len;
        let mut total: Option<Var> = None;
        for (s, out) in outputs.into_iter().enumerate() {
            let l = pass.tape.mse_loss(out, pass.frames[t_len - 1 - s])?;
            total = Some(match total {
                Some(acc) => pass.tape.add(acc, l)?,
                None => l,
            });
        }
        let scale = pass.tape.constant(vec![1], vec![1.0 / t_len as f64])?;
        let loss = pass.tape.mul(total.expect("seq_len >= 2"), scale)?;
        Ok((pass, loss))
    }

    pub fn loss(&self, batch: &[&[Pose3D]]) -> Result<f64> {
        let (pass, loss) = self.record_loss(batch)?;
        Ok(pass.tape.scalar(loss))
    }

    /// Loss and its gradient with respect to every parameter, in [`Self::params`] order.
    pub fn loss_and_grads(&self, batch: &[&[Pose3D]]) -> Result<(f64, Vec<Vec<f64>>)> {
        let (pass, loss) = self.record_loss(batch)?;
        let value = pass.tape.scalar(loss);
        let vars = pass.params.clone();
        let grads = pass.tape.backward(loss)?;
        let out = vars
            .iter()
            .zip(&self.params)
            .map(|(v, p)| grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.numel()]))
            .collect();
        Ok((value, out))
    }

    pub fn encode_state(&self, seq: &[Pose3D]) -> Result<EncoderState> {
        let mut pass = self.begin(&[seq])?;
        let (h, c) = self.run_encoder(&mut pass)?;
        Ok(EncoderState {
            latent: pass.tape.value(h).to_vec(),
            cell: pass.tape.value(c).to_vec(),
        })
    }

    pub fn encode(&self, seq: &[Pose3D]) -> Result<Vec<f64>> {
        Ok(self.encode_state(seq)?.latent)
    }

    /// Teacher-forced reconstruction of `seq` starting from `state`, in temporal order.
    pub fn decode(&self, state: &EncoderState, seq: &[Pose3D]) -> Result<Vec<Pose3D>> {
        let hdim = self.config.lstm_hidden;
        if state.latent.len() != hdim || state.cell.len() != hdim {
            return Err(GraeError::Contract(format!("encoder state must have width {hdim}")));
        }
        let mut pass = self.begin(&[seq])?;
        let h = pass.tape.constant(vec![1, hdim], state.latent.clone())?;
        let c = pass.tape.constant(vec![1, hdim], state.cell.clone())?;
        let outputs = self.run_decoder(&mut pass, h, c)?;
        let mut poses: Vec<Pose3D> = outputs
            .iter()
            .map(|&o| {
                let v = pass.tape.value(o);
                Pose3D { joints: std::array::from_fn(|j| [v[j * 3], v[j * 3 + 1], v[j * 3 + 2]]) }
            })
            .collect();
        poses.reverse();
        Ok(poses)
    }

    pub fn reconstruct(&self, seq: &[Pose3D]) -> Result<Vec<Pose3D>> {
        self.decode(&self.encode_state(seq)?, seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean loss per epoch, measured on each batch before its update.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

/// Trains a fresh model with Adam on the reconstruction loss.
pub fn train(seqs: &[Vec<Pose3D>], config: &GraeConfig, joint_map: &JointMap) -> Result<(GraeModel, TrainHistory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = GraeModel::with_rng(config.clone(), &joint_map.edges, &mut rng)?;
    let history = train_model(&mut model, seqs, &mut rng)?;
    Ok((model, history))
}

/// Continues training `model`; batch order is drawn from `rng`.
pub fn train_model(model: &mut GraeModel, seqs: &[Vec<Pose3D>], rng: &mut ChaCha8Rng) -> Result<TrainHistory> {
    if seqs.is_empty() {
        return Err(GraeError::Contract("training set is empty".into()));
    }
    for s in seqs {
        model.check_seq(s)?;
    }
    let config = model.config.clone();
    let batch_size = if config.batch_size == 0 { seqs.len() } else { config.batch_size.min(seqs.len()) };
    let mut opt = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut history = TrainHistory { epoch_loss: Vec::with_capacity(config.epochs), steps: 0 };
    for epoch in 0..config.epochs {
        if batch_size < seqs.len() {
            order.shuffle(rng);
        }
        let mut weighted = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&[Pose3D]> = chunk.iter().map(|&i| seqs[i].as_slice()).collect();
            let step = history.steps;
            let non_finite = |e: GraeError| match e {
                GraeError::Tensor(TensorError::NonFinite(_)) => GraeError::NonFiniteLoss { epoch, step },
                other => other,
            };
            let (loss, grads) = model.loss_and_grads(&batch).map_err(non_finite)?;
            for (p, g) in model.params.iter_mut().zip(&grads) {
                p.zero_grad();
                p.accumulate_grad(g)?;
            }
            opt.step(&mut model.params)?;
            if model.params.iter().any(|p| p.data().iter().any(|v| !v.is_finite())) {
                return Err(GraeError::NonFiniteLoss { epoch, step });
            }
            weighted += loss * chunk.len() as f64;
            history.steps += 1;
        }
        let mean = weighted / seqs.len() as f64;
        debug!("epoch {epoch}: loss {mean:.6e}");
        history.epoch_loss.push(mean);
    }
    for p in &mut model.params {
        p.zero_grad();
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Embedding {
    /// One latent per usable clip, sorted by clip id.
    pub latents: Vec<LatentVector>,
    /// `(clip_id, reason)` for clips that could not be embedded.
    pub skipped: Vec<(String, String)>,
}

/// Normalizes each clip's 3D poses and returns a clip's sequence, or the reason it has none.
pub fn prepared_sequence(clip: &crate::dataset::ShotClip, joint_map: &JointMap) -> std::result::Result<Vec<Pose3D>, String> {
    let seq = clip.pose3d.as_ref().ok_or_else(|| "no 3D poses".to_string())?;
    kinematics::normalize(seq, joint_map).map(|n| n.frames).map_err(|e| e.to_string())
}

pub fn embed_dataset(model: &GraeModel, dataset: &Dataset, joint_map: &JointMap) -> Result<Embedding> {
    let mut clips: Vec<_> = dataset.clips.iter().collect();
    clips.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    let mut out = Embedding::default();
    for clip in clips {
        match prepared_sequence(clip, joint_map) {
            Ok(seq) => out.latents.push(LatentVector { clip_id: clip.clip_id.clone(), values: model.encode(&seq)? }),
            Err(reason) => {
                log::warn!("skipping clip {}: {reason}", clip.clip_id);
                out.skipped.push((clip.clip_id.clone(), reason));
            }
        }
    }
    Ok(out)
}
