//! Feedback policies mapping the measurement record to sBs gate parameters.
//!
//! Every policy is queried before each half-cycle with the latest ancilla
//! outcome (nothing at the start of an episode). Trainable policies emit
//! bounded corrections δθ = r·tanh(raw) added to the standard parameters,
//! with r = 2 for the first 14 parameters and r = 1 for θ_VR.

mod checkpoint;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{real_column, to_complex, Backend, RealFn};
use crate::error::{Error, Result};
use crate::fock::c;
use crate::sbs::{Outcome, CORRECTION_RANGE, N_PARAMS, STANDARD};

pub use checkpoint::{Checkpoint, CheckpointMetadata, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

/// Network shape and policy family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// Fixed standard parameters.
    Standard,
    /// One absolute parameter vector per half-cycle, independent of outcomes.
    OpenLoop { steps: usize },
    /// One raw correction vector per node of the outcome-history tree.
    Lookup { depth: usize },
    /// Markovian: last outcome → dense → dense → 15.
    Fnn { hidden: usize },
    /// Non-Markovian: GRU over the outcome record, then the same dense head.
    Gru { state: usize, hidden: usize },
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Standard => "standard",
            Architecture::OpenLoop { .. } => "open_loop",
            Architecture::Lookup { .. } => "lookup",
            Architecture::Fnn { .. } => "fnn",
            Architecture::Gru { .. } => "gru",
        }
    }
}

/// Bias initialization. Weights are always uniform in ±0.1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BiasInit {
    Constant(f64),
    Uniform(f64),
}

impl Default for BiasInit {
    fn default() -> Self {
        BiasInit::Constant(0.01)
    }
}

pub const WEIGHT_INIT_RANGE: f64 = 0.1;
pub const GRU_STATE: usize = 10;
pub const DENSE_HIDDEN: usize = 256;

/// A named real parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    arch: Architecture,
    tensors: Vec<Tensor>,
}

/// Per-episode policy memory.
#[derive(Debug, Clone)]
pub struct PolicyState<M> {
    /// Index of the next half-cycle.
    pub t: usize,
    /// Outcome history as bits, e = 1, most recent last.
    pub history: usize,
    /// GRU hidden vector.
    pub hidden: Option<M>,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, range: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-range..range))
}

fn bias<R: Rng + ?Sized>(rng: &mut R, rows: usize, init: BiasInit) -> DMatrix<f64> {
    match init {
        BiasInit::Constant(v) => DMatrix::from_element(rows, 1, v),
        BiasInit::Uniform(r) => uniform(rng, rows, 1, r),
    }
}

fn tensor(name: &str, value: DMatrix<f64>) -> Tensor {
    Tensor {
        name: name.to_string(),
        value,
    }
}

fn dense_head<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize, init: BiasInit) -> Vec<Tensor> {
    vec![
        tensor("w1", uniform(rng, hidden, input, WEIGHT_INIT_RANGE)),
        tensor("b1", bias(rng, hidden, init)),
        tensor("w2", uniform(rng, hidden, hidden, WEIGHT_INIT_RANGE)),
        tensor("b2", bias(rng, hidden, init)),
        tensor("w3", uniform(rng, N_PARAMS, hidden, WEIGHT_INIT_RANGE)),
        tensor("b3", bias(rng, N_PARAMS, init)),
    ]
}

impl Policy {
    pub fn standard() -> Self {
        Policy {
            arch: Architecture::Standard,
            tensors: Vec::new(),
        }
    }

    pub fn open_loop(steps: &[[f64; N_PARAMS]]) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidParameter {
                name: "steps",
                reason: "an open-loop policy needs at least one step".into(),
            });
        }
        let m = DMatrix::from_fn(N_PARAMS, steps.len(), |i, t| steps[t][i]);
        Ok(Policy {
            arch: Architecture::OpenLoop { steps: steps.len() },
            tensors: vec![tensor("params", m)],
        })
    }

    /// Lookup table over `depth` half-cycles, initialized to the standard
    /// parameters (all raw entries zero).
    pub fn lookup(depth: usize) -> Result<Self> {
        if depth == 0 || depth > crate::sbs::MAX_ENUMERATION_DEPTH {
            return Err(Error::DepthLimit {
                depth,
                limit: crate::sbs::MAX_ENUMERATION_DEPTH,
            });
        }
        Ok(Policy {
            arch: Architecture::Lookup { depth },
            tensors: vec![tensor("entries", DMatrix::zeros(N_PARAMS, (1 << depth) - 1))],
        })
    }

    pub fn fnn<R: Rng + ?Sized>(rng: &mut R, init: BiasInit) -> Self {
        Self::fnn_with(DENSE_HIDDEN, rng, init)
    }

    pub fn fnn_with<R: Rng + ?Sized>(hidden: usize, rng: &mut R, init: BiasInit) -> Self {
        Policy {
            arch: Architecture::Fnn { hidden },
            tensors: dense_head(rng, 1, hidden, init),
        }
    }

    pub fn gru<R: Rng + ?Sized>(rng: &mut R, init: BiasInit) -> Self {
        Self::gru_with(GRU_STATE, DENSE_HIDDEN, rng, init)
    }

    pub fn gru_with<R: Rng + ?Sized>(state: usize, hidden: usize, rng: &mut R, init: BiasInit) -> Self {
        let r = WEIGHT_INIT_RANGE;
        let mut tensors = Vec::new();
        for g in ["z", "r", "h"] {
            tensors.push(tensor(&format!("w{g}"), uniform(rng, state, 1, r)));
            tensors.push(tensor(&format!("u{g}"), uniform(rng, state, state, r)));
            tensors.push(tensor(&format!("b{g}"), bias(rng, state, init)));
        }
        tensors.extend(dense_head(rng, state, hidden, init));
        Policy {
            arch: Architecture::Gru { state, hidden },
            tensors,
        }
    }

    /// A freshly initialized policy of the given architecture. Standard,
    /// open-loop and lookup policies start at the standard parameters.
    pub fn random<R: Rng + ?Sized>(arch: Architecture, rng: &mut R, init: BiasInit) -> Result<Self> {
        match arch {
            Architecture::Fnn { hidden } => Ok(Self::fnn_with(hidden, rng, init)),
            Architecture::Gru { state, hidden } => Ok(Self::gru_with(state, hidden, rng, init)),
            other => Self::template(other),
        }
    }

    /// Rebuilds a policy from stored tensors, checking their shapes.
    pub fn from_parts(arch: Architecture, tensors: Vec<Tensor>) -> Result<Self> {
        let template = Self::template(arch)?;
        if template.tensors.len() != tensors.len() {
            return Err(Error::Config(format!(
                "{} policy expects {} tensors, found {}",
                arch.name(),
                template.tensors.len(),
                tensors.len()
            )));
        }
        for (t, want) in tensors.iter().zip(&template.tensors) {
            if t.name != want.name || t.value.shape() != want.value.shape() {
                return Err(Error::Config(format!(
                    "tensor {} has shape {:?}, expected {} with shape {:?}",
                    t.name,
                    t.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        Ok(Policy { arch, tensors })
    }

    fn template(arch: Architecture) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        Ok(match arch {
            Architecture::Standard => Self::standard(),
            Architecture::OpenLoop { steps } => Self::open_loop(&vec![STANDARD; steps.max(1)])?,
            Architecture::Lookup { depth } => Self::lookup(depth)?,
            Architecture::Fnn { hidden } => Self::fnn_with(hidden, &mut rng, BiasInit::default()),
            Architecture::Gru { state, hidden } => Self::gru_with(state, hidden, &mut rng, BiasInit::default()),
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn is_trainable(&self) -> bool {
        self.n_params() > 0
    }

    /// All parameters, tensor by tensor in column-major order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.value.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                found: flat.len(),
            });
        }
        let mut k = 0;
        for t in &mut self.tensors {
            for v in t.value.iter_mut() {
                *v = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Registers the tensors on a backend, as tracked leaves when `track`.
    pub fn bind<B: Backend>(&self, b: &mut B, track: bool) -> Vec<B::M> {
        self.tensors
            .iter()
            .map(|t| {
                let m = to_complex(&t.value);
                if track {
                    b.param(m)
                } else {
                    b.constant(m)
                }
            })
            .collect()
    }

    pub fn initial_state<B: Backend>(&self, b: &mut B) -> PolicyState<B::M> {
        let hidden = match self.arch {
            Architecture::Gru { state, .. } => Some(b.constant(real_column(&vec![0.0; state]))),
            _ => None,
        };
        PolicyState {
            t: 0,
            history: 0,
            hidden,
        }
    }

    /// Gate parameters for the next half-cycle given the latest outcome.
    pub fn step<B: Backend>(
        &self,
        b: &mut B,
        bound: &[B::M],
        state: &PolicyState<B::M>,
        input: Option<Outcome>,
    ) -> Result<(Vec<B::M>, PolicyState<B::M>)> {
        let t = state.t;
        let history = match input {
            Some(o) if t > 0 => (state.history << 1) | o.index(),
            _ => state.history,
        };
        let x = input.map_or(0.0, Outcome::encode);
        let mut next = PolicyState {
            t: t + 1,
            history,
            hidden: None,
        };
        let params = match self.arch {
            Architecture::Standard => STANDARD.iter().map(|&v| b.scalar(v)).collect(),
            Architecture::OpenLoop { steps } => {
                let col = t.min(steps - 1);
                (0..N_PARAMS).map(|i| b.element(&bound[0], i, col)).collect()
            }
            Architecture::Lookup { depth } => {
                if t >= depth {
                    return Err(Error::DepthLimit {
                        depth: t + 1,
                        limit: depth,
                    });
                }
                let node = (1usize << t) - 1 + history;
                let raw = column(b, &bound[0], node);
                corrections(b, &raw)
            }
            Architecture::Fnn { .. } => {
                let xin = b.scalar(x);
                let raw = dense_forward(b, &bound[0..6], &xin);
                corrections(b, &raw)
            }
            Architecture::Gru { .. } => {
                let h = state.hidden.clone().expect("GRU state carries a hidden vector");
                let xin = b.scalar(x);
                let h_new = gru_cell(b, &bound[0..9], &h, &xin);
                let raw = dense_forward(b, &bound[9..15], &h_new);
                next.hidden = Some(h_new);
                corrections(b, &raw)
            }
        };
        Ok((params, next))
    }

    /// Parameters the policy emits after a given outcome history, evaluated
    /// without recording.
    pub fn params_after(&self, history: &[Outcome]) -> Result<[f64; N_PARAMS]> {
        let mut b = crate::autodiff::Plain;
        let bound = self.bind(&mut b, false);
        let mut state = self.initial_state(&mut b);
        let mut input = None;
        let mut out = Vec::new();
        for k in 0..=history.len() {
            let (p, s) = self.step(&mut b, &bound, &state, input)?;
            state = s;
            out = p;
            if k < history.len() {
                input = Some(history[k]);
            }
        }
        let mut arr = [0.0; N_PARAMS];
        for (a, m) in arr.iter_mut().zip(&out) {
            *a = m[(0, 0)].re;
        }
        Ok(arr)
    }
}

fn column<B: Backend>(b: &mut B, m: &B::M, j: usize) -> B::M {
    let n = b.value(m).nrows();
    let mut sel = DMatrix::zeros(b.value(m).ncols(), 1);
    sel[(j, 0)] = c(1.0, 0.0);
    let sel = b.constant(sel);
    let col = b.matmul(m, &sel);
    debug_assert_eq!(b.value(&col).nrows(), n);
    col
}

/// standard + range ∘ tanh(raw), split into 15 scalars.
fn corrections<B: Backend>(b: &mut B, raw: &B::M) -> Vec<B::M> {
    let t = b.map_real(raw, RealFn::Tanh);
    let range = b.constant(real_column(&CORRECTION_RANGE));
    let scaled = b.hadamard(&t, &range);
    let out = b.add_const(&scaled, &real_column(&STANDARD));
    (0..N_PARAMS).map(|i| b.element(&out, i, 0)).collect()
}

/// tanh(W1 x + b1) → tanh(W2 · + b2) → W3 · + b3.
fn dense_forward<B: Backend>(b: &mut B, w: &[B::M], x: &B::M) -> B::M {
    let h = b.matmul(&w[0], x);
    let h = b.add(&h, &w[1]);
    let h = b.map_real(&h, RealFn::Tanh);
    let h2 = b.matmul(&w[2], &h);
    let h2 = b.add(&h2, &w[3]);
    let h2 = b.map_real(&h2, RealFn::Tanh);
    let o = b.matmul(&w[4], &h2);
    b.add(&o, &w[5])
}

/// h' = z ∘ h + (1 − z) ∘ h̃, with z = σ(W_z x + U_z h + b_z),
/// r = σ(W_r x + U_r h + b_r) and h̃ = tanh(W_h x + U_h (r ∘ h) + b_h).
pub fn gru_cell<B: Backend>(b: &mut B, w: &[B::M], h: &B::M, x: &B::M) -> B::M {
    let gate = |b: &mut B, wi: &B::M, ui: &B::M, bi: &B::M, hin: &B::M, f: RealFn| {
        let a = b.matmul(wi, x);
        let u = b.matmul(ui, hin);
        let s = b.add(&a, &u);
        let s = b.add(&s, bi);
        b.map_real(&s, f)
    };
    let z = gate(b, &w[0], &w[1], &w[2], h, RealFn::Sigmoid);
    let r = gate(b, &w[3], &w[4], &w[5], h, RealFn::Sigmoid);
    let rh = b.hadamard(&r, h);
    let cand = gate(b, &w[6], &w[7], &w[8], &rh, RealFn::Tanh);
    let zh = b.hadamard(&z, h);
    let diff = b.hadamard(&z, &cand);
    let one_minus = b.sub(&cand, &diff);
    b.add(&zh, &one_minus)
}

/// Plain-valued GRU update on real vectors, in the tensor order
/// w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h.
pub fn gru_forward(weights: &[DMatrix<f64>], h: &[f64], x: f64) -> Vec<f64> {
    let mut b = crate::autodiff::Plain;
    let w: Vec<_> = weights.iter().map(to_complex).collect();
    let out = gru_cell(&mut b, &w, &real_column(h), &real_column(&[x]));
    out.iter().map(|z| z.re).collect()
}
