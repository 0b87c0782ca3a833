//! The full network: both encoders, cross-modal alignment, fusion and heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{make_joint, split_joint, CrossModal, PtmEncoder, SpecEncoder, WIDTH};
use crate::error::{Error, Result};
use crate::fusion::{Fusion, FusionState, Variant};
use crate::heads::Heads;
use crate::nn::{Mode, Module, Param, RngState};
use crate::tensor::{Scalar, Tensor};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// pretrained-model embedding dimension
    pub ptm_dim: usize,
    /// spectrogram volume `[frequency bands, frames, filterbank channels]`
    pub spec_dims: [usize; 3],
    /// width of the tangent spaces and of the fused embedding
    pub d_m: usize,
    /// class counts for the original-emotion, current-emotion and source tasks
    pub classes: [usize; 3],
    pub dropout: f64,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            ptm_dim: 768,
            spec_dims: [40, 64, 4],
            d_m: 128,
            classes: [5, 5, 7],
            dropout: 0.3,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ptm_dim == 0 || self.spec_dims.contains(&0) {
            return Err(Error::Config("input dimensions must be positive".into()));
        }
        if self.d_m < 2 {
            return Err(Error::Config(format!("d_m must be at least 2, got {}", self.d_m)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if let Some(k) = self.classes.iter().find(|&&k| k < 2) {
            return Err(Error::Config(format!("every task needs at least 2 classes, got {k}")));
        }
        Ok(())
    }
}

/// Result of a forward pass: per-task logits and the fused embedding.
#[derive(Clone, Debug)]
pub struct Output<T> {
    pub logits: Vec<Tensor<T>>,
    pub z_fused: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct MiCuNet<T> {
    cfg: ModelConfig,
    pub ptm: PtmEncoder<T>,
    pub spec: SpecEncoder<T>,
    pub align: CrossModal<T>,
    pub fusion: Fusion<T>,
    pub heads: Heads<T>,
}

impl<T: Scalar> MiCuNet<T> {
    /// Builds a model with all weights drawn from a generator seeded by `seed`.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(MiCuNet {
            ptm: PtmEncoder::new("ptm", cfg.ptm_dim, &mut rng)?,
            spec: SpecEncoder::new("spec", cfg.spec_dims, &mut rng)?,
            align: CrossModal::new("align", &mut rng),
            fusion: Fusion::new(cfg.variant, 2 * WIDTH, cfg.d_m, &mut rng),
            heads: Heads::new(cfg.d_m, cfg.classes, cfg.dropout, &mut rng)?,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// `ptm [N, D]`, `spec [N, F, T, B]`.
    pub fn forward(&mut self, ptm: &Tensor<T>, spec: &Tensor<T>, mode: Mode) -> Result<Output<T>> {
        if ptm.dim(0) != spec.dim(0) {
            return Err(Error::shape("model batch", &[ptm.dim(0)], &[spec.dim(0)]));
        }
        let p_seq = self.ptm.forward(ptm)?;
        let s_seq = self.spec.forward(spec, mode)?;
        let (p, s) = self.align.forward(&p_seq, &s_seq)?;
        let z0 = make_joint(&p, &s)?;
        let z_fused = self.fusion.forward(&z0)?;
        let logits = self.heads.forward(&z_fused, mode)?;
        Ok(Output { logits, z_fused })
    }

    /// Backpropagates logit gradients (`None` skips a task) into every
    /// parameter's `grad`.
    pub fn backward(&mut self, dlogits: &[Option<Tensor<T>>]) -> Result<()> {
        let dz = self.heads.backward(dlogits)?;
        let dz0 = self.fusion.backward(&dz)?;
        let (dp, ds) = split_joint(&dz0, WIDTH)?;
        let (dp_seq, ds_seq) = self.align.backward(&dp, &ds)?;
        self.ptm.backward_params(&dp_seq)?;
        self.spec.backward_params(&ds_seq)?;
        Ok(())
    }

    /// Fusion state of the most recent forward pass (cleared by `backward`).
    pub fn fusion_state(&self) -> Option<&FusionState> {
        self.fusion.last_state()
    }

    pub fn dropout_states(&self) -> Vec<RngState> {
        self.heads.dropout_states()
    }

    pub fn set_dropout_states(&mut self, states: &[RngState]) -> Result<()> {
        self.heads.set_dropout_states(states)
    }

    /// Copies all parameters and buffers into a model of another precision.
    pub fn cast<U: Scalar>(&mut self) -> Result<MiCuNet<U>> {
        let mut out = MiCuNet::<U>::new(&self.cfg, 0)?;
        let mut values = Vec::new();
        self.visit_params(&mut |p| values.push(p.value.cast::<U>()));
        let mut it = values.into_iter();
        out.visit_params(&mut |p| p.value = it.next().expect("same architecture"));
        let mut bufs = Vec::new();
        self.visit_buffers(&mut |_, b| bufs.push(b.cast::<U>()));
        let mut it = bufs.into_iter();
        out.visit_buffers(&mut |_, b| *b = it.next().expect("same architecture"));
        out.set_dropout_states(&self.dropout_states())?;
        Ok(out)
    }
}

impl<T: Scalar> Module<T> for MiCuNet<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.ptm.visit_params(f);
        self.spec.visit_params(f);
        self.align.visit_params(f);
        self.fusion.visit_params(f);
        self.heads.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.spec.visit_buffers(f);
    }
}

/// Trainable-parameter count of a configuration.
pub fn param_count(cfg: &ModelConfig) -> Result<usize> {
    Ok(MiCuNet::<f32>::new(cfg, 0)?.param_count())
}
