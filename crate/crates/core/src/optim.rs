//! Adam and SGD-with-momentum, plus the model-wide optimizer that owns
//! per-parameter state.

use crate::error::{Error, Result};
use crate::layers::ParamSlot;
use crate::tensor::FloatTensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdParams {
    pub lr: f32,
    pub momentum: f32,
}

impl Default for SgdParams {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            momentum: 0.9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimKind {
    Adam(AdamParams),
    Sgd(SgdParams),
}

impl OptimKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimKind::Adam(_) => "adam",
            OptimKind::Sgd(_) => "sgd",
        }
    }

    pub fn with_lr(self, lr: f32) -> Self {
        match self {
            OptimKind::Adam(p) => OptimKind::Adam(AdamParams { lr, ..p }),
            OptimKind::Sgd(p) => OptimKind::Sgd(SgdParams { lr, ..p }),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    m: FloatTensor,
    v: FloatTensor,
    t: u64,
    params: AdamParams,
}

impl AdamState {
    pub fn new(shape: Vec<usize>, params: AdamParams) -> Self {
        Self {
            m: FloatTensor::zeros(shape.clone()),
            v: FloatTensor::zeros(shape),
            t: 0,
            params,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

#[derive(Clone, Debug)]
pub struct SgdMomentumState {
    velocity: FloatTensor,
    params: SgdParams,
}

impl SgdMomentumState {
    pub fn new(shape: Vec<usize>, params: SgdParams) -> Self {
        Self {
            velocity: FloatTensor::zeros(shape),
            params,
        }
    }

    pub fn velocity(&self) -> &FloatTensor {
        &self.velocity
    }
}

fn check_shapes(what: &str, param: &FloatTensor, grad: &FloatTensor, state: &FloatTensor) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != state.shape() {
        return Err(Error::shape(format!(
            "{what}: param {:?} / grad {:?} / state {:?} disagree",
            param.shape(),
            grad.shape(),
            state.shape()
        )));
    }
    Ok(())
}

pub fn adam_step(param: &mut FloatTensor, grad: &FloatTensor, state: &mut AdamState) -> Result<()> {
    check_shapes("adam", param, grad, &state.m)?;
    let p = state.params;
    state.t += 1;
    // bias corrections are scalar per step, computed once in f64
    let c1 = 1.0 - (p.beta1 as f64).powi(state.t as i32);
    let c2 = 1.0 - (p.beta2 as f64).powi(state.t as i32);
    let md = state.m.data_mut();
    let vd = state.v.data_mut();
    let pd = param.data_mut();
    for i in 0..pd.len() {
        let g = grad.data()[i];
        md[i] = p.beta1 * md[i] + (1.0 - p.beta1) * g;
        vd[i] = p.beta2 * vd[i] + (1.0 - p.beta2) * g * g;
        let mhat = md[i] as f64 / c1;
        let vhat = vd[i] as f64 / c2;
        pd[i] -= (p.lr as f64 * mhat / (vhat.sqrt() + p.eps as f64)) as f32;
    }
    Ok(())
}

pub fn sgd_momentum_step(
    param: &mut FloatTensor,
    grad: &FloatTensor,
    state: &mut SgdMomentumState,
) -> Result<()> {
    check_shapes("sgd", param, grad, &state.velocity)?;
    let p = state.params;
    let vd = state.velocity.data_mut();
    let pd = param.data_mut();
    for i in 0..pd.len() {
        vd[i] = p.momentum * vd[i] - p.lr * grad.data()[i];
        pd[i] += vd[i];
    }
    Ok(())
}

#[derive(Clone, Debug)]
enum SlotState {
    Adam(AdamState),
    Sgd(SgdMomentumState),
}

/// Per-parameter optimizer state bound lazily to a model's slot list on the
/// first step. The slot count and shapes must stay stable afterwards.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimKind,
    states: Vec<SlotState>,
}

impl Optimizer {
    pub fn new(kind: OptimKind) -> Self {
        Self {
            kind,
            states: Vec::new(),
        }
    }

    pub fn kind(&self) -> OptimKind {
        self.kind
    }

    pub fn step(&mut self, slots: &mut [ParamSlot<'_>]) -> Result<()> {
        if self.states.is_empty() {
            self.states = slots
                .iter()
                .map(|s| match self.kind {
                    OptimKind::Adam(p) => SlotState::Adam(AdamState::new(s.value.shape().to_vec(), p)),
                    OptimKind::Sgd(p) => {
                        SlotState::Sgd(SgdMomentumState::new(s.value.shape().to_vec(), p))
                    }
                })
                .collect();
        }
        if self.states.len() != slots.len() {
            return Err(Error::Config(format!(
                "optimizer was bound to {} parameters, model now has {}",
                self.states.len(),
                slots.len()
            )));
        }
        for (slot, state) in slots.iter_mut().zip(&mut self.states) {
            match state {
                SlotState::Adam(st) => adam_step(slot.value, slot.grad, st)?,
                SlotState::Sgd(st) => sgd_momentum_step(slot.value, slot.grad, st)?,
            }
        }
        Ok(())
    }
}
