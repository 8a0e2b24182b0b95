//! Generative neural surrogate of one simulation epoch.
//!
//! The network maps (state features, action bits, arrival counts of the
//! epoch) to (next state features, epoch KPIs). It is deterministic; all
//! randomness comes from arrival counts drawn from the fitted input models.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::callcenter::{compute_reward, terminal_reward, ActionVector, CallCenterConfig, EpochKpis, RewardSpec, SystemState, Trajectory};
use crate::env::{Backend, EnvError, Environment, StepOutcome};
use crate::neural::{Minibatch, Mlp, NeuralError, OptimizerState, WeightDocument};
use crate::stochastic::{InputModels, RngStream};

/// Version tag of the surrogate document.
pub const SURROGATE_FORMAT_VERSION: u32 = 1;

const SPLIT_STREAM: u64 = u64::MAX - 2;
const TRAIN_STREAM: u64 = u64::MAX - 3;

#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateError {
    Schema(String),
    CannotSplit,
    Divergence { epoch: usize },
    Neural(NeuralError),
}

impl fmt::Display for SurrogateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Schema(msg) => write!(f, "trajectory schema error: {msg}"),
            Self::CannotSplit => f.write_str("need at least two replications to split train/holdout"),
            Self::Divergence { epoch } => write!(f, "surrogate training diverged at epoch {epoch}"),
            Self::Neural(e) => write!(f, "network: {e}"),
        }
    }
}

impl core::error::Error for SurrogateError {}

impl From<NeuralError> for SurrogateError {
    fn from(e: NeuralError) -> Self {
        Self::Neural(e)
    }
}

/// Group sizes that fix the row layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub contact_groups: usize,
    pub expert_groups: usize,
    pub experts: usize,
    pub horizon: usize,
}

impl Layout {
    pub fn of(config: &CallCenterConfig) -> Self {
        Self {
            contact_groups: config.num_contact_groups(),
            expert_groups: config.num_expert_groups(),
            experts: config.num_experts(),
            horizon: config.horizon_epochs,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.contact_groups + self.expert_groups + 2
    }

    /// State features, action bits, arrival counts.
    pub fn input_dim(&self) -> usize {
        self.state_dim() + self.experts + self.contact_groups
    }

    /// Next state features followed by W, A, U, B.
    pub fn target_dim(&self) -> usize {
        self.state_dim() + 2 * self.contact_groups + 2 * self.expert_groups
    }

    fn input(&self, state: &[f64], action: &[u8], arrivals: &[u32]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(state);
        x.extend(action.iter().map(|&a| f64::from(a)));
        x.extend(arrivals.iter().map(|&a| f64::from(a)));
        x
    }

    fn target(&self, next_state: &[f64], kpis: &EpochKpis) -> Vec<f64> {
        let mut y = next_state.to_vec();
        y.extend(kpis.to_vec());
        y
    }

    /// Maps a raw network output onto valid values: counts rounded and
    /// nonnegative, rates in `[0, 1]`, backlogs never above the current
    /// backlog, time advanced exactly one epoch.
    fn postprocess(&self, state: &[f64], raw: &[f64]) -> (Vec<f64>, EpochKpis) {
        let (nc, ng) = (self.contact_groups, self.expert_groups);
        let sd = self.state_dim();
        let backlog_now = &state[nc..nc + ng];
        let count = |v: f64| libm::round(v).max(0.0);
        let backlog = |v: f64, g: usize| count(v).min(backlog_now[g]);

        let mut next = Vec::with_capacity(sd);
        next.extend(raw[..nc].iter().map(|&v| count(v)));
        next.extend((0..ng).map(|g| backlog(raw[nc + g], g)));
        next.push(raw[nc + ng].clamp(0.0, self.experts as f64));
        let horizon = self.horizon as f64;
        let epoch = libm::round(state[sd - 1] * horizon);
        next.push(((epoch + 1.0) / horizon).min(1.0));

        let k = &raw[sd..];
        let kpis = EpochKpis {
            waiting: k[..nc].iter().map(|&w| w.max(0.0)).collect(),
            abandonment: k[nc..2 * nc].iter().map(|&a| a.clamp(0.0, 1.0)).collect(),
            utilization: k[2 * nc..2 * nc + ng].iter().map(|&u| u.clamp(0.0, 1.0)).collect(),
            backoffice: (0..ng).map(|g| backlog(k[2 * nc + ng + g], g) as u32).collect(),
        };
        (next, kpis)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateRow {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: Layout,
    pub train: Vec<SurrogateRow>,
    pub holdout: Vec<SurrogateRow>,
    pub train_replications: Vec<u64>,
    pub holdout_replications: Vec<u64>,
    /// Arrival counts of every training epoch, for input-model fitting.
    pub train_arrivals: Vec<Vec<u32>>,
}

fn rows_of(layout: &Layout, t: &Trajectory) -> Result<Vec<SurrogateRow>, SurrogateError> {
    let sd = layout.state_dim();
    t.records
        .iter()
        .map(|r| {
            let at = |what: &str| format!("replication {} epoch {}: {what}", t.replication, r.epoch);
            if r.arrivals.len() != layout.contact_groups {
                return Err(SurrogateError::Schema(at("missing arrival counts")));
            }
            if r.obs.len() != sd || r.next_obs.len() != sd {
                return Err(SurrogateError::Schema(at("observation length")));
            }
            if r.action.len() != layout.experts || r.action.iter().any(|&a| a > 1) {
                return Err(SurrogateError::Schema(at("action bits")));
            }
            let k = &r.kpis;
            if k.waiting.len() != layout.contact_groups
                || k.abandonment.len() != layout.contact_groups
                || k.utilization.len() != layout.expert_groups
                || k.backoffice.len() != layout.expert_groups
            {
                return Err(SurrogateError::Schema(at("KPI vector lengths")));
            }
            Ok(SurrogateRow {
                input: layout.input(&r.obs, &r.action, &r.arrivals),
                target: layout.target(&r.next_obs, k),
            })
        })
        .collect()
}

/// One row per recorded epoch, split 80/20 by whole replications after a
/// seeded shuffle of the replication ids.
pub fn build_dataset(layout: Layout, trajectories: &[Trajectory], seed: u64) -> Result<Dataset, SurrogateError> {
    let mut order: Vec<&Trajectory> = trajectories.iter().collect();
    order.sort_by_key(|t| t.replication);
    if order.windows(2).any(|w| w[0].replication == w[1].replication) {
        return Err(SurrogateError::Schema("duplicate replication id".into()));
    }
    if order.len() < 2 {
        return Err(SurrogateError::CannotSplit);
    }
    let mut stream = RngStream::new(seed, SPLIT_STREAM);
    for i in (1..order.len()).rev() {
        order.swap(i, stream.below(i + 1));
    }
    let holdout_n = (libm::round(order.len() as f64 * 0.2) as usize).clamp(1, order.len() - 1);
    let (holdout, train) = order.split_at(holdout_n);

    let mut ds = Dataset {
        layout,
        train: Vec::new(),
        holdout: Vec::new(),
        train_replications: train.iter().map(|t| t.replication).collect(),
        holdout_replications: holdout.iter().map(|t| t.replication).collect(),
        train_arrivals: Vec::new(),
    };
    for t in train {
        ds.train.extend(rows_of(&layout, t)?);
        ds.train_arrivals.extend(t.records.iter().map(|r| r.arrivals.clone()));
    }
    for t in holdout {
        ds.holdout.extend(rows_of(&layout, t)?);
    }
    if ds.train.is_empty() || ds.holdout.is_empty() {
        return Err(SurrogateError::Schema("replications without records".into()));
    }
    Ok(ds)
}

/// Per-feature affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features with zero variance in the fitting data (their std is 1).
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> Self {
        let n = rows.clone().count().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows.clone() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            var.iter_mut().zip(r).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
        }
        let constant: Vec<bool> = var.iter().map(|&v| !(v > 1e-24)).collect();
        let std = var
            .iter()
            .zip(&constant)
            .map(|(&v, &c)| if c { 1.0 } else { libm::sqrt(v) })
            .collect();
        Self { mean, std, constant }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateTrainConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl Default for SurrogateTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            minibatch: 32,
            learning_rate: 1e-3,
            hidden: vec![64, 64],
            dropout: 0.1,
        }
    }
}

impl SurrogateTrainConfig {
    pub fn validate(&self) -> Result<(), crate::ConfigError> {
        let bad = |p: &str, m: &str| Err(crate::ConfigError::new(format!("surrogate.{p}"), m));
        if self.minibatch == 0 {
            return bad("minibatch", "must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", "needs at least one positive layer width");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Holdout RMSE per metric group, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmseReport {
    pub waiting: Vec<f64>,
    pub abandonment: Vec<f64>,
    pub utilization: Vec<f64>,
    pub backoffice: Vec<f64>,
    pub next_state: Vec<f64>,
    pub holdout_rows: usize,
    pub final_train_loss: f64,
}

impl RmseReport {
    pub fn max_of(values: &[f64]) -> f64 {
        values.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub layout: Layout,
    pub net: Mlp,
    pub input_norm: Standardizer,
    pub target_norm: Standardizer,
    pub input_models: InputModels,
    /// Observation of the initial simulation state.
    pub initial_state: Vec<f64>,
}

/// Portable form of a [`SurrogateModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateDocument {
    pub format_version: u32,
    pub layout: Layout,
    pub weights: WeightDocument,
    pub input_norm: Standardizer,
    pub target_norm: Standardizer,
    pub input_models: InputModels,
    pub initial_state: Vec<f64>,
}

impl SurrogateModel {
    pub fn to_document(&self) -> SurrogateDocument {
        SurrogateDocument {
            format_version: SURROGATE_FORMAT_VERSION,
            layout: self.layout,
            weights: self.net.to_document(),
            input_norm: self.input_norm.clone(),
            target_norm: self.target_norm.clone(),
            input_models: self.input_models.clone(),
            initial_state: self.initial_state.clone(),
        }
    }

    pub fn from_document(doc: &SurrogateDocument) -> Result<Self, SurrogateError> {
        if doc.format_version != SURROGATE_FORMAT_VERSION {
            return Err(SurrogateError::Schema(format!("unsupported format_version {}", doc.format_version)));
        }
        let net = Mlp::from_document(&doc.weights)?;
        let l = doc.layout;
        let dims_ok = net.input_dim() == l.input_dim()
            && net.output_dim() == l.target_dim()
            && doc.input_norm.mean.len() == l.input_dim()
            && doc.input_norm.std.len() == l.input_dim()
            && doc.target_norm.mean.len() == l.target_dim()
            && doc.target_norm.std.len() == l.target_dim()
            && doc.initial_state.len() == l.state_dim()
            && doc.input_models.arrival_rate_per_epoch.len() == l.contact_groups;
        if !dims_ok {
            return Err(SurrogateError::Schema("document dimensions disagree with its layout".into()));
        }
        Ok(Self {
            layout: l,
            net,
            input_norm: doc.input_norm.clone(),
            target_norm: doc.target_norm.clone(),
            input_models: doc.input_models.clone(),
            initial_state: doc.initial_state.clone(),
        })
    }

    /// Raw de-standardized network output for one input row.
    pub fn predict_raw(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let z = self.net.predict(&self.input_norm.apply(input))?;
        Ok(self.target_norm.invert(&z))
    }

    /// The transition given the epoch's arrivals; a pure function.
    pub fn predict(&self, state: &[f64], action: &ActionVector, arrivals: &[u32]) -> Result<(EpochKpis, Vec<f64>), EnvError> {
        let l = &self.layout;
        if state.len() != l.state_dim() || arrivals.len() != l.contact_groups {
            return Err(EnvError::InvalidAction(action.to_index()));
        }
        if action.len() != l.experts {
            return Err(EnvError::InvalidAction(action.to_index()));
        }
        let raw = self
            .predict_raw(&l.input(state, &action.to_bits(), arrivals))
            .map_err(|_| EnvError::Untrained)?;
        let (next, kpis) = l.postprocess(state, &raw);
        Ok((kpis, next))
    }

    /// One generative transition: arrivals are drawn from the input models.
    pub fn step(&self, state: &[f64], action: &ActionVector, stream: &mut RngStream) -> Result<(EpochKpis, Vec<f64>), EnvError> {
        let arrivals = self.input_models.sample_arrival_counts(stream);
        self.predict(state, action, &arrivals)
    }

    /// Holdout RMSE of the post-processed predictions.
    pub fn evaluate(&self, rows: &[SurrogateRow]) -> Result<RmseReport, SurrogateError> {
        let l = self.layout;
        let (nc, ng, sd) = (l.contact_groups, l.expert_groups, l.state_dim());
        let mut sq = vec![0.0; l.target_dim()];
        for row in rows {
            let state = &row.input[..sd];
            let raw = self.predict_raw(&row.input)?;
            let (next, kpis) = l.postprocess(state, &raw);
            let mut pred = next;
            pred.extend(kpis.to_vec());
            sq.iter_mut()
                .zip(pred.iter().zip(&row.target))
                .for_each(|(s, (p, t))| *s += (p - t) * (p - t));
        }
        let n = rows.len().max(1) as f64;
        let rmse: Vec<f64> = sq.iter().map(|s| libm::sqrt(s / n)).collect();
        let k = &rmse[sd..];
        Ok(RmseReport {
            next_state: rmse[..sd].to_vec(),
            waiting: k[..nc].to_vec(),
            abandonment: k[nc..2 * nc].to_vec(),
            utilization: k[2 * nc..2 * nc + ng].to_vec(),
            backoffice: k[2 * nc + ng..].to_vec(),
            holdout_rows: rows.len(),
            final_train_loss: f64::NAN,
        })
    }
}

/// Fits the network on standardized rows (minibatch Adam, dropout during
/// training only) and reports holdout RMSE.
pub fn train_surrogate(
    dataset: &Dataset,
    cfg: &SurrogateTrainConfig,
    input_models: InputModels,
    initial_state: Vec<f64>,
    seed: u64,
) -> Result<(SurrogateModel, RmseReport), SurrogateError> {
    if dataset.train.is_empty() {
        return Err(SurrogateError::Schema("empty training split".into()));
    }
    cfg.validate().map_err(|e| SurrogateError::Schema(format!("{e}")))?;
    let l = dataset.layout;
    let input_norm = Standardizer::fit(dataset.train.iter().map(|r| r.input.as_slice()), l.input_dim());
    let target_norm = Standardizer::fit(dataset.train.iter().map(|r| r.target.as_slice()), l.target_dim());
    let xs: Vec<Vec<f64>> = dataset.train.iter().map(|r| input_norm.apply(&r.input)).collect();
    let ys: Vec<Vec<f64>> = dataset.train.iter().map(|r| target_norm.apply(&r.target)).collect();

    let mut stream = RngStream::new(seed, TRAIN_STREAM);
    let mut dims = vec![l.input_dim()];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(l.target_dim());
    let mut net = Mlp::new(&dims, cfg.dropout, &mut stream)?;
    let mut opt = OptimizerState::adam(&net, cfg.learning_rate);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut last_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, stream.below(i + 1));
        }
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.minibatch) {
            let batch = Minibatch {
                inputs: chunk.iter().map(|&i| xs[i].clone()).collect(),
                targets: chunk.iter().map(|&i| ys[i].clone()).collect(),
            };
            let (loss, grads) = match net.backward(&batch, Some(&mut stream)) {
                Ok(v) => v,
                Err(NeuralError::NonFinite) => return Err(SurrogateError::Divergence { epoch }),
                Err(e) => return Err(e.into()),
            };
            opt.step(&mut net, &grads)?;
            sum += loss * chunk.len() as f64;
        }
        last_loss = sum / xs.len() as f64;
        if !last_loss.is_finite() {
            return Err(SurrogateError::Divergence { epoch });
        }
    }

    let model = SurrogateModel {
        layout: l,
        net,
        input_norm,
        target_norm,
        input_models,
        initial_state,
    };
    let mut report = model.evaluate(&dataset.holdout)?;
    report.final_train_loss = last_loss;
    Ok((model, report))
}

/// Initial observation of a configuration, as the surrogate environment's
/// reset state.
pub fn initial_state_features(config: &CallCenterConfig) -> Result<Vec<f64>, crate::ConfigError> {
    Ok(SystemState::new(config)?.observation(config))
}

/// The surrogate as an [`Environment`]. The reward is applied to predicted
/// KPIs, so changing it needs no re-fit.
#[derive(Debug, Clone)]
pub struct SurrogateEnv {
    model: Arc<SurrogateModel>,
    reward: RewardSpec,
    episode: Option<(Vec<f64>, usize, RngStream)>,
    last: Option<(EpochKpis, Vec<f64>)>,
}

impl SurrogateEnv {
    pub fn new(model: Arc<SurrogateModel>, reward: RewardSpec) -> Result<Self, crate::ConfigError> {
        reward.validate(model.layout.contact_groups, model.layout.expert_groups)?;
        Ok(Self {
            model,
            reward,
            episode: None,
            last: None,
        })
    }

    pub fn model(&self) -> &SurrogateModel {
        &self.model
    }

    /// KPIs and next-state features of the most recent step.
    pub fn last_step(&self) -> Option<&(EpochKpis, Vec<f64>)> {
        self.last.as_ref()
    }
}

impl Environment for SurrogateEnv {
    fn observation_dim(&self) -> usize {
        self.model.layout.state_dim()
    }

    fn num_actions(&self) -> usize {
        1 << self.model.layout.experts
    }

    fn horizon(&self) -> usize {
        self.model.layout.horizon
    }

    fn backend(&self) -> Backend {
        Backend::Surrogate
    }

    fn reset(&mut self, stream: RngStream) -> Vec<f64> {
        let s = self.model.initial_state.clone();
        self.episode = Some((s.clone(), 0, stream));
        self.last = None;
        s
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        let horizon = self.model.layout.horizon;
        let (state, epoch, stream) = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        if *epoch >= horizon {
            return Err(EnvError::EpisodeComplete);
        }
        let a = ActionVector::from_index(action, self.model.layout.experts).ok_or(EnvError::InvalidAction(action))?;
        let (kpis, next) = self.model.step(state, &a, stream)?;
        *epoch += 1;
        let done = *epoch == horizon;
        let mut reward = compute_reward(&kpis, &self.reward);
        if done {
            reward += terminal_reward(&kpis, &self.reward);
        }
        *state = next.clone();
        self.last = Some((kpis, next.clone()));
        Ok(StepOutcome {
            observation: next,
            reward,
            done,
        })
    }

    fn observe(&self) -> Result<Vec<f64>, EnvError> {
        self.episode.as_ref().map(|(s, _, _)| s.clone()).ok_or(EnvError::NotReset)
    }
}
