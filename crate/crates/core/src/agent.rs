//! Actor-critic walker over a patient-linked knowledge graph.
//!
//! A state concatenates the patient code, the current entity embedding and a
//! one-step history (previous entity embedding, one-hot of the relation just
//! taken). A shared two-layer ReLU trunk feeds a policy head (one logit per
//! entity, masked to the legal tails) and a scalar value head.

use std::collections::BTreeSet;

use ndarray::{concatenate, Array1, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{relation_one_hot, EmbeddingError, Embeddings};
use crate::kg::{Action, ActionMask, EntityId, KgError, KnowledgeGraph, LinkedGraph, Node, RelationId};
use crate::nn::{
    entropy, entropy_logit_grad, log_prob_logit_grad, masked_softmax, Activation, DenseLayer, Direction,
    GradientTape, Mlp, NamedTensor, NnError, Optimizer, OptimizerKind, Parameters,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("state width {got} does not match network input {expected}")]
    StateWidth { expected: usize, got: usize },
    #[error("policy width {got} does not match entity count {expected}")]
    PolicyWidth { expected: usize, got: usize },
    #[error("patient code has width {got}, entity embeddings have {expected}")]
    CodeWidth { expected: usize, got: usize },
    #[error("update batch is empty")]
    EmptyBatch,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite objective at epoch {epoch}: return {mean_return}, entropy {mean_entropy}, critic loss {critic_loss}")]
    NonFinite {
        epoch: usize,
        mean_return: f64,
        mean_entropy: f64,
        critic_loss: f64,
    },
}

/// Policy input: `(p_e, e_t, e_{t-1}, r_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct State(pub Array1<f64>);

impl State {
    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Width of a state vector for code width `k` and `n_relations` relation types.
pub fn state_width(k: usize, n_relations: usize) -> usize {
    3 * k + n_relations
}

fn node_embedding<'a>(
    embeddings: &'a Embeddings,
    p_e: ArrayView1<'a, f64>,
    node: Node,
) -> Result<ArrayView1<'a, f64>, AgentError> {
    match node {
        Node::Patient => Ok(p_e),
        Node::Entity(id) => Ok(embeddings.entity(id.0)?),
    }
}

/// Assembles a state. At the start of a walk `current` is the patient and
/// `previous` is `None`, giving `(p_e, p_e, 0, 0)`; the patient also stands in
/// for the previous entity after the first step.
pub fn build_state(
    embeddings: &Embeddings,
    n_relations: usize,
    p_e: ArrayView1<'_, f64>,
    current: Node,
    previous: Option<(Node, RelationId)>,
) -> Result<State, AgentError> {
    let k = embeddings.dim();
    if p_e.len() != k {
        return Err(AgentError::CodeWidth {
            expected: k,
            got: p_e.len(),
        });
    }
    let current = node_embedding(embeddings, p_e, current)?;
    let (prev_entity, relation) = match previous {
        None => (Array1::zeros(k), Array1::zeros(n_relations)),
        Some((node, rel)) => (
            node_embedding(embeddings, p_e, node)?.to_owned(),
            relation_one_hot(rel.0, n_relations)?.0,
        ),
    };
    let state = concatenate(Axis(0), &[p_e, current, prev_entity.view(), relation.view()])
        .expect("1-d concatenation");
    Ok(State(state))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentParams {
    /// Two ReLU layers.
    pub trunk: Mlp,
    pub policy: DenseLayer,
    pub value: DenseLayer,
}

impl AgentParams {
    pub fn init<R: Rng + ?Sized>(state_dim: usize, hidden: usize, entities: usize, rng: &mut R) -> Self {
        Self {
            trunk: Mlp::init(&[state_dim, hidden, hidden], &[Activation::Relu, Activation::Relu], rng),
            policy: DenseLayer::init(hidden, entities, rng),
            value: DenseLayer::init(hidden, 1, rng),
        }
    }

    pub fn zeros(state_dim: usize, hidden: usize, entities: usize) -> Self {
        Self {
            trunk: Mlp::new(
                vec![DenseLayer::zeros(state_dim, hidden), DenseLayer::zeros(hidden, hidden)],
                vec![Activation::Relu, Activation::Relu],
            ),
            policy: DenseLayer::zeros(hidden, entities),
            value: DenseLayer::zeros(hidden, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.state_dim(), self.hidden_dim(), self.entity_count())
    }

    pub fn state_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.trunk.out_dim()
    }

    pub fn entity_count(&self) -> usize {
        self.policy.out_dim()
    }

    /// Checks the network against a graph and embedding set.
    pub fn check_compatible(&self, kg: &KnowledgeGraph, embeddings: &Embeddings) -> Result<(), AgentError> {
        let expected = state_width(embeddings.dim(), kg.relation_count());
        if self.state_dim() != expected {
            return Err(AgentError::StateWidth {
                expected,
                got: self.state_dim(),
            });
        }
        if self.entity_count() != kg.entity_count() {
            return Err(AgentError::PolicyWidth {
                expected: kg.entity_count(),
                got: self.entity_count(),
            });
        }
        if embeddings.rbm.visible_count() != kg.entity_count() {
            return Err(AgentError::PolicyWidth {
                expected: kg.entity_count(),
                got: embeddings.rbm.visible_count(),
            });
        }
        Ok(())
    }

    fn check_state(&self, state: &State) -> Result<(), AgentError> {
        if state.len() != self.state_dim() {
            return Err(AgentError::StateWidth {
                expected: self.state_dim(),
                got: state.len(),
            });
        }
        Ok(())
    }

    /// `(π, v)` for one state under a legal-action mask.
    pub fn policy_value(&self, state: &State, mask: &[bool]) -> Result<(Array1<f64>, f64), AgentError> {
        self.check_state(state)?;
        let x = self.trunk.forward(state.view())?;
        let logits = self.policy.affine(x.view())?;
        let probs = masked_softmax(logits.view(), mask)?;
        let v = self.value.affine(x.view())?[0];
        Ok((probs, v))
    }

    fn policy_value_recorded(
        &self,
        state: &State,
        mask: &[bool],
        tape: &mut GradientTape,
    ) -> Result<(Array1<f64>, f64, Array1<f64>), AgentError> {
        self.check_state(state)?;
        let x = self.trunk.forward_recorded(state.view(), tape)?;
        let logits = self.policy.affine(x.view())?;
        let probs = masked_softmax(logits.view(), mask)?;
        let v = self.value.affine(x.view())?[0];
        Ok((probs, v, x))
    }
}

impl Parameters for AgentParams {
    fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = self.trunk.tensors_with_prefix("agent.trunk.");
        for (name, layer) in [("agent.policy.", &self.policy), ("agent.value.", &self.value)] {
            for t in layer.tensors() {
                out.push(NamedTensor {
                    name: format!("{name}{}", t.name),
                    ..t
                });
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.trunk.tensors_mut_all();
        out.extend(self.policy.tensors_mut());
        out.extend(self.value.tensors_mut());
        out
    }
}

/// Position and history of one walk; shared by rollouts and beam search.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkState {
    pub current: Node,
    pub previous: Option<(Node, RelationId)>,
    /// Entities walked before `current`, in order, without repeats.
    pub visited: Vec<EntityId>,
}

impl WalkState {
    pub fn start() -> Self {
        Self {
            current: Node::Patient,
            previous: None,
            visited: Vec::new(),
        }
    }

    pub fn advance(&mut self, action: Action) {
        if let Node::Entity(id) = self.current {
            if id != action.tail && !self.visited.contains(&id) {
                self.visited.push(id);
            }
        }
        self.previous = Some((self.current, action.relation));
        self.current = Node::Entity(action.tail);
    }
}

/// What the walker sees at one position: state, legal actions and policy.
#[derive(Clone, Debug)]
pub struct StepView {
    pub state: State,
    pub mask: ActionMask,
    /// `None` at a dead end.
    pub policy: Option<(Array1<f64>, f64)>,
}

/// Borrowed bundle of everything a walk needs.
#[derive(Clone, Copy)]
pub struct Walker<'a> {
    pub params: &'a AgentParams,
    pub embeddings: &'a Embeddings,
}

impl<'a> Walker<'a> {
    pub fn new(params: &'a AgentParams, embeddings: &'a Embeddings) -> Self {
        Self { params, embeddings }
    }

    pub fn view(&self, graph: &LinkedGraph<'_>, p_e: ArrayView1<'_, f64>, walk: &WalkState) -> Result<StepView, AgentError> {
        let kg = graph.base();
        let state = build_state(self.embeddings, kg.relation_count(), p_e, walk.current, walk.previous)?;
        let space = graph.action_space(walk.current, &walk.visited);
        let mask = ActionMask::from_actions(&space, kg.entity_count())?;
        let policy = if mask.is_empty() {
            None
        } else {
            Some(self.params.policy_value(&state, &mask.bits())?)
        };
        Ok(StepView { state, mask, policy })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub state: State,
    pub mask: Vec<bool>,
    pub action: Action,
    pub probs: Array1<f64>,
    pub value: f64,
}

impl TrajectoryStep {
    pub fn action_prob(&self) -> f64 {
        self.probs[self.action.tail.0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub terminal: Node,
    /// Terminal reward in {+1, 0, −1}.
    pub reward: i32,
    /// The walk hit an empty action space before the horizon.
    pub dead_end: bool,
}

impl Trajectory {
    pub fn probability(&self) -> f64 {
        self.steps.iter().map(TrajectoryStep::action_prob).product()
    }

    pub fn entities(&self) -> Vec<EntityId> {
        self.steps.iter().map(|s| s.action.tail).collect()
    }
}

/// Samples an index from `probs`, restricted to legal entries.
fn sample_legal<R: Rng + ?Sized>(probs: &Array1<f64>, mask: &ActionMask, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for a in mask.actions() {
        let i = a.tail.0;
        let p = probs[i];
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(i);
        if u < acc {
            return i;
        }
    }
    last.or_else(|| mask.actions().next().map(|a| a.tail.0))
        .expect("mask is non-empty")
}

/// +1 for a disease that occurs next, 0 for any other disease, −1 otherwise.
pub fn terminal_reward(kg: &KnowledgeGraph, terminal: Node, future_labels: &BTreeSet<EntityId>) -> i32 {
    match terminal {
        Node::Entity(id) if kg.is_disease(id) => {
            if future_labels.contains(&id) {
                1
            } else {
                0
            }
        }
        _ => -1,
    }
}

/// Samples one walk of at most `horizon` steps. Rewards are left at zero;
/// see [`terminal_reward`].
pub fn rollout<R: Rng + ?Sized>(
    walker: Walker<'_>,
    graph: &LinkedGraph<'_>,
    p_e: ArrayView1<'_, f64>,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory, AgentError> {
    let mut walk = WalkState::start();
    let mut steps = Vec::with_capacity(horizon);
    let mut dead_end = false;
    for _ in 0..horizon {
        let view = walker.view(graph, p_e, &walk)?;
        let Some((probs, value)) = view.policy else {
            dead_end = true;
            break;
        };
        let idx = sample_legal(&probs, &view.mask, rng);
        let action = view.mask.action_for(idx).expect("sampled a legal tail");
        walk.advance(action);
        steps.push(TrajectoryStep {
            state: view.state,
            mask: view.mask.bits(),
            action,
            probs,
            value,
        });
    }
    Ok(Trajectory {
        steps,
        terminal: walk.current,
        reward: 0,
        dead_end,
    })
}

/// Discounted return per step: `G_t = γ^{T-1-t} R_T` (intermediate rewards are zero).
pub fn returns(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let n = traj.steps.len();
    (0..n)
        .map(|t| gamma.powi((n - 1 - t) as i32) * f64::from(traj.reward))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub horizon: usize,
    pub gamma: f64,
    pub entropy_weight: f64,
    pub critic_weight: f64,
    pub episodes_per_patient: usize,
    /// Patients per update.
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub hidden: usize,
    /// Set from the run-level seed, not from the config section.
    #[serde(skip)]
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 2,
            gamma: 0.99,
            entropy_weight: 0.13,
            critic_weight: 0.5,
            episodes_per_patient: 4,
            batch_size: 32,
            epochs: 30,
            lr: 1e-3,
            optimizer: OptimizerKind::default(),
            hidden: 64,
            seed: 0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.horizon == 0 {
            return Err(AgentError::Config("horizon must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(AgentError::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.entropy_weight.is_nan() || self.entropy_weight < 0.0 {
            return Err(AgentError::Config("entropy weight must be non-negative".into()));
        }
        if self.critic_weight.is_nan() || self.critic_weight < 0.0 {
            return Err(AgentError::Config("critic weight must be non-negative".into()));
        }
        if self.episodes_per_patient == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(AgentError::Config(
                "episodes_per_patient, batch_size and hidden must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Scalar diagnostics of one objective evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub trajectories: usize,
    pub mean_return: f64,
    /// Mean policy entropy per step.
    pub mean_entropy: f64,
    /// Mean squared critic error per trajectory.
    pub critic_loss: f64,
    pub objective: f64,
}

/// Advantages `G_t − v(s_t)` at the values recorded in each step.
pub fn advantages(batch: &[Trajectory], gamma: f64) -> Vec<Vec<f64>> {
    batch
        .iter()
        .map(|traj| {
            returns(traj, gamma)
                .iter()
                .zip(&traj.steps)
                .map(|(g, s)| g - s.value)
                .collect()
        })
        .collect()
}

/// Batch-averaged objective with the advantages held fixed:
/// `Σ_t [A_t ln π(a_t|s_t) + α H(π_t) − c (G_t − v(s_t))²]`.
pub fn objective(
    params: &AgentParams,
    batch: &[Trajectory],
    cfg: &TrainConfig,
    fixed_advantages: &[Vec<f64>],
) -> Result<f64, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let mut total = 0.0;
    for (traj, adv) in batch.iter().zip(fixed_advantages) {
        let g = returns(traj, cfg.gamma);
        for (t, step) in traj.steps.iter().enumerate() {
            let (probs, v) = params.policy_value(&step.state, &step.mask)?;
            total += adv[t] * probs[step.action.tail.0].ln() + cfg.entropy_weight * entropy(probs.view())
                - cfg.critic_weight * (g[t] - v).powi(2);
        }
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of one trajectory's objective terms, accumulated into `grads`
/// (unscaled). Advantages come from the current critic and are treated as
/// constants in the policy term.
fn accumulate_trajectory(
    params: &AgentParams,
    traj: &Trajectory,
    cfg: &TrainConfig,
    grads: &mut AgentParams,
    tape: &mut GradientTape,
    stats: &mut UpdateStats,
) -> Result<(), AgentError> {
    let g = returns(traj, cfg.gamma);
    let mut critic = 0.0;
    for (t, step) in traj.steps.iter().enumerate() {
        let (probs, v, x) = params.policy_value_recorded(&step.state, &step.mask, tape)?;
        let advantage = g[t] - v;
        let h = entropy(probs.view());
        let mut d_logits = log_prob_logit_grad(probs.view(), step.action.tail.0) * advantage;
        if cfg.entropy_weight != 0.0 {
            d_logits.scaled_add(cfg.entropy_weight, &entropy_logit_grad(probs.view()));
        }
        let d_value = 2.0 * cfg.critic_weight * advantage;

        let mut d_x = linear_backward(&params.policy, x.view(), d_logits.view(), &mut grads.policy);
        d_x += &linear_backward(&params.value, x.view(), ndarray::arr1(&[d_value]).view(), &mut grads.value);
        params.trunk.backward(tape, d_x.view(), &mut grads.trunk)?;

        stats.objective +=
            advantage * probs[step.action.tail.0].ln() + cfg.entropy_weight * h - cfg.critic_weight * advantage * advantage;
        stats.mean_entropy += h;
        critic += advantage * advantage;
    }
    stats.mean_return += f64::from(traj.reward);
    stats.critic_loss += critic;
    stats.trajectories += 1;
    Ok(())
}

fn linear_backward(
    layer: &DenseLayer,
    input: ArrayView1<'_, f64>,
    upstream: ArrayView1<'_, f64>,
    grads: &mut DenseLayer,
) -> Array1<f64> {
    for (i, &xi) in input.iter().enumerate() {
        if xi != 0.0 {
            grads.weights.row_mut(i).scaled_add(xi, &upstream);
        }
    }
    grads.bias += &upstream;
    layer.weights.dot(&upstream)
}

/// Gradient of [`objective`] (batch average) plus diagnostics.
pub fn objective_gradient(
    params: &AgentParams,
    batch: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<(AgentParams, UpdateStats), AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let mut grads = params.zeros_like();
    let mut stats = UpdateStats::default();
    let mut tape = GradientTape::new();
    let mut steps = 0usize;
    for traj in batch {
        accumulate_trajectory(params, traj, cfg, &mut grads, &mut tape, &mut stats)?;
        steps += traj.steps.len();
    }
    finish(&mut grads, &mut stats, batch.len(), steps);
    Ok((grads, stats))
}

fn finish(grads: &mut AgentParams, stats: &mut UpdateStats, trajectories: usize, steps: usize) {
    let scale = 1.0 / trajectories as f64;
    for t in grads.tensors_mut() {
        t.iter_mut().for_each(|x| *x *= scale);
    }
    stats.objective *= scale;
    stats.mean_return *= scale;
    stats.critic_loss *= scale;
    stats.mean_entropy /= steps.max(1) as f64;
}

/// One entropy-regularized actor-critic step on a batch of trajectories.
pub fn update(
    params: &mut AgentParams,
    opt: &mut Optimizer,
    batch: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<UpdateStats, AgentError> {
    let (grads, stats) = objective_gradient(params, batch, cfg)?;
    if !stats.objective.is_finite() {
        return Err(AgentError::NonFinite {
            epoch: 0,
            mean_return: stats.mean_return,
            mean_entropy: stats.mean_entropy,
            critic_loss: stats.critic_loss,
        });
    }
    opt.apply_update(params, &grads, Direction::Ascend)?;
    Ok(stats)
}

/// One training example for the agent.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPatient {
    pub code: Array1<f64>,
    pub links: Vec<EntityId>,
    pub labels: BTreeSet<EntityId>,
}

/// One structured training-log record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_return: f64,
    pub mean_entropy: f64,
    pub critic_loss: f64,
    /// Fraction of rollouts ending on a disease from the label set.
    pub hit_rate: f64,
}

#[derive(Clone, Debug)]
pub struct AgentTraining {
    pub params: AgentParams,
    pub log: Vec<EpochRecord>,
}

/// Rollouts and gradients for one patient; returns unscaled sums.
fn patient_contribution(
    params: &AgentParams,
    kg: &KnowledgeGraph,
    embeddings: &Embeddings,
    patient: &TrainingPatient,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(AgentParams, UpdateStats, usize, usize), AgentError> {
    let graph = kg.link_entities(&patient.links)?;
    let walker = Walker::new(params, embeddings);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grads = params.zeros_like();
    let mut stats = UpdateStats::default();
    let mut tape = GradientTape::new();
    let (mut steps, mut hits) = (0, 0);
    for _ in 0..cfg.episodes_per_patient {
        let mut traj = rollout(walker, &graph, patient.code.view(), cfg.horizon, &mut rng)?;
        traj.reward = terminal_reward(kg, traj.terminal, &patient.labels);
        if traj.reward == 1 {
            hits += 1;
        }
        steps += traj.steps.len();
        accumulate_trajectory(params, &traj, cfg, &mut grads, &mut tape, &mut stats)?;
    }
    Ok((grads, stats, steps, hits))
}

fn add_into(acc: &mut AgentParams, other: &AgentParams) {
    for (a, b) in acc.tensors_mut().into_iter().zip(other.tensors()) {
        for (x, y) in a.iter_mut().zip(b.values) {
            *x += y;
        }
    }
}

/// Trains a fresh agent. Per-patient randomness is derived from the master
/// seed before rollouts are dispatched and partial gradients are summed in
/// patient order, so the result does not depend on `workers`.
pub fn train_agent(
    kg: &KnowledgeGraph,
    embeddings: &Embeddings,
    patients: &[TrainingPatient],
    cfg: &TrainConfig,
) -> Result<AgentTraining, AgentError> {
    cfg.validate()?;
    if patients.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let state_dim = state_width(embeddings.dim(), kg.relation_count());
    let mut params = AgentParams::init(state_dim, cfg.hidden, kg.entity_count(), &mut rng);
    params.check_compatible(kg, embeddings)?;
    let mut opt = Optimizer::new(cfg.lr, cfg.optimizer)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| AgentError::Config(format!("worker pool: {e}")))?;

    let mut order: Vec<usize> = (0..patients.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_stats = UpdateStats::default();
        let (mut epoch_steps, mut epoch_hits) = (0usize, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let jobs: Vec<(usize, u64)> = chunk.iter().map(|&i| (i, rng.random::<u64>())).collect();
            let snapshot = &params;
            let run = |&(i, seed): &(usize, u64)| {
                patient_contribution(snapshot, kg, embeddings, &patients[i], cfg, seed)
            };
            let parts: Vec<_> = if cfg.workers <= 1 {
                jobs.iter().map(run).collect()
            } else {
                pool.install(|| jobs.par_iter().map(run).collect())
            };
            let mut grads = params.zeros_like();
            let mut stats = UpdateStats::default();
            let mut steps = 0;
            for part in parts {
                let (g, s, n, hits) = part?;
                add_into(&mut grads, &g);
                stats.objective += s.objective;
                stats.mean_return += s.mean_return;
                stats.mean_entropy += s.mean_entropy;
                stats.critic_loss += s.critic_loss;
                stats.trajectories += s.trajectories;
                steps += n;
                epoch_hits += hits;
            }
            epoch_stats.mean_return += stats.mean_return;
            epoch_stats.mean_entropy += stats.mean_entropy;
            epoch_stats.critic_loss += stats.critic_loss;
            epoch_stats.trajectories += stats.trajectories;
            epoch_steps += steps;
            let n = stats.trajectories;
            finish(&mut grads, &mut stats, n, steps);
            if !stats.objective.is_finite() {
                return Err(AgentError::NonFinite {
                    epoch,
                    mean_return: stats.mean_return,
                    mean_entropy: stats.mean_entropy,
                    critic_loss: stats.critic_loss,
                });
            }
            opt.apply_update(&mut params, &grads, Direction::Ascend)?;
        }
        let n = epoch_stats.trajectories.max(1) as f64;
        let record = EpochRecord {
            epoch,
            mean_return: epoch_stats.mean_return / n,
            mean_entropy: epoch_stats.mean_entropy / epoch_steps.max(1) as f64,
            critic_loss: epoch_stats.critic_loss / n,
            hit_rate: epoch_hits as f64 / n,
        };
        log::info!(
            "agent epoch {epoch}: return {:.4} entropy {:.4} critic {:.4} hit {:.4}",
            record.mean_return,
            record.mean_entropy,
            record.critic_loss,
            record.hit_rate
        );
        log.push(record);
    }
    Ok(AgentTraining { params, log })
}
