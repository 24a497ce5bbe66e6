//! Inverse soft-Q imitation agent for the IRS-user association, plus the
//! exhaustive expert-dataset generator it learns from.
//!
//! The agent maps the (normalized) UAV position to one Q-value per feasible
//! association. Training maximizes the inverse soft-Q objective over
//! half-expert/half-online batches; no environment reward enters the
//! objective (the stored rewards are kept for analysis and audits).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::composite_gain;
use crate::energy::energy_efficiency;
use crate::error::{Error, Result};
use crate::noma::{initial_order, initial_power, rates};
use crate::scenario::{enumerate_associations, Association, LearningConfig, Point3, Scenario, SolverConfig};
use crate::trajectory::optimize_step;

/// One interaction record.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Point3,
    pub action: usize,
    pub next_state: Point3,
    pub reward: f64,
    pub slot: usize,
}

/// Deflation of the statistical divergence: F(x) = x - x^2 / (4 C).
pub fn deflate(x: f64, c: f64) -> f64 {
    x - x * x / (4.0 * c)
}

fn deflate_grad(x: f64, c: f64) -> f64 {
    1.0 - x / (2.0 * c)
}

/// Log-sum-exp with max-shift stabilization.
pub fn soft_value(qvals: &[f64]) -> f64 {
    let m = qvals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + qvals.iter().map(|q| (q - m).exp()).sum::<f64>().ln()
}

/// Softmax distribution over actions (shift-invariant).
pub fn softmax(qvals: &[f64]) -> Vec<f64> {
    let m = qvals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = qvals.iter().map(|q| (q - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Feed-forward Q-network: normalized 3D state in, one Q-value per action
/// out; two tanh hidden layers, linear output. Parameters live in one flat
/// vector so gradient steps and finite differences stay trivial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QFunction {
    pub hidden: usize,
    pub actions: usize,
    pub params: Vec<f64>,
    pub norm_center: [f64; 3],
    pub norm_half: [f64; 3],
}

const INPUT: usize = 3;

struct ParamSlices {
    w1: std::ops::Range<usize>,
    b1: std::ops::Range<usize>,
    w2: std::ops::Range<usize>,
    b2: std::ops::Range<usize>,
    w3: std::ops::Range<usize>,
    b3: std::ops::Range<usize>,
}

/// Forward-pass activations cached for backpropagation.
pub struct ForwardCache {
    input: [f64; 3],
    a1: Vec<f64>,
    a2: Vec<f64>,
    pub q: Vec<f64>,
}

impl QFunction {
    fn slices(&self) -> ParamSlices {
        let h = self.hidden;
        let a = self.actions;
        let mut at = 0;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        ParamSlices {
            w1: take(h * INPUT),
            b1: take(h),
            w2: take(h * h),
            b2: take(h),
            w3: take(a * h),
            b3: take(a),
        }
    }

    pub fn param_count(hidden: usize, actions: usize) -> usize {
        hidden * INPUT + hidden + hidden * hidden + hidden + actions * hidden + actions
    }

    /// Fresh network with uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights.
    pub fn new(sc: &Scenario, hidden: usize, actions: usize, seed: u64) -> QFunction {
        let (norm_center, norm_half) = sc.map_extents();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = QFunction {
            hidden,
            actions,
            params: vec![0.0; Self::param_count(hidden, actions)],
            norm_center,
            norm_half,
        };
        let s = q.slices();
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, params: &mut Vec<f64>| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for k in range {
                params[k] = rng.random_range(-bound..bound);
            }
        };
        fill(s.w1, INPUT, &mut q.params);
        fill(s.b1, INPUT, &mut q.params);
        fill(s.w2, hidden, &mut q.params);
        fill(s.b2, hidden, &mut q.params);
        fill(s.w3, hidden, &mut q.params);
        fill(s.b3, hidden, &mut q.params);
        q
    }

    fn normalize(&self, state: Point3) -> [f64; 3] {
        [
            (state.x - self.norm_center[0]) / self.norm_half[0],
            (state.y - self.norm_center[1]) / self.norm_half[1],
            (state.z - self.norm_center[2]) / self.norm_half[2],
        ]
    }

    /// Deterministic forward pass returning per-action Q-values.
    pub fn forward(&self, state: Point3) -> ForwardCache {
        let s = self.slices();
        let h = self.hidden;
        let x = self.normalize(state);
        let p = &self.params;
        let mut a1 = vec![0.0; h];
        for i in 0..h {
            let mut z = p[s.b1.start + i];
            for j in 0..INPUT {
                z += p[s.w1.start + i * INPUT + j] * x[j];
            }
            a1[i] = z.tanh();
        }
        let mut a2 = vec![0.0; h];
        for i in 0..h {
            let mut z = p[s.b2.start + i];
            for j in 0..h {
                z += p[s.w2.start + i * h + j] * a1[j];
            }
            a2[i] = z.tanh();
        }
        let mut q = vec![0.0; self.actions];
        for i in 0..self.actions {
            let mut z = p[s.b3.start + i];
            for j in 0..h {
                z += p[s.w3.start + i * h + j] * a2[j];
            }
            q[i] = z;
        }
        ForwardCache {
            input: x,
            a1,
            a2,
            q,
        }
    }

    pub fn q_values(&self, state: Point3) -> Vec<f64> {
        self.forward(state).q
    }

    /// Accumulate d(out_grad . q)/d(params) into `grad`.
    pub fn backward(&self, cache: &ForwardCache, out_grad: &[f64], grad: &mut [f64]) {
        let s = self.slices();
        let h = self.hidden;
        let p = &self.params;
        // output layer
        let mut da2 = vec![0.0; h];
        for i in 0..self.actions {
            let d = out_grad[i];
            if d == 0.0 {
                continue;
            }
            grad[s.b3.start + i] += d;
            for j in 0..h {
                grad[s.w3.start + i * h + j] += d * cache.a2[j];
                da2[j] += d * p[s.w3.start + i * h + j];
            }
        }
        // second hidden layer
        let mut da1 = vec![0.0; h];
        for i in 0..h {
            let dz = da2[i] * (1.0 - cache.a2[i] * cache.a2[i]);
            if dz == 0.0 {
                continue;
            }
            grad[s.b2.start + i] += dz;
            for j in 0..h {
                grad[s.w2.start + i * h + j] += dz * cache.a1[j];
                da1[j] += dz * p[s.w2.start + i * h + j];
            }
        }
        // first hidden layer
        for i in 0..h {
            let dz = da1[i] * (1.0 - cache.a1[i] * cache.a1[i]);
            if dz == 0.0 {
                continue;
            }
            grad[s.b1.start + i] += dz;
            for j in 0..INPUT {
                grad[s.w1.start + i * INPUT + j] += dz * cache.input[j];
            }
        }
    }

    /// Greedy action: argmax Q, lowest index on ties.
    pub fn greedy(&self, state: Point3) -> usize {
        let q = self.q_values(state);
        let mut best = 0;
        for (k, v) in q.iter().enumerate() {
            if *v > q[best] {
                best = k;
            }
        }
        best
    }

    /// Sample from the softmax policy with the run's generator.
    pub fn sample(&self, state: Point3, rng: &mut ChaCha8Rng) -> usize {
        let probs = softmax(&self.q_values(state));
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                return k;
            }
        }
        probs.len() - 1
    }

    pub fn save_json(&self) -> String {
        let doc = serde_json::json!({
            "schema_version": 1,
            "input_dim": INPUT,
            "hidden": self.hidden,
            "actions": self.actions,
            "norm_center": self.norm_center,
            "norm_half": self.norm_half,
            "params": self.params,
        });
        serde_json::to_string(&doc).expect("model serialization cannot fail")
    }

    pub fn load_json(text: &str) -> Result<QFunction> {
        let doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("model: {e}")))?;
        let hidden = doc["hidden"]
            .as_u64()
            .ok_or_else(|| Error::Format("model: missing hidden".into()))? as usize;
        let actions = doc["actions"]
            .as_u64()
            .ok_or_else(|| Error::Format("model: missing actions".into()))? as usize;
        let params: Vec<f64> = serde_json::from_value(doc["params"].clone())
            .map_err(|e| Error::Format(format!("model params: {e}")))?;
        if params.len() != Self::param_count(hidden, actions) {
            return Err(Error::Format("model: parameter count mismatch".into()));
        }
        let norm_center: [f64; 3] = serde_json::from_value(doc["norm_center"].clone())
            .map_err(|e| Error::Format(format!("model norm: {e}")))?;
        let norm_half: [f64; 3] = serde_json::from_value(doc["norm_half"].clone())
            .map_err(|e| Error::Format(format!("model norm: {e}")))?;
        if !params.iter().all(|p| p.is_finite()) {
            return Err(Error::Format("model: non-finite parameter".into()));
        }
        Ok(QFunction {
            hidden,
            actions,
            params,
            norm_center,
            norm_half,
        })
    }
}

/// Expert buffer (fixed) plus bounded online ring and the episode initial
/// states. Batches draw half from each buffer.
#[derive(Debug, Clone)]
pub struct ReplayBuffers {
    pub expert: Vec<Transition>,
    online: Vec<Transition>,
    capacity: usize,
    write_at: usize,
    filled: bool,
    pub initial_states: Vec<Point3>,
}

impl ReplayBuffers {
    pub fn new(expert: Vec<Transition>) -> ReplayBuffers {
        let capacity = expert.len().max(1);
        ReplayBuffers {
            expert,
            online: Vec::new(),
            capacity,
            write_at: 0,
            filled: false,
            initial_states: Vec::new(),
        }
    }

    pub fn push_online(&mut self, t: Transition) {
        if self.online.len() < self.capacity {
            self.online.push(t);
            if self.online.len() == self.capacity {
                self.filled = true;
            }
        } else {
            self.online[self.write_at] = t;
            self.write_at = (self.write_at + 1) % self.capacity;
        }
    }

    pub fn record_initial(&mut self, state: Point3) {
        self.initial_states.push(state);
    }

    /// Training starts once the online ring has reached the expert size.
    pub fn online_ready(&self) -> bool {
        self.filled
    }

    pub fn online_len(&self) -> usize {
        self.online.len()
    }

    fn sample_halves<'a>(
        &'a self,
        batch: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<&'a Transition>, Vec<&'a Transition>) {
        let half = (batch / 2).max(1);
        let ex = (0..half)
            .map(|_| &self.expert[rng.random_range(0..self.expert.len())])
            .collect();
        let on = (0..half)
            .map(|_| &self.online[rng.random_range(0..self.online.len())])
            .collect();
        (ex, on)
    }
}

/// Inverse soft-Q objective over sampled batches, with its full analytic
/// gradient. The first expectation runs over expert transitions; the second
/// over the online states together with the stored episode initial states.
pub fn iq_objective(
    q: &QFunction,
    expert_batch: &[&Transition],
    online_batch: &[&Transition],
    initial_states: &[Point3],
    discount: f64,
    deflation: f64,
) -> (f64, Vec<f64>) {
    assert!(!expert_batch.is_empty(), "expert batch must be nonempty");
    let mut grad = vec![0.0; q.params.len()];
    let mut j = 0.0;
    let e_w = 1.0 / expert_batch.len() as f64;
    for tr in expert_batch {
        let cache_s = q.forward(tr.state);
        let cache_n = q.forward(tr.next_state);
        let v_next = soft_value(&cache_n.q);
        let x = cache_s.q[tr.action] - discount * v_next;
        j += e_w * deflate(x, deflation);
        let dx = e_w * deflate_grad(x, deflation);
        let mut out = vec![0.0; q.actions];
        out[tr.action] = dx;
        q.backward(&cache_s, &out, &mut grad);
        let probs = softmax(&cache_n.q);
        let out_n: Vec<f64> = probs.iter().map(|p| -dx * discount * p).collect();
        q.backward(&cache_n, &out_n, &mut grad);
    }

    let value_states: Vec<Point3> = online_batch
        .iter()
        .map(|t| t.state)
        .chain(initial_states.iter().copied())
        .collect();
    if !value_states.is_empty() {
        let o_w = (1.0 - discount) / value_states.len() as f64;
        for s in value_states {
            let cache = q.forward(s);
            j -= o_w * soft_value(&cache.q);
            let probs = softmax(&cache.q);
            let out: Vec<f64> = probs.iter().map(|p| -o_w * p).collect();
            q.backward(&cache, &out, &mut grad);
        }
    }
    (j, grad)
}

/// One gradient-ascent step on the inverse soft-Q objective over a
/// half-expert/half-online batch.
pub fn train_step(
    q: &mut QFunction,
    buffers: &ReplayBuffers,
    learning_rate: f64,
    batch: usize,
    discount: f64,
    deflation: f64,
    rng: &mut ChaCha8Rng,
) {
    let (expert, online) = buffers.sample_halves(batch, rng);
    let (_, grad) = iq_objective(q, &expert, &online, &buffers.initial_states, discount, deflation);
    for (p, g) in q.params.iter_mut().zip(&grad) {
        *p += learning_rate * g;
    }
}

/// Reward used for both expert scoring and online interaction: the slot
/// energy efficiency at the current position with the rate/power
/// initializers and hover-floor propulsion. Recomputable from
/// (state, action) alone.
pub fn hover_reward(pos: Point3, assoc: &Association, sc: &Scenario) -> Result<f64> {
    let gains = composite_gain(pos, assoc, sc)?;
    let order = initial_order(&gains);
    let power = initial_power(sc.n_users(), sc.p_max);
    let r = rates(&power, &order, &gains, sc.noise);
    Ok(energy_efficiency(&r, &power, [0.0, 0.0], sc))
}

/// Environment transition: the trajectory step under the chosen association
/// and the rate/power initializers at the current position.
pub fn env_step(
    pos: Point3,
    prev_vel: [f64; 2],
    assoc: &Association,
    sc: &Scenario,
    solver: &SolverConfig,
) -> Result<(Point3, f64)> {
    let gains = composite_gain(pos, assoc, sc)?;
    let order = initial_order(&gains);
    let power = initial_power(sc.n_users(), sc.p_max);
    let step = optimize_step(pos, prev_vel, assoc, &order, &power, sc, solver)?;
    let reward = hover_reward(pos, assoc, sc)?;
    Ok((step.next_pos, reward))
}

/// Exhaustively scored expert decisions from each start: the action
/// maximizing the hover-floor efficiency at the current position, advancing
/// through the trajectory step. Ties break toward the lowest action index.
pub fn generate_expert(
    sc: &Scenario,
    solver: &SolverConfig,
    starts: &[Point3],
    slots: usize,
) -> Result<Vec<Transition>> {
    let actions = enumerate_associations(sc.n_users(), sc.n_irs(), sc.panel_rows);
    if actions.is_empty() {
        return Err(Error::Infeasible(
            "no feasible association exists (capacity too small)".into(),
        ));
    }
    let mut out = Vec::with_capacity(starts.len() * slots);
    for &start in starts {
        let mut pos = start;
        let mut prev_vel = [0.0, 0.0];
        for t in 0..slots {
            let mut best = 0usize;
            let mut best_reward = f64::NEG_INFINITY;
            for (k, assoc) in actions.iter().enumerate() {
                let r = hover_reward(pos, assoc, sc)?;
                if r > best_reward {
                    best_reward = r;
                    best = k;
                }
            }
            let (next, _) = env_step(pos, prev_vel, &actions[best], sc, solver)?;
            out.push(Transition {
                state: pos,
                action: best,
                next_state: next,
                reward: best_reward,
                slot: t,
            });
            prev_vel = [(next.x - pos.x) / sc.tau, (next.y - pos.y) / sc.tau];
            pos = next;
        }
    }
    Ok(out)
}

/// Seeded start points inside the scene bounding box at cruise altitude,
/// avoiding the episode start itself.
pub fn random_starts(sc: &Scenario, count: usize, seed: u64) -> Vec<Point3> {
    let (center, half) = sc.map_extents();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = Point3::new(
            center[0] + rng.random_range(-half[0]..half[0]),
            center[1] + rng.random_range(-half[1]..half[1]),
            sc.uav_start.z.clamp(sc.z_min, sc.z_max),
        );
        if p.dist(&sc.uav_start) > 1.0 {
            out.push(p);
        }
    }
    out
}

/// Full training run: interact from the episode start with the sampling
/// policy, store transitions in the online ring, and take one gradient step
/// per interaction once the ring has filled to the expert size.
pub fn train_agent(
    sc: &Scenario,
    solver: &SolverConfig,
    learning: &LearningConfig,
    expert: Vec<Transition>,
    seed: u64,
) -> Result<QFunction> {
    let actions = enumerate_associations(sc.n_users(), sc.n_irs(), sc.panel_rows);
    let mut q = QFunction::new(sc, learning.hidden, actions.len(), seed);
    let mut buffers = ReplayBuffers::new(expert);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = sc.uav_start;
    let mut prev_vel = [0.0, 0.0];
    let mut slot = 0usize;
    buffers.record_initial(pos);
    for step in 0..learning.train_steps {
        let a = q.sample(pos, &mut rng);
        let (next, reward) = env_step(pos, prev_vel, &actions[a], sc, solver)?;
        buffers.push_online(Transition {
            state: pos,
            action: a,
            next_state: next,
            reward,
            slot,
        });
        if buffers.online_ready() {
            train_step(
                &mut q,
                &buffers,
                learning.learning_rate,
                learning.batch,
                learning.discount,
                learning.deflation,
                &mut rng,
            );
        }
        prev_vel = [(next.x - pos.x) / sc.tau, (next.y - pos.y) / sc.tau];
        pos = next;
        slot += 1;
        if slot == sc.slots {
            pos = sc.uav_start;
            prev_vel = [0.0, 0.0];
            slot = 0;
            buffers.record_initial(pos);
        }
        if (step + 1) % 500 == 0 {
            log::info!(
                "training step {}/{} (online buffer {}/{})",
                step + 1,
                learning.train_steps,
                buffers.online_len(),
                buffers.capacity
            );
        }
    }
    Ok(q)
}

// ---------------------------------------------------------------------------
// Dataset file format
// ---------------------------------------------------------------------------

const EXPERT_HEADER: &str =
    "schema_version,state_x,state_y,state_z,action,next_x,next_y,next_z,reward,t";

pub fn expert_to_csv(transitions: &[Transition]) -> String {
    let mut out = String::from(EXPERT_HEADER);
    out.push('\n');
    for tr in transitions {
        out.push_str(&format!(
            "1,{},{},{},{},{},{},{},{},{}\n",
            tr.state.x,
            tr.state.y,
            tr.state.z,
            tr.action,
            tr.next_state.x,
            tr.next_state.y,
            tr.next_state.z,
            tr.reward,
            tr.slot
        ));
    }
    out
}

pub fn expert_from_csv(text: &str) -> Result<Vec<Transition>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("expert dataset: empty file".into()))?;
    if header.trim() != EXPERT_HEADER {
        return Err(Error::Format("expert dataset: unexpected header".into()));
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Format(format!(
                "expert dataset line {}: expected 10 fields",
                ln + 2
            )));
        }
        let f = |k: usize| -> Result<f64> {
            fields[k]
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("expert dataset line {}: {e}", ln + 2)))
        };
        out.push(Transition {
            state: Point3::new(f(1)?, f(2)?, f(3)?),
            action: fields[4]
                .parse::<usize>()
                .map_err(|e| Error::Format(format!("expert dataset line {}: {e}", ln + 2)))?,
            next_state: Point3::new(f(5)?, f(6)?, f(7)?),
            reward: f(8)?,
            slot: fields[9]
                .parse::<usize>()
                .map_err(|e| Error::Format(format!("expert dataset line {}: {e}", ln + 2)))?,
        });
    }
    Ok(out)
}
