//! The built-in recurrent actor-critic: embedding → GRU → linear heads.
//!
//! One model definition serves every built-in task. Each sensor's integer
//! codes pass through a single fused embedding table (each sensor channel
//! owns a disjoint block of table rows, so a kind code and a color code with
//! the same integer value embed differently); interleaved channels of one
//! grid cell are summed, then all sensor features are concatenated and fed
//! to a GRU cell. Agents share the embedding table and the GRU; each agent
//! has its own linear actor and critic heads. Multi-agent batches arrive
//! with the agent dimension flattened into the rows (row `s·A + a` is
//! sampler `s`, agent `a`), so the heads select their rows by index.

use rand::Rng;

use crate::framework::model::{ActorCriticModel, ModelOutput};
use crate::framework::spaces::{ChannelLayout, ObsBatch, SensorSpec};
use crate::nn::{Embedding, GruCell, Linear};
use crate::tensor::{Graph, Scalar, Var};

/// Shape of an [`EmbedGru`] before construction.
#[derive(Debug, Clone)]
pub struct EmbedGruConfig {
    /// Sensors the model consumes, in feature-concatenation order.
    pub sensors: Vec<SensorSpec>,
    /// Embedding width per symbol.
    pub embed_dim: usize,
    /// GRU hidden width.
    pub hidden_dim: usize,
    /// Discrete actions per agent.
    pub action_count: usize,
    /// Agents driven simultaneously (1 for single-agent tasks).
    pub num_agents: usize,
}

impl EmbedGruConfig {
    pub fn new(sensors: Vec<SensorSpec>, hidden_dim: usize, action_count: usize) -> Self {
        Self { sensors, embed_dim: 8, hidden_dim, action_count, num_agents: 1 }
    }

    pub fn with_agents(mut self, num_agents: usize) -> Self {
        self.num_agents = num_agents;
        self
    }

    pub fn with_embed_dim(mut self, embed_dim: usize) -> Self {
        self.embed_dim = embed_dim;
        self
    }
}

/// How one sensor's codes map into the fused embedding table.
#[derive(Debug, Clone)]
struct SensorEncoder {
    spec: SensorSpec,
    /// Table-row offset per interleaved channel (one entry for uniform
    /// layouts).
    offsets: Vec<usize>,
    /// Embedding groups per observation: cells for interleaved layouts
    /// (channel embeddings summed per cell), elements for uniform ones.
    groups: usize,
}

impl SensorEncoder {
    /// Lays the sensor's vocabularies out starting at table row `base`;
    /// returns the encoder and the next free row.
    fn new(spec: SensorSpec, base: usize) -> (Self, usize) {
        let channels = spec.layout.channels();
        assert!(
            spec.numel() % channels == 0,
            "sensor '{}': {} elements do not tile {} interleaved channels",
            spec.id,
            spec.numel(),
            channels
        );
        let mut offsets = Vec::with_capacity(channels);
        let mut next = base;
        for c in 0..channels {
            offsets.push(next);
            next += spec.layout.vocab(c);
        }
        let groups = spec.numel() / channels;
        (Self { spec, offsets, groups }, next)
    }

    /// Widens one stacked reading into fused-table indices, row-major.
    fn fused_ids(&self, reading: &crate::framework::spaces::IntTensor) -> Vec<usize> {
        let channels = self.offsets.len();
        reading
            .data()
            .iter()
            .enumerate()
            .map(|(i, &code)| {
                let c = i % channels;
                let vocab = self.spec.layout.vocab(c);
                assert!(
                    (code as usize) < vocab,
                    "sensor '{}': code {} at channel {} exceeds vocabulary {}",
                    self.spec.id,
                    code,
                    c,
                    vocab
                );
                self.offsets[c] + code as usize
            })
            .collect()
    }
}

/// Recurrent actor-critic over integer-coded observations.
///
/// Holds only graph handles; parameters live in the [`Graph`] and must be
/// registered (by constructing the model) before any computation is
/// recorded.
#[derive(Debug, Clone)]
pub struct EmbedGru {
    encoders: Vec<SensorEncoder>,
    embedding: Embedding,
    gru: GruCell,
    /// Per-agent `(actor, critic)` heads, index = agent.
    heads: Vec<(Linear, Linear)>,
    action_count: usize,
    num_agents: usize,
}

impl EmbedGru {
    /// Registers all parameters in `g`, drawing initial values from `rng`.
    ///
    /// Initialization: embedding rows are normal with standard deviation
    /// `1/√embed_dim`; GRU and head weights are uniform `±1/√fan_in`;
    /// biases are zero.
    pub fn new<F: Scalar, R: Rng>(g: &mut Graph<F>, cfg: &EmbedGruConfig, rng: &mut R) -> Self {
        assert!(!cfg.sensors.is_empty(), "embed-gru: at least one sensor required");
        assert!(cfg.embed_dim > 0, "embed-gru: embed_dim must be positive");
        assert!(cfg.hidden_dim > 0, "embed-gru: hidden_dim must be positive");
        assert!(cfg.action_count > 0, "embed-gru: action_count must be positive");
        assert!(cfg.num_agents > 0, "embed-gru: num_agents must be positive");

        let mut encoders = Vec::with_capacity(cfg.sensors.len());
        let mut vocab = 0;
        for spec in &cfg.sensors {
            let (enc, next) = SensorEncoder::new(spec.clone(), vocab);
            encoders.push(enc);
            vocab = next;
        }
        let input_dim: usize = encoders.iter().map(|e| e.groups * cfg.embed_dim).sum();

        let embedding = Embedding::new(g, vocab, cfg.embed_dim, rng);
        let gru = GruCell::new(g, input_dim, cfg.hidden_dim, rng);
        let heads = (0..cfg.num_agents)
            .map(|_| {
                let actor = Linear::new(g, cfg.hidden_dim, cfg.action_count, rng);
                let critic = Linear::new(g, cfg.hidden_dim, 1, rng);
                (actor, critic)
            })
            .collect();

        Self { encoders, embedding, gru, heads, action_count: cfg.action_count, num_agents: cfg.num_agents }
    }

    /// Embeds a stacked observation batch into `[rows, input_dim]`.
    fn embed_obs<F: Scalar>(&self, g: &mut Graph<F>, obs: &ObsBatch) -> Var {
        let rows = obs.rows();
        let mut parts = Vec::with_capacity(self.encoders.len());
        for enc in &self.encoders {
            let reading = obs.sensor(&enc.spec.id);
            let expect = rows * enc.spec.numel();
            assert_eq!(
                reading.numel(),
                expect,
                "sensor '{}': batched reading has {} elements, expected {} ({} rows of {:?})",
                enc.spec.id,
                reading.numel(),
                expect,
                rows,
                enc.spec.shape
            );
            let ids = enc.fused_ids(reading);
            parts.push(self.embedding.forward_grouped(g, &ids, rows, enc.groups));
        }
        let mut feat = parts[0];
        for &p in &parts[1..] {
            feat = g.concat_cols(feat, p);
        }
        feat
    }

    /// Applies the per-agent heads to the hidden batch `[rows, H]`.
    fn apply_heads<F: Scalar>(&self, g: &mut Graph<F>, hidden: Var, rows: usize) -> (Var, Var) {
        if self.num_agents == 1 {
            let (actor, critic) = &self.heads[0];
            return (actor.forward(g, hidden), critic.forward(g, hidden));
        }
        assert_eq!(
            rows % self.num_agents,
            0,
            "embed-gru: {rows} batch rows do not tile {} agents",
            self.num_agents
        );
        let mut logits_parts = Vec::with_capacity(self.num_agents);
        let mut value_parts = Vec::with_capacity(self.num_agents);
        for (a, (actor, critic)) in self.heads.iter().enumerate() {
            let idx: Vec<usize> = (a..rows).step_by(self.num_agents).collect();
            let own = g.select_rows(hidden, &idx);
            let lg = actor.forward(g, own);
            let vl = critic.forward(g, own);
            logits_parts.push(g.scatter_rows(lg, &idx, rows));
            value_parts.push(g.scatter_rows(vl, &idx, rows));
        }
        let mut logits = logits_parts[0];
        let mut values = value_parts[0];
        for a in 1..self.num_agents {
            logits = g.add(logits, logits_parts[a]);
            values = g.add(values, value_parts[a]);
        }
        (logits, values)
    }
}

impl<F: Scalar> ActorCriticModel<F> for EmbedGru {
    fn num_agents(&self) -> usize {
        self.num_agents
    }

    fn action_count(&self) -> usize {
        self.action_count
    }

    fn hidden_dim(&self) -> usize {
        self.gru.hidden_dim()
    }

    fn consumed_sensors(&self) -> Vec<SensorSpec> {
        self.encoders.iter().map(|e| e.spec.clone()).collect()
    }

    fn forward(&self, g: &mut Graph<F>, obs: &ObsBatch, state: Var, masks: &[F]) -> ModelOutput {
        let rows = obs.rows();
        assert_eq!(masks.len(), rows, "embed-gru: {} masks for {rows} batch rows", masks.len());
        let feat = self.embed_obs(g, obs);
        let carried = g.scale_rows(state, masks);
        let next_state = self.gru.forward(g, feat, carried);
        let (logits, values) = self.apply_heads(g, next_state, rows);
        ModelOutput { logits, values, next_state }
    }

    fn named_params(&self) -> Vec<(String, Var)> {
        let mut out = vec![("embedding.table".to_string(), self.embedding.table)];
        let gru = &self.gru;
        for (name, var) in [
            ("gru.wz", gru.wz),
            ("gru.uz", gru.uz),
            ("gru.bz", gru.bz),
            ("gru.wr", gru.wr),
            ("gru.ur", gru.ur),
            ("gru.br", gru.br),
            ("gru.wn", gru.wn),
            ("gru.un", gru.un),
            ("gru.bn", gru.bn),
        ] {
            out.push((name.to_string(), var));
        }
        for (a, (actor, critic)) in self.heads.iter().enumerate() {
            out.push((format!("agent{a}.actor.w"), actor.w));
            out.push((format!("agent{a}.actor.b"), actor.b));
            out.push((format!("agent{a}.critic.w"), critic.w));
            out.push((format!("agent{a}.critic.b"), critic.b));
        }
        out
    }
}
