//! The per-mention online update: linking, self-learning, supervision
//! handling with collision resolution, unit reinforcement/penalization,
//! activation-score updates and temporal-gate training.

use ndarray::Array1;

use crate::candidates::{content_merge, embedding_match, merge, temporal_hyp, TemporalGate};
use crate::config::Config;
use crate::detector::MentionKind;
use crate::disambiguator::{link, output, DisambiguationUnit};
use crate::memory::{InstanceId, MemoryState, MentionKey, SupervisionMap};
use crate::nn::sigmoid;

/// Which branch of the update algorithm handled a mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkCase {
    /// Confident self-learning: max output at or above the accept threshold.
    Recognized,
    /// Between the thresholds: no parameter updates.
    Uncertain,
    /// All candidates rejected: a new instance is created.
    Unknown,
    /// Supervision label already mapped to an instance.
    SupervisedKnown,
    /// Fresh label bound to the disambiguated instance.
    SupervisedNew,
    /// Fresh label, but the disambiguated instance is already labeled.
    SupervisedCollision,
}

impl LinkCase {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkCase::Recognized => "recognized",
            LinkCase::Uncertain => "uncertain",
            LinkCase::Unknown => "unknown",
            LinkCase::SupervisedKnown => "supervised-known",
            LinkCase::SupervisedNew => "supervised-new",
            LinkCase::SupervisedCollision => "supervised-collision",
        }
    }
}

/// Outcome of processing one mention.
#[derive(Debug, Clone)]
pub struct LinkDecision {
    pub instance: InstanceId,
    pub case: LinkCase,
    pub max_p: f64,
    pub max_o: f64,
    pub gamma: f64,
}

/// One line of the structured event log.
#[derive(Debug, Clone)]
pub struct EventRecord {
    pub index: usize,
    pub story: usize,
    pub surface: String,
    pub kind: MentionKind,
    pub case: LinkCase,
    pub instance: InstanceId,
    pub max_p: f64,
    pub max_o: f64,
    pub gamma: f64,
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        let kind = match self.kind {
            MentionKind::Entity => "ent",
            MentionKind::Relation => "rel",
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
            self.index,
            self.story,
            self.surface,
            kind,
            self.case.as_str(),
            self.instance,
            self.max_p,
            self.max_o,
            self.gamma
        )
    }
}

/// One kind-specific knowledge base: memory, per-instance disambiguation
/// units, the supervision-label map and the temporal gate.
pub struct KbSide {
    pub state: MemoryState,
    pub units: Vec<DisambiguationUnit>,
    pub map: SupervisionMap,
    pub gate: TemporalGate,
    /// Whether the temporal hypothesis participates in the merge.
    temporal: bool,
}

impl KbSide {
    fn new(cfg: &Config, temporal: bool) -> KbSide {
        KbSide {
            state: MemoryState::new(cfg.window, cfg.m_init),
            units: Vec::new(),
            map: SupervisionMap::new(),
            gate: TemporalGate::new(cfg.kappa, cfg.gamma0),
            temporal,
        }
    }

    fn uses_temporal(&self, cfg: &Config) -> bool {
        self.temporal && !cfg.no_temporal
    }

    /// String, embedding and temporal hypotheses plus their merge.
    fn hypotheses(
        &self,
        row: usize,
        e_m: &Array1<f64>,
        cfg: &Config,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64, Vec<f64>) {
        let p_z = self.state.activated_row(row);
        let p_e = embedding_match(e_m, &self.state, cfg.top_k);
        let p_t = if self.uses_temporal(cfg) {
            temporal_hyp(&self.state)
        } else {
            vec![0.0; self.state.instance_count()]
        };
        let gamma = if self.uses_temporal(cfg) { self.gate.gamma(e_m) } else { 0.0 };
        let p = merge(&p_z, &p_e, &p_t, gamma).expect("hypothesis lengths agree");
        (p_z, p_e, p_t, gamma, p)
    }

    fn outputs(&self, p: &[f64], ctx: &Array1<f64>, cfg: &Config) -> Vec<f64> {
        output(p, |i| self.units[i].response(ctx), cfg.tau_r, cfg.eta)
    }

    /// Merged score of one instance, recomputed from the current state.
    fn merged_score(&self, row: usize, e_m: &Array1<f64>, instance: InstanceId, cfg: &Config) -> f64 {
        let (_, _, _, _, p) = self.hypotheses(row, e_m, cfg);
        p[instance]
    }

    /// One descent step on (sigma - 1)^2 for the raw activation score.
    fn m_step_up(&mut self, row: usize, instance: InstanceId, cfg: &Config) {
        let raw = self.state.raw_score(row, instance);
        let s = sigmoid(raw);
        self.state.set_raw_score(row, instance, raw + cfg.alpha_m * 2.0 * (1.0 - s) * (1.0 - s) * s);
    }

    /// One descent step on sigma^2.
    fn m_step_down(&mut self, row: usize, instance: InstanceId, cfg: &Config) {
        let raw = self.state.raw_score(row, instance);
        let s = sigmoid(raw);
        self.state.set_raw_score(row, instance, raw - cfg.alpha_m * 2.0 * s * s * (1.0 - s));
    }

    /// Raises the raw score in fixed increments until its sigmoid clears
    /// the reject threshold.
    fn raise_string_score(&mut self, row: usize, instance: InstanceId, cfg: &Config) {
        for _ in 0..cfg.n_max {
            if sigmoid(self.state.raw_score(row, instance)) > cfg.tau_r {
                return;
            }
            let raw = self.state.raw_score(row, instance);
            self.state.set_raw_score(row, instance, raw + cfg.alpha_m);
        }
    }

    /// Raises the raw score until the merged candidate score of `instance`
    /// clears the reject threshold with some margin, so the output gate
    /// stops blocking it and small drift in the other hypotheses cannot
    /// immediately re-block it.
    fn unblock(&mut self, row: usize, e_m: &Array1<f64>, instance: InstanceId, cfg: &Config) {
        for _ in 0..cfg.n_max {
            if self.merged_score(row, e_m, instance, cfg) > cfg.tau_r + cfg.unblock_margin {
                return;
            }
            let raw = self.state.raw_score(row, instance);
            self.state.set_raw_score(row, instance, raw + cfg.alpha_m);
        }
    }

    /// One reinforcement step of the unit: allocate a fresh centroid when
    /// the context is unfamiliar, otherwise move the nearest centroid
    /// toward it.
    fn reinforce_step(unit: &mut DisambiguationUnit, ctx: &Array1<f64>, rate: f64, theta: f64) {
        let unfamiliar = unit.max_cosine(ctx).map_or(true, |c| c < theta);
        if unfamiliar && unit.allocate(ctx) {
            return;
        }
        if let Some(nearest) = unit.nearest(ctx) {
            unit.gradient_step(nearest, ctx, rate, 1.0);
        }
    }

    /// Reinforces until the unit response exceeds the accept threshold;
    /// returns false on non-convergence within the iteration cap.
    fn reinforce_until(unit: &mut DisambiguationUnit, ctx: &Array1<f64>, cfg: &Config) -> bool {
        for _ in 0..cfg.n_max {
            if unit.response(ctx) > cfg.tau_a {
                return true;
            }
            Self::reinforce_step(unit, ctx, cfg.alpha_d, cfg.theta_alloc);
        }
        unit.response(ctx) > cfg.tau_a
    }

    /// Penalizes until the unit response drops below the accept threshold.
    fn penalize_until(unit: &mut DisambiguationUnit, ctx: &Array1<f64>, cfg: &Config) -> bool {
        for _ in 0..cfg.n_max {
            if unit.response(ctx) < cfg.tau_a {
                return true;
            }
            let Some(nearest) = unit.nearest(ctx) else { return true };
            unit.gradient_step(nearest, ctx, cfg.alpha_d, -1.0);
        }
        unit.response(ctx) < cfg.tau_a
    }

    /// New instance seeded from this mention: its unit's first centroid is
    /// the normalized context (response 1), and the mention's activation
    /// is raised above the reject threshold, then trained toward the
    /// accept threshold.
    fn create_instance_from(&mut self, row: usize, ctx: &Array1<f64>, cfg: &Config) -> InstanceId {
        let y = self.state.add_instance();
        let mut unit = DisambiguationUnit::new(cfg.kappa);
        unit.allocate(ctx);
        self.units.push(unit);
        self.raise_string_score(row, y, cfg);
        for _ in 0..cfg.n_max {
            if sigmoid(self.state.raw_score(row, y)) >= cfg.tau_a {
                break;
            }
            self.m_step_up(row, y, cfg);
        }
        y
    }

    /// Full supervised reinforcement of instance `y` for this mention:
    /// unblock its candidate score, reinforce its unit past the accept
    /// threshold, take one activation step toward 1, and penalize every
    /// other active unit on this context.
    fn reinforce_target(
        &mut self,
        row: usize,
        e_m: &Array1<f64>,
        ctx: &Array1<f64>,
        y: InstanceId,
        active: &[f64],
        cfg: &Config,
    ) {
        self.unblock(row, e_m, y, cfg);
        Self::reinforce_until(&mut self.units[y], ctx, cfg);
        self.m_step_up(row, y, cfg);
        for j in 0..self.units.len() {
            if j != y && active[j] > cfg.tau_r {
                Self::penalize_until(&mut self.units[j], ctx, cfg);
                self.m_step_down(row, j, cfg);
            }
        }
    }

    /// Trains the temporal-importance gate on a trusted resolution:
    /// reinforce when temporal evidence alone was right, penalize when it
    /// alone was wrong, no-op on agreement or an empty buffer.
    fn update_gate(
        &mut self,
        y: InstanceId,
        e_m: &Array1<f64>,
        p_z: &[f64],
        p_e: &[f64],
        p_t: &[f64],
        cfg: &Config,
    ) {
        if p_t.iter().all(|&v| v == 0.0) {
            return;
        }
        let content = content_merge(p_z, p_e);
        // content evidence only counts when it clears the reject threshold;
        // an argmax over flat scores supports nothing
        let content_y = link(&content) == Ok(y) && content[y] > cfg.tau_r;
        let temporal_y = link(p_t) == Ok(y) && p_t[y] > 0.0;
        // reinforce only when content is truly blind to the answer, not
        // merely outvoted: weak-but-present content (fresh short names)
        // would otherwise drag gamma up for every name-like embedding
        if temporal_y && content[y] <= cfg.tau_r {
            Self::reinforce_step(&mut self.gate.unit, e_m, cfg.alpha_q, cfg.theta_alloc);
        } else if !temporal_y && content_y && !self.gate.unit.is_empty() {
            // drive the gate response for this embedding below the prior,
            // so content-bearing mentions stop deferring to recency; a
            // single step would leave the response hovering near neutral
            for _ in 0..cfg.n_max {
                if self.gate.unit.response(e_m) < cfg.gamma0 {
                    break;
                }
                let Some(nearest) = self.gate.unit.nearest(e_m) else { break };
                self.gate.unit.gradient_step(nearest, e_m, cfg.alpha_q, -1.0);
            }
        }
    }
}

/// A read-only linking verdict from [`Engine::assess`], used by the
/// frozen-replay protocol.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub instance: InstanceId,
    pub max_p: f64,
    pub max_o: f64,
}

/// The online engine: two kind-specific knowledge bases and the event log.
pub struct Engine {
    pub cfg: Config,
    pub entities: KbSide,
    pub relations: KbSide,
    pub events: Vec<EventRecord>,
    step: usize,
}

impl Engine {
    pub fn new(cfg: Config) -> Engine {
        let entities = KbSide::new(&cfg, true);
        // relation mentions carry no useful recency signal in this data
        let relations = KbSide::new(&cfg, false);
        Engine { cfg, entities, relations, events: Vec::new(), step: 0 }
    }

    pub fn side(&self, kind: MentionKind) -> &KbSide {
        match kind {
            MentionKind::Entity => &self.entities,
            MentionKind::Relation => &self.relations,
        }
    }

    fn side_mut(&mut self, kind: MentionKind) -> &mut KbSide {
        match kind {
            MentionKind::Entity => &mut self.entities,
            MentionKind::Relation => &mut self.relations,
        }
    }

    /// Story-boundary reset: the temporal buffer does not survive across
    /// stories.
    pub fn story_boundary(&mut self) {
        self.entities.state.clear_recent();
        self.relations.state.clear_recent();
    }

    /// Processes one detected mention: registers it if unseen, scores all
    /// instances, runs exactly one branch of the update algorithm, records
    /// the event, and returns the decision.
    pub fn process(
        &mut self,
        story: usize,
        kind: MentionKind,
        surface: &str,
        e_m: &Array1<f64>,
        ctx: &Array1<f64>,
        sup: Option<&str>,
    ) -> LinkDecision {
        let cfg = self.cfg.clone();
        let side = self.side_mut(kind);
        let z = MentionKey::new(surface);
        let row = match side.state.lookup_mention(&z) {
            Some(row) => row,
            None => side.state.register_mention(z, e_m.clone()).expect("fresh mention"),
        };

        let (p_z, p_e, p_t, gamma, p) = side.hypotheses(row, e_m, &cfg);
        let o = side.outputs(&p, ctx, &cfg);
        let max_p = p.iter().cloned().fold(0.0, f64::max);
        let max_o = o.iter().cloned().fold(0.0, f64::max);

        let (case, y) = match sup {
            Some(label) => match side.map.instance_of(label) {
                Some(target) => {
                    side.reinforce_target(row, e_m, ctx, target, &p, &cfg);
                    (LinkCase::SupervisedKnown, target)
                }
                None => {
                    if p.is_empty() || max_p <= cfg.tau_r {
                        let y = side.create_instance_from(row, ctx, &cfg);
                        side.map.bind(label, y);
                        (LinkCase::SupervisedNew, y)
                    } else {
                        let y = link(&o).expect("non-empty scores");
                        if side.map.label_of(y).is_none() {
                            side.map.bind(label, y);
                            side.reinforce_target(row, e_m, ctx, y, &p, &cfg);
                            (LinkCase::SupervisedNew, y)
                        } else {
                            let fresh = side.create_instance_from(row, ctx, &cfg);
                            side.map.bind(label, fresh);
                            (LinkCase::SupervisedCollision, fresh)
                        }
                    }
                }
            },
            None => {
                if p.is_empty() || max_p <= cfg.tau_r {
                    let y = side.create_instance_from(row, ctx, &cfg);
                    (LinkCase::Unknown, y)
                } else if max_o >= cfg.tau_a {
                    let y = link(&o).expect("non-empty scores");
                    for j in 0..side.units.len() {
                        if o[j] >= cfg.tau_a {
                            KbSide::reinforce_step(
                                &mut side.units[j],
                                ctx,
                                cfg.alpha_d,
                                cfg.theta_alloc,
                            );
                            side.m_step_up(row, j, &cfg);
                        }
                    }
                    (LinkCase::Recognized, y)
                } else {
                    let y = link(&o).expect("non-empty scores");
                    (LinkCase::Uncertain, y)
                }
            }
        };

        // the gate learns only from trusted resolutions
        let trusted = !matches!(case, LinkCase::Uncertain | LinkCase::Unknown);
        if trusted && side.uses_temporal(&cfg) {
            side.update_gate(y, e_m, &p_z, &p_e, &p_t, &cfg);
        }
        if kind == MentionKind::Entity {
            side.state.record_recent(y).expect("linked instance exists");
        }

        let decision = LinkDecision { instance: y, case, max_p, max_o, gamma };
        self.events.push(EventRecord {
            index: self.step,
            story,
            surface: surface.to_string(),
            kind,
            case,
            instance: y,
            max_p,
            max_o,
            gamma,
        });
        self.step += 1;
        decision
    }

    /// Frozen evaluation: scores a mention against the current state
    /// without mutating anything. The temporal buffer is replaced by the
    /// caller-supplied recent-instance list so a story can be replayed
    /// with its own recency context.
    pub fn assess(
        &self,
        kind: MentionKind,
        surface: &str,
        e_m: &Array1<f64>,
        ctx: &Array1<f64>,
        recent: &[InstanceId],
    ) -> Option<Assessment> {
        let cfg = &self.cfg;
        let side = self.side(kind);
        let n = side.state.instance_count();
        if n == 0 {
            return None;
        }
        let z = MentionKey::new(surface);
        let p_z = match side.state.lookup_mention(&z) {
            Some(row) => side.state.activated_row(row),
            None => vec![sigmoid(cfg.m_init); n],
        };
        let p_e = embedding_match(e_m, &side.state, cfg.top_k);
        let (p_t, gamma) = if side.uses_temporal(cfg) {
            let mut counts = vec![0usize; n];
            for &y in recent {
                if y < n {
                    counts[y] += 1;
                }
            }
            let max = counts.iter().copied().max().unwrap_or(0);
            let p_t = if max == 0 {
                vec![0.0; n]
            } else {
                counts.iter().map(|&u| u as f64 / max as f64).collect()
            };
            (p_t, self.gate_gamma(kind, e_m))
        } else {
            (vec![0.0; n], 0.0)
        };
        let p = merge(&p_z, &p_e, &p_t, gamma).expect("hypothesis lengths agree");
        let o = side.outputs(&p, ctx, cfg);
        let instance = link(&o).ok()?;
        Some(Assessment {
            instance,
            max_p: p.iter().cloned().fold(0.0, f64::max),
            max_o: o.iter().cloned().fold(0.0, f64::max),
        })
    }

    pub fn gate_gamma(&self, kind: MentionKind, e_m: &Array1<f64>) -> f64 {
        self.side(kind).gate.gamma(e_m)
    }

    /// Max activated string score of a surface, 0 when unseen.
    pub fn max_string_score(&self, kind: MentionKind, surface: &str) -> f64 {
        let side = self.side(kind);
        let z = MentionKey::new(surface);
        match side.state.lookup_mention(&z) {
            Some(row) => side.state.activated_row(row).into_iter().fold(0.0, f64::max),
            None => 0.0,
        }
    }

    pub fn check_invariants(&self) {
        for side in [&self.entities, &self.relations] {
            side.state.check_invariants();
            assert_eq!(side.units.len(), side.state.instance_count());
            for unit in &side.units {
                unit.check_invariants();
            }
            side.gate.unit.check_invariants();
        }
    }
}
