//! Self-healing agents.
//!
//! Each node deploys one agent that carries a replica of its supplier state
//! to a random host from the node's partial view. The agent watches for fresh
//! descriptors of its parent in the host's view; once the parent has been
//! absent for longer than the threshold, the agent rolls back the parent's
//! contribution at every consumer that aggregated it, one consumer per epoch.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fault_model::{MonitoredPair, PairRecord};
use crate::gossip::PartialView;
use crate::simkernel::{EpochContext, EpochObserver};
use crate::{rng_for, Epoch, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentState {
    Monitoring,
    Correcting,
    Returned,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Tolerate,
    Correct,
    Return,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfHealingAgent {
    pub parent: NodeId,
    pub host: Option<NodeId>,
    pub migrated_at: Epoch,
    pub last_fresh_sighting: Epoch,
    pub threshold: Epoch,
    pub state: AgentState,
    /// Parent incarnation the agent last saw alive.
    pub known_incarnation: u32,
    /// First detection and the host it happened on.
    pub detected_at: Option<Epoch>,
    pub detected_on: Option<NodeId>,
    /// Most recent host, kept after the agent is lost.
    pub last_host: Option<NodeId>,
    /// Epoch at which the current host was found dead.
    pub stranded_at: Option<Epoch>,
    cursor: usize,
    completed: bool,
}

impl SelfHealingAgent {
    pub fn new(parent: NodeId, threshold: Epoch) -> Self {
        Self {
            parent,
            host: None,
            migrated_at: 0,
            last_fresh_sighting: 0,
            threshold,
            state: AgentState::Monitoring,
            known_incarnation: 0,
            detected_at: None,
            detected_on: None,
            last_host: None,
            stranded_at: None,
            cursor: 0,
            completed: false,
        }
    }

    fn place(&mut self, host: NodeId, now: Epoch) {
        debug_assert_ne!(host, self.parent);
        self.host = Some(host);
        self.last_host = Some(host);
        self.migrated_at = now;
        self.last_fresh_sighting = now;
        self.stranded_at = None;
    }

    /// Advance the detector by one epoch using the host's view.
    pub fn monitor_step(&mut self, host_view: &PartialView, now: Epoch) -> Decision {
        let seen = host_view.get(self.parent);
        match self.state {
            AgentState::Monitoring => {
                if seen.is_some_and(|d| d.created_at > self.migrated_at) {
                    self.last_fresh_sighting = now;
                }
                if now - self.last_fresh_sighting > self.threshold {
                    self.state = AgentState::Correcting;
                    self.cursor = 0;
                    self.completed = false;
                    if self.detected_at.is_none() {
                        self.detected_at = Some(now);
                        self.detected_on = self.host;
                    }
                    Decision::Correct
                } else {
                    Decision::Tolerate
                }
            }
            AgentState::Correcting => match seen {
                Some(d) if d.incarnation > self.known_incarnation => {
                    self.known_incarnation = d.incarnation;
                    self.state = AgentState::Returned;
                    Decision::Return
                }
                _ => Decision::Tolerate,
            },
            AgentState::Returned | AgentState::Lost => Decision::Tolerate,
        }
    }
}

/// Uniform choice among the view's entries other than `parent`.
pub fn choose_host<R: Rng>(view: &PartialView, parent: NodeId, rng: &mut R) -> Option<NodeId> {
    let candidates: Vec<NodeId> = view
        .entries()
        .iter()
        .map(|d| d.node)
        .filter(|&id| id != parent)
        .collect();
    candidates.choose(rng).copied()
}

/// Move the agent to a host drawn from `view`. Returns the new host, or
/// `None` when the view offers no candidate (the caller retries later).
pub fn migrate<R: Rng>(
    agent: &mut SelfHealingAgent,
    view: &PartialView,
    now: Epoch,
    rng: &mut R,
) -> Option<NodeId> {
    let host = choose_host(view, agent.parent, rng)?;
    agent.place(host, now);
    Some(host)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrectionStep {
    /// Dead consumers passed over before the contact.
    pub skipped: Vec<NodeId>,
    pub rollback: Option<NodeId>,
    /// Set on the call that exhausts the consumer list.
    pub completed: bool,
}

/// One epoch of correction: contact the next live consumer on the list.
///
/// The list may grow between calls (a false positive leaves the parent
/// sharing its value); the cursor resumes where it stopped.
pub fn correct(
    agent: &mut SelfHealingAgent,
    consumers: &[NodeId],
    alive: &[bool],
) -> CorrectionStep {
    let mut step = CorrectionStep::default();
    while agent.cursor < consumers.len() {
        let c = consumers[agent.cursor];
        agent.cursor += 1;
        if alive[c as usize] {
            step.rollback = Some(c);
            return step;
        }
        step.skipped.push(c);
    }
    if !agent.completed {
        agent.completed = true;
        step.completed = true;
    }
    step
}

/// Application hooks used by agents during correction.
pub trait CorrectionTarget {
    /// Consumers that aggregated the supplier's value, in contact order.
    fn consumers_of(&self, supplier: NodeId) -> &[NodeId];

    /// Remove the supplier's contribution at the consumer. Returns whether
    /// anything was removed.
    fn rollback(&mut self, consumer: NodeId, supplier: NodeId, incarnation: u32) -> bool;
}

/// Target for monitoring-only runs: nothing to roll back.
pub struct NoApplication;

impl CorrectionTarget for NoApplication {
    fn consumers_of(&self, _supplier: NodeId) -> &[NodeId] {
        &[]
    }

    fn rollback(&mut self, _consumer: NodeId, _supplier: NodeId, _incarnation: u32) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentEventKind {
    Migrated { host: NodeId },
    MigrationFailed,
    Detected { host: NodeId },
    Rollback { consumer: NodeId, applied: bool },
    SkippedConsumer { consumer: NodeId },
    CorrectionComplete,
    Returned,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub epoch: Epoch,
    pub threshold: Epoch,
    pub parent: NodeId,
    #[serde(flatten)]
    pub kind: AgentEventKind,
}

/// One agent per node for a single threshold.
pub struct AgentSet {
    threshold: Epoch,
    since: Epoch,
    agents: Vec<SelfHealingAgent>,
    rng: ChaCha8Rng,
    events: Vec<AgentEvent>,
}

impl AgentSet {
    pub fn new(n: usize, threshold: Epoch, since: Epoch, seed: u64) -> Self {
        Self {
            threshold,
            since,
            agents: (0..n as NodeId)
                .map(|p| SelfHealingAgent::new(p, threshold))
                .collect(),
            rng: rng_for(seed, &format!("agents/{threshold}")),
            events: Vec::new(),
        }
    }

    pub fn threshold(&self) -> Epoch {
        self.threshold
    }

    pub fn agents(&self) -> &[SelfHealingAgent] {
        &self.agents
    }

    pub fn events(&self) -> &[AgentEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<AgentEvent> {
        self.events
    }

    fn log(&mut self, epoch: Epoch, parent: NodeId, kind: AgentEventKind) {
        self.events.push(AgentEvent {
            epoch,
            threshold: self.threshold,
            parent,
            kind,
        });
    }

    /// Step every agent once. Agents deploy at the monitoring start epoch
    /// and only monitor from the following epoch on.
    pub fn step(&mut self, ctx: &EpochContext<'_>, target: &mut dyn CorrectionTarget) {
        let now = ctx.epoch;
        if now < self.since {
            return;
        }
        for p in 0..self.agents.len() {
            let parent = p as NodeId;
            if self.agents[p].state == AgentState::Lost {
                continue;
            }
            let parent_alive = ctx.alive[p];
            match self.agents[p].host {
                None => {
                    if !parent_alive {
                        self.agents[p].state = AgentState::Lost;
                        self.log(now, parent, AgentEventKind::Lost);
                        continue;
                    }
                    match choose_host(&ctx.views[p], parent, &mut self.rng) {
                        Some(h) if ctx.alive[h as usize] => {
                            let agent = &mut self.agents[p];
                            agent.place(h, now);
                            agent.known_incarnation = ctx.incarnations[p];
                            if agent.state == AgentState::Returned {
                                agent.state = AgentState::Monitoring;
                            }
                            self.log(now, parent, AgentEventKind::Migrated { host: h });
                        }
                        _ => self.log(now, parent, AgentEventKind::MigrationFailed),
                    }
                }
                Some(h) if !ctx.alive[h as usize] => {
                    if !parent_alive {
                        let agent = &mut self.agents[p];
                        agent.state = AgentState::Lost;
                        agent.host = None;
                        self.log(now, parent, AgentEventKind::Lost);
                        continue;
                    }
                    if self.agents[p].stranded_at.is_none() {
                        self.agents[p].stranded_at = Some(now);
                        continue;
                    }
                    // Consecutive migration from the failed host's last view.
                    match choose_host(&ctx.views[h as usize], parent, &mut self.rng) {
                        Some(nh) if nh != h && ctx.alive[nh as usize] => {
                            self.agents[p].place(nh, now);
                            self.log(now, parent, AgentEventKind::Migrated { host: nh });
                        }
                        _ => {
                            // Fall back to the parent, which redeploys next epoch.
                            self.agents[p].host = None;
                            self.agents[p].stranded_at = None;
                            self.log(now, parent, AgentEventKind::MigrationFailed);
                        }
                    }
                }
                Some(h) => {
                    let decision = self.agents[p].monitor_step(&ctx.views[h as usize], now);
                    match decision {
                        Decision::Correct => {
                            self.log(now, parent, AgentEventKind::Detected { host: h })
                        }
                        Decision::Return => {
                            self.agents[p].host = None;
                            self.log(now, parent, AgentEventKind::Returned);
                        }
                        Decision::Tolerate if self.agents[p].state == AgentState::Correcting => {
                            let step = correct(
                                &mut self.agents[p],
                                target.consumers_of(parent),
                                ctx.alive,
                            );
                            for c in step.skipped {
                                self.log(
                                    now,
                                    parent,
                                    AgentEventKind::SkippedConsumer { consumer: c },
                                );
                            }
                            if let Some(c) = step.rollback {
                                let inc = self.agents[p].known_incarnation;
                                let applied = target.rollback(c, parent, inc);
                                self.log(
                                    now,
                                    parent,
                                    AgentEventKind::Rollback {
                                        consumer: c,
                                        applied,
                                    },
                                );
                            }
                            if step.completed {
                                self.log(now, parent, AgentEventKind::CorrectionComplete);
                            }
                        }
                        Decision::Tolerate => {}
                    }
                }
            }
        }
    }

    /// One record per parent, with the agent's host as the monitor.
    pub fn records(&self, fault_epochs: &[Option<Epoch>], runtime: Epoch) -> Vec<MonitoredPair> {
        self.agents
            .iter()
            .map(|a| {
                let monitor = a.detected_on.or(a.host).or(a.last_host).unwrap_or(a.parent);
                let fault_b = fault_epochs[a.parent as usize];
                let fault_a = if monitor == a.parent {
                    fault_b
                } else {
                    fault_epochs[monitor as usize].filter(|&f| a.detected_at.is_none_or(|d| d < f))
                };
                MonitoredPair {
                    monitor,
                    target: a.parent,
                    record: PairRecord {
                        runtime,
                        threshold: self.threshold,
                        fault_a,
                        fault_b,
                        detection: a.detected_at,
                    },
                }
            })
            .collect()
    }
}

impl EpochObserver for AgentSet {
    fn on_epoch(&mut self, ctx: &EpochContext<'_>) {
        self.step(ctx, &mut NoApplication);
    }
}
