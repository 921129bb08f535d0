//! Peer sampling service.
//!
//! Every node keeps a bounded partial view of timestamped descriptors and
//! periodically performs a push-pull exchange with one peer picked from that
//! view. The merge follows the healer/swap scheme: keep the freshest
//! descriptor per node, drop the oldest `healer` entries, drop up to `swap` of
//! the entries just sent, then trim at random back to capacity.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Epoch, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Descriptor {
    pub node: NodeId,
    pub created_at: Epoch,
    /// Bumped each time the node comes back from a crash.
    pub incarnation: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerSelection {
    Random,
    Oldest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GossipConfig {
    pub view_capacity: usize,
    pub healer: usize,
    pub swap: usize,
    pub peer_selection: PeerSelection,
}

impl Default for GossipConfig {
    fn default() -> Self {
        Self {
            view_capacity: 50,
            healer: 1,
            swap: 24,
            peer_selection: PeerSelection::Random,
        }
    }
}

impl GossipConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.view_capacity < 2 {
            return Err(format!(
                "gossip.view_capacity must be at least 2, got {}",
                self.view_capacity
            ));
        }
        if self.healer + self.swap > self.view_capacity {
            return Err(format!(
                "gossip.healer + gossip.swap ({}) exceeds gossip.view_capacity ({})",
                self.healer + self.swap,
                self.view_capacity
            ));
        }
        Ok(())
    }

    /// Descriptors sent per exchange, the sender's own included.
    pub fn buffer_len(&self) -> usize {
        (self.view_capacity / 2).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialView {
    owner: NodeId,
    capacity: usize,
    entries: Vec<Descriptor>,
}

impl PartialView {
    pub fn new(owner: NodeId, capacity: usize) -> Self {
        Self {
            owner,
            capacity,
            entries: Vec::with_capacity(capacity * 2),
        }
    }

    /// View filled with uniformly random other nodes, all stamped at epoch 0.
    pub fn bootstrap<R: Rng>(owner: NodeId, n: usize, capacity: usize, rng: &mut R) -> Self {
        let mut view = Self::new(owner, capacity);
        let others = n.saturating_sub(1);
        let picks = rand::seq::index::sample(rng, others, capacity.min(others));
        for i in picks.iter() {
            let node = if (i as NodeId) < owner {
                i as NodeId
            } else {
                i as NodeId + 1
            };
            view.entries.push(Descriptor {
                node,
                created_at: 0,
                incarnation: 0,
            });
        }
        view
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[Descriptor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<&Descriptor> {
        self.entries.iter().find(|d| d.node == node)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.get(node).is_some()
    }

    pub fn select_peer<R: Rng>(&self, policy: PeerSelection, rng: &mut R) -> Option<NodeId> {
        match policy {
            PeerSelection::Random => self.entries.choose(rng).map(|d| d.node),
            PeerSelection::Oldest => self
                .entries
                .iter()
                .min_by_key(|d| d.created_at)
                .map(|d| d.node),
        }
    }

    /// Shuffle the view, park the `healer` oldest entries at the back, and
    /// return the outgoing buffer: the owner's fresh descriptor followed by
    /// the head of the view.
    pub fn prepare_buffer<R: Rng>(
        &mut self,
        own: Descriptor,
        cfg: &GossipConfig,
        rng: &mut R,
    ) -> Vec<Descriptor> {
        self.entries.shuffle(rng);
        let h = cfg.healer.min(self.entries.len());
        if h > 0 {
            // Stable partition: oldest h entries move to the tail.
            let mut order: Vec<usize> = (0..self.entries.len()).collect();
            order.sort_by_key(|&i| (self.entries[i].created_at, i));
            let oldest: Vec<usize> = order[..h].to_vec();
            let mut head = Vec::with_capacity(self.entries.len());
            let mut tail = Vec::with_capacity(h);
            for (i, d) in self.entries.iter().enumerate() {
                if oldest.contains(&i) {
                    tail.push(*d);
                } else {
                    head.push(*d);
                }
            }
            head.extend(tail);
            self.entries = head;
        }
        let mut buffer = Vec::with_capacity(cfg.buffer_len());
        buffer.push(own);
        buffer.extend(self.entries.iter().take(cfg.buffer_len() - 1).copied());
        buffer
    }

    /// Merge a received buffer. `sent` is how many of this view's entries went
    /// out in the matching `prepare_buffer` call (they sit at the head).
    pub fn merge<R: Rng>(
        &mut self,
        received: &[Descriptor],
        sent: usize,
        cfg: &GossipConfig,
        rng: &mut R,
    ) {
        let mut merged: Vec<Descriptor> = Vec::with_capacity(self.entries.len() + received.len());
        // Position of each node in `merged`, so duplicates collapse onto the
        // freshest copy while keeping the slot of that copy.
        let mut head_marks: Vec<bool> = Vec::with_capacity(merged.capacity());
        for (i, d) in self.entries.iter().chain(received.iter()).enumerate() {
            if d.node == self.owner {
                continue;
            }
            let is_head = i < sent;
            match merged.iter().position(|e| e.node == d.node) {
                Some(p) => {
                    if fresher(d, &merged[p]) {
                        merged.remove(p);
                        head_marks.remove(p);
                        merged.push(*d);
                        head_marks.push(is_head);
                    }
                }
                None => {
                    merged.push(*d);
                    head_marks.push(is_head);
                }
            }
        }

        let c = self.capacity;
        // Healer: drop the oldest.
        let drop_old = cfg.healer.min(merged.len().saturating_sub(c));
        for _ in 0..drop_old {
            let (idx, _) = merged
                .iter()
                .enumerate()
                .min_by_key(|(i, d)| (d.created_at, *i))
                .expect("non-empty");
            merged.remove(idx);
            head_marks.remove(idx);
        }
        // Swap: drop entries that were sent, from the front.
        let mut drop_sent = cfg.swap.min(merged.len().saturating_sub(c));
        let mut i = 0;
        while drop_sent > 0 && i < merged.len() {
            if head_marks[i] {
                merged.remove(i);
                head_marks.remove(i);
                drop_sent -= 1;
            } else {
                i += 1;
            }
        }
        // Random trim.
        while merged.len() > c {
            let idx = rng.gen_range(0..merged.len());
            merged.remove(idx);
        }
        self.entries = merged;
    }

    /// View with the given entries, truncated to `capacity`.
    pub fn from_entries(owner: NodeId, capacity: usize, mut entries: Vec<Descriptor>) -> Self {
        entries.truncate(capacity);
        Self {
            owner,
            capacity,
            entries,
        }
    }
}

fn fresher(a: &Descriptor, b: &Descriptor) -> bool {
    (a.incarnation, a.created_at) > (b.incarnation, b.created_at)
}

/// Result of one initiated exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundOutcome {
    Exchanged(NodeId),
    /// The chosen peer is down; the message was lost.
    PeerDown(NodeId),
    EmptyView,
}

/// One push-pull exchange initiated by `node` at epoch `now`.
pub fn gossip_round<R: Rng>(
    views: &mut [PartialView],
    alive: &[bool],
    incarnations: &[u32],
    node: NodeId,
    now: Epoch,
    cfg: &GossipConfig,
    rng: &mut R,
) -> RoundOutcome {
    let a = node as usize;
    debug_assert!(alive[a], "faulty nodes do not initiate");
    let Some(peer) = views[a].select_peer(cfg.peer_selection, rng) else {
        return RoundOutcome::EmptyView;
    };
    let b = peer as usize;
    if !alive[b] {
        return RoundOutcome::PeerDown(peer);
    }
    let own_a = Descriptor {
        node,
        created_at: now,
        incarnation: incarnations[a],
    };
    let own_b = Descriptor {
        node: peer,
        created_at: now,
        incarnation: incarnations[b],
    };
    let buf_a = views[a].prepare_buffer(own_a, cfg, rng);
    let buf_b = views[b].prepare_buffer(own_b, cfg, rng);
    let sent_a = buf_a.len() - 1;
    let sent_b = buf_b.len() - 1;
    views[b].merge(&buf_a, sent_b, cfg, rng);
    views[a].merge(&buf_b, sent_a, cfg, rng);
    RoundOutcome::Exchanged(peer)
}

/// Most recent epoch at which the view held a descriptor of `target` created
/// after `since`.
pub fn freshest_seen<'a, I>(history: I, target: NodeId, since: Epoch) -> Option<Epoch>
where
    I: IntoIterator<Item = (Epoch, &'a PartialView)>,
{
    history
        .into_iter()
        .filter(|(_, view)| view.get(target).is_some_and(|d| d.created_at > since))
        .map(|(epoch, _)| epoch)
        .max()
}
