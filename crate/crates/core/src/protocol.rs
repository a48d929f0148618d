//! Honest strategy of circle players: keys, content, detection, forwarding,
//! auto-correction, end-of-block decoding, receiver output and reboot.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use crate::messaging::{AuthKey, Content, Envelope, GrandMessage, KeyInfo, KeyMint, KeyUse, Symbol, Triplet};
use crate::topology::{circle_roles, Circle, CircleRole, Network, NodeIx, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("circle size {0} is below 4")]
    CircleTooSmall(usize),
    #[error("stage {stage} exceeds the last stage {total}")]
    StageOutOfRange { stage: u32, total: u32 },
}

/// What happens to a detection raised at the last stage of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FinalDetection {
    /// Emitted at the first stage of the next block (dropped after the last stage).
    #[default]
    Carry,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub nc: usize,
    pub block_length: u32,
    pub num_blocks: u32,
    pub total_stages: u32,
    /// L: bound on triplets about one non-neighbour in a single message.
    pub triplet_bound: usize,
    pub final_detection: FinalDetection,
}

/// Stage layout for a circle of `nc` nodes.
pub fn build_schedule(nc: usize) -> Result<ProtocolConfig, ProtocolError> {
    if nc < 4 {
        return Err(ProtocolError::CircleTooSmall(nc));
    }
    let block_length = (2 * nc - 3) as u32;
    let num_blocks = core::cmp::max(nc - 3, 1) as u32;
    Ok(ProtocolConfig {
        nc,
        block_length,
        num_blocks,
        total_stages: 1 + num_blocks * block_length,
        triplet_bound: 1 + (nc - 3) * (2 * nc - 3),
        final_detection: FinalDetection::Carry,
    })
}

impl ProtocolConfig {
    pub fn with_final_detection(mut self, f: FinalDetection) -> Self {
        self.final_detection = f;
        self
    }

    /// First stage of block `b` (1-based).
    pub fn block_start(&self, b: u32) -> u32 {
        2 + (b - 1) * self.block_length
    }

    pub fn block_end(&self, b: u32) -> u32 {
        self.block_start(b) + self.block_length - 1
    }

    /// Block containing `stage`; stage 1 belongs to no block.
    pub fn block_of(&self, stage: u32) -> Option<u32> {
        if stage < 2 || stage > self.total_stages {
            return None;
        }
        Some((stage - 2) / self.block_length + 1)
    }

    pub fn is_block_end(&self, stage: u32) -> bool {
        self.block_of(stage).is_some_and(|b| self.block_end(b) == stage)
    }
}

/// Per-circle lookup tables shared by all node automata of one protocol instance.
#[derive(Debug, Clone)]
pub struct CircleView {
    pub circle: Circle,
    roles: Vec<Option<CircleRole>>,
    pairs: Vec<Option<[NodeIx; 2]>>,
}

impl CircleView {
    pub fn new(net: &Network, circle: Circle) -> Self {
        let mut roles = vec![None; net.len()];
        let mut pairs = vec![None; net.len()];
        for p in circle.members() {
            let role = circle_roles(&circle, p).expect("member");
            let mut pair = role.links;
            pair.sort_unstable();
            pairs[p] = Some(pair);
            roles[p] = Some(role);
        }
        CircleView { circle, roles, pairs }
    }

    pub fn role(&self, p: NodeIx) -> Option<&CircleRole> {
        self.roles.get(p).and_then(|r| r.as_ref())
    }

    pub fn side(&self, p: NodeIx) -> Option<Side> {
        self.role(p).map(|r| r.side)
    }

    /// Sorted protocol broadcast pair of `p`.
    pub fn pair(&self, p: NodeIx) -> Option<[NodeIx; 2]> {
        self.pairs.get(p).copied().flatten()
    }

    /// True when `env` is a protocol-channel broadcast (recipients = origin's pair).
    pub fn is_protocol(&self, env: &Envelope) -> bool {
        !env.babble && self.pair(env.origin).is_some_and(|p| env.recipients[..] == p[..])
    }
}

/// A validated decode sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeHit {
    pub value: Symbol,
    pub block: u32,
    /// Stage of the last element of the sequence.
    pub end: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiverOutput {
    Message(Symbol),
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Queued {
    Forward(Triplet),
    /// Re-report the subject/stage with a random key (the sender accused both first hops at once).
    Randomize { subject: NodeIx, stage: u32 },
}

impl Queued {
    fn subject_stage(&self) -> (NodeIx, u32) {
        match *self {
            Queued::Forward(t) => (t.subject, t.stage),
            Queued::Randomize { subject, stage } => (subject, stage),
        }
    }
}

/// Honest emission for one stage, plus what it consumes from the node's queues.
#[derive(Debug, Clone)]
pub struct Emission {
    pub envelope: Envelope,
    detections_done: Vec<(NodeIx, u32)>,
    reported: Vec<(NodeIx, u32)>,
    forwards_done: Vec<usize>,
}

/// State of one circle player's honest automaton.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeIx,
    pub role: CircleRole,
    channel: u8,
    circle_sender: NodeIx,
    /// For i1 the node j1 and vice versa.
    partner: Option<NodeIx>,
    knows: Option<Symbol>,
    rebooted: bool,
    learned_at_block: Option<u32>,
    /// (content, key) seen from each link at each stage.
    seen: [Vec<Option<(Content, AuthKey)>>; 2],
    /// Triplets heard from each link, with receipt stage.
    heard: [Vec<(Triplet, u32)>; 2],
    own_keys: Vec<Option<AuthKey>>,
    detections: VecDeque<(NodeIx, u32)>,
    emitted_detections: BTreeSet<(NodeIx, u32)>,
    forwards: VecDeque<(Queued, u32)>,
    handled: BTreeSet<Triplet>,
    randomized: BTreeSet<Triplet>,
    hits: Vec<Option<DecodeHit>>,
}

impl NodeState {
    /// `message` is the content the circle's sender transmits (ignored for others).
    pub fn new(id: NodeIx, view: &CircleView, cfg: &ProtocolConfig, channel: u8, message: Option<Symbol>) -> Option<Self> {
        let role = view.role(id)?.clone();
        let n = cfg.total_stages as usize + 2;
        let knows = if role.side == Side::Sender { message } else { None };
        let hits = vec![None; role.decode.len()];
        let sender = view.circle.sender();
        let first = view.role(sender).map(|r| r.links).unwrap_or([sender; 2]);
        let partner = match role.side {
            Side::Left | Side::Right if role.links[0] == sender => first.iter().copied().find(|q| *q != id),
            _ => None,
        };
        Some(NodeState {
            id,
            role,
            channel,
            circle_sender: sender,
            partner,
            knows,
            rebooted: false,
            learned_at_block: None,
            seen: [vec![None; n], vec![None; n]],
            heard: [Vec::new(), Vec::new()],
            own_keys: vec![None; n],
            detections: VecDeque::new(),
            emitted_detections: BTreeSet::new(),
            forwards: VecDeque::new(),
            handled: BTreeSet::new(),
            randomized: BTreeSet::new(),
            hits,
        })
    }

    pub fn knows(&self) -> Option<Symbol> {
        self.knows
    }

    pub fn rebooted(&self) -> bool {
        self.rebooted
    }

    pub fn learned_at_block(&self) -> Option<u32> {
        self.learned_at_block
    }

    pub fn hits(&self) -> &[Option<DecodeHit>] {
        &self.hits
    }

    pub fn pending_len(&self) -> usize {
        self.detections.len() + self.forwards.len()
    }

    pub fn pending_detections(&self) -> impl Iterator<Item = &(NodeIx, u32)> {
        self.detections.iter()
    }

    pub fn emitted_detections(&self) -> &BTreeSet<(NodeIx, u32)> {
        &self.emitted_detections
    }

    /// Key this node actually broadcast on its protocol pair at `stage`.
    pub fn own_key(&self, stage: u32) -> Option<AuthKey> {
        self.own_keys.get(stage as usize).copied().flatten()
    }

    /// (content, key) observed from link neighbour `q` at `stage`.
    pub fn observed(&self, q: NodeIx, stage: u32) -> Option<(Content, AuthKey)> {
        let li = self.link_index(q)?;
        self.seen[li].get(stage as usize).copied().flatten()
    }

    fn link_index(&self, q: NodeIx) -> Option<usize> {
        self.role.links.iter().position(|x| *x == q)
    }

    /// Content the honest automaton broadcasts at `stage`.
    pub fn content_at(&self, stage: u32) -> Content {
        if stage == 1 {
            return match (self.role.side, self.knows) {
                (Side::Sender, Some(m)) => Content::Msg(m),
                _ => Content::Null,
            };
        }
        if self.rebooted {
            return Content::Null;
        }
        self.knows.map_or(Content::Null, Content::Msg)
    }

    fn live(&self, s: u32, stage: u32, cfg: &ProtocolConfig) -> bool {
        let same_block = cfg.block_of(s).is_some() && cfg.block_of(s) == cfg.block_of(stage);
        same_block || (cfg.final_detection == FinalDetection::Carry && s + 1 == stage && cfg.block_of(s).is_some())
    }

    /// Honest envelope for `stage` (not yet committed to the node's queues).
    pub fn honest_emit(
        &self,
        stage: u32,
        cfg: &ProtocolConfig,
        net: &Network,
        mint: &mut KeyMint,
    ) -> Result<Emission, ProtocolError> {
        if stage == 0 || stage > cfg.total_stages {
            return Err(ProtocolError::StageOutOfRange { stage, total: cfg.total_stages });
        }
        let info = |usage| KeyInfo { issuer: self.id, channel: self.channel, stage, usage };
        let key = mint.fresh(info(KeyUse::Auth));
        let mut counts: BTreeMap<NodeIx, usize> = BTreeMap::new();
        let cap = |q: NodeIx| if net.adjacent(self.id, q) { 1 } else { cfg.triplet_bound };
        let mut triplets = Vec::new();
        let mut detections_done = Vec::new();
        let mut reported = Vec::new();
        let mut forwards_done = Vec::new();

        for &(q, s) in &self.detections {
            if !self.live(s, stage, cfg) {
                detections_done.push((q, s));
                continue;
            }
            let c = counts.entry(q).or_default();
            if *c >= cap(q) {
                continue;
            }
            if let Some((_, k)) = self.observed(q, s) {
                *c += 1;
                triplets.push(Triplet { subject: q, stage: s, key: k });
                detections_done.push((q, s));
                reported.push((q, s));
            }
        }
        for (i, (item, _)) in self.forwards.iter().enumerate() {
            let (q, s) = item.subject_stage();
            if !self.live(s, stage, cfg) {
                forwards_done.push(i);
                continue;
            }
            let c = counts.entry(q).or_default();
            if *c >= cap(q) {
                continue;
            }
            *c += 1;
            let t = match *item {
                Queued::Forward(t) => t,
                Queued::Randomize { subject, stage: s } => {
                    Triplet { subject, stage: s, key: mint.fresh(info(KeyUse::Camouflage)) }
                }
            };
            triplets.push(t);
            forwards_done.push(i);
        }
        if stage >= 3 {
            let s = stage - 1;
            let dropped = cfg.final_detection == FinalDetection::Drop && cfg.is_block_end(s);
            if !dropped {
                for &q in &self.role.monitored {
                    if counts.get(&q).copied().unwrap_or(0) == 0 {
                        counts.insert(q, 1);
                        triplets.push(Triplet { subject: q, stage: s, key: mint.fresh(info(KeyUse::Camouflage)) });
                    }
                }
            }
        }
        let mut recipients = self.role.links.to_vec();
        recipients.sort_unstable();
        let envelope = Envelope {
            origin: self.id,
            recipients,
            stage,
            channel: self.channel,
            babble: false,
            payload: GrandMessage::new(self.content_at(stage), key, triplets, self.id, net),
        };
        Ok(Emission { envelope, detections_done, reported, forwards_done })
    }

    /// Marks the emission's queued items as sent (called only when the node followed it).
    pub fn commit(&mut self, e: &Emission) {
        for d in &e.detections_done {
            if let Some(p) = self.detections.iter().position(|x| x == d) {
                self.detections.remove(p);
            }
        }
        self.emitted_detections.extend(e.reported.iter().copied());
        for t in e.envelope.payload.triplets() {
            self.handled.insert(*t);
        }
        let done: BTreeSet<usize> = e.forwards_done.iter().copied().collect();
        let mut i = 0;
        self.forwards.retain(|_| {
            let keep = !done.contains(&i);
            i += 1;
            keep
        });
    }

    /// Records the key the node actually used on its protocol pair at `stage`.
    pub fn record_sent(&mut self, stage: u32, key: Option<AuthKey>) {
        if let Some(slot) = self.own_keys.get_mut(stage as usize) {
            *slot = key;
        }
    }

    /// Records one stage's protocol-channel envelopes and updates detection,
    /// forwarding and reboot state.
    pub fn absorb_inbox(&mut self, inbox: &[&Envelope], stage: u32, cfg: &ProtocolConfig, view: &CircleView) {
        let mut fresh: Vec<(usize, Triplet)> = Vec::new();
        for env in inbox {
            debug_assert!(env.addressed_to(self.id), "misaddressed envelope");
            if !view.is_protocol(env) {
                continue;
            }
            let Some(li) = self.link_index(env.origin) else { continue };
            let slot = &mut self.seen[li][stage as usize];
            if slot.is_some() {
                continue;
            }
            *slot = Some((env.payload.content, env.payload.key));
            for t in env.payload.triplets() {
                self.heard[li].push((*t, stage));
                fresh.push((li, *t));
            }
        }

        if stage == 1 {
            if matches!(self.role.side, Side::Left | Side::Right) && self.role.links[0] == self.circle_sender {
                if let Some((Content::Msg(m), _)) = self.seen[0][1] {
                    self.knows = Some(m);
                    self.learned_at_block = Some(0);
                }
            }
            return;
        }

        let block = cfg.block_of(stage);
        if block.is_some() && self.role.side != Side::Receiver {
            let dropped = cfg.final_detection == FinalDetection::Drop && cfg.is_block_end(stage);
            for qi in 0..self.role.monitored.len() {
                let q = self.role.monitored[qi];
                let Some(li) = self.link_index(q) else { continue };
                let Some((Content::Msg(seen), _)) = self.seen[li][stage as usize] else { continue };
                let false_announcement = match self.knows {
                    Some(m) => seen != m,
                    None => true,
                };
                if false_announcement && !dropped && !self.detections.contains(&(q, stage)) {
                    self.detections.push_back((q, stage));
                }
            }
        }

        if let Some(b) = block {
            for (li, t) in fresh {
                if cfg.block_of(t.stage) != Some(b) || t.stage >= stage || self.handled.contains(&t) {
                    continue;
                }
                let from = self.role.links[li];
                let Some(subject_side) = view.side(t.subject) else { continue };
                match self.route(from, t.subject, subject_side) {
                    Route::Forward => {
                        self.handled.insert(t);
                        self.forwards.push_back((Queued::Forward(t), stage));
                    }
                    Route::Special => {
                        let own = self.own_key(t.stage);
                        // The same message from the sender must also claim this node deviated at s.
                        let accused = own.is_some()
                            && self.heard[0].iter().any(|(h, r)| {
                                *r == stage && h.subject == self.id && h.stage == t.stage && Some(h.key) == own
                            });
                        // A randomized copy does not mark the triplet handled: a later clean
                        // message from the sender carrying it is still forwarded.
                        if !accused {
                            self.handled.insert(t);
                            self.forwards.push_back((Queued::Forward(t), stage));
                        } else if self.randomized.insert(t) {
                            self.forwards.push_back((Queued::Randomize { subject: t.subject, stage: t.stage }, stage));
                        }
                    }
                    Route::Ignore => {}
                }
            }
        }

        if matches!(self.role.side, Side::Left | Side::Right) {
            if let Some(m) = self.knows {
                let both_false = (0..2).all(|li| {
                    matches!(self.seen[li][stage as usize], Some((Content::Msg(x), _)) if x != m)
                });
                if both_false {
                    self.reboot();
                }
            }
        }
    }

    fn route(&self, from: NodeIx, subject: NodeIx, subject_side: Side) -> Route {
        let [a, b] = self.role.links;
        match self.role.side {
            Side::Left | Side::Right => {
                let own = self.role.side;
                let other = if own == Side::Left { Side::Right } else { Side::Left };
                if from == b && subject_side == own {
                    Route::Forward
                } else if from == a && subject_side == other {
                    if self.partner == Some(subject) {
                        Route::Special
                    } else {
                        Route::Forward
                    }
                } else {
                    Route::Ignore
                }
            }
            Side::Sender => {
                if (from == a && subject_side == Side::Left) || (from == b && subject_side == Side::Right) {
                    Route::Forward
                } else {
                    Route::Ignore
                }
            }
            Side::Receiver => {
                if (from == b && subject_side == Side::Left) || (from == a && subject_side == Side::Right) {
                    Route::Forward
                } else {
                    Route::Ignore
                }
            }
        }
    }

    /// Runs the decoding rule for `block`; returns the learned element, if any.
    pub fn end_of_block_decode(&mut self, block: u32, cfg: &ProtocolConfig) -> Option<Symbol> {
        if self.knows.is_some() || self.role.decode.is_empty() {
            return None;
        }
        let (lo, hi) = (cfg.block_start(block), cfg.block_end(block));
        let need = cfg.nc - 1;
        let mut best: Option<(u32, usize, Symbol)> = None;
        for oi in 0..self.role.decode.len() {
            let o = self.role.decode[oi];
            let (Some(pl), Some(sl)) = (self.link_index(o.pred), self.link_index(o.succ)) else { continue };
            let mut by_value: BTreeMap<Symbol, Vec<u32>> = BTreeMap::new();
            for s in lo..=hi {
                if let Some((Content::Msg(m), _)) = self.seen[pl][s as usize] {
                    by_value.entry(m).or_default().push(s);
                }
            }
            let mut hit: Option<DecodeHit> = None;
            for (m, occ) in by_value {
                if occ.len() < need {
                    continue;
                }
                for w in occ.windows(need) {
                    let (s1, send) = (w[0], w[need - 1]);
                    let key = self.seen[pl][s1 as usize].map(|x| x.1);
                    let blocked = self.heard[sl]
                        .iter()
                        .any(|(t, r)| t.subject == o.pred && t.stage == s1 && Some(t.key) == key && *r <= send);
                    if !blocked {
                        if hit.is_none_or(|h| send < h.end) {
                            hit = Some(DecodeHit { value: m, block, end: send });
                        }
                        break;
                    }
                }
            }
            if let Some(h) = hit {
                self.hits[oi] = Some(h);
                if best.is_none_or(|(e, i, _)| (h.end, oi) < (e, i)) {
                    best = Some((h.end, oi, h.value));
                }
            }
        }
        let (_, _, m) = best?;
        self.knows = Some(m);
        self.learned_at_block = Some(block);
        Some(m)
    }

    /// Receiver decision from its decode instances (the block where it first learned).
    pub fn receiver_output(&self) -> ReceiverOutput {
        let Some(block) = self.hits.iter().flatten().map(|h| h.block).min() else {
            return ReceiverOutput::Undecided;
        };
        let mut vals = self.hits.iter().flatten().filter(|h| h.block == block).map(|h| h.value);
        let first = vals.next().expect("non-empty");
        if vals.all(|v| v == first) {
            ReceiverOutput::Message(first)
        } else {
            ReceiverOutput::Undecided
        }
    }

    /// Continue as if the known message were m0 (idempotent).
    pub fn reboot(&mut self) {
        self.rebooted = true;
    }
}

enum Route {
    Forward,
    Special,
    Ignore,
}
