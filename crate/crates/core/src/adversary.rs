//! Deviation schedules, knowledge-bounded symbolic adversaries and scripted attacks.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::messaging::{
    validate_envelope, Alphabet, AuthKey, Content, Envelope, GrandMessage, KeyInfo, KeyMint, KeyMode, KeyUse,
    Triplet, Violation,
};
use crate::protocol::ProtocolConfig;
use crate::topology::{CircleRole, Network, NodeIx};

/// Which players may deviate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Intermediaries only.
    Sigma,
    /// Intermediaries, the sender (from stage 2) and the receiver.
    SigmaStar,
    /// Any set of players at any stage; used only for crafted non-unilateral tests.
    Unrestricted,
}

/// Deviators per (global) stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationSchedule {
    entries: Vec<(u32, NodeIx)>,
    pub scope: Scope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleViolation {
    #[error("two deviators at stage {0}")]
    TwoDeviators(u32),
    #[error("sender deviates at stage {0} outside the all-players scope")]
    SenderNotAllowed(u32),
    #[error("receiver deviates at stage {0} outside the all-players scope")]
    ReceiverNotAllowed(u32),
    #[error("sender deviates at stage 1")]
    SenderAtFirstStage,
    #[error("stage {0} outside 1..=T")]
    StageOutOfRange(u32),
    #[error("unknown node index {0}")]
    UnknownNode(NodeIx),
}

impl DeviationSchedule {
    pub fn new(scope: Scope) -> Self {
        DeviationSchedule { entries: Vec::new(), scope }
    }

    pub fn honest() -> Self {
        Self::new(Scope::Sigma)
    }

    pub fn from_entries(scope: Scope, mut entries: Vec<(u32, NodeIx)>) -> Self {
        entries.sort_unstable();
        entries.dedup();
        DeviationSchedule { entries, scope }
    }

    pub fn with(mut self, stage: u32, node: NodeIx) -> Self {
        self.entries.push((stage, node));
        self.entries.sort_unstable();
        self.entries.dedup();
        self
    }

    pub fn entries(&self) -> &[(u32, NodeIx)] {
        &self.entries
    }

    pub fn deviators(&self, stage: u32) -> impl Iterator<Item = NodeIx> + '_ {
        self.entries.iter().filter(move |e| e.0 == stage).map(|e| e.1)
    }

    pub fn deviates(&self, stage: u32, node: NodeIx) -> bool {
        self.entries.binary_search(&(stage, node)).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// At most one deviator per stage.
    pub fn is_unilateral(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].0 != w[1].0)
    }
}

/// Checks scope and unilaterality of a schedule over stages `1..=total_stages`.
pub fn validate_schedule(s: &DeviationSchedule, net: &Network, total_stages: u32) -> Result<(), ScheduleViolation> {
    for &(stage, node) in &s.entries {
        if stage == 0 || stage > total_stages {
            return Err(ScheduleViolation::StageOutOfRange(stage));
        }
        if node >= net.len() {
            return Err(ScheduleViolation::UnknownNode(node));
        }
        if s.scope == Scope::Unrestricted {
            continue;
        }
        if node == net.sender() {
            if s.scope == Scope::Sigma {
                return Err(ScheduleViolation::SenderNotAllowed(stage));
            }
            if stage == 1 {
                return Err(ScheduleViolation::SenderAtFirstStage);
            }
        }
        if node == net.receiver() && s.scope == Scope::Sigma {
            return Err(ScheduleViolation::ReceiverNotAllowed(stage));
        }
    }
    if s.scope != Scope::Unrestricted {
        if let Some(w) = s.entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(ScheduleViolation::TwoDeviators(w[0].0));
        }
    }
    Ok(())
}

/// Everything a node has seen in envelopes addressed to it.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    tokens: Vec<AuthKey>,
    token_set: BTreeSet<AuthKey>,
    /// Authentication keys seen directly from their owner's protocol broadcast.
    observed: BTreeMap<(NodeIx, u32), AuthKey>,
    contents: BTreeSet<Content>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an envelope's keys and content; `protocol` marks a protocol-channel broadcast.
    pub fn observe(&mut self, env: &Envelope, protocol: bool) {
        self.contents.insert(env.payload.content);
        for k in env.payload.keys() {
            self.add_token(k);
        }
        if protocol {
            self.observed.entry((env.origin, env.stage)).or_insert(env.payload.key);
        }
    }

    pub fn add_token(&mut self, k: AuthKey) {
        if self.token_set.insert(k) {
            self.tokens.push(k);
        }
    }

    pub fn contains(&self, k: AuthKey) -> bool {
        self.token_set.contains(&k)
    }

    /// Tokens in order of first observation.
    pub fn tokens(&self) -> &[AuthKey] {
        &self.tokens
    }

    pub fn contents(&self) -> &BTreeSet<Content> {
        &self.contents
    }

    /// Authentication key of `q` at `stage`, if seen directly.
    pub fn observed(&self, q: NodeIx, stage: u32) -> Option<AuthKey> {
        self.observed.get(&(q, stage)).copied()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecipientPattern {
    /// The protocol pair {p-, p+}.
    Pair,
    /// Only the first link (p-, or i1 for the sender, iK for the receiver).
    PredOnly,
    /// Only the second link.
    SuccOnly,
    /// No envelope at all.
    Silent,
    /// Arbitrary neighbour subset (scripted mode).
    Subset(Vec<NodeIx>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContentChoice {
    Honest,
    Set(Content),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyChoice {
    /// Own authentication key: the honest one; in a slot, the key observed from the subject.
    Truthful,
    Replay(AuthKey),
    Fresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotChoice {
    /// Whatever the honest automaton puts in the slot.
    Honest,
    Key(KeyChoice),
    Omit,
}

/// Replacement behaviour of a deviating node for one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crafted {
    pub recipients: RecipientPattern,
    pub content: ContentChoice,
    pub key: KeyChoice,
    /// Keep the honest triplets outside the detection slots.
    pub keep_forwards: bool,
    /// Per monitored successor `q`: the triplet about (q, stage - 1).
    pub slots: Vec<(NodeIx, SlotChoice)>,
    /// Extra triplets (keys must come from the knowledge base).
    pub forged: Vec<Triplet>,
}

impl Crafted {
    pub fn honest() -> Self {
        Crafted {
            recipients: RecipientPattern::Pair,
            content: ContentChoice::Honest,
            key: KeyChoice::Truthful,
            keep_forwards: true,
            slots: Vec::new(),
            forged: Vec::new(),
        }
    }

    pub fn with_content(mut self, c: Content) -> Self {
        self.content = ContentChoice::Set(c);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdversaryAction {
    Crafted(Crafted),
    /// Explicit envelopes (scripted mode).
    Raw(Vec<Envelope>),
}

impl AdversaryAction {
    pub fn honest() -> Self {
        AdversaryAction::Crafted(Crafted::honest())
    }

    pub fn content(c: Content) -> Self {
        AdversaryAction::Crafted(Crafted::honest().with_content(c))
    }

    pub fn silent() -> Self {
        AdversaryAction::Crafted(Crafted { recipients: RecipientPattern::Silent, ..Crafted::honest() })
    }
}

/// What a deviating node sees when choosing its action.
#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    pub node: NodeIx,
    /// Stage within the channel.
    pub stage: u32,
    pub global_stage: u32,
    pub channel: u8,
    pub role: Option<&'a CircleRole>,
    /// The envelope the honest automaton would send.
    pub honest: Option<&'a Envelope>,
    pub kb: &'a KnowledgeBase,
    pub net: &'a Network,
    pub cfg: &'a ProtocolConfig,
    pub alphabet: &'a Alphabet,
    /// Members of the protocol circle (for locating foreign keys).
    pub members: &'a [NodeIx],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AdversaryError {
    #[error("action enumeration requires symbolic keys")]
    NumericMode,
    #[error("adversary envelope invalid: {0}")]
    Invalid(Violation),
    #[error("adversary used a key outside its knowledge")]
    UnknownKey,
}

/// Turns an action into concrete envelopes for `view.node`.
pub fn resolve(action: &AdversaryAction, view: &NodeView<'_>, mint: &mut KeyMint) -> Result<Vec<Envelope>, AdversaryError> {
    let c = match action {
        AdversaryAction::Raw(envs) => return Ok(envs.clone()),
        AdversaryAction::Crafted(c) => c,
    };
    let node = view.node;
    let links = view.role.map(|r| r.links);
    let mut recipients = match (&c.recipients, links) {
        (RecipientPattern::Silent, _) => return Ok(Vec::new()),
        (RecipientPattern::Pair, Some(l)) => l.to_vec(),
        (RecipientPattern::PredOnly, Some(l)) => vec![l[0]],
        (RecipientPattern::SuccOnly, Some(l)) => vec![l[1]],
        (RecipientPattern::Subset(s), _) => s.clone(),
        (_, None) => view.net.neighbors(node).to_vec(),
    };
    recipients.sort_unstable();
    recipients.dedup();
    let info = |usage| KeyInfo { issuer: node, channel: view.channel, stage: view.stage, usage };
    let (base_content, base_key, base_triplets) = match view.honest {
        Some(h) => (h.payload.content, Some(h.payload.key), h.payload.triplets().copied().collect::<Vec<_>>()),
        None => (Content::Null, None, Vec::new()),
    };
    let content = match c.content {
        ContentChoice::Honest => base_content,
        ContentChoice::Set(x) => x,
    };
    let key = match (c.key, base_key) {
        (KeyChoice::Truthful, Some(k)) => k,
        (KeyChoice::Replay(k), _) => k,
        _ => mint.fresh(info(KeyUse::Forged)),
    };
    let monitored: &[NodeIx] = view.role.map(|r| &r.monitored[..]).unwrap_or(&[]);
    let slot_stage = view.stage.checked_sub(1).filter(|s| *s >= 2);
    let is_slot = |t: &Triplet| monitored.contains(&t.subject) && Some(t.stage) == slot_stage;
    let mut triplets: Vec<Triplet> = Vec::new();
    if c.keep_forwards {
        triplets.extend(base_triplets.iter().filter(|t| !is_slot(t)).copied());
    }
    if let Some(s) = slot_stage {
        for &q in monitored {
            let choice = c.slots.iter().find(|x| x.0 == q).map_or(SlotChoice::Honest, |x| x.1);
            match choice {
                SlotChoice::Honest => triplets.extend(base_triplets.iter().filter(|t| t.subject == q && t.stage == s)),
                SlotChoice::Omit => {}
                SlotChoice::Key(k) => {
                    let key = match k {
                        KeyChoice::Truthful => view.kb.observed(q, s),
                        KeyChoice::Replay(k) => Some(k),
                        KeyChoice::Fresh => None,
                    }
                    .unwrap_or_else(|| mint.fresh(info(KeyUse::Forged)));
                    triplets.push(Triplet { subject: q, stage: s, key });
                }
            }
        }
    }
    for f in &c.forged {
        if view.net.adjacent(node, f.subject) {
            triplets.retain(|t| t.subject != f.subject);
        }
        triplets.push(*f);
    }
    // Enforce the per-subject bounds, keeping the latest additions.
    let mut kept: Vec<Triplet> = Vec::new();
    for t in triplets.into_iter().rev() {
        let cap = if view.net.adjacent(node, t.subject) { 1 } else { view.cfg.triplet_bound };
        if kept.iter().filter(|x| x.subject == t.subject).count() < cap && !kept.contains(&t) {
            kept.push(t);
        }
    }
    kept.reverse();
    if recipients.is_empty() {
        return Ok(Vec::new());
    }
    let env = Envelope {
        origin: node,
        recipients,
        stage: view.stage,
        channel: view.channel,
        babble: false,
        payload: GrandMessage::new(content, key, kept, node, view.net),
    };
    validate_envelope(&env, view.net, view.cfg).map_err(AdversaryError::Invalid)?;
    Ok(vec![env])
}

/// Bounds on the per-stage action product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionCaps {
    pub patterns: Vec<RecipientPattern>,
    /// Replayed knowledge-base tokens considered per key position (most recent first).
    pub max_replays: usize,
    /// Foreign true authentication keys considered for the extra forged triplet.
    pub max_foreign: usize,
    pub forwarding: Vec<bool>,
}

impl Default for ActionCaps {
    fn default() -> Self {
        ActionCaps {
            patterns: vec![RecipientPattern::Pair, RecipientPattern::PredOnly, RecipientPattern::SuccOnly],
            max_replays: 2,
            max_foreign: 2,
            forwarding: vec![true, false],
        }
    }
}

/// Knowledge-base tokens that are (ground truth) authentication keys of other circle
/// members for earlier stages of the current block, most recent first.
pub fn foreign_true_keys(view: &NodeView<'_>, mint: &KeyMint) -> Vec<Triplet> {
    let block = view.cfg.block_of(view.stage);
    let mut out: Vec<Triplet> = view
        .kb
        .tokens()
        .iter()
        .filter_map(|k| {
            let info = mint.info(*k)?;
            let ok = info.usage == KeyUse::Auth
                && info.channel == view.channel
                && info.issuer != view.node
                && view.members.contains(&info.issuer)
                && info.stage < view.stage
                && block.is_some()
                && view.cfg.block_of(info.stage) == block;
            ok.then_some(Triplet { subject: info.issuer, stage: info.stage, key: *k })
        })
        .collect();
    out.sort_by(|a, b| b.stage.cmp(&a.stage).then(b.key.cmp(&a.key)));
    out
}

/// Choices for each dimension of the action product at this view.
struct Dims {
    patterns: Vec<RecipientPattern>,
    contents: Vec<Content>,
    own_keys: Vec<KeyChoice>,
    slots: Vec<(NodeIx, Vec<SlotChoice>)>,
    forged: Vec<Option<Triplet>>,
    forwarding: Vec<bool>,
}

fn dims(view: &NodeView<'_>, caps: &ActionCaps, mint: &KeyMint) -> Result<Dims, AdversaryError> {
    if mint.mode() != KeyMode::Symbolic {
        return Err(AdversaryError::NumericMode);
    }
    let recent: Vec<AuthKey> = view.kb.tokens().iter().rev().copied().collect();
    let mut contents = vec![Content::Null];
    contents.extend(view.alphabet.symbols().unwrap_or_default().into_iter().map(Content::Msg));
    let mut own_keys = vec![KeyChoice::Truthful];
    own_keys.extend(recent.iter().take(caps.max_replays).map(|k| KeyChoice::Replay(*k)));
    let mut slots = Vec::new();
    if view.stage >= 3 {
        for &q in view.role.map(|r| &r.monitored[..]).unwrap_or(&[]) {
            let truthful = view.kb.observed(q, view.stage - 1);
            let mut c = Vec::new();
            if truthful.is_some() {
                c.push(SlotChoice::Key(KeyChoice::Truthful));
            }
            c.extend(
                recent
                    .iter()
                    .filter(|k| Some(**k) != truthful)
                    .take(caps.max_replays)
                    .map(|k| SlotChoice::Key(KeyChoice::Replay(*k))),
            );
            c.push(SlotChoice::Key(KeyChoice::Fresh));
            slots.push((q, c));
        }
    }
    let mut forged = vec![None];
    forged.extend(foreign_true_keys(view, mint).into_iter().take(caps.max_foreign).map(Some));
    Ok(Dims {
        patterns: caps.patterns.clone(),
        contents,
        own_keys,
        slots,
        forged,
        forwarding: caps.forwarding.clone(),
    })
}

impl Dims {
    fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.patterns.len(), self.contents.len(), self.own_keys.len()];
        s.extend(self.slots.iter().map(|x| x.1.len()));
        s.push(self.forged.len());
        s.push(self.forwarding.len());
        s
    }

    fn count(&self) -> usize {
        self.sizes().iter().product()
    }

    fn build(&self, idx: &[usize]) -> AdversaryAction {
        let n = self.slots.len();
        AdversaryAction::Crafted(Crafted {
            recipients: self.patterns[idx[0]].clone(),
            content: ContentChoice::Set(self.contents[idx[1]]),
            key: self.own_keys[idx[2]],
            keep_forwards: self.forwarding[idx[4 + n]],
            slots: self.slots.iter().enumerate().map(|(i, (q, c))| (*q, c[idx[3 + i]])).collect(),
            forged: self.forged[idx[3 + n]].into_iter().collect(),
        })
    }
}

/// Closed-form size of [`enumerate_actions`] at this view.
pub fn action_count(view: &NodeView<'_>, caps: &ActionCaps, mint: &KeyMint) -> Result<usize, AdversaryError> {
    Ok(dims(view, caps, mint)?.count())
}

/// Full per-stage action product: pattern × content × own key × slot keys × forged
/// foreign-key triplet × forwarding.
pub fn enumerate_actions(view: &NodeView<'_>, caps: &ActionCaps, mint: &KeyMint) -> Result<Vec<AdversaryAction>, AdversaryError> {
    let d = dims(view, caps, mint)?;
    let sizes = d.sizes();
    if sizes.contains(&0) {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(d.count());
    let mut idx = vec![0usize; sizes.len()];
    loop {
        out.push(d.build(&idx));
        let mut i = sizes.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < sizes[i] {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// One action drawn uniformly from the enumerated product.
pub fn sample_action<R: RngCore>(
    view: &NodeView<'_>,
    caps: &ActionCaps,
    mint: &KeyMint,
    rng: &mut R,
) -> Result<AdversaryAction, AdversaryError> {
    let d = dims(view, caps, mint)?;
    let idx: Vec<usize> = d.sizes().iter().map(|n| (rng.next_u64() % *n as u64) as usize).collect();
    Ok(d.build(&idx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContentPick {
    Honest,
    Set(Content),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotPick {
    Honest,
    Truthful,
    Fresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayPick {
    None,
    /// The most recent foreign true key.
    Latest,
    /// Every foreign true key the message bounds allow.
    All,
}

/// A per-run adversary policy, resolved against the deviator's view at each deviating stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionTemplate {
    pub pattern: RecipientPattern,
    pub content: ContentPick,
    /// Choice for the first and second monitored successor.
    pub slots: [SlotPick; 2],
    pub replay: ReplayPick,
    pub keep_forwards: bool,
}

impl ActionTemplate {
    /// Whether the second slot choice matters (only for nodes monitoring two successors).
    pub fn uses_second_slot(&self) -> bool {
        self.slots[1] != SlotPick::Honest
    }

    pub fn instantiate(&self, view: &NodeView<'_>, mint: &KeyMint) -> AdversaryAction {
        let monitored: &[NodeIx] = view.role.map(|r| &r.monitored[..]).unwrap_or(&[]);
        let slots = monitored
            .iter()
            .zip(self.slots.iter())
            .map(|(q, p)| {
                let c = match p {
                    SlotPick::Honest => SlotChoice::Honest,
                    SlotPick::Truthful => SlotChoice::Key(KeyChoice::Truthful),
                    SlotPick::Fresh => SlotChoice::Key(KeyChoice::Fresh),
                };
                (*q, c)
            })
            .collect();
        let foreign = match self.replay {
            ReplayPick::None => Vec::new(),
            ReplayPick::Latest => foreign_true_keys(view, mint).into_iter().take(1).collect(),
            ReplayPick::All => foreign_true_keys(view, mint),
        };
        AdversaryAction::Crafted(Crafted {
            recipients: self.pattern.clone(),
            content: match self.content {
                ContentPick::Honest => ContentChoice::Honest,
                ContentPick::Set(c) => ContentChoice::Set(c),
            },
            key: KeyChoice::Truthful,
            keep_forwards: self.keep_forwards,
            slots,
            forged: foreign,
        })
    }
}

/// Policy space of the exhaustive sweep: content {honest, m0, M} × slot keys
/// {honest, truthful, fresh}² × foreign replay {none, latest, all} × forwards
/// {keep, drop} on the protocol pair, plus two leak-only policies on singleton pairs.
pub fn template_space(alphabet: &Alphabet) -> Vec<ActionTemplate> {
    let mut contents = vec![ContentPick::Honest, ContentPick::Set(Content::Null)];
    contents.extend(alphabet.symbols().unwrap_or_default().into_iter().map(|m| ContentPick::Set(Content::Msg(m))));
    let picks = [SlotPick::Honest, SlotPick::Truthful, SlotPick::Fresh];
    let mut out = Vec::new();
    for &content in &contents {
        for &s0 in &picks {
            for &s1 in &picks {
                for replay in [ReplayPick::None, ReplayPick::Latest, ReplayPick::All] {
                    for keep_forwards in [true, false] {
                        out.push(ActionTemplate {
                            pattern: RecipientPattern::Pair,
                            content,
                            slots: [s0, s1],
                            replay,
                            keep_forwards,
                        });
                    }
                }
            }
        }
    }
    for pattern in [RecipientPattern::PredOnly, RecipientPattern::SuccOnly] {
        out.push(ActionTemplate {
            pattern,
            content: ContentPick::Honest,
            slots: [SlotPick::Truthful, SlotPick::Truthful],
            replay: ReplayPick::All,
            keep_forwards: true,
        });
    }
    out
}

/// Adversary queried by the engine at every stage where its schedule names a deviator.
pub trait AdversaryStrategy {
    fn schedule(&self) -> &DeviationSchedule;
    fn act(&mut self, view: &NodeView<'_>, mint: &KeyMint) -> AdversaryAction;
}

/// No deviations.
#[derive(Debug, Clone)]
pub struct Honest(DeviationSchedule);

impl Honest {
    pub fn new() -> Self {
        Honest(DeviationSchedule::honest())
    }
}

impl Default for Honest {
    fn default() -> Self {
        Self::new()
    }
}

impl AdversaryStrategy for Honest {
    fn schedule(&self) -> &DeviationSchedule {
        &self.0
    }

    fn act(&mut self, _: &NodeView<'_>, _: &KeyMint) -> AdversaryAction {
        AdversaryAction::honest()
    }
}

/// Fixed per-stage actions; honest behaviour at unscripted stages.
#[derive(Debug, Clone)]
pub struct ScriptedAdversary {
    schedule: DeviationSchedule,
    /// (global stage, node, channel or all channels) → action.
    actions: BTreeMap<(u32, NodeIx), Vec<(Option<u8>, AdversaryAction)>>,
}

/// Builds a scripted strategy; rejects scripts that violate the scope or unilaterality.
pub fn scripted_adversary(
    script: Vec<(u32, NodeIx, AdversaryAction)>,
    scope: Scope,
    net: &Network,
    total_stages: u32,
) -> Result<ScriptedAdversary, ScheduleViolation> {
    let entries = script.iter().map(|(s, n, _)| (*s, *n)).collect();
    let schedule = DeviationSchedule::from_entries(scope, entries);
    validate_schedule(&schedule, net, total_stages)?;
    let mut actions: BTreeMap<(u32, NodeIx), Vec<(Option<u8>, AdversaryAction)>> = BTreeMap::new();
    for (s, n, a) in script {
        actions.entry((s, n)).or_default().push((None, a));
    }
    Ok(ScriptedAdversary { schedule, actions })
}

impl ScriptedAdversary {
    /// Overrides the action on one channel only.
    pub fn on_channel(mut self, stage: u32, node: NodeIx, channel: u8, action: AdversaryAction) -> Self {
        self.actions.entry((stage, node)).or_default().insert(0, (Some(channel), action));
        self
    }
}

impl AdversaryStrategy for ScriptedAdversary {
    fn schedule(&self) -> &DeviationSchedule {
        &self.schedule
    }

    fn act(&mut self, view: &NodeView<'_>, _: &KeyMint) -> AdversaryAction {
        self.actions
            .get(&(view.global_stage, view.node))
            .and_then(|list| list.iter().find(|(c, _)| c.is_none_or(|c| c == view.channel)))
            .map_or_else(AdversaryAction::honest, |(_, a)| a.clone())
    }
}

/// Applies one template at every scheduled deviation.
#[derive(Debug, Clone)]
pub struct TemplateAdversary {
    pub schedule: DeviationSchedule,
    pub template: ActionTemplate,
}

impl AdversaryStrategy for TemplateAdversary {
    fn schedule(&self) -> &DeviationSchedule {
        &self.schedule
    }

    fn act(&mut self, view: &NodeView<'_>, mint: &KeyMint) -> AdversaryAction {
        self.template.instantiate(view, mint)
    }
}

/// Draws a uniformly random enumerated action at every scheduled deviation.
#[derive(Debug, Clone)]
pub struct RandomAdversary<R> {
    pub schedule: DeviationSchedule,
    pub caps: ActionCaps,
    pub rng: R,
}

impl<R: RngCore> AdversaryStrategy for RandomAdversary<R> {
    fn schedule(&self) -> &DeviationSchedule {
        &self.schedule
    }

    fn act(&mut self, view: &NodeView<'_>, mint: &KeyMint) -> AdversaryAction {
        if view.role.is_none() {
            // Off-circle deviators can only babble; their envelopes are never decoded.
            let c = if self.rng.next_u32() % 2 == 0 { Content::Null } else { Content::Msg(0) };
            return AdversaryAction::content(c);
        }
        sample_action(view, &self.caps, mint, &mut self.rng).unwrap_or_else(|_| AdversaryAction::honest())
    }
}
