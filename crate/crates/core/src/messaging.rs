//! Grand messages, authentication keys, deviation triplets and broadcast envelopes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::protocol::ProtocolConfig;
use crate::topology::{Network, NodeIx};

/// Element of a message alphabet.
pub type Symbol = u64;

/// Message content: an alphabet element or the null symbol m0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Content {
    Null,
    Msg(Symbol),
}

impl Content {
    pub fn msg(self) -> Option<Symbol> {
        match self {
            Content::Null => None,
            Content::Msg(m) => Some(m),
        }
    }
}

/// Message alphabet M.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Alphabet {
    /// Symbols `0..names.len()` with display names.
    Named(Vec<String>),
    /// Every 64-bit value, displayed as a fraction of the unit interval.
    Unit,
}

impl Alphabet {
    pub fn named<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        Alphabet::Named(names.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, m: Symbol) -> bool {
        match self {
            Alphabet::Named(n) => (m as usize) < n.len(),
            Alphabet::Unit => true,
        }
    }

    /// Finite symbol list, if the alphabet is enumerable.
    pub fn symbols(&self) -> Option<Vec<Symbol>> {
        match self {
            Alphabet::Named(n) => Some((0..n.len() as Symbol).collect()),
            Alphabet::Unit => None,
        }
    }

    pub fn symbol(&self, name: &str) -> Option<Symbol> {
        match self {
            Alphabet::Named(n) => n.iter().position(|x| x == name).map(|i| i as Symbol),
            Alphabet::Unit => None,
        }
    }

    pub fn display(&self, c: Content) -> String {
        match (self, c) {
            (_, Content::Null) => String::from("m0"),
            (Alphabet::Named(n), Content::Msg(m)) => match n.get(m as usize) {
                Some(s) => s.clone(),
                None => format!("?{m}"),
            },
            (Alphabet::Unit, Content::Msg(m)) => format!("0x{m:016x}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyMode {
    Symbolic,
    Numeric,
}

/// Authentication key: a symbolic nonce or a 64-bit fraction of [0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AuthKey {
    Token(u64),
    Fraction(u64),
}

impl core::fmt::Display for AuthKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AuthKey::Token(id) => write!(f, "#{id}"),
            AuthKey::Fraction(v) => write!(f, "0x{v:016x}"),
        }
    }
}

/// What a freshly minted key was used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyUse {
    /// A node's own authentication key for a stage.
    Auth,
    /// Random key inside a camouflage or randomized triplet.
    Camouflage,
    /// Key inside a babble envelope.
    Babble,
    /// Fresh key chosen by a deviating node.
    Forged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyInfo {
    pub issuer: NodeIx,
    pub channel: u8,
    pub stage: u32,
    pub usage: KeyUse,
}

/// Per-run key source. Symbolic tokens are numbered from `token_base` upwards and
/// never repeat; numeric keys come from a seeded ChaCha stream.
#[derive(Debug, Clone)]
pub struct KeyMint {
    mode: KeyMode,
    rng: ChaCha8Rng,
    token_base: u64,
    next_token: u64,
    registry: Vec<KeyInfo>,
    numeric_registry: BTreeMap<u64, KeyInfo>,
    track_numeric: bool,
}

impl KeyMint {
    pub fn new(mode: KeyMode, seed: u64) -> Self {
        Self::with_token_base(mode, seed, 0)
    }

    pub fn with_token_base(mode: KeyMode, seed: u64, token_base: u64) -> Self {
        KeyMint {
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            token_base,
            next_token: token_base,
            registry: Vec::new(),
            numeric_registry: BTreeMap::new(),
            track_numeric: false,
        }
    }

    /// Also remember issuers of numeric keys (needed only by adversaries that
    /// look keys up by value).
    pub fn track_numeric(mut self, on: bool) -> Self {
        self.track_numeric = on;
        self
    }

    pub fn mode(&self) -> KeyMode {
        self.mode
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn fresh(&mut self, info: KeyInfo) -> AuthKey {
        match self.mode {
            KeyMode::Symbolic => {
                let id = self.next_token;
                self.next_token += 1;
                self.registry.push(info);
                AuthKey::Token(id)
            }
            KeyMode::Numeric => {
                let v = self.rng.next_u64();
                if self.track_numeric {
                    self.numeric_registry.insert(v, info);
                }
                AuthKey::Fraction(v)
            }
        }
    }

    /// Ground-truth provenance of a key minted by this source.
    pub fn info(&self, key: AuthKey) -> Option<KeyInfo> {
        match key {
            AuthKey::Token(id) if id >= self.token_base => self.registry.get((id - self.token_base) as usize).copied(),
            AuthKey::Token(_) => None,
            AuthKey::Fraction(v) => self.numeric_registry.get(&v).copied(),
        }
    }

    /// True when `key` was minted by this source.
    pub fn minted(&self, key: AuthKey) -> bool {
        self.info(key).is_some()
    }
}

/// Draws a fresh key (`fresh_key` of the operation list).
pub fn fresh_key(mint: &mut KeyMint, info: KeyInfo) -> AuthKey {
    mint.fresh(info)
}

/// Deviation report: "`subject` deviated at `stage`, here is its key".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub subject: NodeIx,
    pub stage: u32,
    pub key: AuthKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrandMessage {
    pub content: Content,
    pub key: AuthKey,
    /// At most one triplet per network neighbour of the emitter.
    pub neighbor_triplets: Vec<Triplet>,
    /// At most L triplets per non-neighbour.
    pub other_triplets: Vec<Triplet>,
}

impl GrandMessage {
    /// Builds a message, filing each triplet under neighbour / non-neighbour of `origin`.
    pub fn new(content: Content, key: AuthKey, triplets: Vec<Triplet>, origin: NodeIx, net: &Network) -> Self {
        let (neighbor_triplets, other_triplets) = triplets.into_iter().partition(|t| net.adjacent(origin, t.subject));
        GrandMessage { content, key, neighbor_triplets, other_triplets }
    }

    pub fn triplets(&self) -> impl Iterator<Item = &Triplet> {
        self.neighbor_triplets.iter().chain(self.other_triplets.iter())
    }

    pub fn keys(&self) -> impl Iterator<Item = AuthKey> + '_ {
        core::iter::once(self.key).chain(self.triplets().map(|t| t.key))
    }
}

/// A certified broadcast: every recipient sees the same payload and recipient list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub origin: NodeIx,
    /// Sorted by node index.
    pub recipients: Vec<NodeIx>,
    /// Stage within the envelope's channel.
    pub stage: u32,
    /// Protocol instance (0 for single runs).
    pub channel: u8,
    pub babble: bool,
    pub payload: GrandMessage,
}

impl Envelope {
    pub fn addressed_to(&self, p: NodeIx) -> bool {
        self.recipients.binary_search(&p).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("empty recipient set")]
    EmptyRecipients,
    #[error("recipient is not a neighbor")]
    RecipientNotNeighbor,
    #[error("duplicate recipient")]
    DuplicateRecipient,
    #[error("duplicate neighbor triplet")]
    DuplicateNeighborTriplet,
    #[error("neighbor triplet about a non-neighbor")]
    MisfiledNeighborTriplet,
    #[error("non-neighbor triplet about a neighbor")]
    MisfiledOtherTriplet,
    #[error("too many triplets about a non-neighbor")]
    TooManyTriplets,
    #[error("stage out of range")]
    StageOutOfRange,
    #[error("triplet stage out of range")]
    TripletStageOutOfRange,
    #[error("triplet about an unknown node")]
    UnknownSubject,
}

/// Checks the envelope and grand-message invariants for the emitter's neighbourhood.
pub fn validate_envelope(env: &Envelope, net: &Network, cfg: &ProtocolConfig) -> Result<(), Violation> {
    if env.recipients.is_empty() {
        return Err(Violation::EmptyRecipients);
    }
    if env.recipients.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Violation::DuplicateRecipient);
    }
    if env.recipients.iter().any(|r| !net.adjacent(env.origin, *r)) {
        return Err(Violation::RecipientNotNeighbor);
    }
    if env.stage == 0 || env.stage > cfg.total_stages {
        return Err(Violation::StageOutOfRange);
    }
    let mut seen: Vec<NodeIx> = Vec::new();
    for t in &env.payload.neighbor_triplets {
        if t.subject >= net.len() {
            return Err(Violation::UnknownSubject);
        }
        if !net.adjacent(env.origin, t.subject) {
            return Err(Violation::MisfiledNeighborTriplet);
        }
        if seen.contains(&t.subject) {
            return Err(Violation::DuplicateNeighborTriplet);
        }
        seen.push(t.subject);
    }
    let mut counts: BTreeMap<NodeIx, usize> = BTreeMap::new();
    for t in &env.payload.other_triplets {
        if t.subject >= net.len() {
            return Err(Violation::UnknownSubject);
        }
        if net.adjacent(env.origin, t.subject) {
            return Err(Violation::MisfiledOtherTriplet);
        }
        let c = counts.entry(t.subject).or_default();
        *c += 1;
        if *c > cfg.triplet_bound {
            return Err(Violation::TooManyTriplets);
        }
    }
    if env.payload.triplets().any(|t| t.stage == 0 || t.stage > cfg.total_stages) {
        return Err(Violation::TripletStageOutOfRange);
    }
    Ok(())
}

/// One trace line: stage, channel, origin, sorted recipient names, content, key, triplets.
pub fn format_envelope(env: &Envelope, global_stage: u32, net: &Network, alphabet: &Alphabet) -> String {
    let mut out = String::new();
    let mut rec: Vec<&str> = env.recipients.iter().map(|r| net.name(*r)).collect();
    rec.sort_unstable();
    let _ = write!(
        out,
        "t={global_stage} ch={}:{} {} -> {} c={} k={}",
        env.channel,
        env.stage,
        net.name(env.origin),
        rec.join(","),
        alphabet.display(env.payload.content),
        env.payload.key
    );
    out.push_str(" tr=[");
    for (i, t) in env.payload.triplets().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}@{}:{}", net.name(t.subject), t.stage, t.key);
    }
    out.push(']');
    if env.babble {
        out.push_str(" babble");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::build_schedule;
    use alloc::vec;

    fn diamond() -> Network {
        Network::new(["S", "1", "2", "R"], [("S", "1"), ("S", "2"), ("1", "R"), ("2", "R")], "S", "R").unwrap()
    }

    fn info() -> KeyInfo {
        KeyInfo { issuer: 0, channel: 0, stage: 1, usage: KeyUse::Auth }
    }

    #[test]
    fn symbolic_tokens_are_unique() {
        let mut m = KeyMint::new(KeyMode::Symbolic, 7);
        let a = fresh_key(&mut m, info());
        let b = fresh_key(&mut m, info());
        assert_ne!(a, b);
        assert_eq!(m.info(a), Some(info()));
    }

    #[test]
    fn numeric_keys_are_deterministic() {
        let mut m1 = KeyMint::new(KeyMode::Numeric, 42);
        let mut m2 = KeyMint::new(KeyMode::Numeric, 42);
        assert_eq!(m1.fresh(info()), m2.fresh(info()));
        assert_eq!(m1.fresh(info()), m2.fresh(info()));
    }

    #[test]
    fn validation_catches_invariants() {
        let net = diamond();
        let cfg = build_schedule(4).unwrap();
        let (s, one, two, r) = (0, 1, 2, 3);
        let key = AuthKey::Token(0);
        let env = Envelope {
            origin: one,
            recipients: vec![s, r],
            stage: 3,
            channel: 0,
            babble: false,
            payload: GrandMessage::new(
                Content::Msg(0),
                key,
                vec![Triplet { subject: r, stage: 2, key }, Triplet { subject: two, stage: 2, key }],
                one,
                &net,
            ),
        };
        assert_eq!(validate_envelope(&env, &net, &cfg), Ok(()));

        let mut dup = env.clone();
        dup.payload.neighbor_triplets.push(Triplet { subject: r, stage: 3, key });
        assert_eq!(validate_envelope(&dup, &net, &cfg), Err(Violation::DuplicateNeighborTriplet));
        assert_eq!(Violation::DuplicateNeighborTriplet.to_string(), "duplicate neighbor triplet");

        let mut empty = env.clone();
        empty.recipients.clear();
        assert_eq!(validate_envelope(&empty, &net, &cfg), Err(Violation::EmptyRecipients));
        assert_eq!(Violation::EmptyRecipients.to_string(), "empty recipient set");

        let mut far = env.clone();
        far.recipients = vec![two];
        assert_eq!(validate_envelope(&far, &net, &cfg), Err(Violation::RecipientNotNeighbor));

        let mut many = env;
        many.payload.other_triplets = (0..7).map(|i| Triplet { subject: two, stage: 1 + i % 6, key }).collect();
        assert_eq!(validate_envelope(&many, &net, &cfg), Err(Violation::TooManyTriplets));
    }

    #[test]
    fn trace_line_format() {
        let net = diamond();
        let env = Envelope {
            origin: 0,
            recipients: vec![1, 2],
            stage: 1,
            channel: 0,
            babble: false,
            payload: GrandMessage::new(Content::Msg(1), AuthKey::Token(5), vec![], 0, &net),
        };
        let a = Alphabet::named(["alpha", "beta"]);
        assert_eq!(format_envelope(&env, 1, &net, &a), "t=1 ch=0:1 S -> 1,2 c=beta k=#5 tr=[]");
    }
}
