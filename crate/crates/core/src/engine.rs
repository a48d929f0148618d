//! Lock-step execution of protocol instances, traces, lemma checks, reliability
//! sweeps and the two necessity demonstrations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::adversary::{
    action_count, enumerate_actions, resolve, template_space, validate_schedule, ActionCaps, ActionTemplate,
    AdversaryAction, AdversaryError, AdversaryStrategy, DeviationSchedule, KnowledgeBase, NodeView, RandomAdversary,
    ScheduleViolation, Scope, TemplateAdversary,
};
use crate::messaging::{
    format_envelope, validate_envelope, Alphabet, Content, Envelope, GrandMessage, KeyInfo, KeyMint, KeyMode,
    KeyUse, Symbol, Triplet, Violation,
};
use crate::protocol::{build_schedule, CircleView, FinalDetection, NodeState, ProtocolConfig, ProtocolError, ReceiverOutput};
use crate::topology::{disjoint_paths, find_cut_vertex, two_disjoint_paths, Circle, Network, NodeIx, TopologyError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid deviation schedule: {0}")]
    Schedule(#[from] ScheduleViolation),
    #[error("message {0} is not in the alphabet")]
    UnknownMessage(Symbol),
    #[error("circle does not belong to the network")]
    Circle(#[from] TopologyError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("honest envelope violates the message space: {0}")]
    HonestInvalid(Violation),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("network has neither a circle nor a cut vertex")]
    NoStructure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub key_mode: KeyMode,
    /// Simulate babbling envelopes to and from off-circle nodes.
    pub babble: bool,
    pub final_detection: FinalDetection,
    pub record_trace: bool,
    /// First symbolic token id (keeps shadow runs disjoint from real ones).
    pub token_base: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            key_mode: KeyMode::Symbolic,
            babble: true,
            final_detection: FinalDetection::Carry,
            record_trace: true,
            token_base: 0,
        }
    }
}

impl RunOptions {
    /// Settings for sweeps: no trace recording.
    pub fn quiet() -> Self {
        RunOptions { record_trace: false, ..Self::default() }
    }
}

/// One protocol instance multiplexed on the stage timeline.
#[derive(Debug, Clone)]
pub struct Instance {
    pub view: CircleView,
    pub cfg: ProtocolConfig,
    pub channel: u8,
    /// Global stage = offset + local stage.
    pub offset: u32,
    pub message: Symbol,
    pub alphabet: Alphabet,
}

impl Instance {
    pub fn new(net: &Network, circle: Circle, channel: u8, offset: u32, message: Symbol, alphabet: Alphabet) -> Result<Self, EngineError> {
        circle.validate(net)?;
        let cfg = build_schedule(circle.nc())?;
        if !alphabet.contains(message) {
            return Err(EngineError::UnknownMessage(message));
        }
        Ok(Instance { view: CircleView::new(net, circle), cfg, channel, offset, message, alphabet })
    }

    fn local(&self, global: u32) -> Option<u32> {
        let l = global.checked_sub(self.offset)?;
        (l >= 1 && l <= self.cfg.total_stages).then_some(l)
    }

    pub fn last_stage(&self) -> u32 {
        self.offset + self.cfg.total_stages
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearnEvent {
    pub channel: u8,
    pub node: NodeIx,
    /// 0 for the first hop learning from the sender at stage 1.
    pub block: u32,
    /// Global stage at which the node learned.
    pub stage: u32,
    pub value: Symbol,
}

/// Per-instance data a trace needs for lemma checks and rendering.
#[derive(Debug, Clone)]
pub struct TraceInstance {
    pub channel: u8,
    pub sent: Symbol,
    pub circle: Circle,
    pub cfg: ProtocolConfig,
    pub offset: u32,
    pub alphabet: Alphabet,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub seed: u64,
    pub schedule: Vec<(u32, NodeIx)>,
    /// Whether the schedule has at most one deviator per stage.
    pub unilateral: bool,
    pub instances: Vec<TraceInstance>,
    /// (global stage, envelope) in delivery order; empty unless recorded.
    pub envelopes: Vec<(u32, Envelope)>,
    pub learn_events: Vec<LearnEvent>,
    pub outputs: Vec<(u8, ReceiverOutput)>,
    /// Extra free-form lines (phase messages of the mediated protocol).
    pub notes: Vec<(u32, String)>,
}

impl Trace {
    fn alphabet(&self, channel: u8) -> Option<&Alphabet> {
        self.instances.iter().find(|i| i.channel == channel).map(|i| &i.alphabet)
    }

    /// Rendered trace, one line per envelope, learn event and output.
    pub fn lines(&self, net: &Network) -> Vec<String> {
        let mut out = vec![format!("seed={}", self.seed)];
        let sched: Vec<String> = self.schedule.iter().map(|(t, n)| format!("{t}:{}", net.name(*n))).collect();
        out.push(format!("schedule=[{}]", sched.join(",")));
        let mut notes = self.notes.iter().peekable();
        let mut learns = self.learn_events.iter().peekable();
        let unit = Alphabet::Unit;
        for (t, env) in &self.envelopes {
            while let Some((s, n)) = notes.peek() {
                if s > t {
                    break;
                }
                out.push(format!("t={s} {n}"));
                notes.next();
            }
            while let Some(l) = learns.peek() {
                if l.stage >= *t {
                    break;
                }
                out.push(self.learn_line(l, net));
                learns.next();
            }
            let a = self.alphabet(env.channel).unwrap_or(&unit);
            out.push(format_envelope(env, *t, net, a));
        }
        for (s, n) in notes {
            out.push(format!("t={s} {n}"));
        }
        for l in learns {
            out.push(self.learn_line(l, net));
        }
        for (c, o) in &self.outputs {
            let a = self.alphabet(*c).unwrap_or(&unit);
            let v = match o {
                ReceiverOutput::Message(m) => a.display(Content::Msg(*m)),
                ReceiverOutput::Undecided => String::from("undecided"),
            };
            out.push(format!("output ch={c} {v}"));
        }
        out
    }

    fn learn_line(&self, l: &LearnEvent, net: &Network) -> String {
        let unit = Alphabet::Unit;
        let a = self.alphabet(l.channel).unwrap_or(&unit);
        format!(
            "t={} ch={} learn {} block={} value={}",
            l.stage,
            l.channel,
            net.name(l.node),
            l.block,
            a.display(Content::Msg(l.value))
        )
    }

    pub fn to_text(&self, net: &Network) -> String {
        let mut s = self.lines(net).join("\n");
        s.push('\n');
        s
    }
}

/// Outcome of a lemma check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    /// Precondition (unilateral schedule) not met.
    Skipped,
}

impl Verdict {
    pub fn ok(self) -> bool {
        self != Verdict::Fails
    }
}

/// Every learn event carries the message its instance's sender transmitted.
pub fn assert_lemma1(trace: &Trace) -> Verdict {
    if !trace.unilateral {
        return Verdict::Skipped;
    }
    let ok = trace.learn_events.iter().all(|l| {
        trace.instances.iter().find(|i| i.channel == l.channel).is_some_and(|i| i.sent == l.value)
    });
    if ok {
        Verdict::Holds
    } else {
        Verdict::Fails
    }
}

/// In every block, if neither frontier successor knew the message at its start and
/// the receiver had not learned, at least one frontier successor learns by its end.
pub fn assert_lemma2(trace: &Trace) -> Verdict {
    if !trace.unilateral {
        return Verdict::Skipped;
    }
    for inst in &trace.instances {
        let events: Vec<&LearnEvent> = trace.learn_events.iter().filter(|l| l.channel == inst.channel).collect();
        let r = inst.circle.receiver();
        for b in 1..=inst.cfg.num_blocks {
            let knew = |p: NodeIx| p == inst.circle.sender() || events.iter().any(|l| l.node == p && l.block < b);
            if knew(r) {
                break;
            }
            let frontier = |path: &[NodeIx]| path.iter().copied().find(|p| !knew(*p)).expect("receiver ends the path");
            let (fl, fr) = (frontier(inst.circle.left()), frontier(inst.circle.right()));
            let learned = events.iter().any(|l| l.block == b && (l.node == fl || l.node == fr));
            if !learned {
                return Verdict::Fails;
            }
        }
    }
    Verdict::Holds
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceReport {
    pub channel: u8,
    pub sent: Symbol,
    pub decoded: ReceiverOutput,
    /// Global stage at which the receiver learned.
    pub receiver_learn_stage: Option<u32>,
    /// Protocol-pair envelopes emitted by circle nodes.
    pub broadcast_count: usize,
    pub reboots: usize,
}

#[derive(Debug, Clone)]
pub struct MultiRun {
    pub trace: Trace,
    pub reports: Vec<InstanceReport>,
    /// Every token in a crafted adversary envelope was known or fresh.
    pub knowledge_sound: bool,
    /// Raw (scripted) adversary envelopes, not subject to the knowledge check.
    pub raw_envelopes: usize,
    pub last_stage: u32,
}

/// Summary of one single-instance run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub sent: Symbol,
    pub decoded: ReceiverOutput,
    pub lemma1: Verdict,
    pub lemma2: Verdict,
    pub receiver_learn_stage: Option<u32>,
    pub broadcast_count: usize,
    pub total_stages: u32,
    pub knowledge_sound: bool,
    pub reboots: usize,
}

impl RunReport {
    pub fn lemma1_ok(&self) -> bool {
        self.lemma1.ok()
    }

    pub fn lemma2_ok(&self) -> bool {
        self.lemma2.ok()
    }

    /// Correct decode, both lemmas, sound adversary.
    pub fn passed(&self) -> bool {
        self.decoded == ReceiverOutput::Message(self.sent) && self.lemma1_ok() && self.lemma2_ok() && self.knowledge_sound
    }
}

/// Runs one protocol instance from stage 1 to T.
#[allow(clippy::too_many_arguments)]
pub fn run_protocol(
    net: &Network,
    circle: &Circle,
    cfg: &ProtocolConfig,
    alphabet: &Alphabet,
    adversary: &mut dyn AdversaryStrategy,
    m: Symbol,
    seed: u64,
    opts: &RunOptions,
) -> Result<(Trace, RunReport), EngineError> {
    validate_schedule(adversary.schedule(), net, cfg.total_stages)?;
    let mut inst = Instance::new(net, circle.clone(), 0, 0, m, alphabet.clone())?;
    inst.cfg = cfg.with_final_detection(opts.final_detection);
    let mut mint = KeyMint::with_token_base(opts.key_mode, seed, opts.token_base)
        .track_numeric(!adversary.schedule().is_empty());
    let run = run_instances(net, &[inst], adversary, opts, &mut mint, seed)?;
    let r = &run.reports[0];
    let report = RunReport {
        sent: m,
        decoded: r.decoded,
        lemma1: assert_lemma1(&run.trace),
        lemma2: assert_lemma2(&run.trace),
        receiver_learn_stage: r.receiver_learn_stage,
        broadcast_count: r.broadcast_count,
        total_stages: cfg.total_stages,
        knowledge_sound: run.knowledge_sound,
        reboots: r.reboots,
    };
    Ok((run.trace, report))
}

fn babble_envelope(origin: NodeIx, recipients: Vec<NodeIx>, local: u32, inst: &Instance, net: &Network, mint: &mut KeyMint) -> Envelope {
    let info = KeyInfo { issuer: origin, channel: inst.channel, stage: local, usage: KeyUse::Babble };
    let r = mint.rng().next_u64();
    let content = match inst.alphabet.symbols() {
        Some(s) => match (r as usize) % (s.len() + 1) {
            0 => Content::Null,
            i => Content::Msg(s[i - 1]),
        },
        None => Content::Msg(r),
    };
    let key = mint.fresh(info);
    let members = inst.view.circle.members();
    let subject = members[(r >> 32) as usize % members.len()];
    let stage = 1 + ((r >> 16) as u32) % local;
    let triplets = if subject != origin { vec![Triplet { subject, stage, key: mint.fresh(info) }] } else { Vec::new() };
    Envelope {
        origin,
        recipients,
        stage: local,
        channel: inst.channel,
        babble: true,
        payload: GrandMessage::new(content, key, triplets, origin, net),
    }
}

fn knowledge_sound(env: &Envelope, node: NodeIx, local: u32, kb: Option<&KnowledgeBase>, honest: Option<&Envelope>, mint: &KeyMint) -> bool {
    env.payload.keys().all(|k| {
        kb.is_some_and(|kb| kb.contains(k))
            || honest.is_some_and(|h| h.payload.keys().any(|x| x == k))
            || mint
                .info(k)
                .is_some_and(|i| i.issuer == node && i.stage == local && i.channel == env.channel)
    })
}

/// Executes several instances lock-step on a shared key source. The schedule is in
/// global stages; a deviator acts in every instance active at that stage.
pub fn run_instances(
    net: &Network,
    instances: &[Instance],
    adversary: &mut dyn AdversaryStrategy,
    opts: &RunOptions,
    mint: &mut KeyMint,
    seed: u64,
) -> Result<MultiRun, EngineError> {
    let schedule: DeviationSchedule = adversary.schedule().clone();
    let tracked: BTreeSet<NodeIx> = schedule.entries().iter().map(|e| e.1).collect();
    let mut kbs: BTreeMap<(NodeIx, u8), KnowledgeBase> = BTreeMap::new();
    let mut states: Vec<Vec<Option<NodeState>>> = Vec::with_capacity(instances.len());
    let mut members: Vec<Vec<NodeIx>> = Vec::with_capacity(instances.len());
    let mut off_nbrs: Vec<Vec<(NodeIx, Vec<NodeIx>)>> = Vec::with_capacity(instances.len());
    for inst in instances {
        let mut ms = inst.view.circle.members();
        ms.sort_unstable();
        let mut row = vec![None; net.len()];
        for &p in &ms {
            row[p] = NodeState::new(p, &inst.view, &inst.cfg, inst.channel, Some(inst.message));
        }
        let mut babblers = Vec::new();
        for p in 0..net.len() {
            let on = inst.view.role(p).is_some();
            let targets: Vec<NodeIx> = if on {
                net.neighbors(p).iter().copied().filter(|q| inst.view.role(*q).is_none()).collect()
            } else {
                net.neighbors(p).to_vec()
            };
            if !targets.is_empty() {
                babblers.push((p, targets));
            }
        }
        states.push(row);
        members.push(ms);
        off_nbrs.push(babblers);
    }
    let first = instances.iter().map(|i| i.offset + 1).min().unwrap_or(1);
    let last = instances.iter().map(|i| i.last_stage()).max().unwrap_or(0);
    let mut trace = Trace {
        seed,
        schedule: schedule.entries().to_vec(),
        unilateral: schedule.is_unilateral(),
        instances: instances
            .iter()
            .map(|i| TraceInstance {
                channel: i.channel,
                sent: i.message,
                circle: i.view.circle.clone(),
                cfg: i.cfg,
                offset: i.offset,
                alphabet: i.alphabet.clone(),
            })
            .collect(),
        ..Trace::default()
    };
    let mut broadcasts = vec![0usize; instances.len()];
    let mut sound = true;
    let mut raw = 0usize;

    for t in first..=last {
        let deviators: Vec<NodeIx> = schedule.deviators(t).collect();
        let mut outgoing: Vec<Envelope> = Vec::new();
        for (ii, inst) in instances.iter().enumerate() {
            let Some(local) = inst.local(t) else { continue };
            for &p in &members[ii] {
                let state = states[ii][p].as_mut().expect("member state");
                let em = state.honest_emit(local, &inst.cfg, net, mint)?;
                validate_envelope(&em.envelope, net, &inst.cfg).map_err(EngineError::HonestInvalid)?;
                if deviators.contains(&p) {
                    let kb = kbs.get(&(p, inst.channel));
                    let empty = KnowledgeBase::new();
                    let view = NodeView {
                        node: p,
                        stage: local,
                        global_stage: t,
                        channel: inst.channel,
                        role: inst.view.role(p),
                        honest: Some(&em.envelope),
                        kb: kb.unwrap_or(&empty),
                        net,
                        cfg: &inst.cfg,
                        alphabet: &inst.alphabet,
                        members: &members[ii],
                    };
                    let action = adversary.act(&view, mint);
                    let envs = resolve(&action, &view, mint)?;
                    match action {
                        AdversaryAction::Raw(_) => raw += envs.len(),
                        AdversaryAction::Crafted(_) => {
                            for e in &envs {
                                sound &= knowledge_sound(e, p, local, kb, Some(&em.envelope), mint);
                            }
                        }
                    }
                    let links = inst.view.role(p).map(|r| r.links).unwrap_or([p; 2]);
                    let sent = envs
                        .iter()
                        .find(|e| e.recipients.iter().any(|r| links.contains(r)))
                        .map(|e| e.payload.key);
                    let state = states[ii][p].as_mut().expect("member state");
                    state.record_sent(local, sent);
                    outgoing.extend(envs);
                } else {
                    state.commit(&em);
                    state.record_sent(local, Some(em.envelope.payload.key));
                    outgoing.push(em.envelope);
                }
            }
            for &d in &deviators {
                if inst.view.role(d).is_some() {
                    continue;
                }
                let kb = kbs.get(&(d, inst.channel));
                let empty = KnowledgeBase::new();
                let view = NodeView {
                    node: d,
                    stage: local,
                    global_stage: t,
                    channel: inst.channel,
                    role: None,
                    honest: None,
                    kb: kb.unwrap_or(&empty),
                    net,
                    cfg: &inst.cfg,
                    alphabet: &inst.alphabet,
                    members: &members[ii],
                };
                let action = adversary.act(&view, mint);
                let envs = resolve(&action, &view, mint)?;
                if let AdversaryAction::Crafted(_) = action {
                    for e in &envs {
                        sound &= knowledge_sound(e, d, local, kb, None, mint);
                    }
                } else {
                    raw += envs.len();
                }
                outgoing.extend(envs);
            }
            if opts.babble {
                for (p, targets) in &off_nbrs[ii] {
                    if deviators.contains(p) {
                        continue;
                    }
                    let env = babble_envelope(*p, targets.clone(), local, inst, net, mint);
                    outgoing.push(env);
                    if inst.view.role(*p).is_none() && targets.len() > 1 {
                        let pick = targets[(mint.rng().next_u32() as usize) % targets.len()];
                        let env = babble_envelope(*p, vec![pick], local, inst, net, mint);
                        outgoing.push(env);
                    }
                }
            }
        }

        for env in &outgoing {
            let Some(ii) = instances.iter().position(|i| i.channel == env.channel) else { continue };
            let inst = &instances[ii];
            if inst.view.is_protocol(env) {
                broadcasts[ii] += 1;
            }
            if tracked.is_empty() {
                continue;
            }
            let protocol = inst.view.is_protocol(env);
            for &r in &env.recipients {
                if tracked.contains(&r) {
                    kbs.entry((r, env.channel)).or_default().observe(env, protocol);
                }
            }
            if tracked.contains(&env.origin) {
                let kb = kbs.entry((env.origin, env.channel)).or_default();
                for k in env.payload.keys() {
                    kb.add_token(k);
                }
            }
        }

        for (ii, inst) in instances.iter().enumerate() {
            let Some(local) = inst.local(t) else { continue };
            for &p in &members[ii] {
                let inbox: Vec<&Envelope> =
                    outgoing.iter().filter(|e| e.channel == inst.channel && e.addressed_to(p)).collect();
                let state = states[ii][p].as_mut().expect("member state");
                let before = state.learned_at_block();
                state.absorb_inbox(&inbox, local, &inst.cfg, &inst.view);
                if before.is_none() && state.learned_at_block() == Some(0) {
                    let value = state.knows().expect("learned");
                    trace.learn_events.push(LearnEvent { channel: inst.channel, node: p, block: 0, stage: t, value });
                }
            }
            if inst.cfg.is_block_end(local) {
                let block = inst.cfg.block_of(local).expect("in block");
                for &p in &members[ii] {
                    let state = states[ii][p].as_mut().expect("member state");
                    if state.end_of_block_decode(block, &inst.cfg).is_some() {
                        // One event per validated orientation (the receiver has two).
                        let mut vals: Vec<Symbol> =
                            state.hits().iter().flatten().filter(|h| h.block == block).map(|h| h.value).collect();
                        vals.dedup();
                        for value in vals {
                            trace.learn_events.push(LearnEvent { channel: inst.channel, node: p, block, stage: t, value });
                        }
                    }
                }
            }
        }

        if opts.record_trace {
            trace.envelopes.extend(outgoing.into_iter().map(|e| (t, e)));
        }
    }

    let mut reports = Vec::with_capacity(instances.len());
    for (ii, inst) in instances.iter().enumerate() {
        let r = inst.view.circle.receiver();
        let rs = states[ii][r].as_ref().expect("receiver state");
        let decoded = rs.receiver_output();
        trace.outputs.push((inst.channel, decoded));
        let receiver_learn_stage = trace
            .learn_events
            .iter()
            .find(|l| l.channel == inst.channel && l.node == r)
            .map(|l| l.stage);
        reports.push(InstanceReport {
            channel: inst.channel,
            sent: inst.message,
            decoded,
            receiver_learn_stage,
            broadcast_count: broadcasts[ii],
            reboots: states[ii].iter().flatten().filter(|s| s.rebooted()).count(),
        });
    }
    Ok(MultiRun { trace, reports, knowledge_sound: sound, raw_envelopes: raw, last_stage: last })
}

/// Valid deviators at `stage` for `scope` (without the "no deviation" option).
pub fn allowed_deviators(net: &Network, scope: Scope, stage: u32) -> Vec<NodeIx> {
    let (s, r) = (net.sender(), net.receiver());
    net.nodes_by_name()
        .into_iter()
        .filter(|&p| match scope {
            Scope::Sigma => p != s && p != r,
            Scope::SigmaStar | Scope::Unrestricted => p != s || stage >= 2,
        })
        .collect()
}

/// Every unilateral schedule over stages 1..=total, in mixed-radix order.
pub fn all_schedules(net: &Network, scope: Scope, total: u32) -> Vec<DeviationSchedule> {
    let options: Vec<Vec<Option<NodeIx>>> = (1..=total)
        .map(|t| {
            let mut v = vec![None];
            v.extend(allowed_deviators(net, scope, t).into_iter().map(Some));
            v
        })
        .collect();
    let count: usize = options.iter().map(|o| o.len()).product();
    let mut out = Vec::with_capacity(count);
    for mut i in 0..count {
        let mut entries = Vec::new();
        for (si, opts) in options.iter().enumerate().rev() {
            if let Some(p) = opts[i % opts.len()] {
                entries.push((si as u32 + 1, p));
            }
            i /= opts.len();
        }
        out.push(DeviationSchedule::from_entries(scope, entries));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Exhaustive,
    Randomized { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SweepError {
    #[error("exhaustive sweep refused: about {estimate} runs exceeds the limit {limit}")]
    TooLarge { estimate: u128, limit: u128 },
    #[error("exhaustive sweep needs symbolic keys, nC = 4 and at most 3 messages")]
    NotDeskScale,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Result of one sweep case.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub runs: u64,
    pub failures: u64,
    pub lemma1_checked: u64,
    pub lemma1_failures: u64,
    pub lemma2_checked: u64,
    pub lemma2_failures: u64,
    pub unsound: u64,
    /// Descriptions of the first failing cases.
    pub examples: Vec<String>,
}

const MAX_EXAMPLES: usize = 10;

impl SweepSummary {
    pub fn record(&mut self, r: &RunReport, describe: impl FnOnce() -> String) {
        self.runs += 1;
        for (v, checked, failed) in [
            (r.lemma1, &mut self.lemma1_checked, &mut self.lemma1_failures),
            (r.lemma2, &mut self.lemma2_checked, &mut self.lemma2_failures),
        ] {
            if v != Verdict::Skipped {
                *checked += 1;
            }
            if v == Verdict::Fails {
                *failed += 1;
            }
        }
        if !r.knowledge_sound {
            self.unsound += 1;
        }
        if !r.passed() {
            self.failures += 1;
            if self.examples.len() < MAX_EXAMPLES {
                self.examples.push(describe());
            }
        }
    }

    /// A failing run that is expected to fail (necessity demonstrations).
    pub fn record_outcome(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.runs += 1;
        if !ok {
            self.failures += 1;
            if self.examples.len() < MAX_EXAMPLES {
                self.examples.push(describe());
            }
        }
    }

    pub fn merge(mut self, other: SweepSummary) -> SweepSummary {
        self.runs += other.runs;
        self.failures += other.failures;
        self.lemma1_checked += other.lemma1_checked;
        self.lemma1_failures += other.lemma1_failures;
        self.lemma2_checked += other.lemma2_checked;
        self.lemma2_failures += other.lemma2_failures;
        self.unsound += other.unsound;
        for e in other.examples {
            if self.examples.len() < MAX_EXAMPLES {
                self.examples.push(e);
            }
        }
        self
    }
}

/// Picks a fixed action from the enumerated product at the single deviation.
struct EnumeratedAt {
    schedule: DeviationSchedule,
    caps: ActionCaps,
    index: Option<usize>,
    count: Option<usize>,
}

impl AdversaryStrategy for EnumeratedAt {
    fn schedule(&self) -> &DeviationSchedule {
        &self.schedule
    }

    fn act(&mut self, view: &NodeView<'_>, mint: &KeyMint) -> AdversaryAction {
        match self.index {
            None => {
                self.count = action_count(view, &self.caps, mint).ok();
                AdversaryAction::honest()
            }
            Some(i) => enumerate_actions(view, &self.caps, mint)
                .ok()
                .and_then(|mut v| (i < v.len()).then(|| v.swap_remove(i)))
                .unwrap_or_else(AdversaryAction::honest),
        }
    }
}

/// Sweep over a network with a circle.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub net: Network,
    pub circle: Circle,
    pub cfg: ProtocolConfig,
    pub alphabet: Alphabet,
    pub scope: Scope,
    pub opts: RunOptions,
    pub kind: PlanKind,
}

#[derive(Debug, Clone)]
pub enum PlanKind {
    /// Every unilateral schedule × every template × every message, then every
    /// single-deviation schedule × the full action product, then every schedule ×
    /// `random_per_schedule` per-stage random adversaries.
    Exhaustive {
        schedules: Vec<DeviationSchedule>,
        templates: Vec<ActionTemplate>,
        /// Cumulative case counts of the template part, per schedule.
        prefix: Vec<u64>,
        singles: Vec<(u32, NodeIx)>,
        random_per_schedule: usize,
        caps: ActionCaps,
        seed: u64,
    },
    Randomized { samples: usize, seed: u64, caps: ActionCaps },
}

/// Default bound on exhaustive sweep size.
pub const EXHAUSTIVE_LIMIT: u128 = 50_000_000;

fn template_relevant(t: &ActionTemplate, idx: usize, s: &DeviationSchedule, net: &Network) -> bool {
    if s.is_empty() {
        return idx == 0;
    }
    let two_slots = s.entries().iter().any(|(_, p)| *p == net.sender() || *p == net.receiver());
    two_slots || !t.uses_second_slot()
}

impl SweepPlan {
    pub fn new(
        net: &Network,
        alphabet: &Alphabet,
        scope: Scope,
        mode: SweepMode,
        opts: RunOptions,
    ) -> Result<SweepPlan, SweepError> {
        let circle = two_disjoint_paths(net).ok_or(SweepError::Engine(EngineError::NoStructure))?;
        let cfg = build_schedule(circle.nc()).map_err(EngineError::from)?.with_final_detection(opts.final_detection);
        let kind = match mode {
            SweepMode::Exhaustive => {
                let m = alphabet.symbols().map_or(0, |s| s.len());
                if opts.key_mode != KeyMode::Symbolic || circle.nc() != 4 || m == 0 || m > 3 {
                    return Err(SweepError::NotDeskScale);
                }
                let per_stage: u128 = (1..=cfg.total_stages)
                    .map(|t| 1 + allowed_deviators(net, scope, t).len() as u128)
                    .product();
                let templates = template_space(alphabet);
                let estimate = per_stage * templates.len() as u128 * m as u128;
                if estimate > EXHAUSTIVE_LIMIT {
                    return Err(SweepError::TooLarge { estimate, limit: EXHAUSTIVE_LIMIT });
                }
                let schedules = all_schedules(net, scope, cfg.total_stages);
                let mut prefix = Vec::with_capacity(schedules.len() + 1);
                let mut acc = 0u64;
                prefix.push(0);
                for s in &schedules {
                    let n = templates
                        .iter()
                        .enumerate()
                        .filter(|(i, t)| template_relevant(t, *i, s, net))
                        .count() as u64;
                    acc += n * m as u64;
                    prefix.push(acc);
                }
                let singles = (1..=cfg.total_stages)
                    .flat_map(|t| allowed_deviators(net, scope, t).into_iter().map(move |p| (t, p)))
                    .collect();
                PlanKind::Exhaustive {
                    schedules,
                    templates,
                    prefix,
                    singles,
                    random_per_schedule: 2,
                    caps: ActionCaps::default(),
                    seed: 0x5eed,
                }
            }
            SweepMode::Randomized { samples, seed } => {
                if alphabet.symbols().is_none() {
                    return Err(SweepError::NotDeskScale);
                }
                PlanKind::Randomized { samples, seed, caps: ActionCaps::default() }
            }
        };
        Ok(SweepPlan { net: net.clone(), circle, cfg, alphabet: alphabet.clone(), scope, opts, kind })
    }

    fn symbols(&self) -> Vec<Symbol> {
        self.alphabet.symbols().unwrap_or_default()
    }

    /// Number of independently runnable cases.
    pub fn len(&self) -> usize {
        match &self.kind {
            PlanKind::Exhaustive { prefix, singles, schedules, random_per_schedule, .. } => {
                *prefix.last().unwrap_or(&0) as usize
                    + singles.len() * self.symbols().len()
                    + schedules.len() * self.symbols().len() * random_per_schedule
            }
            PlanKind::Randomized { samples, .. } => *samples,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run_one(&self, adv: &mut dyn AdversaryStrategy, m: Symbol, seed: u64) -> Result<RunReport, EngineError> {
        run_protocol(&self.net, &self.circle, &self.cfg, &self.alphabet, adv, m, seed, &self.opts).map(|x| x.1)
    }

    fn describe(&self, what: &str, s: &DeviationSchedule, m: Symbol, r: &RunReport) -> String {
        let sched: Vec<String> = s.entries().iter().map(|(t, p)| format!("{t}:{}", self.net.name(*p))).collect();
        format!(
            "{what} schedule=[{}] m={} decoded={:?} lemma1={:?} lemma2={:?} sound={}",
            sched.join(","),
            self.alphabet.display(Content::Msg(m)),
            r.decoded,
            r.lemma1,
            r.lemma2,
            r.knowledge_sound
        )
    }

    /// Runs case `i` (one or more protocol runs) into a summary.
    pub fn run_case(&self, i: usize) -> Result<SweepSummary, EngineError> {
        let ms = self.symbols();
        let mut out = SweepSummary::default();
        match &self.kind {
            PlanKind::Exhaustive { schedules, templates, prefix, singles, random_per_schedule, caps, seed } => {
                let total_templates = *prefix.last().unwrap_or(&0) as usize;
                if i < total_templates {
                    let si = prefix.partition_point(|p| *p as usize <= i) - 1;
                    let s = &schedules[si];
                    let k = i - prefix[si] as usize;
                    let (ti, mi) = (k / ms.len(), k % ms.len());
                    let (tix, template) = templates
                        .iter()
                        .enumerate()
                        .filter(|(j, t)| template_relevant(t, *j, s, &self.net))
                        .nth(ti)
                        .expect("template index");
                    let mut adv = TemplateAdversary { schedule: s.clone(), template: template.clone() };
                    let r = self.run_one(&mut adv, ms[mi], *seed)?;
                    out.record(&r, || self.describe(&format!("template={tix}"), s, ms[mi], &r));
                    return Ok(out);
                }
                let j = i - total_templates;
                if j < singles.len() * ms.len() {
                    let ((t, p), m) = (singles[j / ms.len()], ms[j % ms.len()]);
                    let schedule = DeviationSchedule::from_entries(self.scope, vec![(t, p)]);
                    let mut probe = EnumeratedAt { schedule: schedule.clone(), caps: caps.clone(), index: None, count: None };
                    self.run_one(&mut probe, m, *seed)?;
                    for a in 0..probe.count.unwrap_or(0) {
                        let mut adv =
                            EnumeratedAt { schedule: schedule.clone(), caps: caps.clone(), index: Some(a), count: None };
                        let r = self.run_one(&mut adv, m, *seed)?;
                        out.record(&r, || self.describe(&format!("action={a}"), &schedule, m, &r));
                    }
                    return Ok(out);
                }
                let k = j - singles.len() * ms.len();
                let per = ms.len() * random_per_schedule;
                let (si, rest) = (k / per, k % per);
                let (m, rep) = (ms[rest % ms.len()], rest / ms.len());
                let s = &schedules[si];
                let rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64) << 8) ^ rep as u64);
                let mut adv = RandomAdversary { schedule: s.clone(), caps: caps.clone(), rng };
                let r = self.run_one(&mut adv, m, *seed + k as u64)?;
                out.record(&r, || self.describe(&format!("random case={k}"), s, m, &r));
            }
            PlanKind::Randomized { seed, caps, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ i as u64);
                let m = ms[(rng.next_u32() as usize) % ms.len()];
                let (schedule, template) = random_schedule(&self.net, self.scope, &self.cfg, &self.alphabet, &mut rng);
                let run_seed = rng.next_u64();
                let r = match template {
                    Some(t) => {
                        let mut adv = TemplateAdversary { schedule: schedule.clone(), template: t };
                        self.run_one(&mut adv, m, run_seed)?
                    }
                    None => {
                        let inner = ChaCha8Rng::seed_from_u64(rng.next_u64());
                        let mut adv = RandomAdversary { schedule: schedule.clone(), caps: caps.clone(), rng: inner };
                        self.run_one(&mut adv, m, run_seed)?
                    }
                };
                out.record(&r, || self.describe(&format!("sample={i}"), &schedule, m, &r));
            }
        }
        Ok(out)
    }
}

/// A random unilateral schedule plus, half of the time, a persistent template policy
/// (otherwise a fresh random action at each deviation).
fn random_schedule(
    net: &Network,
    scope: Scope,
    cfg: &ProtocolConfig,
    alphabet: &Alphabet,
    rng: &mut ChaCha8Rng,
) -> (DeviationSchedule, Option<ActionTemplate>) {
    let persistent = rng.next_u32() % 2 == 0;
    let mut entries = Vec::new();
    if persistent {
        let pool = allowed_deviators(net, scope, 2);
        let p = pool[(rng.next_u32() as usize) % pool.len()];
        let density = 1 + rng.next_u32() % 4;
        for t in 1..=cfg.total_stages {
            if allowed_deviators(net, scope, t).contains(&p) && rng.next_u32() % 4 < density {
                entries.push((t, p));
            }
        }
    } else {
        let density = 1 + rng.next_u32() % 4;
        for t in 1..=cfg.total_stages {
            if rng.next_u32() % 4 < density {
                let pool = allowed_deviators(net, scope, t);
                entries.push((t, pool[(rng.next_u32() as usize) % pool.len()]));
            }
        }
    }
    let schedule = DeviationSchedule::from_entries(scope, entries);
    let template = (rng.next_u32() % 2 == 0).then(|| {
        let space = template_space(alphabet);
        space[(rng.next_u32() as usize) % space.len()].clone()
    });
    (schedule, template)
}

/// Sequential sweep. On a network with a cut vertex instead of a circle, runs the
/// cut-simulation family, whose failures are expected.
pub fn sweep_reliability(
    net: &Network,
    alphabet: &Alphabet,
    scope: Scope,
    mode: SweepMode,
    opts: RunOptions,
) -> Result<SweepSummary, SweepError> {
    if two_disjoint_paths(net).is_none() {
        return Ok(cut_family(net, alphabet, opts.key_mode)?);
    }
    let plan = SweepPlan::new(net, alphabet, scope, mode, opts)?;
    let mut out = SweepSummary::default();
    for i in 0..plan.len() {
        out = out.merge(plan.run_case(i)?);
    }
    Ok(out)
}

/// Cut simulations for every ordered pair (m, γ) of distinct messages.
pub fn cut_family(net: &Network, alphabet: &Alphabet, key_mode: KeyMode) -> Result<SweepSummary, EngineError> {
    let ms = alphabet.symbols().unwrap_or_default();
    let mut out = SweepSummary::default();
    for &m in &ms {
        for &g in &ms {
            if g == m {
                continue;
            }
            let demo = cut_simulation_demo(net, alphabet, m, g, 7, key_mode)?;
            out.record_outcome(demo.decoded == ReceiverOutput::Message(m), || {
                format!(
                    "cut {} simulates {} while {} was sent: decoded {:?}",
                    net.name(demo.cut),
                    alphabet.display(Content::Msg(g)),
                    alphabet.display(Content::Msg(m)),
                    demo.decoded
                )
            });
        }
    }
    Ok(out)
}

/// The cut node replays, towards the receiver, an honest run in which `simulated`
/// was sent.
#[derive(Debug, Clone)]
pub struct CutDemo {
    pub cut: NodeIx,
    pub sent: Symbol,
    pub simulated: Symbol,
    pub decoded: ReceiverOutput,
    /// The network the protocol was forced onto: S, c#L, c#R, R.
    pub virtual_net: Network,
    pub trace: Trace,
}

struct ShadowReplay {
    schedule: DeviationSchedule,
    envelopes: BTreeMap<(u32, NodeIx), Vec<Envelope>>,
}

impl AdversaryStrategy for ShadowReplay {
    fn schedule(&self) -> &DeviationSchedule {
        &self.schedule
    }

    fn act(&mut self, view: &NodeView<'_>, _: &KeyMint) -> AdversaryAction {
        AdversaryAction::Raw(self.envelopes.get(&(view.global_stage, view.node)).cloned().unwrap_or_default())
    }
}

/// On a network whose S-R paths all cross one cut vertex, the protocol must run on a
/// circle whose two interior halves are the same player. That player controls both
/// and shows the receiver an honest run for `simulated`.
pub fn cut_simulation_demo(
    net: &Network,
    alphabet: &Alphabet,
    sent: Symbol,
    simulated: Symbol,
    seed: u64,
    key_mode: KeyMode,
) -> Result<CutDemo, EngineError> {
    let cut = find_cut_vertex(net).ok_or(EngineError::NoStructure)?;
    let (s, r, c) = (net.name(net.sender()), net.name(net.receiver()), net.name(cut));
    let (cl, cr) = (format!("{c}#L"), format!("{c}#R"));
    let vnet = Network::new(
        [s, cl.as_str(), cr.as_str(), r],
        [(s, cl.as_str()), (s, cr.as_str()), (cl.as_str(), r), (cr.as_str(), r)],
        s,
        r,
    )?;
    let circle = two_disjoint_paths(&vnet).expect("virtual diamond");
    let cfg = build_schedule(circle.nc())?;
    let (vl, vr) = (vnet.ix(&cl).expect("node"), vnet.ix(&cr).expect("node"));
    let shadow_opts = RunOptions { key_mode, token_base: 1 << 40, ..RunOptions::default() };
    let mut honest = crate::adversary::Honest::new();
    let (shadow, _) = run_protocol(&vnet, &circle, &cfg, alphabet, &mut honest, simulated, seed ^ 0xabcd, &shadow_opts)?;
    let mut envelopes: BTreeMap<(u32, NodeIx), Vec<Envelope>> = BTreeMap::new();
    for (t, e) in &shadow.envelopes {
        if e.origin == vl || e.origin == vr {
            envelopes.entry((*t, e.origin)).or_default().push(e.clone());
        }
    }
    let entries = (1..=cfg.total_stages).flat_map(|t| [(t, vl), (t, vr)]).collect();
    let mut adv = ShadowReplay { schedule: DeviationSchedule::from_entries(Scope::Unrestricted, entries), envelopes };
    let opts = RunOptions { key_mode, ..RunOptions::default() };
    let (trace, report) = run_protocol(&vnet, &circle, &cfg, alphabet, &mut adv, sent, seed, &opts)?;
    Ok(CutDemo { cut, sent, simulated, decoded: report.decoded, virtual_net: vnet, trace })
}

/// One run of the naive protocol: every first hop relays the sender's message
/// along its own path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaiveRun {
    pub lines: Vec<String>,
    /// Contents the receiver got, ordered by path.
    pub view: Vec<Content>,
    /// The receiver's received lines.
    pub receiver_lines: Vec<String>,
}

/// Runs the forward-along-disjoint-paths protocol. Stage 0 is the sender's broadcast,
/// stage k the relay by every node at position k of its path. `lies` replaces a
/// node's relayed content at a stage.
pub fn naive_forwarding(
    net: &Network,
    paths: &[Vec<NodeIx>],
    alphabet: &Alphabet,
    m: Symbol,
    lies: &[(u32, NodeIx, Content)],
) -> NaiveRun {
    let mut holding: Vec<Content> = vec![Content::Msg(m); paths.len()];
    let mut lines = Vec::new();
    let mut receiver_lines = Vec::new();
    let firsts: Vec<&str> = paths.iter().map(|p| net.name(p[1])).collect();
    lines.push(format!("t=0 {} -> {} c={}", net.name(paths[0][0]), firsts.join(","), alphabet.display(Content::Msg(m))));
    let depth = paths.iter().map(|p| p.len()).max().unwrap_or(0);
    for k in 1..depth.saturating_sub(1) {
        for (pi, path) in paths.iter().enumerate() {
            if k + 1 >= path.len() {
                continue;
            }
            let (p, next) = (path[k], path[k + 1]);
            if let Some((_, _, c)) = lies.iter().find(|(s, q, _)| *s == k as u32 && *q == p) {
                holding[pi] = *c;
            }
            let line = format!("t={k} {} -> {} c={}", net.name(p), net.name(next), alphabet.display(holding[pi]));
            if next == net.receiver() {
                receiver_lines.push(line.clone());
            }
            lines.push(line);
        }
    }
    NaiveRun { lines, view: holding, receiver_lines }
}

/// Two naive runs with different true messages whose receiver views coincide.
#[derive(Debug, Clone)]
pub struct NaiveExhibit {
    pub paths: Vec<Vec<NodeIx>>,
    pub first: NaiveRun,
    pub second: NaiveRun,
    pub ambiguous: bool,
}

/// Needs three vertex-disjoint paths with at least two interior nodes on the second
/// one and an alphabet whose first three symbols play m, m', m''.
pub fn naive_majority_demo(net: &Network, alphabet: &Alphabet) -> Option<NaiveExhibit> {
    let paths = disjoint_paths(net, 3)?;
    if paths[1].len() < 4 {
        return None;
    }
    let syms = alphabet.symbols()?;
    if syms.len() < 3 {
        return None;
    }
    let (m, m1, m2) = (syms[0], syms[1], syms[2]);
    // Path 1 first hop lies at stage 1, path 2 second hop at stage 2.
    let a = [(1, paths[0][1], Content::Msg(m1)), (2, paths[1][2], Content::Msg(m2))];
    let first = naive_forwarding(net, &paths, alphabet, m, &a);
    // True message m': path 3 first hop reports m, same path 2 node reports m''.
    let b = [(1, paths[2][1], Content::Msg(m)), (2, paths[1][2], Content::Msg(m2))];
    let second = naive_forwarding(net, &paths, alphabet, m1, &b);
    let ambiguous = first.view == second.view && first.receiver_lines == second.receiver_lines;
    Some(NaiveExhibit { paths, first, second, ambiguous })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{scripted_adversary, Honest};

    fn diamond() -> Network {
        Network::new(["S", "1", "2", "R"], [("S", "1"), ("S", "2"), ("1", "R"), ("2", "R")], "S", "R").unwrap()
    }

    fn ab() -> Alphabet {
        Alphabet::named(["alpha", "beta"])
    }

    #[test]
    fn honest_diamond_decodes_at_stage_six() {
        let net = diamond();
        let c = two_disjoint_paths(&net).unwrap();
        let cfg = build_schedule(4).unwrap();
        let (trace, r) = run_protocol(&net, &c, &cfg, &ab(), &mut Honest::new(), 0, 1, &RunOptions::default()).unwrap();
        assert_eq!(r.decoded, ReceiverOutput::Message(0));
        assert_eq!(r.receiver_learn_stage, Some(6));
        assert_eq!(r.broadcast_count, 24);
        assert_eq!(assert_lemma1(&trace), Verdict::Holds);
        assert_eq!(assert_lemma2(&trace), Verdict::Holds);
        assert!(r.passed());
    }

    #[test]
    fn repeated_false_content_is_blocked() {
        let net = diamond();
        let c = two_disjoint_paths(&net).unwrap();
        let cfg = build_schedule(4).unwrap();
        let one = net.ix("1").unwrap();
        let beta = AdversaryAction::content(Content::Msg(1));
        let script = (2..=4).map(|t| (t, one, beta.clone())).collect();
        let mut adv = scripted_adversary(script, Scope::Sigma, &net, cfg.total_stages).unwrap();
        let (_, r) = run_protocol(&net, &c, &cfg, &ab(), &mut adv, 0, 3, &RunOptions::default()).unwrap();
        assert_eq!(r.decoded, ReceiverOutput::Message(0));
        assert!(r.passed());
    }

    #[test]
    fn schedule_enumeration_counts() {
        let net = diamond();
        assert_eq!(all_schedules(&net, Scope::SigmaStar, 6).len(), 12500);
        assert_eq!(all_schedules(&net, Scope::Sigma, 6).len(), 729);
    }

    #[test]
    fn non_unilateral_trace_skips_lemmas() {
        let t = Trace { unilateral: false, ..Trace::default() };
        assert_eq!(assert_lemma1(&t), Verdict::Skipped);
        assert_eq!(assert_lemma2(&t), Verdict::Skipped);
    }
}
