//! Jointly controlled lotteries on a 2^64 grid and the phase protocol that replaces
//! a mediator by three parallel protocol copies.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Add;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::adversary::{
    resolve, validate_schedule, ActionTemplate, AdversaryAction, AdversaryStrategy, Honest, ContentPick, DeviationSchedule,
    KnowledgeBase, NodeView, RecipientPattern, ReplayPick, ScheduleViolation, Scope, SlotPick,
    TemplateAdversary,
};
use crate::engine::{run_instances, EngineError, Instance, RunOptions, Trace};
use crate::games::{CommDevice, FiniteGame, Q};
use crate::messaging::{Alphabet, Content, Envelope, GrandMessage, KeyInfo, KeyMint, KeyUse, Symbol};
use crate::protocol::{build_schedule, ReceiverOutput};
use crate::topology::{two_disjoint_paths, Circle, Network, NodeIx, Rerooted};

/// v / 2^64 in [0, 1); addition is mod 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct UnitFraction(pub u64);

impl Add for UnitFraction {
    type Output = UnitFraction;

    fn add(self, o: UnitFraction) -> UnitFraction {
        UnitFraction(self.0.wrapping_add(o.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MediatedError {
    #[error("device row has a negative entry")]
    Negative,
    #[error("device row does not sum to 1")]
    NotDistribution,
    #[error("grid must have between 1 and 64 bits")]
    Bits,
    #[error("network has no circle")]
    NoCircle,
    #[error(transparent)]
    Schedule(#[from] ScheduleViolation),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Cells of [0, 2^bits) for one state, one per action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub bits: u32,
    /// c_0 = 0 ≤ c_1 ≤ … ≤ c_|A| = 2^bits.
    pub bounds: Vec<u128>,
}

impl Partition {
    pub fn width(&self, a: usize) -> u128 {
        self.bounds[a + 1] - self.bounds[a]
    }

    pub fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn build_partition(row: &[Q]) -> Result<Partition, MediatedError> {
    build_partition_bits(row, 64)
}

/// Widths ⌊φ(a)·2^bits⌉; the most likely action (the last among equals) absorbs the
/// rounding residual so the widths sum to 2^bits.
pub fn build_partition_bits(row: &[Q], bits: u32) -> Result<Partition, MediatedError> {
    if bits == 0 || bits > 64 {
        return Err(MediatedError::Bits);
    }
    if row.iter().any(|x| x.is_negative()) {
        return Err(MediatedError::Negative);
    }
    if row.iter().fold(Q::zero(), |a, b| a + b) != Q::from_integer(1.into()) {
        return Err(MediatedError::NotDistribution);
    }
    let total = BigInt::from(1u128 << bits);
    let mut widths: Vec<i128> = row
        .iter()
        .map(|x| {
            let scaled = x * Q::from_integer(total.clone());
            let (n, d) = (scaled.numer().clone(), scaled.denom().clone());
            let (fl, rem) = n.div_mod_floor(&d);
            let up = if rem * 2 >= d { fl + 1 } else { fl };
            up.to_i128().expect("fits")
        })
        .collect();
    let sum: i128 = widths.iter().sum();
    let residual = (1i128 << bits) - sum;
    let mut big = 0;
    for (i, x) in row.iter().enumerate() {
        if *x >= row[big] {
            big = i;
        }
    }
    widths[big] += residual;
    let mut bounds = vec![0u128];
    for w in widths {
        let last = *bounds.last().expect("non-empty");
        bounds.push(last + w as u128);
    }
    Ok(Partition { bits, bounds })
}

/// Action whose cell contains x + y mod 2^bits.
pub fn jcl_output(x: UnitFraction, y: UnitFraction, cells: &Partition) -> usize {
    let mask: u128 = if cells.bits == 64 { u64::MAX as u128 } else { (1u128 << cells.bits) - 1 };
    let s = (x.0 as u128 + y.0 as u128) & mask;
    cells.bounds.windows(2).position(|w| w[0] <= s && s < w[1]).expect("cells cover the grid")
}

/// Counts, for a fixed x, how many grid points y land in each cell (needs bits ≤ 32).
pub fn pushforward_counts(x: UnitFraction, cells: &Partition) -> Vec<u128> {
    let mut out = vec![0u128; cells.len()];
    for y in 0..(1u64 << cells.bits) {
        out[jcl_output(x, UnitFraction(y), cells)] += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Majority {
    Action(usize),
    NoMajority,
}

pub fn majority_decode(r1: Option<usize>, r2: Option<usize>, r3: Option<usize>) -> Majority {
    let v = [r1, r2, r3];
    for a in v.iter().flatten() {
        if v.iter().filter(|x| **x == Some(*a)).count() >= 2 {
            return Majority::Action(*a);
        }
    }
    Majority::NoMajority
}

/// A message of the mediated protocol sent outside any protocol instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectSend {
    pub stage: u32,
    pub what: DirectKind,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectKind {
    State,
    X,
    /// Recommendation copy sent straight to an adjacent receiver (copy index).
    Recommendation(u8),
}

/// Stage layout of one mediated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timeline {
    /// Stages of the inner protocol (T').
    pub inner: u32,
    /// First stage of the transmission of y.
    pub y_start: u32,
    /// First stage of the three recommendation copies.
    pub phase3_start: u32,
    pub last: u32,
}

pub fn timeline(nc: usize) -> Result<Timeline, MediatedError> {
    let inner = build_schedule(nc).map_err(EngineError::from)?.total_stages;
    Ok(Timeline { inner, y_start: 2, phase3_start: inner + 2, last: 2 * inner + 1 })
}

#[derive(Debug, Clone)]
pub struct MediatedRun {
    pub omega: usize,
    pub x: UnitFraction,
    pub y: UnitFraction,
    /// Recommendations computed by S, i1 and j1.
    pub computed: [usize; 3],
    /// Recommendations the receiver obtained from the three copies.
    pub received: [Option<usize>; 3],
    pub action: usize,
    pub majority: Majority,
    pub timeline: Timeline,
    pub direct: Vec<DirectSend>,
    pub trace: Trace,
    /// Global start stage of each recommendation copy.
    pub copy_starts: [u32; 3],
    pub receiver: NodeIx,
}

impl MediatedRun {
    pub fn outcome(&self) -> (usize, usize) {
        (self.action, self.omega)
    }

    /// The three recommendation copies start at the same stage.
    pub fn phase_synchronized(&self) -> bool {
        self.copy_starts.iter().all(|s| *s == self.timeline.phase3_start)
    }

    /// Nothing addressed to the receiver before the recommendation phase carries the
    /// state or the sender's lottery draw.
    pub fn receiver_ignorant(&self) -> bool {
        let r = self.receiver;
        let early = |s: u32| s < self.timeline.phase3_start;
        let direct_ok = self.direct.iter().all(|d| {
            !(early(d.stage) && d.envelope.addressed_to(r) && matches!(d.what, DirectKind::State | DirectKind::X))
        });
        let x = Content::Msg(self.x.0);
        let inner_ok = self
            .trace
            .envelopes
            .iter()
            .all(|(s, e)| !(early(*s) && e.addressed_to(r) && (e.payload.content == x || e.channel == 0)));
        direct_ok && inner_ok
    }

    pub fn trace_lines(&self, net: &Network) -> Vec<String> {
        self.trace.lines(net)
    }
}

fn sample_index(p: &Partition, r: u64) -> usize {
    jcl_output(UnitFraction(0), UnitFraction(r), p)
}

/// Sends one message outside the protocol instances, letting a scheduled deviator
/// replace it.
#[allow(clippy::too_many_arguments)]
fn direct_send(
    net: &Network,
    adversary: &mut dyn AdversaryStrategy,
    mint: &mut KeyMint,
    stage: u32,
    origin: NodeIx,
    recipients: Vec<NodeIx>,
    content: Content,
    channel: u8,
    alphabet: &Alphabet,
) -> Result<Vec<Envelope>, MediatedError> {
    let cfg = build_schedule(4).map_err(EngineError::from)?;
    let key = mint.fresh(KeyInfo { issuer: origin, channel, stage: 1, usage: KeyUse::Auth });
    let mut recipients = recipients;
    recipients.sort_unstable();
    let honest = Envelope {
        origin,
        recipients,
        stage: 1,
        channel,
        babble: false,
        payload: GrandMessage::new(content, key, Vec::new(), origin, net),
    };
    if !adversary.schedule().deviates(stage, origin) {
        return Ok(vec![honest]);
    }
    let kb = KnowledgeBase::new();
    let members = [origin];
    let view = NodeView {
        node: origin,
        stage: 1,
        global_stage: stage,
        channel,
        role: None,
        honest: Some(&honest),
        kb: &kb,
        net,
        cfg: &cfg,
        alphabet,
        members: &members,
    };
    let action = adversary.act(&view, mint);
    let mut envs = resolve(&action, &view, mint).map_err(EngineError::from)?;
    if let AdversaryAction::Crafted(c) = &action {
        if c.recipients == RecipientPattern::Pair {
            for e in &mut envs {
                e.recipients = honest.recipients.clone();
            }
        }
    }
    Ok(envs)
}

fn read_direct(envs: &[Envelope], to: NodeIx) -> Option<Content> {
    envs.iter().find(|e| e.addressed_to(to)).map(|e| e.payload.content)
}

/// One mediated run. `omega` fixes the state; otherwise it is drawn from the prior.
#[allow(clippy::too_many_arguments)]
pub fn run_mediated(
    g: &FiniteGame,
    phi: &CommDevice,
    net: &Network,
    adversary: &mut dyn AdversaryStrategy,
    omega: Option<usize>,
    seed: u64,
    opts: &RunOptions,
) -> Result<MediatedRun, MediatedError> {
    let circle = two_disjoint_paths(net).ok_or(MediatedError::NoCircle)?;
    let tl = timeline(circle.nc())?;
    validate_schedule(adversary.schedule(), net, tl.last)?;
    let (s, r) = (circle.sender(), circle.receiver());
    let (i1, j1) = (circle.left()[1], circle.right()[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mint = KeyMint::with_token_base(opts.key_mode, rng.next_u64(), opts.token_base).track_numeric(true);
    let prior = build_partition(&g.prior)?;
    let omega = omega.unwrap_or_else(|| sample_index(&prior, rng.next_u64()));
    let x = UnitFraction(rng.next_u64());
    let y = UnitFraction(rng.next_u64());
    let states = Alphabet::named(g.states.iter().cloned());
    let actions = Alphabet::named(g.actions.iter().cloned());
    let unit = Alphabet::Unit;
    let mut direct = Vec::new();
    let mut notes = Vec::new();

    // Phase 1: the state to both first hops.
    let e = direct_send(net, adversary, &mut mint, 1, s, vec![i1, j1], Content::Msg(omega as Symbol), 0, &states)?;
    let omega_at = |to: NodeIx| read_direct(&e, to).and_then(Content::msg).map_or(0, |w| w as usize);
    let (omega_i, omega_j) = (omega_at(i1), omega_at(j1));
    for env in &e {
        notes.push((1, format!("state {} -> {:?} c={}", net.name(env.origin), env.recipients.iter().map(|p| net.name(*p)).collect::<Vec<_>>(), states.display(env.payload.content))));
        direct.push(DirectSend { stage: 1, what: DirectKind::State, envelope: env.clone() });
    }

    // Phase 2: x from S directly; y from i1 through a protocol instance towards j1.
    let e = direct_send(net, adversary, &mut mint, 2, s, vec![i1, j1], Content::Msg(x.0), 0, &unit)?;
    let x_at = |to: NodeIx| read_direct(&e, to).and_then(Content::msg).map_or(UnitFraction(0), UnitFraction);
    let (x_i, x_j) = (x_at(i1), x_at(j1));
    for env in &e {
        notes.push((2, format!("x {} -> {:?} c={}", net.name(env.origin), env.recipients.iter().map(|p| net.name(*p)).collect::<Vec<_>>(), unit.display(env.payload.content))));
        direct.push(DirectSend { stage: 2, what: DirectKind::X, envelope: env.clone() });
    }
    let y_circle = match circle.reroot(i1, j1) {
        Some(Rerooted::Circle(c)) => c,
        _ => return Err(MediatedError::NoCircle),
    };
    let y_inst = Instance::new(net, y_circle, 1, tl.y_start - 1, y.0, Alphabet::Unit)?;
    let y_run = run_instances(net, &[y_inst], adversary, opts, &mut mint, seed)?;
    let y_at_j = match y_run.reports[0].decoded {
        ReceiverOutput::Message(v) => UnitFraction(v),
        ReceiverOutput::Undecided => UnitFraction(0),
    };
    // S is the first hop on the short arc and reads y at the instance's first stage.
    let y_at_s = y_run
        .trace
        .learn_events
        .iter()
        .find(|l| l.node == s)
        .map_or(UnitFraction(0), |l| UnitFraction(l.value));

    // Phase 3: each of S, i1, j1 computes the recommendation and sends it to R.
    let cells: Vec<Partition> = phi.phi.iter().map(|row| build_partition(row)).collect::<Result<_, _>>()?;
    let computed = [
        jcl_output(x, y_at_s, &cells[omega]),
        jcl_output(x_i, y, &cells[omega_i.min(cells.len() - 1)]),
        jcl_output(x_j, y_at_j, &cells[omega_j.min(cells.len() - 1)]),
    ];
    let senders = [s, i1, j1];
    let mut instances = Vec::new();
    let mut direct_copies = Vec::new();
    for (k, &p) in senders.iter().enumerate() {
        let ch = 2 + k as u8;
        let c: Circle = if p == s {
            circle.clone()
        } else {
            match circle.reroot(p, r) {
                Some(Rerooted::Circle(c)) => c,
                Some(Rerooted::Adjacent) => {
                    direct_copies.push((k, p, ch));
                    continue;
                }
                None => return Err(MediatedError::NoCircle),
            }
        };
        instances.push(Instance::new(net, c, ch, tl.phase3_start - 1, computed[k] as Symbol, actions.clone())?);
    }
    let mut received: [Option<usize>; 3] = [None; 3];
    let mut copy_starts = [0u32; 3];
    for (k, p, ch) in direct_copies {
        let e = direct_send(net, adversary, &mut mint, tl.phase3_start, p, vec![r], Content::Msg(computed[k] as Symbol), ch, &actions)?;
        received[k] = read_direct(&e, r).and_then(Content::msg).map(|a| a as usize).filter(|a| *a < g.actions.len());
        copy_starts[k] = tl.phase3_start;
        for env in &e {
            notes.push((tl.phase3_start, format!("rec{k} {} -> {:?} c={}", net.name(env.origin), env.recipients.iter().map(|q| net.name(*q)).collect::<Vec<_>>(), actions.display(env.payload.content))));
            direct.push(DirectSend { stage: tl.phase3_start, what: DirectKind::Recommendation(k as u8), envelope: env.clone() });
        }
    }
    let p3 = run_instances(net, &instances, adversary, opts, &mut mint, seed)?;
    for (inst, rep) in instances.iter().zip(&p3.reports) {
        let k = (inst.channel - 2) as usize;
        copy_starts[k] = inst.offset + 1;
        received[k] = match rep.decoded {
            ReceiverOutput::Message(a) => Some(a as usize),
            ReceiverOutput::Undecided => None,
        };
    }
    let majority = majority_decode(received[0], received[1], received[2]);
    let action = match majority {
        Majority::Action(a) => a,
        Majority::NoMajority => 0,
    };

    let mut trace = y_run.trace;
    trace.schedule = adversary.schedule().entries().to_vec();
    trace.unilateral = adversary.schedule().is_unilateral();
    trace.instances.extend(p3.trace.instances);
    trace.envelopes.extend(p3.trace.envelopes);
    trace.learn_events.extend(p3.trace.learn_events);
    trace.outputs.extend(p3.trace.outputs);
    notes.push((tl.last, format!("receiver plays {}", actions.display(Content::Msg(action as Symbol)))));
    trace.notes = notes;
    Ok(MediatedRun {
        omega,
        x,
        y,
        computed,
        received,
        action,
        majority,
        timeline: tl,
        direct,
        trace,
        copy_starts,
        receiver: r,
    })
}

/// One scripted phase-3 deviation case.
#[derive(Debug, Clone)]
pub struct Phase3Case {
    pub omega: usize,
    pub seed: u64,
    pub schedule: DeviationSchedule,
    pub template: ActionTemplate,
}

impl Phase3Case {
    pub fn adversary(&self) -> TemplateAdversary {
        TemplateAdversary { schedule: self.schedule.clone(), template: self.template.clone() }
    }
}

/// Deterministic corpus of `n` unilateral deviation schedules confined to the
/// recommendation phase, each with a lying policy.
pub fn phase3_corpus(g: &FiniteGame, net: &Network, n: usize, seed: u64) -> Result<Vec<Phase3Case>, MediatedError> {
    let circle = two_disjoint_paths(net).ok_or(MediatedError::NoCircle)?;
    let tl = timeline(circle.nc())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = net.nodes_by_name();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let omega = (rng.next_u32() as usize) % g.states.len();
        let mut entries = Vec::new();
        // Case 0..|nodes| pin each node to the first recommendation stage.
        if k < nodes.len() {
            entries.push((tl.phase3_start, nodes[k]));
        }
        for t in tl.phase3_start..=tl.last {
            if entries.iter().any(|e| e.0 == t) {
                continue;
            }
            if rng.next_u32() % 3 == 0 {
                entries.push((t, nodes[(rng.next_u32() as usize) % nodes.len()]));
            }
        }
        let lie = (rng.next_u32() as usize) % g.actions.len();
        let picks = [SlotPick::Honest, SlotPick::Truthful, SlotPick::Fresh];
        let template = ActionTemplate {
            pattern: RecipientPattern::Pair,
            content: ContentPick::Set(Content::Msg(lie as Symbol)),
            slots: [picks[(rng.next_u32() % 3) as usize], picks[(rng.next_u32() % 3) as usize]],
            replay: [ReplayPick::None, ReplayPick::Latest, ReplayPick::All][(rng.next_u32() % 3) as usize],
            keep_forwards: rng.next_u32() % 2 == 0,
        };
        out.push(Phase3Case {
            omega,
            seed: rng.next_u64(),
            schedule: DeviationSchedule::from_entries(Scope::SigmaStar, entries),
            template,
        });
    }
    Ok(out)
}

/// Honest mediated run used as the reference for a deviation case.
pub fn honest_reference(g: &FiniteGame, phi: &CommDevice, net: &Network, omega: usize, seed: u64, opts: &RunOptions) -> Result<MediatedRun, MediatedError> {
    run_mediated(g, phi, net, &mut Honest::new(), Some(omega), seed, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::q;

    #[test]
    fn partition_examples() {
        let p = build_partition(&[q(1, 2), q(1, 2), q(0, 1)]).unwrap();
        assert_eq!(p.bounds, vec![0, 1 << 63, 1 << 64, 1 << 64]);
        let p = build_partition(&[q(0, 1), q(1, 1), q(0, 1)]).unwrap();
        assert_eq!(p.width(1), 1 << 64);
        let p = build_partition(&[q(1, 3), q(1, 3), q(1, 3)]).unwrap();
        let third = (1u128 << 64) / 3;
        for a in 0..3 {
            assert!(p.width(a).abs_diff(third) <= 1);
        }
        assert_eq!(*p.bounds.last().unwrap(), 1 << 64);
        assert_eq!(build_partition(&[q(-1, 2), q(3, 2)]), Err(MediatedError::Negative));
    }

    #[test]
    fn jcl_example() {
        let p = build_partition(&[q(1, 2), q(1, 2)]).unwrap();
        assert_eq!(jcl_output(UnitFraction(1 << 62), UnitFraction(1 << 63), &p), 1);
    }

    #[test]
    fn majority_examples() {
        assert_eq!(majority_decode(Some(0), Some(0), Some(1)), Majority::Action(0));
        assert_eq!(majority_decode(Some(0), Some(0), Some(0)), Majority::Action(0));
        assert_eq!(majority_decode(Some(0), Some(1), Some(2)), Majority::NoMajority);
    }

    #[test]
    fn timeline_for_four_nodes() {
        let t = timeline(4).unwrap();
        assert_eq!((t.inner, t.phase3_start, t.last), (6, 8, 13));
    }
}
