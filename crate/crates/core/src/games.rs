//! Finite sender-receiver games with exact rational equilibrium checks, outcome
//! distributions and the robust-implementation check over the protocol.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::adversary::{template_space, DeviationSchedule, Scope, TemplateAdversary};
use crate::engine::{all_schedules, run_protocol, EngineError, RunOptions, SweepMode};
use crate::messaging::{Alphabet, Symbol};
use crate::protocol::{build_schedule, ReceiverOutput};
use crate::topology::{find_cut_vertex, two_disjoint_paths, Network, NodeIx};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GameError {
    #[error("{0} does not sum to 1")]
    NotDistribution(String),
    #[error("{0} has a negative entry")]
    Negative(String),
    #[error("{0} has the wrong shape")]
    Shape(String),
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("network has a cut vertex ({0}); robust implementation is impossible")]
    Refused(String),
    #[error("network has no circle")]
    NoCircle,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn check_row(name: &str, row: &[Q], len: usize) -> Result<(), GameError> {
    if row.len() != len {
        return Err(GameError::Shape(name.into()));
    }
    if row.iter().any(|x| x.is_negative()) {
        return Err(GameError::Negative(name.into()));
    }
    if row.iter().fold(Q::zero(), |a, b| a + b) != Q::one() {
        return Err(GameError::NotDistribution(name.into()));
    }
    Ok(())
}

/// States Ω with prior ν, actions A, payoff tables indexed `[action][state]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGame {
    pub states: Vec<String>,
    pub prior: Vec<Q>,
    pub actions: Vec<String>,
    pub u_s: Vec<Vec<Q>>,
    pub u_r: Vec<Vec<Q>>,
}

impl FiniteGame {
    pub fn new(states: Vec<String>, prior: Vec<Q>, actions: Vec<String>, u_s: Vec<Vec<Q>>, u_r: Vec<Vec<Q>>) -> Result<Self, GameError> {
        check_row("prior", &prior, states.len())?;
        for (name, t) in [("sender payoffs", &u_s), ("receiver payoffs", &u_r)] {
            if t.len() != actions.len() || t.iter().any(|r| r.len() != states.len()) {
                return Err(GameError::Shape(name.into()));
            }
        }
        Ok(FiniteGame { states, prior, actions, u_s, u_r })
    }

    /// The two-state, three-action example with uniform prior.
    pub fn farrell() -> Self {
        let n = |v: [i64; 2]| v.iter().map(|x| q(*x, 1)).collect::<Vec<_>>();
        FiniteGame::new(
            vec!["w".into(), "w'".into()],
            vec![q(1, 2), q(1, 2)],
            vec!["a".into(), "b".into(), "c".into()],
            vec![n([2, 1]), n([0, 2]), n([-1, 0])],
            vec![n([3, 0]), n([2, 2]), n([0, 3])],
        )
        .expect("well-formed")
    }

    /// Expected receiver payoff of `a` under weights over states.
    fn receiver_value(&self, a: usize, weights: &[Q]) -> Q {
        weights.iter().zip(&self.u_r[a]).fold(Q::zero(), |acc, (w, u)| acc + w * u)
    }

    /// First action maximising expected receiver payoff under the prior.
    pub fn best_reply_to_prior(&self) -> usize {
        let mut best = 0;
        for a in 1..self.actions.len() {
            if self.receiver_value(a, &self.prior) > self.receiver_value(best, &self.prior) {
                best = a;
            }
        }
        best
    }
}

/// σ*: Ω → Δ(M) as `sigma[state][message]`; τ*: M → Δ(A) as `tau[message][action]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectStrategyPair {
    pub messages: Vec<String>,
    pub sigma: Vec<Vec<Q>>,
    pub tau: Vec<Vec<Q>>,
}

impl DirectStrategyPair {
    pub fn new(g: &FiniteGame, messages: Vec<String>, sigma: Vec<Vec<Q>>, tau: Vec<Vec<Q>>) -> Result<Self, GameError> {
        if sigma.len() != g.states.len() || tau.len() != messages.len() {
            return Err(GameError::Shape("strategy pair".into()));
        }
        for r in &sigma {
            check_row("sender strategy", r, messages.len())?;
        }
        for r in &tau {
            check_row("receiver strategy", r, g.actions.len())?;
        }
        Ok(DirectStrategyPair { messages, sigma, tau })
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::named(self.messages.iter().cloned())
    }
}

/// Canonical device φ: Ω → Δ(A) as `phi[state][action]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommDevice {
    pub phi: Vec<Vec<Q>>,
}

impl CommDevice {
    pub fn new(g: &FiniteGame, phi: Vec<Vec<Q>>) -> Result<Self, GameError> {
        if phi.len() != g.states.len() {
            return Err(GameError::Shape("device".into()));
        }
        for r in &phi {
            check_row("device row", r, g.actions.len())?;
        }
        Ok(CommDevice { phi })
    }

    pub fn farrell() -> Self {
        CommDevice { phi: vec![vec![q(1, 2), q(1, 2), q(0, 1)], vec![q(0, 1), q(1, 1), q(0, 1)]] }
    }
}

/// `lhs ≥ rhs` with a description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inequality {
    pub description: String,
    pub lhs: Q,
    pub rhs: Q,
}

impl Inequality {
    pub fn slack(&self) -> Q {
        &self.lhs - &self.rhs
    }

    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EqReport {
    pub inequalities: Vec<Inequality>,
    /// Posterior over states after each recommended action (or message) on path.
    pub posteriors: Vec<(usize, Vec<Q>)>,
    /// Sender's expected payoff per state.
    pub sender_by_state: Vec<Q>,
    pub sender_payoff: Q,
    pub receiver_payoff: Q,
}

impl EqReport {
    pub fn first_violation(&self) -> Option<&Inequality> {
        self.inequalities.iter().find(|i| !i.holds())
    }
}

fn normalize(w: &[Q]) -> Vec<Q> {
    let total = w.iter().fold(Q::zero(), |a, b| a + b);
    w.iter().map(|x| x / &total).collect()
}

fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).fold(Q::zero(), |acc, (x, y)| acc + x * y)
}

/// Truthfulness and obedience of a canonical device.
pub fn verify_comm_eq(g: &FiniteGame, d: &CommDevice) -> Result<EqReport, EqReport> {
    let (ns, na) = (g.states.len(), g.actions.len());
    let mut ineq = Vec::new();
    let us = |w: usize, row: &[Q]| (0..na).fold(Q::zero(), |acc, a| acc + &row[a] * &g.u_s[a][w]);
    for w in 0..ns {
        for w2 in 0..ns {
            if w2 == w {
                continue;
            }
            ineq.push(Inequality {
                description: format!("truthful at {}: report {} vs {}", g.states[w], g.states[w], g.states[w2]),
                lhs: us(w, &d.phi[w]),
                rhs: us(w, &d.phi[w2]),
            });
        }
    }
    let mut posteriors = Vec::new();
    for a in 0..na {
        let weights: Vec<Q> = (0..ns).map(|w| &g.prior[w] * &d.phi[w][a]).collect();
        if weights.iter().all(|x| x.is_zero()) {
            continue;
        }
        for b in 0..na {
            if b == a {
                continue;
            }
            ineq.push(Inequality {
                description: format!("obedient to {}: play {} vs {}", g.actions[a], g.actions[a], g.actions[b]),
                lhs: g.receiver_value(a, &weights),
                rhs: g.receiver_value(b, &weights),
            });
        }
        posteriors.push((a, normalize(&weights)));
    }
    let sender_by_state: Vec<Q> = (0..ns).map(|w| us(w, &d.phi[w])).collect();
    let sender_payoff = dot(&g.prior, &sender_by_state);
    let receiver_payoff = (0..ns).fold(Q::zero(), |acc, w| {
        acc + &g.prior[w] * (0..na).fold(Q::zero(), |x, a| x + &d.phi[w][a] * &g.u_r[a][w])
    });
    let r = EqReport { inequalities: ineq, posteriors, sender_by_state, sender_payoff, receiver_payoff };
    if r.first_violation().is_some() {
        Err(r)
    } else {
        Ok(r)
    }
}

/// Nash conditions of the direct game: no profitable message deviation for the
/// sender at any state, and every on-path receiver action a best reply.
pub fn verify_direct_nash(g: &FiniteGame, p: &DirectStrategyPair) -> Result<EqReport, EqReport> {
    let (ns, na, nm) = (g.states.len(), g.actions.len(), p.messages.len());
    let mut ineq = Vec::new();
    let value = |m: usize, w: usize| (0..na).fold(Q::zero(), |acc, a| acc + &p.tau[m][a] * &g.u_s[a][w]);
    for w in 0..ns {
        for m in 0..nm {
            if p.sigma[w][m].is_zero() {
                continue;
            }
            for m2 in 0..nm {
                if m2 == m {
                    continue;
                }
                ineq.push(Inequality {
                    description: format!("sender at {}: send {} vs {}", g.states[w], p.messages[m], p.messages[m2]),
                    lhs: value(m, w),
                    rhs: value(m2, w),
                });
            }
        }
    }
    let mut posteriors = Vec::new();
    for m in 0..nm {
        let weights: Vec<Q> = (0..ns).map(|w| &g.prior[w] * &p.sigma[w][m]).collect();
        if weights.iter().all(|x| x.is_zero()) {
            continue;
        }
        for a in 0..na {
            if p.tau[m][a].is_zero() {
                continue;
            }
            for b in 0..na {
                if b == a {
                    continue;
                }
                ineq.push(Inequality {
                    description: format!("receiver after {}: play {} vs {}", p.messages[m], g.actions[a], g.actions[b]),
                    lhs: g.receiver_value(a, &weights),
                    rhs: g.receiver_value(b, &weights),
                });
            }
        }
        posteriors.push((m, normalize(&weights)));
    }
    let mu = direct_outcome(g, p);
    let sender_by_state: Vec<Q> =
        (0..ns).map(|w| (0..na).fold(Q::zero(), |acc, a| acc + &mu.weights[a][w] * &g.u_s[a][w]) / &g.prior[w]).collect();
    let sender_payoff = dot(&g.prior, &sender_by_state);
    let receiver_payoff =
        (0..na).fold(Q::zero(), |acc, a| acc + (0..ns).fold(Q::zero(), |x, w| x + &mu.weights[a][w] * &g.u_r[a][w]));
    let r = EqReport { inequalities: ineq, posteriors, sender_by_state, sender_payoff, receiver_payoff };
    if r.first_violation().is_some() {
        Err(r)
    } else {
        Ok(r)
    }
}

/// Weights over A×Ω as `weights[action][state]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeDistribution {
    pub weights: Vec<Vec<Q>>,
}

impl OutcomeDistribution {
    pub fn get(&self, a: usize, w: usize) -> &Q {
        &self.weights[a][w]
    }
}

/// ν ⊗ φ.
pub fn device_outcome(g: &FiniteGame, d: &CommDevice) -> OutcomeDistribution {
    let weights = (0..g.actions.len())
        .map(|a| (0..g.states.len()).map(|w| &g.prior[w] * &d.phi[w][a]).collect())
        .collect();
    OutcomeDistribution { weights }
}

/// Law of (action, state) under the direct strategy pair.
pub fn direct_outcome(g: &FiniteGame, p: &DirectStrategyPair) -> OutcomeDistribution {
    let weights = (0..g.actions.len())
        .map(|a| {
            (0..g.states.len())
                .map(|w| {
                    (0..p.messages.len()).fold(Q::zero(), |acc, m| acc + &g.prior[w] * &p.sigma[w][m] * &p.tau[m][a])
                })
                .collect()
        })
        .collect();
    OutcomeDistribution { weights }
}

/// Empirical law of `(action, state)` outcomes.
pub fn empirical_distribution(outcomes: &[(usize, usize)], actions: usize, states: usize) -> Result<OutcomeDistribution, GameError> {
    if outcomes.is_empty() {
        return Err(GameError::NoRuns);
    }
    let mut counts = vec![vec![0u64; states]; actions];
    for &(a, w) in outcomes {
        counts[a][w] += 1;
    }
    let n = outcomes.len() as i64;
    let weights = counts.into_iter().map(|r| r.into_iter().map(|c| q(c as i64, n)).collect()).collect();
    Ok(OutcomeDistribution { weights })
}

/// Total-variation distance, exact.
pub fn tv_distance(a: &OutcomeDistribution, b: &OutcomeDistribution) -> Q {
    let sum = a
        .weights
        .iter()
        .flatten()
        .zip(b.weights.iter().flatten())
        .fold(Q::zero(), |acc, (x, y)| acc + (x - y).abs());
    sum / q(2, 1)
}

/// Result of composing a direct equilibrium with the protocol.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RobustReport {
    pub runs: u64,
    /// Runs whose conditional action law differed from τ*(·|m).
    pub mismatches: u64,
    /// Actions the receiver played with positive probability in some run.
    pub actions_seen: Vec<usize>,
    pub examples: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RobustParams {
    pub scope: Scope,
    pub mode: SweepMode,
    pub seed: u64,
}

/// The receiver's action law after the protocol: τ*(·|decoded), or the best reply to
/// the prior when undecided.
pub fn receiver_law(g: &FiniteGame, p: &DirectStrategyPair, out: ReceiverOutput) -> Vec<Q> {
    match out {
        ReceiverOutput::Message(m) => p.tau[m as usize].clone(),
        ReceiverOutput::Undecided => {
            let mut v = vec![Q::zero(); g.actions.len()];
            v[g.best_reply_to_prior()] = Q::one();
            v
        }
    }
}

/// For every state, every message in the support of σ*(·|ω) and every schedule of
/// the sweep, checks that the receiver's action law equals τ*(·|m) exactly.
pub fn robust_implementation_check(
    g: &FiniteGame,
    p: &DirectStrategyPair,
    net: &Network,
    params: RobustParams,
) -> Result<RobustReport, GameError> {
    if let Some(c) = find_cut_vertex(net) {
        return Err(GameError::Refused(net.name(c).into()));
    }
    let circle = two_disjoint_paths(net).ok_or(GameError::NoCircle)?;
    let cfg = build_schedule(circle.nc()).map_err(EngineError::from)?;
    let alphabet = p.alphabet();
    let opts = RunOptions::quiet();
    let templates = template_space(&alphabet);
    let mut cases: Vec<(DeviationSchedule, usize)> = Vec::new();
    match params.mode {
        SweepMode::Exhaustive => {
            for s in all_schedules(net, params.scope, cfg.total_stages) {
                if s.is_empty() {
                    cases.push((s, 0));
                    continue;
                }
                let two = s.entries().iter().any(|(_, x)| *x == net.sender() || *x == net.receiver());
                for (ti, t) in templates.iter().enumerate() {
                    if two || !t.uses_second_slot() {
                        cases.push((s.clone(), ti));
                    }
                }
            }
        }
        SweepMode::Randomized { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pool: Vec<Vec<NodeIx>> = (1..=cfg.total_stages)
                .map(|t| crate::engine::allowed_deviators(net, params.scope, t))
                .collect();
            for _ in 0..samples {
                let mut entries = Vec::new();
                for (i, ps) in pool.iter().enumerate() {
                    if !ps.is_empty() && rng.next_u32() % 2 == 0 {
                        entries.push((i as u32 + 1, ps[(rng.next_u32() as usize) % ps.len()]));
                    }
                }
                let ti = (rng.next_u32() as usize) % templates.len();
                cases.push((DeviationSchedule::from_entries(params.scope, entries), ti));
            }
        }
    }
    let mut report = RobustReport::default();
    for w in 0..g.states.len() {
        for m in 0..p.messages.len() {
            if p.sigma[w][m].is_zero() {
                continue;
            }
            for (s, ti) in &cases {
                let mut adv = TemplateAdversary { schedule: s.clone(), template: templates[*ti].clone() };
                let (_, r) = run_protocol(net, &circle, &cfg, &alphabet, &mut adv, m as Symbol, params.seed, &opts)?;
                let law = receiver_law(g, p, r.decoded);
                report.runs += 1;
                for (a, x) in law.iter().enumerate() {
                    if !x.is_zero() && !report.actions_seen.contains(&a) {
                        report.actions_seen.push(a);
                    }
                }
                if law != p.tau[m] {
                    report.mismatches += 1;
                    if report.examples.len() < 10 {
                        report.examples.push(format!("state {} message {} schedule {:?}", g.states[w], p.messages[m], s.entries()));
                    }
                }
            }
        }
    }
    report.actions_seen.sort_unstable();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn farrell_device_numbers() {
        let g = FiniteGame::farrell();
        let r = verify_comm_eq(&g, &CommDevice::farrell()).unwrap();
        assert_eq!(r.receiver_payoff, q(9, 4));
        assert_eq!(r.sender_by_state, vec![q(1, 1), q(2, 1)]);
        assert_eq!(r.sender_payoff, q(3, 2));
        let after_b = &r.posteriors.iter().find(|(a, _)| *a == 1).unwrap().1;
        assert_eq!(after_b[0], q(1, 3));
    }

    #[test]
    fn fully_revealing_device_fails_at_second_state() {
        let g = FiniteGame::farrell();
        let d = CommDevice::new(&g, vec![vec![q(1, 1), q(0, 1), q(0, 1)], vec![q(0, 1), q(0, 1), q(1, 1)]]).unwrap();
        let r = verify_comm_eq(&g, &d).unwrap_err();
        let v = r.first_violation().unwrap();
        assert!(v.description.starts_with("truthful at w'"));
        assert_eq!(v.slack(), q(-1, 1));
    }

    #[test]
    fn babbling_and_revealing_direct_pairs() {
        let g = FiniteGame::farrell();
        assert_eq!(g.best_reply_to_prior(), 1);
        let msgs = vec!["m1".into(), "m2".into()];
        let u = |a: i64, b: i64| vec![q(a, 1), q(b, 1)];
        let babble = DirectStrategyPair::new(
            &g,
            msgs.clone(),
            vec![vec![q(1, 2), q(1, 2)], vec![q(1, 2), q(1, 2)]],
            vec![vec![q(0, 1), q(1, 1), q(0, 1)], vec![q(0, 1), q(1, 1), q(0, 1)]],
        )
        .unwrap();
        let r = verify_direct_nash(&g, &babble).unwrap();
        assert_eq!(r.receiver_payoff, q(2, 1));
        let reveal = DirectStrategyPair::new(
            &g,
            msgs,
            vec![u(1, 0), u(0, 1)],
            vec![vec![q(1, 1), q(0, 1), q(0, 1)], vec![q(0, 1), q(0, 1), q(1, 1)]],
        )
        .unwrap();
        let r = verify_direct_nash(&g, &reveal).unwrap_err();
        let v = r.first_violation().unwrap();
        assert!(v.description.starts_with("sender at w'"));
        assert_eq!(v.slack(), q(-1, 1));
    }

    #[test]
    fn tv_examples() {
        let e = empirical_distribution(&[(0, 0), (1, 0)], 2, 1).unwrap();
        let t = OutcomeDistribution { weights: vec![vec![q(1, 4)], vec![q(3, 4)]] };
        assert_eq!(tv_distance(&e, &t), q(1, 4));
        let same = empirical_distribution(&[(1, 0); 10], 2, 1).unwrap();
        let point = OutcomeDistribution { weights: vec![vec![q(0, 1)], vec![q(1, 1)]] };
        assert_eq!(tv_distance(&same, &point), q(0, 1));
        assert_eq!(empirical_distribution(&[], 2, 1), Err(GameError::NoRuns));
    }
}
