//! Worker-pool versions of the core sweeps. Results are merged in case order, so
//! they are identical to a sequential run.

use rayon::prelude::*;
use robcomm_core::engine::{EngineError, RunOptions, SweepPlan, SweepSummary};
use robcomm_core::games::{device_outcome, empirical_distribution, tv_distance, CommDevice, FiniteGame, GameError, Q};
use robcomm_core::mediated::{honest_reference, phase3_corpus, run_mediated, MediatedError};
use robcomm_core::adversary::Honest;
use robcomm_core::Network;
use num_traits::Zero;

pub fn par_sweep(plan: &SweepPlan) -> Result<SweepSummary, EngineError> {
    (0..plan.len())
        .into_par_iter()
        .map(|i| plan.run_case(i))
        .try_reduce(SweepSummary::default, |a, b| Ok(a.merge(b)))
}

/// Seed of the i-th run of a batch.
pub fn run_seed(base: u64, i: usize) -> u64 {
    base ^ (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediatedStats {
    pub runs: usize,
    /// `counts[action][state]`.
    pub counts: Vec<Vec<u64>>,
    pub tv: Q,
    pub sender_mean: Q,
    pub receiver_mean: Q,
    /// Runs in which the three recommendation copies started together and the
    /// receiver saw nothing about the state before them.
    pub well_formed: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error(transparent)]
    Mediated(#[from] MediatedError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Honest mediated runs with the state drawn from the prior each time.
pub fn mediated_batch(
    g: &FiniteGame,
    phi: &CommDevice,
    net: &Network,
    runs: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<MediatedStats, BatchError> {
    let per: Vec<((usize, usize), bool)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let r = run_mediated(g, phi, net, &mut Honest::new(), None, run_seed(seed, i), opts)?;
            Ok((r.outcome(), r.phase_synchronized() && r.receiver_ignorant()))
        })
        .collect::<Result<_, MediatedError>>()?;
    let outcomes: Vec<(usize, usize)> = per.iter().map(|(o, _)| *o).collect();
    let mut counts = vec![vec![0u64; g.states.len()]; g.actions.len()];
    for (a, w) in &outcomes {
        counts[*a][*w] += 1;
    }
    let emp = empirical_distribution(&outcomes, g.actions.len(), g.states.len())?;
    let tv = tv_distance(&emp, &device_outcome(g, phi));
    let n = Q::from_integer((runs as i64).into());
    let mean = |u: &Vec<Vec<Q>>| {
        let total = outcomes.iter().fold(Q::zero(), |acc, (a, w)| acc + &u[*a][*w]);
        total / &n
    };
    Ok(MediatedStats {
        runs,
        tv,
        sender_mean: mean(&g.u_s),
        receiver_mean: mean(&g.u_r),
        counts,
        well_formed: per.iter().filter(|(_, ok)| *ok).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusResult {
    pub cases: usize,
    pub failures: usize,
    pub examples: Vec<String>,
}

/// Scripted unilateral deviations in the recommendation phase; each must leave the
/// receiver's majority equal to the honest recommendation.
pub fn phase3_check(g: &FiniteGame, phi: &CommDevice, net: &Network, n: usize, seed: u64, opts: &RunOptions) -> Result<CorpusResult, MediatedError> {
    let corpus = phase3_corpus(g, net, n, seed)?;
    let per: Vec<Option<String>> = corpus
        .par_iter()
        .enumerate()
        .map(|(k, case)| {
            let honest = honest_reference(g, phi, net, case.omega, case.seed, opts)?;
            let dev = run_mediated(g, phi, net, &mut case.adversary(), Some(case.omega), case.seed, opts)?;
            Ok((dev.action != honest.action || dev.computed != honest.computed).then(|| {
                let sched: Vec<String> = case.schedule.entries().iter().map(|(t, p)| format!("{t}:{}", net.name(*p))).collect();
                format!("case {k} schedule=[{}] honest={} got={} received={:?}", sched.join(","), honest.action, dev.action, dev.received)
            }))
        })
        .collect::<Result<_, MediatedError>>()?;
    let examples: Vec<String> = per.into_iter().flatten().collect();
    Ok(CorpusResult { cases: corpus.len(), failures: examples.len(), examples: examples.into_iter().take(10).collect() })
}
