//! Randomized checks of the protocol against single-deviator adversaries.

use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use robcomm_core::adversary::*;
use robcomm_core::engine::*;
use robcomm_core::messaging::KeyMint;
use robcomm_core::topology::two_disjoint_paths;
use robcomm_core::*;

fn diamond() -> Network {
    Network::new(["S", "1", "2", "R"], [("S", "1"), ("S", "2"), ("1", "R"), ("2", "R")], "S", "R").unwrap()
}

fn three_paths() -> Network {
    Network::new(
        ["S", "1", "2", "3", "4", "5", "6", "R"],
        [("S", "1"), ("S", "2"), ("S", "3"), ("1", "4"), ("2", "5"), ("3", "6"), ("4", "R"), ("5", "R"), ("6", "R")],
        "S",
        "R",
    )
    .unwrap()
}

fn ab() -> Alphabet {
    Alphabet::named(["alpha", "beta"])
}

fn random_schedule(net: &Network, scope: Scope, total: u32, rng: &mut ChaCha8Rng) -> DeviationSchedule {
    let mut entries = Vec::new();
    for t in 1..=total {
        let pool = allowed_deviators(net, scope, t);
        if !pool.is_empty() && rng.next_u32() % 3 != 0 {
            entries.push((t, pool[rng.next_u32() as usize % pool.len()]));
        }
    }
    DeviationSchedule::from_entries(scope, entries)
}

fn run(net: &Network, adv: &mut dyn AdversaryStrategy, m: Symbol, seed: u64, opts: &RunOptions) -> (Trace, RunReport) {
    let c = two_disjoint_paths(net).unwrap();
    let cfg = build_schedule(c.nc()).unwrap();
    run_protocol(net, &c, &cfg, &ab(), adv, m, seed, opts).unwrap()
}

/// Random adversary that also checks the action space at every deviation.
struct Probe {
    inner: RandomAdversary<ChaCha8Rng>,
    checked: usize,
}

fn distinct_tokens(kb: &KnowledgeBase) -> Vec<AuthKey> {
    let mut v = kb.tokens().to_vec();
    v.sort();
    v.dedup();
    v
}

fn expected_count(view: &NodeView<'_>, caps: &ActionCaps, mint: &KeyMint) -> usize {
    let tokens = distinct_tokens(view.kb);
    let m = view.alphabet.symbols().unwrap().len();
    let mut n = caps.patterns.len() * (1 + m) * (1 + tokens.len().min(caps.max_replays));
    if view.stage >= 3 {
        for &q in &view.role.unwrap().monitored {
            let truthful = view.kb.observed(q, view.stage - 1);
            let others = tokens.iter().filter(|k| Some(**k) != truthful).count();
            n *= usize::from(truthful.is_some()) + others.min(caps.max_replays) + 1;
        }
    }
    n * (1 + foreign_true_keys(view, mint).len().min(caps.max_foreign)) * caps.forwarding.len()
}

impl AdversaryStrategy for Probe {
    fn schedule(&self) -> &DeviationSchedule {
        &self.inner.schedule
    }

    fn act(&mut self, view: &NodeView<'_>, mint: &KeyMint) -> AdversaryAction {
        if view.role.is_some() {
            let caps = &self.inner.caps;
            let all = enumerate_actions(view, caps, mint).unwrap();
            assert_eq!(all.len(), expected_count(view, caps, mint));
            assert_eq!(all.len(), action_count(view, caps, mint).unwrap());
            for (i, a) in all.iter().enumerate() {
                assert!(!all[..i].contains(a), "duplicate action");
            }
            self.checked += 1;
        }
        self.inner.act(view, mint)
    }
}

#[test]
fn action_space_matches_closed_form() {
    let mut checked = 0;
    for (k, net) in [diamond(), three_paths()].iter().enumerate() {
        let total = build_schedule(two_disjoint_paths(net).unwrap().nc()).unwrap().total_stages;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 7 + k as u64);
            let schedule = random_schedule(net, Scope::SigmaStar, total, &mut rng);
            let inner = RandomAdversary { schedule, caps: ActionCaps::default(), rng };
            let mut p = Probe { inner, checked: 0 };
            let (_, r) = run(net, &mut p, seed % 2, seed, &RunOptions::quiet());
            assert!(r.passed(), "{r:?}");
            checked += p.checked;
        }
    }
    assert!(checked > 100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn diamond_random_adversary(seed in any::<u64>(), m in 0u64..2) {
        let net = diamond();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = random_schedule(&net, Scope::SigmaStar, 6, &mut rng);
        let mut adv = RandomAdversary { schedule, caps: ActionCaps::default(), rng };
        let (trace, r) = run(&net, &mut adv, m, seed, &RunOptions::default());
        prop_assert_eq!(r.decoded, ReceiverOutput::Message(m));
        prop_assert_eq!(assert_lemma1(&trace), Verdict::Holds);
        prop_assert_eq!(assert_lemma2(&trace), Verdict::Holds);
        prop_assert!(r.knowledge_sound);
    }

    #[test]
    fn diamond_template_adversary(seed in any::<u64>(), t in 0usize..218, m in 0u64..2) {
        let net = diamond();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = random_schedule(&net, Scope::SigmaStar, 6, &mut rng);
        let template = template_space(&ab())[t].clone();
        let (trace, r) = run(&net, &mut TemplateAdversary { schedule, template }, m, seed, &RunOptions::default());
        prop_assert!(r.passed(), "{:?}\n{}", r, trace.to_text(&net));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn three_paths_random_adversary(seed in any::<u64>(), m in 0u64..2) {
        let net = three_paths();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = random_schedule(&net, Scope::SigmaStar, 28, &mut rng);
        let mut adv = RandomAdversary { schedule, caps: ActionCaps::default(), rng };
        let (_, r) = run(&net, &mut adv, m, seed, &RunOptions::quiet());
        prop_assert!(r.passed(), "{:?}", r);
    }

    #[test]
    fn babble_does_not_change_decoding(seed in any::<u64>(), t in 0usize..218, m in 0u64..2) {
        let net = three_paths();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = random_schedule(&net, Scope::Sigma, 28, &mut rng);
        let template = template_space(&ab())[t].clone();
        let mut outs = Vec::new();
        for babble in [true, false] {
            let mut adv = TemplateAdversary { schedule: schedule.clone(), template: template.clone() };
            let opts = RunOptions { babble, ..RunOptions::quiet() };
            let (_, r) = run(&net, &mut adv, m, seed, &opts);
            prop_assert!(r.passed());
            outs.push((r.decoded, r.receiver_learn_stage));
        }
        prop_assert_eq!(outs[0], outs[1]);
    }

    #[test]
    fn numeric_keys_decode_like_symbolic(seed in any::<u64>(), t in 0usize..218, m in 0u64..2) {
        let net = diamond();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = random_schedule(&net, Scope::SigmaStar, 6, &mut rng);
        let template = template_space(&ab())[t].clone();
        let mut outs = Vec::new();
        for key_mode in [KeyMode::Symbolic, KeyMode::Numeric] {
            let mut adv = TemplateAdversary { schedule: schedule.clone(), template: template.clone() };
            let (_, r) = run(&net, &mut adv, m, seed, &RunOptions { key_mode, ..RunOptions::quiet() });
            prop_assert!(r.passed(), "{:?} {:?}", key_mode, r);
            outs.push(r.decoded);
        }
        prop_assert_eq!(outs[0], outs[1]);
    }

    #[test]
    fn equal_seeds_give_equal_traces(seed in any::<u64>(), m in 0u64..2) {
        let net = three_paths();
        let texts: Vec<String> = (0..2)
            .map(|_| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let schedule = random_schedule(&net, Scope::SigmaStar, 28, &mut rng);
                let mut adv = RandomAdversary { schedule, caps: ActionCaps::default(), rng };
                run(&net, &mut adv, m, seed, &RunOptions::default()).0.to_text(&net)
            })
            .collect();
        prop_assert_eq!(&texts[0], &texts[1]);
    }
}

#[test]
fn honest_runs_meet_the_stage_counts() {
    for (net, nc, total, learn) in [(diamond(), 4, 6, 6), (three_paths(), 6, 28, 19)] {
        let c = two_disjoint_paths(&net).unwrap();
        assert_eq!(c.nc(), nc);
        for m in 0..2 {
            let (trace, r) = run(&net, &mut Honest::new(), m, 5, &RunOptions::default());
            assert_eq!(r.total_stages, total);
            assert_eq!(r.decoded, ReceiverOutput::Message(m));
            assert_eq!(r.receiver_learn_stage, Some(learn));
            assert_eq!(r.reboots, 0);
            assert_eq!(r.broadcast_count, nc * total as usize);
            assert!(trace.learn_events.iter().all(|e| e.value == m));
        }
    }
}

#[test]
fn double_deviation_is_outside_the_guarantee() {
    // Both first hops lie at every stage: not unilateral, so the lemmas are skipped.
    let net = diamond();
    let (one, two) = (net.ix("1").unwrap(), net.ix("2").unwrap());
    let entries = (1..=6).flat_map(|t| [(t, one), (t, two)]).collect();
    let template = template_space(&ab())[0].clone();
    let template = ActionTemplate { content: ContentPick::Set(Content::Msg(1)), ..template };
    let schedule = DeviationSchedule::from_entries(Scope::Unrestricted, entries);
    let (trace, r) = run(&net, &mut TemplateAdversary { schedule, template }, 0, 1, &RunOptions::default());
    assert!(!trace.unilateral);
    assert_eq!(r.lemma1, Verdict::Skipped);
    assert_ne!(r.decoded, ReceiverOutput::Message(0));
}
