//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::time::{Duration, Instant};

use num_traits::{Signed, ToPrimitive};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use robcomm::parallel::{mediated_batch, par_sweep, phase3_check};
use robcomm::{run_command, Overrides, Scenario};
use robcomm_core::adversary::{Honest, Scope};
use robcomm_core::engine::{
    cut_simulation_demo, naive_majority_demo, run_protocol, RunOptions, SweepMode, SweepPlan, SweepSummary,
};
use robcomm_core::games::{q, verify_comm_eq, CommDevice, FiniteGame, Q};
use robcomm_core::mediated::{build_partition_bits, pushforward_counts, UnitFraction};
use robcomm_core::topology::two_disjoint_paths;
use robcomm_core::{build_schedule, ReceiverOutput};

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, n: u32, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} {n}. {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn sweep_ok(s: &SweepSummary) -> bool {
    s.runs > 0 && s.failures == 0 && s.unsound == 0
}

fn lemmas_ok(s: &SweepSummary) -> bool {
    s.lemma1_checked == s.runs && s.lemma2_checked == s.runs && s.lemma1_failures == 0 && s.lemma2_failures == 0
}

fn describe(s: &SweepSummary, d: Duration) -> String {
    let mut t = format!("runs={} failures={} unsound={} in {}", s.runs, s.failures, s.unsound, secs(d));
    if let Some(e) = s.examples.first() {
        t.push_str(&format!(" first failure: {e}"));
    }
    t
}

fn stage_counts(rep: &mut Report) {
    let mut parts = Vec::new();
    let mut ok = true;
    for (file, nc, total, bound) in [("diamond.json", 4, 6, 6), ("three-paths.json", 6, 28, 28)] {
        let l = common::load(file);
        let t0 = Instant::now();
        let c = two_disjoint_paths(&l.net).expect("circle");
        let cfg = build_schedule(c.nc()).unwrap();
        let (_, r) = run_protocol(&l.net, &c, &cfg, &l.alphabet, &mut Honest::new(), l.message, l.scenario.seed, &RunOptions::default())
            .unwrap();
        let dt = t0.elapsed();
        let stage = r.receiver_learn_stage.unwrap_or(u32::MAX);
        let exact = if nc == 4 { stage == bound } else { stage <= bound };
        ok &= c.nc() == nc
            && cfg.total_stages == total
            && r.decoded == ReceiverOutput::Message(l.message)
            && exact
            && dt < Duration::from_secs(1);
        parts.push(format!("nC={} T={} decoded at stage {stage} in {}", c.nc(), cfg.total_stages, secs(dt)));
    }
    rep.line(1, "stage counts", ok, parts.join("; "));
}

fn exhaustive(rep: &mut Report) -> SweepSummary {
    let l = common::load("diamond.json");
    let t0 = Instant::now();
    let plan = SweepPlan::new(&l.net, &l.alphabet, Scope::SigmaStar, SweepMode::Exhaustive, RunOptions::quiet()).unwrap();
    let s = par_sweep(&plan).unwrap();
    let dt = t0.elapsed();
    let ok = sweep_ok(&s) && l.alphabet.symbols().unwrap().len() == 2 && dt < Duration::from_secs(600);
    rep.line(2, "exhaustive diamond sweep (sigma*, |M|=2)", ok, describe(&s, dt));
    s
}

fn randomized(rep: &mut Report) -> SweepSummary {
    let l = common::load("three-paths.json");
    let t0 = Instant::now();
    let mode = SweepMode::Randomized { samples: 10_000, seed: l.scenario.seed };
    let plan = SweepPlan::new(&l.net, &l.alphabet, Scope::SigmaStar, mode, RunOptions::quiet()).unwrap();
    let s = par_sweep(&plan).unwrap();
    let dt = t0.elapsed();
    let ok = sweep_ok(&s) && s.runs >= 10_000 && dt < Duration::from_secs(300);
    rep.line(3, "randomized three-paths sweep (10^4 samples)", ok, describe(&s, dt));
    s
}

fn lemmas(rep: &mut Report, a: &SweepSummary, b: &SweepSummary) {
    let ok = lemmas_ok(a) && lemmas_ok(b);
    let detail = format!(
        "lemma1 {}+{} traces, {} failures; lemma2 {}+{} traces, {} failures",
        a.lemma1_checked,
        b.lemma1_checked,
        a.lemma1_failures + b.lemma1_failures,
        a.lemma2_checked,
        b.lemma2_checked,
        a.lemma2_failures + b.lemma2_failures
    );
    rep.line(4, "lemma suites on every sweep trace", ok, detail);
}

fn necessity(rep: &mut Report) {
    let l = common::load("cut.json");
    let syms = l.alphabet.symbols().unwrap();
    let mut wrong = 0;
    for &m in &syms {
        for &g in syms.iter().filter(|g| **g != m) {
            let d = cut_simulation_demo(&l.net, &l.alphabet, m, g, l.scenario.seed, l.key_mode).unwrap();
            if d.decoded == ReceiverOutput::Message(g) {
                wrong += 1;
            }
        }
    }
    let pairs = syms.len() * (syms.len() - 1);
    let maj = common::load("majority.json");
    let x = naive_majority_demo(&maj.net, &maj.alphabet).expect("three disjoint paths");
    let identical = x.ambiguous && x.first.receiver_lines == x.second.receiver_lines && x.first.view == x.second.view;
    let ok = wrong == pairs && identical;
    rep.line(
        5,
        "necessity demos",
        ok,
        format!(
            "cut vertex forced the simulated message in {wrong}/{pairs} runs; naive majority receiver views identical={identical}"
        ),
    );
}

fn farrell(rep: &mut Report) {
    let g = FiniteGame::farrell();
    let accepted = verify_comm_eq(&g, &CommDevice::farrell());
    let (ok1, detail1) = match &accepted {
        Ok(r) => {
            let post_b = r.posteriors.iter().find(|(a, _)| *a == 1).map(|(_, p)| p.clone());
            let ok = r.receiver_payoff == q(9, 4) && post_b == Some(vec![q(1, 3), q(2, 3)]);
            (ok, format!("accepted, receiver payoff {}, posterior on w after b {}", r.receiver_payoff, post_b.map_or("-".into(), |p| p[0].to_string())))
        }
        Err(r) => (false, format!("rejected: {:?}", r.first_violation())),
    };
    let revealing = CommDevice::new(&g, vec![vec![q(1, 1), q(0, 1), q(0, 1)], vec![q(0, 1), q(0, 1), q(1, 1)]]).unwrap();
    let (ok2, detail2) = match verify_comm_eq(&g, &revealing) {
        Ok(_) => (false, "fully revealing device accepted".to_string()),
        Err(r) => {
            let v = r.first_violation().expect("violation");
            let ok = v.description.starts_with("truthful at w'") && v.slack() == q(-1, 1);
            (ok, format!("fully revealing rejected at {:?} slack {}", v.description, v.slack()))
        }
    };
    rep.line(6, "Farrell equilibrium numbers", ok1 && ok2, format!("{detail1}; {detail2}"));
}

fn mediated(rep: &mut Report) {
    let l = common::load("farrell.json");
    let (g, phi) = (l.game.as_ref().unwrap(), l.device.as_ref().unwrap());
    let tol = q(1, 50);
    let t0 = Instant::now();
    let opts = RunOptions::quiet();
    let s = mediated_batch(g, phi, &l.net, 100_000, l.scenario.seed, &opts).unwrap();
    let c = phase3_check(g, phi, &l.net, 100, l.scenario.seed, &opts).unwrap();
    let dt = t0.elapsed();
    let ds = (&s.sender_mean - q(3, 2)).abs();
    let dr = (&s.receiver_mean - q(9, 4)).abs();
    let f = |x: &Q| x.to_f64().unwrap();
    let ok = s.tv <= tol
        && ds <= tol
        && dr <= tol
        && s.well_formed == s.runs
        && c.cases == 100
        && c.failures == 0
        && dt < Duration::from_secs(600);
    let detail = format!(
        "{} runs: tv={:.4} sender={:.4} receiver={:.4}; corpus {}/{} honest; in {}",
        s.runs,
        f(&s.tv),
        f(&s.sender_mean),
        f(&s.receiver_mean),
        c.cases - c.failures,
        c.cases,
        secs(dt)
    );
    rep.line(7, "mediated distribution", ok, detail);
}

fn jcl(rep: &mut Report) {
    let rows = [
        vec![q(1, 2), q(1, 2), q(0, 1)],
        vec![q(0, 1), q(1, 1), q(0, 1)],
        vec![q(1, 3), q(1, 3), q(1, 3)],
        vec![q(1, 7), q(2, 7), q(4, 7)],
    ];
    let mut exact = 0;
    let mut total = 0;
    for row in &rows {
        let p = build_partition_bits(row, 16).unwrap();
        let widths: Vec<u128> = (0..p.len()).map(|a| p.width(a)).collect();
        for k in 0..100u64 {
            let x = UnitFraction((k * 40_503 + 12_345) & 0xffff);
            total += 1;
            if pushforward_counts(x, &p) == widths {
                exact += 1;
            }
        }
    }
    let mut runner = TestRunner::new(Config { cases: 2000, failure_persistence: None, ..Config::default() });
    let algebra = runner
        .run(&(any::<u64>(), any::<u64>(), any::<u64>()), |(a, b, c)| {
            let (a, b, c) = (UnitFraction(a), UnitFraction(b), UnitFraction(c));
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert_eq!(a + b, b + a);
            Ok(())
        })
        .is_ok();
    let uniform = runner
        .run(&any::<u16>(), |x| {
            let mut hit = vec![false; 1 << 16];
            for y in 0..=u16::MAX {
                hit[x.wrapping_add(y) as usize] = true;
            }
            prop_assert!(hit.iter().all(|h| *h));
            Ok(())
        })
        .is_ok();
    rep.line(
        8,
        "jointly controlled lottery exactness",
        exact == total && algebra && uniform,
        format!("{exact}/{total} pushforwards equal the cell widths on the 2^16 grid; associative={algebra} uniform={uniform}"),
    );
}

fn determinism(rep: &mut Report) {
    // Bounded sample counts keep the exhaustive scenario out of this check.
    let o = Overrides { samples: Some(500), ..Overrides::default() };
    let mut compared = 0;
    let mut differing = Vec::new();
    for path in common::scenario_paths() {
        let l = Scenario::load(&path).unwrap().validate().unwrap();
        for cmd in robcomm::commands::COMMANDS {
            let (Ok(a), Ok(b)) = (run_command(cmd, &l, o), run_command(cmd, &l, o))
            else {
                continue;
            };
            compared += 1;
            if a.text() != b.text() || a.machine_text() != b.machine_text() || a.files != b.files {
                differing.push(format!("{} {cmd}", path.display()));
            }
        }
    }
    rep.line(
        9,
        "determinism",
        differing.is_empty() && compared > 0,
        format!("{compared} (scenario, command) pairs run twice; differing: {differing:?}"),
    );
}

fn main() {
    let mut rep = Report { failed: 0 };
    stage_counts(&mut rep);
    let a = exhaustive(&mut rep);
    let b = randomized(&mut rep);
    lemmas(&mut rep, &a, &b);
    necessity(&mut rep);
    farrell(&mut rep);
    mediated(&mut rep);
    jcl(&mut rep);
    determinism(&mut rep);
    if rep.failed > 0 {
        println!("{} criteria failed", rep.failed);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
