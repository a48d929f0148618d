//! Subcommands. Each returns an [`Outcome`]: exit code, summary lines, a machine
//! readable summary and any files to write. Input problems are errors (exit 2).

use robcomm_core::adversary::Scope;
use robcomm_core::engine::{
    cut_family, cut_simulation_demo, naive_majority_demo, run_protocol, EngineError, RunOptions, SweepError,
    SweepMode, SweepPlan, SweepSummary,
};
use robcomm_core::games::{
    robust_implementation_check, verify_comm_eq, verify_direct_nash, EqReport, GameError, RobustParams, Q,
};
use robcomm_core::mediated::{run_mediated, MediatedError};
use robcomm_core::topology::{find_cut_vertex, two_disjoint_paths};
use robcomm_core::{build_schedule, Content, KeyMode, ReceiverOutput};
use num_traits::{Signed, ToPrimitive};
use serde_json::{json, Value};

use crate::parallel::{mediated_batch, par_sweep, phase3_check, BatchError};
use crate::scenario::{Expectation, Loaded, ScenarioError, SweepSpec};

pub const COMMANDS: [&str; 6] = ["check-paths", "simulate", "sweep", "mediated", "verify-eq", "demo-majority"];

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Mediated(#[from] MediatedError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Batch(#[from] BatchError),
}

/// Command-line overrides of scenario settings.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<KeyMode>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit: i32,
    pub lines: Vec<String>,
    pub machine: Value,
    /// (file name, contents) written under `--out`.
    pub files: Vec<(String, String)>,
}

impl Outcome {
    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }

    pub fn machine_text(&self) -> String {
        let mut s = serde_json::to_string(&self.machine).expect("json");
        s.push('\n');
        s
    }

    /// Checks an embedded expectation against this outcome.
    pub fn meets(&self, e: &Expectation) -> Result<(), String> {
        if self.exit != e.exit {
            return Err(format!("exit {} (expected {})", self.exit, e.exit));
        }
        for want in &e.contains {
            if !self.lines.iter().any(|l| l.contains(want.as_str())) {
                return Err(format!("missing {want:?}"));
            }
        }
        Ok(())
    }
}

pub fn run_command(name: &str, l: &Loaded, o: Overrides) -> Result<Outcome, CommandError> {
    match name {
        "check-paths" => Ok(check_paths(l)),
        "simulate" => simulate(l, o),
        "sweep" => sweep(l, o),
        "mediated" => mediated(l, o),
        "verify-eq" => verify_eq(l, o),
        "demo-majority" => demo_majority(l),
        other => Err(CommandError::Input(format!("unknown command {other:?}"))),
    }
}

fn seed(l: &Loaded, o: Overrides) -> u64 {
    o.seed.unwrap_or(l.scenario.seed)
}

fn opts(l: &Loaded, o: Overrides) -> RunOptions {
    RunOptions { key_mode: o.mode.unwrap_or(l.key_mode), ..RunOptions::default() }
}

fn path_names(l: &Loaded, p: &[usize]) -> Vec<String> {
    p.iter().map(|x| l.net.name(*x).to_string()).collect()
}

pub fn check_paths(l: &Loaded) -> Outcome {
    let net = &l.net;
    if let Some(c) = two_disjoint_paths(net) {
        let nc = c.nc();
        let cfg = build_schedule(nc).expect("a circle has at least four nodes");
        let (left, right) = (path_names(l, c.left()), path_names(l, c.right()));
        return Outcome {
            exit: 0,
            lines: vec![
                format!("circle nC={nc} T={} L={}", cfg.total_stages, cfg.triplet_bound),
                format!("left: {}", left.join(" ")),
                format!("right: {}", right.join(" ")),
                format!("blocks={} block_length={}", cfg.num_blocks, cfg.block_length),
            ],
            machine: json!({"command": "check-paths", "circle": true, "nc": nc, "T": cfg.total_stages,
                "L": cfg.triplet_bound, "left": left, "right": right}),
            files: Vec::new(),
        };
    }
    match find_cut_vertex(net) {
        Some(v) => Outcome {
            exit: 1,
            lines: vec![format!("cut vertex {}: no two disjoint sender-receiver paths", net.name(v))],
            machine: json!({"command": "check-paths", "circle": false, "cut_vertex": net.name(v)}),
            files: Vec::new(),
        },
        None => Outcome {
            exit: 1,
            lines: vec!["no sender-receiver path".into()],
            machine: json!({"command": "check-paths", "circle": false, "cut_vertex": null}),
            files: Vec::new(),
        },
    }
}

fn show(l: &Loaded, out: ReceiverOutput) -> String {
    match out {
        ReceiverOutput::Message(m) => l.alphabet.display(Content::Msg(m)),
        ReceiverOutput::Undecided => "undecided".into(),
    }
}

fn need_alphabet(l: &Loaded, min: usize) -> Result<Vec<u64>, CommandError> {
    let syms = l.alphabet.symbols().unwrap_or_default();
    if syms.len() < min {
        return Err(CommandError::Input(format!("alphabet: needs {min} or more messages")));
    }
    Ok(syms)
}

pub fn simulate(l: &Loaded, o: Overrides) -> Result<Outcome, CommandError> {
    need_alphabet(l, 1)?;
    let seed = seed(l, o);
    let opts = opts(l, o);
    let Some(circle) = two_disjoint_paths(&l.net) else {
        // Any protocol confined to the cut: show the cut vertex faking another message.
        let syms = need_alphabet(l, 2)?;
        let simulated = *syms.iter().find(|s| **s != l.message).expect("two messages");
        let d = cut_simulation_demo(&l.net, &l.alphabet, l.message, simulated, seed, opts.key_mode)?;
        let ok = d.decoded == ReceiverOutput::Message(l.message);
        return Ok(Outcome {
            exit: if ok { 0 } else { 1 },
            lines: vec![
                format!("cut={} sent={} simulated={}", l.net.name(d.cut), show(l, ReceiverOutput::Message(l.message)), show(l, ReceiverOutput::Message(simulated))),
                format!("decoded={}", show(l, d.decoded)),
            ],
            machine: json!({"command": "simulate", "cut_vertex": l.net.name(d.cut), "sent": l.message,
                "simulated": simulated, "decoded": show(l, d.decoded), "correct": ok}),
            files: vec![("trace.txt".into(), d.trace.to_text(&d.virtual_net))],
        });
    };
    let cfg = build_schedule(circle.nc()).map_err(EngineError::from)?;
    let mut adv = l.scripted(cfg.total_stages)?;
    let (trace, r) = run_protocol(&l.net, &circle, &cfg, &l.alphabet, &mut adv, l.message, seed, &opts)?;
    let stage = r.receiver_learn_stage.map_or("none".into(), |s| s.to_string());
    let sched: Vec<String> = trace.schedule.iter().map(|(t, p)| format!("{t}:{}", l.net.name(*p))).collect();
    Ok(Outcome {
        exit: if r.passed() { 0 } else { 1 },
        lines: vec![
            format!("sent={} schedule=[{}]", show(l, ReceiverOutput::Message(l.message)), sched.join(",")),
            format!("decoded={} stage={stage}", show(l, r.decoded)),
            format!("lemma1={:?} lemma2={:?} sound={}", r.lemma1, r.lemma2, r.knowledge_sound).to_lowercase(),
            format!("broadcasts={} stages={} reboots={}", r.broadcast_count, r.total_stages, r.reboots),
        ],
        machine: json!({"command": "simulate", "sent": show(l, ReceiverOutput::Message(l.message)),
            "decoded": show(l, r.decoded), "stage": r.receiver_learn_stage, "total_stages": r.total_stages,
            "broadcasts": r.broadcast_count, "lemma1": format!("{:?}", r.lemma1), "lemma2": format!("{:?}", r.lemma2),
            "knowledge_sound": r.knowledge_sound, "passed": r.passed()}),
        files: vec![("trace.txt".into(), trace.to_text(&l.net))],
    })
}

fn summary_lines(s: &SweepSummary) -> Vec<String> {
    let mut v = vec![
        format!("runs={} failures={}", s.runs, s.failures),
        format!("lemma1 checked={} failures={}", s.lemma1_checked, s.lemma1_failures),
        format!("lemma2 checked={} failures={}", s.lemma2_checked, s.lemma2_failures),
        format!("unsound={}", s.unsound),
    ];
    v.extend(s.examples.iter().map(|e| format!("failure: {e}")));
    v
}

fn summary_json(s: &SweepSummary) -> Value {
    json!({"runs": s.runs, "failures": s.failures, "lemma1_checked": s.lemma1_checked,
        "lemma1_failures": s.lemma1_failures, "lemma2_checked": s.lemma2_checked,
        "lemma2_failures": s.lemma2_failures, "unsound": s.unsound, "examples": s.examples})
}

pub fn sweep_mode(l: &Loaded, o: Overrides) -> SweepMode {
    match (o.samples, l.scenario.adversary.sweep) {
        (None, SweepSpec::Exhaustive) => SweepMode::Exhaustive,
        (n, _) => SweepMode::Randomized { samples: n.unwrap_or(l.scenario.adversary.samples), seed: seed(l, o) },
    }
}

pub fn sweep(l: &Loaded, o: Overrides) -> Result<Outcome, CommandError> {
    need_alphabet(l, 1)?;
    let opts = RunOptions { record_trace: false, ..opts(l, o) };
    let (kind, s) = if two_disjoint_paths(&l.net).is_some() {
        let mode = sweep_mode(l, o);
        let plan = SweepPlan::new(&l.net, &l.alphabet, l.scope, mode, opts)?;
        let kind = match mode {
            SweepMode::Exhaustive => "exhaustive".to_string(),
            SweepMode::Randomized { samples, .. } => format!("randomized samples={samples}"),
        };
        (kind, par_sweep(&plan)?)
    } else {
        ("cut-simulation".to_string(), cut_family(&l.net, &l.alphabet, opts.key_mode)?)
    };
    let scope = match l.scope {
        Scope::Sigma => "sigma",
        _ => "sigma*",
    };
    let ok = s.failures == 0 && s.unsound == 0;
    let mut lines = vec![format!("sweep {kind} scope={scope}")];
    lines.extend(summary_lines(&s));
    let mut machine = summary_json(&s);
    machine["command"] = json!("sweep");
    machine["kind"] = json!(kind);
    Ok(Outcome { exit: if ok { 0 } else { 1 }, lines, machine, files: Vec::new() })
}

fn decimal(x: &Q) -> String {
    format!("{:.4}", x.to_f64().unwrap_or(f64::NAN))
}

pub fn mediated(l: &Loaded, o: Overrides) -> Result<Outcome, CommandError> {
    let (Some(g), Some(phi)) = (&l.game, &l.device) else {
        return Err(CommandError::Input("mediated: needs game and device sections".into()));
    };
    let spec = l.scenario.mediated.clone();
    let runs = o.samples.or(spec.as_ref().map(|m| m.runs)).unwrap_or(1000);
    let corpus = spec.as_ref().map_or(0, |m| m.corpus);
    let seed = seed(l, o);
    let opts = RunOptions { record_trace: false, ..opts(l, o) };
    let expected = match verify_comm_eq(g, phi) {
        Ok(r) | Err(r) => r,
    };
    let tol = &l.tolerance;

    let stats = mediated_batch(g, phi, &l.net, runs, seed, &opts)?;
    let ds = (&stats.sender_mean - &expected.sender_payoff).abs();
    let dr = (&stats.receiver_mean - &expected.receiver_payoff).abs();
    let c = phase3_check(g, phi, &l.net, corpus, seed, &opts)?;
    let ok = stats.tv <= *tol && ds <= *tol && dr <= *tol && stats.well_formed == runs && c.failures == 0;

    let sample = run_mediated(
        g,
        phi,
        &l.net,
        &mut robcomm_core::adversary::Honest::new(),
        l.mediated_state,
        seed,
        &RunOptions { record_trace: true, ..opts },
    )?;
    let mut lines = vec![
        format!("runs={runs} tolerance={tol}"),
        format!("tv={} ok={}", decimal(&stats.tv), stats.tv <= *tol),
        format!("sender mean={} expected={}", decimal(&stats.sender_mean), expected.sender_payoff),
        format!("receiver mean={} expected={}", decimal(&stats.receiver_mean), expected.receiver_payoff),
        format!("well_formed={}/{runs}", stats.well_formed),
        format!("corpus cases={} failures={}", c.cases, c.failures),
    ];
    for (a, row) in stats.counts.iter().enumerate() {
        let cells: Vec<String> = row.iter().enumerate().map(|(w, n)| format!("{}={n}", g.states[w])).collect();
        lines.push(format!("action {}: {}", g.actions[a], cells.join(" ")));
    }
    lines.extend(c.examples.iter().map(|e| format!("failure: {e}")));
    let machine = json!({"command": "mediated", "runs": runs, "tv": stats.tv.to_string(),
        "sender_mean": stats.sender_mean.to_string(), "receiver_mean": stats.receiver_mean.to_string(),
        "expected_sender": expected.sender_payoff.to_string(), "expected_receiver": expected.receiver_payoff.to_string(),
        "counts": stats.counts, "well_formed": stats.well_formed, "corpus_cases": c.cases,
        "corpus_failures": c.failures, "passed": ok});
    Ok(Outcome {
        exit: if ok { 0 } else { 1 },
        lines,
        machine,
        files: vec![("trace.txt".into(), sample.trace_lines(&l.net).join("\n") + "\n")],
    })
}

fn report_lines(r: &EqReport, names: &[String], states: &[String], lines: &mut Vec<String>) {
    for i in &r.inequalities {
        lines.push(format!("  {}: {} >= {} slack={}", i.description, i.lhs, i.rhs, i.slack()));
    }
    for (k, post) in &r.posteriors {
        let cells: Vec<String> = post.iter().zip(states).map(|(p, w)| format!("{w}={p}")).collect();
        lines.push(format!("  posterior after {}: {}", names[*k], cells.join(" ")));
    }
    lines.push(format!("  sender payoff {}", r.sender_payoff));
}

fn eq_json(r: &EqReport) -> Value {
    let ineq: Vec<Value> = r
        .inequalities
        .iter()
        .map(|i| json!({"description": i.description, "lhs": i.lhs.to_string(), "rhs": i.rhs.to_string(), "slack": i.slack().to_string()}))
        .collect();
    json!({"inequalities": ineq, "sender_payoff": r.sender_payoff.to_string(), "receiver_payoff": r.receiver_payoff.to_string()})
}

pub fn verify_eq(l: &Loaded, o: Overrides) -> Result<Outcome, CommandError> {
    let Some(g) = &l.game else {
        return Err(CommandError::Input("verify-eq: needs a game section".into()));
    };
    if l.device.is_none() && l.direct.is_none() {
        return Err(CommandError::Input("verify-eq: needs a device or a direct section".into()));
    }
    let mut lines = Vec::new();
    let mut machine = json!({"command": "verify-eq"});
    let mut ok = true;
    if let Some(phi) = &l.device {
        lines.push("device:".into());
        let res = verify_comm_eq(g, phi);
        let (Ok(r) | Err(r)) = &res;
        report_lines(r, &g.actions, &g.states, &mut lines);
        match &res {
            Ok(r) => lines.push(format!("OK; receiver payoff {}", r.receiver_payoff)),
            Err(r) => {
                ok = false;
                let v = r.first_violation().expect("rejected report has a violation");
                lines.push(format!("REJECTED; violated {} slack={}", v.description, v.slack()));
            }
        }
        machine["device"] = eq_json(r);
        machine["device"]["accepted"] = json!(res.is_ok());
    }
    if let Some(p) = &l.direct {
        lines.push("direct:".into());
        let res = verify_direct_nash(g, p);
        let (Ok(r) | Err(r)) = &res;
        report_lines(r, &p.messages, &g.states, &mut lines);
        match &res {
            Ok(r) => lines.push(format!("direct OK; receiver payoff {}", r.receiver_payoff)),
            Err(r) => {
                ok = false;
                let v = r.first_violation().expect("rejected report has a violation");
                lines.push(format!("direct REJECTED; violated {} slack={}", v.description, v.slack()));
            }
        }
        machine["direct"] = eq_json(r);
        machine["direct"]["accepted"] = json!(res.is_ok());
        if res.is_ok() {
            let samples = o.samples.unwrap_or(l.scenario.adversary.samples);
            let params = RobustParams { scope: l.scope, mode: SweepMode::Randomized { samples, seed: seed(l, o) }, seed: seed(l, o) };
            match robust_implementation_check(g, p, &l.net, params) {
                Ok(rep) => {
                    ok &= rep.mismatches == 0;
                    lines.push(format!("robust implementation runs={} mismatches={}", rep.runs, rep.mismatches));
                    machine["robust"] = json!({"runs": rep.runs, "mismatches": rep.mismatches});
                }
                Err(GameError::Refused(v)) => {
                    ok = false;
                    lines.push(format!("robust implementation refused: cut vertex {v}"));
                    machine["robust"] = json!({"refused": v});
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    machine["accepted"] = json!(ok);
    Ok(Outcome { exit: if ok { 0 } else { 1 }, lines, machine, files: Vec::new() })
}

pub fn demo_majority(l: &Loaded) -> Result<Outcome, CommandError> {
    need_alphabet(l, 3)?;
    let Some(x) = naive_majority_demo(&l.net, &l.alphabet) else {
        return Err(CommandError::Input(
            "demo-majority: needs three disjoint paths, one with two interior nodes".into(),
        ));
    };
    let paths: Vec<String> = x.paths.iter().map(|p| path_names(l, p).join("-")).collect();
    let mut lines = vec![format!("paths: {}", paths.join(" | "))];
    for (name, run) in [("first", &x.first), ("second", &x.second)] {
        lines.push(format!("{name} run:"));
        lines.extend(run.lines.iter().map(|s| format!("  {s}")));
    }
    let view = |r: &robcomm_core::engine::NaiveRun| r.view.iter().map(|c| l.alphabet.display(*c)).collect::<Vec<_>>();
    lines.push(format!("receiver view first={:?} second={:?}", view(&x.first), view(&x.second)));
    lines.push(format!("identical={}", x.ambiguous));
    Ok(Outcome {
        exit: if x.ambiguous { 0 } else { 1 },
        machine: json!({"command": "demo-majority", "paths": paths, "first": view(&x.first),
            "second": view(&x.second), "identical": x.ambiguous}),
        lines,
        files: Vec::new(),
    })
}
