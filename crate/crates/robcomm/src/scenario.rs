//! JSON scenario files.
//!
//! Rationals are strings (`"1/2"`, `"3"`, `"-1"`) so they round-trip exactly.
//! Every name a scenario mentions is checked before anything runs; errors carry the
//! JSON path of the offending field.

use std::collections::BTreeMap;
use std::path::Path;

use robcomm_core::adversary::{scripted_adversary, AdversaryAction, Crafted, RecipientPattern, ScriptedAdversary, Scope};
use robcomm_core::games::{CommDevice, DirectStrategyPair, FiniteGame, Q};
use robcomm_core::{Alphabet, Content, KeyMode, Network, Symbol};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Field { path: String, msg: String },
}

fn field(path: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Field { path: path.into(), msg: msg.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub network: NetworkSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alphabet: Vec<String>,
    /// Message the sender transmits; defaults to the first alphabet entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub key_mode: KeyModeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<GameSpec>,
    /// Device rows `phi[state][action]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct: Option<DirectSpec>,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mediated: Option<MediatedSpec>,
    /// Subcommand name → expected outcome.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub expect: BTreeMap<String, Expectation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: Vec<String>,
    pub edges: Vec<[String; 2]>,
    pub sender: String,
    pub receiver: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyModeSpec {
    #[default]
    Symbolic,
    Numeric,
}

impl From<KeyModeSpec> for KeyMode {
    fn from(k: KeyModeSpec) -> Self {
        match k {
            KeyModeSpec::Symbolic => KeyMode::Symbolic,
            KeyModeSpec::Numeric => KeyMode::Numeric,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub states: Vec<String>,
    pub prior: Vec<String>,
    pub actions: Vec<String>,
    /// `[action][state]`.
    pub sender_payoffs: Vec<Vec<String>>,
    pub receiver_payoffs: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectSpec {
    pub messages: Vec<String>,
    /// `[state][message]`.
    pub sigma: Vec<Vec<String>>,
    /// `[message][action]`.
    pub tau: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScopeSpec {
    #[serde(rename = "sigma")]
    Sigma,
    #[default]
    #[serde(rename = "sigma*")]
    SigmaStar,
}

impl From<ScopeSpec> for Scope {
    fn from(s: ScopeSpec) -> Self {
        match s {
            ScopeSpec::Sigma => Scope::Sigma,
            ScopeSpec::SigmaStar => Scope::SigmaStar,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepSpec {
    Exhaustive,
    #[default]
    Randomized,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    #[serde(default)]
    pub scope: ScopeSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<ScriptStep>,
}

fn default_samples() -> usize {
    1000
}

/// One scripted deviation. Without `content` or `silent` the node deviates only
/// nominally (it follows the protocol).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub stage: u32,
    pub node: String,
    /// A message name, `"null"` or `"m0"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default)]
    pub silent: bool,
    /// Neighbour subset to send to instead of the protocol pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediatedSpec {
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Size of the scripted phase-3 deviation corpus.
    #[serde(default)]
    pub corpus: usize,
    /// Fixed state for single runs; drawn from the prior otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(default = "default_tolerance")]
    pub tolerance: String,
}

fn default_runs() -> usize {
    1000
}

fn default_tolerance() -> String {
    "1/50".into()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(default)]
    pub exit: i32,
    /// Lines (or line fragments) the text summary must contain.
    #[serde(default)]
    pub contains: Vec<String>,
}

/// A scenario with every name resolved.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub net: Network,
    pub alphabet: Alphabet,
    pub message: Symbol,
    pub key_mode: KeyMode,
    pub scope: Scope,
    pub game: Option<FiniteGame>,
    pub device: Option<CommDevice>,
    pub direct: Option<DirectStrategyPair>,
    pub script: Vec<(u32, usize, AdversaryAction)>,
    pub mediated_state: Option<usize>,
    pub tolerance: Q,
}

pub fn parse_rational(s: &str, path: &str) -> Result<Q, ScenarioError> {
    let t = s.trim();
    let q: Q = t.parse().map_err(|_| field(path, format!("not a rational: {s:?}")))?;
    Ok(q)
}

fn rationals(rows: &[Vec<String>], path: &str) -> Result<Vec<Vec<Q>>, ScenarioError> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| r.iter().enumerate().map(|(j, x)| parse_rational(x, &format!("{path}[{i}][{j}]"))).collect())
        .collect()
}

fn unique(names: &[String], path: &str) -> Result<(), ScenarioError> {
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(field(format!("{path}[{i}]"), format!("duplicate name {n:?}")));
        }
    }
    Ok(())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            field(if path == "." { "$".into() } else { path }, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Scenario::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Resolves names and checks shapes; nothing runs on an invalid scenario.
    pub fn validate(self) -> Result<Loaded, ScenarioError> {
        let n = &self.network;
        unique(&n.nodes, "network.nodes")?;
        for (i, e) in n.edges.iter().enumerate() {
            for (k, end) in e.iter().enumerate() {
                if !n.nodes.contains(end) {
                    return Err(field(format!("network.edges[{i}][{k}]"), format!("unknown node {end:?}")));
                }
            }
        }
        for (name, v) in [("network.sender", &n.sender), ("network.receiver", &n.receiver)] {
            if !n.nodes.contains(v) {
                return Err(field(name, format!("unknown node {v:?}")));
            }
        }
        let edges: Vec<(&str, &str)> = n.edges.iter().map(|[a, b]| (a.as_str(), b.as_str())).collect();
        let net = Network::new(n.nodes.iter().map(String::as_str), edges, &n.sender, &n.receiver)
            .map_err(|e| field("network", e.to_string()))?;

        let game = match &self.game {
            None => None,
            Some(g) => {
                unique(&g.states, "game.states")?;
                unique(&g.actions, "game.actions")?;
                let prior = g
                    .prior
                    .iter()
                    .enumerate()
                    .map(|(i, x)| parse_rational(x, &format!("game.prior[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let u_s = rationals(&g.sender_payoffs, "game.sender_payoffs")?;
                let u_r = rationals(&g.receiver_payoffs, "game.receiver_payoffs")?;
                Some(
                    FiniteGame::new(g.states.clone(), prior, g.actions.clone(), u_s, u_r)
                        .map_err(|e| field("game", e.to_string()))?,
                )
            }
        };
        let device = match (&self.device, &game) {
            (None, _) => None,
            (Some(_), None) => return Err(field("device", "needs a game section")),
            (Some(rows), Some(g)) => {
                Some(CommDevice::new(g, rationals(rows, "device")?).map_err(|e| field("device", e.to_string()))?)
            }
        };
        let direct = match (&self.direct, &game) {
            (None, _) => None,
            (Some(_), None) => return Err(field("direct", "needs a game section")),
            (Some(d), Some(g)) => {
                unique(&d.messages, "direct.messages")?;
                let sigma = rationals(&d.sigma, "direct.sigma")?;
                let tau = rationals(&d.tau, "direct.tau")?;
                Some(
                    DirectStrategyPair::new(g, d.messages.clone(), sigma, tau)
                        .map_err(|e| field("direct", e.to_string()))?,
                )
            }
        };

        let mut names = self.alphabet.clone();
        if names.is_empty() {
            if let Some(d) = &self.direct {
                names = d.messages.clone();
            }
        }
        unique(&names, "alphabet")?;
        let alphabet = Alphabet::named(names.iter().cloned());
        let message = match &self.message {
            None => 0,
            Some(m) => alphabet.symbol(m).ok_or_else(|| field("message", format!("{m:?} is not in the alphabet")))?,
        };
        if self.message.is_none() && names.is_empty() && (!self.adversary.script.is_empty()) {
            return Err(field("alphabet", "scripted runs need an alphabet"));
        }

        let scope: Scope = self.adversary.scope.into();
        let mut script = Vec::new();
        for (i, st) in self.adversary.script.iter().enumerate() {
            let base = format!("adversary.script[{i}]");
            let node = net.ix(&st.node).ok_or_else(|| field(format!("{base}.node"), format!("unknown node {:?}", st.node)))?;
            let mut c = Crafted::honest();
            if let Some(name) = &st.content {
                c.content = robcomm_core::adversary::ContentChoice::Set(match name.as_str() {
                    "null" | "m0" => Content::Null,
                    other => Content::Msg(
                        alphabet
                            .symbol(other)
                            .ok_or_else(|| field(format!("{base}.content"), format!("{other:?} is not in the alphabet")))?,
                    ),
                });
            }
            if let Some(to) = &st.to {
                let mut ix = Vec::new();
                for (k, q) in to.iter().enumerate() {
                    let p = net
                        .ix(q)
                        .filter(|p| net.adjacent(node, *p))
                        .ok_or_else(|| field(format!("{base}.to[{k}]"), format!("{q:?} is not a neighbour of {}", st.node)))?;
                    ix.push(p);
                }
                c.recipients = RecipientPattern::Subset(ix);
            }
            if st.silent {
                c.recipients = RecipientPattern::Silent;
            }
            script.push((st.stage, node, AdversaryAction::Crafted(c)));
        }

        let (mediated_state, tolerance) = match &self.mediated {
            None => (None, parse_rational(&default_tolerance(), "mediated.tolerance")?),
            Some(m) => {
                let st = match (&m.state, &game) {
                    (None, _) => None,
                    (Some(_), None) => return Err(field("mediated.state", "needs a game section")),
                    (Some(s), Some(g)) => Some(
                        g.states
                            .iter()
                            .position(|x| x == s)
                            .ok_or_else(|| field("mediated.state", format!("unknown state {s:?}")))?,
                    ),
                };
                (st, parse_rational(&m.tolerance, "mediated.tolerance")?)
            }
        };

        Ok(Loaded {
            key_mode: self.key_mode.into(),
            scope,
            net,
            alphabet,
            message,
            game,
            device,
            direct,
            script,
            mediated_state,
            tolerance,
            scenario: self,
        })
    }
}

impl Loaded {
    /// The scripted strategy, checked against the scope and the stage count.
    pub fn scripted(&self, total_stages: u32) -> Result<ScriptedAdversary, ScenarioError> {
        scripted_adversary(self.script.clone(), self.scope, &self.net, total_stages)
            .map_err(|e| field("adversary.script", e.to_string()))
    }
}
