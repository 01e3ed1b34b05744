//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::path::PathBuf;

use herdsim::agents::PastDecision;
use herdsim::llm::{build_system_prompt, build_user_prompt, Guidance, LabelScheme, PersonaPreset, PromptVariant};
use herdsim::{Action, DecisionContext, DecisionPair, TreatmentSpec};

/// One prompt-rendering combination covered by golden files.
#[derive(Debug, Clone, Copy)]
pub struct Combo {
    pub treatment: u8,
    pub guidance: Guidance,
    pub scheme: LabelScheme,
    pub persona: bool,
}

pub fn combos() -> Vec<Combo> {
    let mut out = Vec::new();
    for treatment in [1, 2] {
        for guidance in [Guidance::Baseline, Guidance::Optimal] {
            for scheme in LabelScheme::ALL {
                for persona in [false, true] {
                    out.push(Combo {
                        treatment,
                        guidance,
                        scheme,
                        persona,
                    });
                }
            }
        }
    }
    out
}

impl Combo {
    pub fn dir_name(&self) -> String {
        format!(
            "t{}_{}_{}_{}",
            self.treatment,
            self.guidance.name(),
            self.scheme.name(),
            if self.persona { "persona" } else { "plain" }
        )
    }

    pub fn spec(&self) -> TreatmentSpec {
        TreatmentSpec::preset(self.treatment).expect("preset")
    }

    pub fn variant(&self) -> PromptVariant {
        PromptVariant {
            guidance: self.guidance,
            label_scheme: self.scheme,
            persona: self.persona.then(|| PersonaPreset::Human.text().to_string()),
            ..PromptVariant::default()
        }
    }

    /// Round-3 context after two executed buys; the agent traded in round 1.
    pub fn round3_context(&self) -> DecisionContext {
        let mut ctx = DecisionContext::from_history(self.spec(), &[Action::Buy, Action::Buy]);
        ctx.selected_rounds = vec![1];
        ctx.own_past = vec![
            PastDecision {
                round: 1,
                pair: DecisionPair::new(Action::Buy, Action::Sell).with_reasoning(
                    "The expected value of 70 is above the price.",
                    "The expected value of 30 is below the price.",
                ),
            },
            PastDecision {
                round: 2,
                pair: DecisionPair::invalid(),
            },
        ];
        ctx
    }

    /// `(file name, rendered text)` for every golden file of the combo.
    pub fn render(&self) -> Vec<(&'static str, String)> {
        let v = self.variant();
        vec![
            ("system.txt", build_system_prompt(&v, &self.spec())),
            (
                "user_round1.txt",
                build_user_prompt(&v, &DecisionContext::first_round(self.spec())),
            ),
            ("user_round3.txt", build_user_prompt(&v, &self.round3_context())),
        ]
    }
}

pub fn goldens_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("goldens")
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// Compares every combo against its golden files, or rewrites them when
/// `UPDATE_GOLDENS` is set. Returns one message per mismatch.
pub fn check_goldens() -> Vec<String> {
    let update = std::env::var_os("UPDATE_GOLDENS").is_some();
    let mut problems = Vec::new();
    for combo in combos() {
        let dir = goldens_dir().join(combo.dir_name());
        for (name, text) in combo.render() {
            let path = dir.join(name);
            if update {
                std::fs::create_dir_all(&dir).expect("create golden dir");
                std::fs::write(&path, &text).expect("write golden");
                continue;
            }
            match std::fs::read_to_string(&path) {
                Ok(expected) if expected == text => {}
                Ok(_) => problems.push(format!("{} differs", path.display())),
                Err(e) => problems.push(format!("{}: {e}", path.display())),
            }
        }
    }
    problems
}

/// One entry of the reply corpus.
#[derive(Debug, serde::Deserialize)]
pub struct ParserCase {
    pub file: String,
    pub scheme: LabelScheme,
    /// Expected `(good, bad)` action labels; `null` for unparsable replies.
    pub expect: Option<(String, String)>,
}

pub fn parser_cases() -> Vec<(ParserCase, String)> {
    let dir = fixtures_dir();
    let index = std::fs::read_to_string(dir.join("parser_cases.json")).expect("parser_cases.json");
    let cases: Vec<ParserCase> = serde_json::from_str(&index).expect("valid case index");
    cases
        .into_iter()
        .map(|c| {
            let text = std::fs::read_to_string(dir.join("replies").join(&c.file)).expect("fixture reply");
            (c, text)
        })
        .collect()
}

/// Checks the corpus against the parser; one message per disagreement.
pub fn check_parser_corpus() -> Vec<String> {
    let mut problems = Vec::new();
    for (case, text) in parser_cases() {
        let got = herdsim::llm::parse_decision(&text, case.scheme)
            .ok()
            .map(|p| (p.action_good.label().to_string(), p.action_bad.label().to_string()));
        if got != case.expect {
            problems.push(format!(
                "{} ({:?}): expected {:?}, got {:?}",
                case.file, case.scheme, case.expect, got
            ));
        }
    }
    problems
}

/// Drives the LLM agent through scripted replies: a malformed reply
/// followed by a good one succeeds after one retry; persistent garbage
/// ends in an invalid pair once the retry budget is spent.
pub fn check_retry_behavior() -> Vec<String> {
    use std::sync::Arc;

    use herdsim::gateway::{AdapterKind, Gateway, ProviderConfig, ScriptedProvider};
    use herdsim::llm::decide_llm;

    let mut problems = Vec::new();
    let ctx = DecisionContext::first_round(TreatmentSpec::treatment_i());
    let variant = PromptVariant::default();
    let config = ProviderConfig::offline("scripted", AdapterKind::Synthetic);
    let good = std::fs::read_to_string(fixtures_dir().join("replies/well_formed.txt")).unwrap();
    let bad = std::fs::read_to_string(fixtures_dir().join("replies/truncated.txt")).unwrap();

    let provider = Arc::new(ScriptedProvider::replies([bad.clone(), good]));
    let gateway = Gateway::new(config.clone(), provider.clone());
    match decide_llm(&ctx, &variant, &gateway, 2) {
        Ok(reply) => {
            if !(reply.pair.valid && reply.retries == 1 && reply.exchanges.len() == 2) {
                problems.push(format!("recovery after one retry: {:?}", reply.pair));
            }
            let requests = provider.requests();
            if requests.len() != 2 || !requests[1].user.contains("could not be read") {
                problems.push("retry did not carry the format reminder".into());
            }
        }
        Err(e) => problems.push(format!("recovery: {e}")),
    }

    let provider = Arc::new(ScriptedProvider::replies(vec![bad; 3]));
    let gateway = Gateway::new(config, provider.clone());
    match decide_llm(&ctx, &variant, &gateway, 2) {
        Ok(reply) => {
            if reply.pair.valid || reply.exchanges.len() != 3 || provider.remaining() != 0 {
                problems.push(format!(
                    "exhaustion: valid={} exchanges={}",
                    reply.pair.valid,
                    reply.exchanges.len()
                ));
            }
        }
        Err(e) => problems.push(format!("exhaustion: {e}")),
    }
    problems
}

/// Canonical-protocol config with one homogeneous group of rule agents.
pub fn rule_config(
    treatment: TreatmentSpec,
    kind: herdsim::AgentKind,
    sessions: u32,
    seed: u64,
) -> herdsim::ExperimentConfig {
    let mut cfg = herdsim::ExperimentConfig::canonical(treatment, vec![herdsim::session::AgentSpec::new(kind, 8)]);
    cfg.sessions = sessions;
    cfg.environment_seed = seed;
    cfg.agent_seed = seed;
    cfg
}

/// Runs rule-agent sessions in memory.
pub fn simulate_rules(cfg: &herdsim::ExperimentConfig) -> Vec<herdsim::SessionRecord> {
    herdsim::session::simulate(cfg, &herdsim::session::Providers::new()).expect("rule agents cannot fail")
}

/// Six synthetic LLM agents plus two noise traders.
pub fn synthetic_config(treatment: TreatmentSpec, sessions: u32, seed: u64) -> herdsim::ExperimentConfig {
    use herdsim::gateway::{AdapterKind, ProviderConfig};
    use herdsim::session::AgentSpec;
    let mut cfg = herdsim::ExperimentConfig::canonical(
        treatment,
        vec![
            AgentSpec::llm("synthetic", 6),
            AgentSpec::new(herdsim::AgentKind::Noise, 2),
        ],
    );
    cfg.sessions = sessions;
    cfg.environment_seed = seed;
    cfg.agent_seed = seed;
    cfg.providers.insert(
        "synthetic".into(),
        ProviderConfig::offline("synthetic", AdapterKind::Synthetic),
    );
    cfg
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn snapshot(root: &std::path::Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut std::collections::BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// One session with the given seats, signals and value; agent `i` trades in
/// round `i + 1`.
pub fn forced_session(
    treatment: TreatmentSpec,
    kinds: &[herdsim::AgentKind; 8],
    signals: &[herdsim::Signal],
    value: herdsim::AssetValue,
) -> herdsim::SessionRecord {
    use herdsim::agents::{BayesianRationalAgent, FixedAgent, SignalOnlyAgent, TraderAgent};
    use herdsim::AgentKind;

    let cfg = rule_config(treatment, kinds[0], 1, 0);
    let agents: Vec<Box<dyn TraderAgent>> = kinds
        .iter()
        .map(|kind| match kind {
            AgentKind::SignalOnly => Box::new(SignalOnlyAgent) as Box<dyn TraderAgent>,
            AgentKind::FixedHerd => Box::new(FixedAgent::herd()),
            AgentKind::FixedContrarian => Box::new(FixedAgent::contrarian()),
            AgentKind::BayesianRational => Box::new(BayesianRationalAgent::default()),
            other => panic!("no forced seat for {other:?}"),
        })
        .collect();
    let infos = (0..8)
        .map(|id| herdsim::session::AgentInfo {
            id,
            kind: kinds[id],
            model_key: kinds[id].name().into(),
            guidance: None,
            label_scheme: None,
            persona: None,
        })
        .collect();
    let env = herdsim::session::Environment {
        value,
        signals: signals.to_vec(),
        selection: (0..8).collect(),
    };
    let mut runner = herdsim::session::SessionRunner::new(&cfg, 0, env, agents, infos);
    while !runner.is_finished() {
        runner.step().expect("rule agents cannot fail");
    }
    runner.finish()
}
