use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use herdsim::analysis::{
    aggregate_grades, aggregate_table, classify_sessions, compare_reference, grade_reasoning,
    herding_optimal_frequency, payoff_stats, price_series, reasoning_passages, render_table, treatment_key,
    write_labels_csv, write_payoffs_csv, write_price_series_csv, write_table_csv, GradedReasoning, Grouping,
    LabelRecord, Passage, HUMAN_REFERENCE,
};
use herdsim::gateway::{AdapterKind, GatewayError, ProviderConfig};
use herdsim::llm::Guidance;
use herdsim::session::{
    build_providers, replay_bundle, run_experiment, Bundle, ConfigError, ProviderHandle, SessionError,
};
use herdsim::{AgentKind, ExperimentConfig, SessionRecord, TreatmentSpec};
use serde::{Deserialize, Serialize};

/// A failed command and the exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CmdResult = Result<(), Failure>;

const VALIDATION: u8 = 1;
const RUNTIME: u8 = 2;
const PROVIDER: u8 = 3;

fn fail(code: u8, error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code,
        error: error.into(),
    }
}

fn session_failure(e: SessionError) -> Failure {
    let code = if e.is_provider() { PROVIDER } else { RUNTIME };
    fail(code, e)
}

fn gateway_failure(e: GatewayError) -> Failure {
    // A missing secret or bad provider entry is a configuration problem.
    let code = if matches!(e, GatewayError::Config(_)) {
        VALIDATION
    } else {
        PROVIDER
    };
    fail(code, e)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GuidanceArg {
    Baseline,
    Optimal,
}

impl From<GuidanceArg> for Guidance {
    fn from(g: GuidanceArg) -> Self {
        match g {
            GuidanceArg::Baseline => Guidance::Baseline,
            GuidanceArg::Optimal => Guidance::Optimal,
        }
    }
}

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Environment and agent seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Treatment preset: 1, 2 or 3.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub treatment: Option<u8>,
    /// Prompt guidance for every LLM agent group.
    #[arg(long, value_enum)]
    pub guidance: Option<GuidanceArg>,
    /// Route every LLM agent group to this provider key.
    #[arg(long)]
    pub provider: Option<String>,
    /// Number of sessions.
    #[arg(long)]
    pub sessions: Option<u32>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.environment_seed = seed;
            cfg.agent_seed = seed;
        }
        if let Some(n) = self.treatment {
            cfg.treatment = TreatmentSpec::preset(n).expect("range-checked by clap");
        }
        if let Some(n) = self.sessions {
            cfg.sessions = n;
        }
        if let Some(g) = self.guidance {
            cfg.prompt.guidance = g.into();
        }
        for group in cfg.agents.iter_mut().filter(|a| a.kind == AgentKind::Llm) {
            if self.guidance.is_some() {
                group.guidance = None;
            }
            if let Some(p) = &self.provider {
                group.provider = Some(p.clone());
            }
        }
    }
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(|e| fail(VALIDATION, e))?;
    let mut cfg = ExperimentConfig::from_toml_str(&text).map_err(|e| fail(VALIDATION, e))?;
    overrides.apply(&mut cfg);
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(fail(VALIDATION, ConfigError::Invalid(issues)))
    }
}

pub fn validate_config(path: &Path, overrides: &Overrides) -> CmdResult {
    let cfg = load_config(path, overrides)?;
    println!(
        "ok: {} — {} sessions of {} rounds, {} agents ({} llm), treatment {}",
        cfg.name,
        cfg.sessions,
        cfg.rounds,
        cfg.agents_per_session,
        cfg.llm_agent_count(),
        treatment_key(&cfg.treatment)
    );
    Ok(())
}

fn print_summary(records: &[SessionRecord]) {
    let labels = classify_sessions(records);
    let table = aggregate_table(
        &labels,
        Grouping {
            by_model: true,
            by_variant: true,
        },
    );
    println!("\nBehavior (% of valid decision pairs)\n{}", render_table(&table));
    print_herding(records);
    print_payoffs(records);
}

fn by_treatment(records: &[SessionRecord]) -> BTreeMap<String, Vec<SessionRecord>> {
    let mut out: BTreeMap<String, Vec<SessionRecord>> = BTreeMap::new();
    for r in records {
        out.entry(treatment_key(&r.treatment)).or_default().push(r.clone());
    }
    out
}

fn print_herding(records: &[SessionRecord]) {
    let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}%"));
    for (treatment, group) in by_treatment(records) {
        let f = herding_optimal_frequency(&group);
        println!(
            "Herding optimal in treatment {treatment}: {} of periods, {} of decisions",
            pct(f.per_period),
            pct(f.per_decision)
        );
    }
}

fn print_payoffs(records: &[SessionRecord]) {
    println!("\nPayoffs per agent (lire)");
    println!(
        "{:<10} {:<28} {:<9} {:>10} {:>10}",
        "treatment", "model", "variant", "expected", "realized"
    );
    for s in payoff_stats(records) {
        println!(
            "{:<10} {:<28} {:<9} {:>10.2} {:>10.2}",
            s.treatment, s.model, s.variant, s.expected.mean, s.realized.mean
        );
    }
}

pub fn run(path: &Path, overrides: &Overrides, out: Option<PathBuf>) -> CmdResult {
    let cfg = load_config(path, overrides)?;
    let out = out.unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    let providers = build_providers(&cfg).map_err(gateway_failure)?;
    log::info!("running {} sessions into {}", cfg.sessions, out.display());
    let outcome = run_experiment(&cfg, &providers, &out).map_err(session_failure)?;
    println!(
        "{} of {} sessions complete in {}",
        outcome.records.len(),
        cfg.sessions,
        out.display()
    );
    if !outcome.records.is_empty() {
        print_summary(&outcome.records);
    }
    if outcome.failures.is_empty() {
        return Ok(());
    }
    for (i, e) in &outcome.failures {
        eprintln!("session {i}: {e}");
    }
    let code = if outcome.failures.iter().any(|(_, e)| e.is_provider()) {
        PROVIDER
    } else {
        RUNTIME
    };
    Err(fail(
        code,
        anyhow!(
            "{} session(s) failed; rerun the same command to resume",
            outcome.failures.len()
        ),
    ))
}

pub fn replay(dir: &Path) -> CmdResult {
    let results = replay_bundle(dir).map_err(session_failure)?;
    let mut diverged = 0;
    for (i, r) in &results {
        match r {
            Ok(()) => println!("session {i}: ok"),
            Err(e) => {
                diverged += 1;
                println!("session {i}: {e}");
            }
        }
    }
    if diverged > 0 {
        return Err(fail(
            RUNTIME,
            anyhow!("{diverged} of {} sessions did not replay", results.len()),
        ));
    }
    println!("{} sessions replayed identically", results.len());
    Ok(())
}

fn labels_path(bundle: &Bundle) -> PathBuf {
    bundle.root().join("labels.json")
}

fn export_path(bundle: &Bundle, name: &str) -> Result<PathBuf, Failure> {
    let dir = bundle.exports_dir();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(|e| fail(RUNTIME, e))?;
    Ok(dir.join(name))
}

pub fn classify(dir: &Path) -> CmdResult {
    let bundle = Bundle::new(dir);
    let records = bundle.read_sessions().map_err(session_failure)?;
    let labels = classify_sessions(&records);
    bundle
        .write_json(&labels_path(&bundle), &labels)
        .map_err(session_failure)?;
    write_labels_csv(&export_path(&bundle, "labels.csv")?, &labels).map_err(|e| fail(RUNTIME, e))?;
    let invalid = labels.iter().filter(|l| !l.is_valid()).count();
    println!(
        "{} decision pairs from {} sessions labeled ({invalid} invalid)",
        labels.len(),
        records.len()
    );
    Ok(())
}

pub fn report(dir: &Path, by_model: bool, by_variant: bool, compare_human: bool) -> CmdResult {
    let bundle = Bundle::new(dir);
    let path = labels_path(&bundle);
    if !path.exists() {
        return Err(fail(
            RUNTIME,
            anyhow!(
                "{} has not been classified; run `herdsim classify {}` first",
                dir.display(),
                dir.display()
            ),
        ));
    }
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(|e| fail(RUNTIME, e))?;
    let labels: Vec<LabelRecord> = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a label file", path.display()))
        .map_err(|e| fail(RUNTIME, e))?;
    let records = bundle.read_sessions().map_err(session_failure)?;

    let table = aggregate_table(&labels, Grouping { by_model, by_variant });
    println!("Behavior (% of valid decision pairs)\n{}", render_table(&table));
    print_herding(&records);
    let payoffs = payoff_stats(&records);
    print_payoffs(&records);

    let export = |r: Result<(), herdsim::analysis::ExportError>| r.map_err(|e| fail(RUNTIME, e));
    export(write_table_csv(&export_path(&bundle, "behavior_table.csv")?, &table))?;
    export(write_payoffs_csv(&export_path(&bundle, "payoffs.csv")?, &payoffs))?;
    export(write_price_series_csv(
        &export_path(&bundle, "price_series.csv")?,
        &price_series(&records),
    ))?;
    if compare_human {
        let comparison = compare_reference(&table, HUMAN_REFERENCE);
        println!("\n{comparison}");
        let p = export_path(&bundle, "human_comparison.md")?;
        std::fs::write(&p, &comparison)
            .with_context(|| format!("cannot write {}", p.display()))
            .map_err(|e| fail(RUNTIME, e))?;
    }
    println!("\nexports written to {}", bundle.exports_dir().display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct GradedPassage {
    #[serde(flatten)]
    passage: Passage,
    grade: Option<GradedReasoning>,
}

pub fn grade(dir: &Path, grader: Option<&str>, limit: Option<usize>) -> CmdResult {
    let bundle = Bundle::new(dir);
    let manifest = bundle
        .read_manifest()
        .map_err(session_failure)?
        .ok_or_else(|| fail(RUNTIME, anyhow!("{} has no manifest.json", dir.display())))?;
    let config = match grader {
        Some(key) => manifest.config.providers.get(key).cloned().ok_or_else(|| {
            fail(
                VALIDATION,
                anyhow!("no [providers.{key}] in the bundle's configuration"),
            )
        })?,
        None => ProviderConfig::offline("heuristic_grader", AdapterKind::HeuristicGrader),
    };
    let gateway = ProviderHandle::build(&config).map_err(gateway_failure)?.gateway(0, &[]);

    let records = bundle.read_sessions().map_err(session_failure)?;
    let mut passages = reasoning_passages(&records);
    if let Some(n) = limit {
        passages.truncate(n);
    }
    let texts: Vec<String> = passages.iter().map(|p| p.text.clone()).collect();
    let grades = grade_reasoning(&texts, &gateway).map_err(gateway_failure)?;
    let summary = aggregate_grades(&grades);
    let graded: Vec<GradedPassage> = passages
        .into_iter()
        .zip(grades)
        .map(|(passage, grade)| GradedPassage { passage, grade })
        .collect();
    bundle
        .write_json(&export_path(&bundle, "grades.json")?, &graded)
        .map_err(session_failure)?;

    println!("{} passages graded, {} unreadable", summary.graded, summary.ungraded);
    println!("Q1 optimal action identified      {:>6.1}%", 100.0 * summary.q1_true);
    println!("Q2 expected value from accuracy   {:>6.1}%", 100.0 * summary.q2_true);
    println!("Q3 considers the trading history  {:>6.1}%", 100.0 * summary.q3_true);
    for (answer, share) in &summary.q4 {
        println!("Q4 {:<31}{:>6.1}%", answer.phrase(), 100.0 * share);
    }
    println!(
        "Q5 emotional score mean {:.1}, median {:.1}",
        summary.q5_mean, summary.q5_median
    );
    Ok(())
}
