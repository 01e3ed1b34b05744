//! Behavior taxonomy and aggregate reporting.
//!
//! Every valid decision pair gets exactly one label; cascade trading is
//! further split by the sign of the pre-trade imbalance. Tables are
//! percentages over valid pairs, with invalid pairs counted on the side.

mod export;
mod grading;
mod payoff;
mod reference;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agents::DecisionPair;
use crate::market::{Action, HerdingVerdict, PriceUpdating, Signal, TreatmentSpec};
use crate::session::SessionRecord;

pub use export::{write_labels_csv, write_payoffs_csv, write_price_series_csv, write_table_csv, ExportError};
pub use grading::{
    aggregate_grades, build_grading_prompt, grade_reasoning, parse_grade, reasoning_passages, Attractiveness,
    GradeSummary, GradedReasoning, HeuristicGrader, Passage, GRADING_QUESTIONS,
};
pub use payoff::{payoff_stats, price_series, PayoffSummary, PriceSeries, Stats};
pub use reference::{compare_reference, Metric, ReferenceValue, HUMAN_REFERENCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Rational,
    PartialRational,
    CascadeTrading,
    CascadeNoTrading,
    Error,
}

impl Behavior {
    pub const ALL: [Behavior; 5] = [
        Behavior::Rational,
        Behavior::PartialRational,
        Behavior::CascadeTrading,
        Behavior::CascadeNoTrading,
        Behavior::Error,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeDetail {
    OptimalHerding,
    SuboptimalHerding,
    Contrarian,
    /// Cascade trading with a zero imbalance: no majority to follow.
    Undetermined,
}

impl CascadeDetail {
    pub const ALL: [CascadeDetail; 4] = [
        CascadeDetail::OptimalHerding,
        CascadeDetail::SuboptimalHerding,
        CascadeDetail::Contrarian,
        CascadeDetail::Undetermined,
    ];
}

/// `cascade_detail` is present iff `label` is cascade trading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BehaviorLabel {
    pub label: Behavior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cascade_detail: Option<CascadeDetail>,
}

impl BehaviorLabel {
    fn plain(label: Behavior) -> Self {
        Self {
            label,
            cascade_detail: None,
        }
    }
}

/// Labels one pair given the pre-trade imbalance and herding verdict.
/// Returns `None` for invalid pairs, which are excluded from tables.
pub fn classify_decision(pair: &DecisionPair, imbalance: i32, verdict: HerdingVerdict) -> Option<BehaviorLabel> {
    if !pair.valid {
        return None;
    }
    use Action::*;
    let label = match (pair.action_good, pair.action_bad) {
        (Buy, Sell) => BehaviorLabel::plain(Behavior::Rational),
        (Buy, NoTrade) | (NoTrade, Sell) => BehaviorLabel::plain(Behavior::PartialRational),
        (NoTrade, NoTrade) => BehaviorLabel::plain(Behavior::CascadeNoTrading),
        (a @ (Buy | Sell), b) if a == b => {
            let detail = if imbalance == 0 {
                CascadeDetail::Undetermined
            } else if a.direction() == imbalance.signum() {
                if verdict.action() == Some(a) {
                    CascadeDetail::OptimalHerding
                } else {
                    CascadeDetail::SuboptimalHerding
                }
            } else {
                CascadeDetail::Contrarian
            };
            BehaviorLabel {
                label: Behavior::CascadeTrading,
                cascade_detail: Some(detail),
            }
        }
        // Any remaining pair takes an anti-signal action.
        _ => BehaviorLabel::plain(Behavior::Error),
    };
    Some(label)
}

/// Short name of a treatment: `I`, `II`, `III`, or the parameters.
pub fn treatment_key(spec: &TreatmentSpec) -> String {
    for (n, name) in [(1, "I"), (2, "II"), (3, "III")] {
        if TreatmentSpec::preset(n).as_ref() == Some(spec) {
            return name.to_string();
        }
    }
    let mode = match spec.price_updating {
        PriceUpdating::Bayesian => "bayesian",
        PriceUpdating::Frozen => "frozen",
    };
    format!(
        "rho={} mu={} q={} {mode}",
        spec.event_probability, spec.informed_fraction, spec.signal_accuracy
    )
}

/// One classified decision pair with its grouping keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub treatment: String,
    pub session: u32,
    pub round: u32,
    pub agent: usize,
    pub model: String,
    pub variant: String,
    pub price: f64,
    pub imbalance: i32,
    pub verdict: HerdingVerdict,
    /// Empty for invalid pairs.
    pub label: Option<Behavior>,
    pub cascade_detail: Option<CascadeDetail>,
    pub action_good: Action,
    pub action_bad: Action,
    /// Action taken on the signal realized that round.
    pub realized_signal: Signal,
}

impl LabelRecord {
    pub fn is_valid(&self) -> bool {
        self.label.is_some()
    }
}

/// Prompt-variant key of an agent: guidance for LLM agents, `rule` otherwise.
fn variant_key(info: &crate::session::AgentInfo) -> String {
    match info.guidance {
        Some(g) => g.name().to_string(),
        None => "rule".to_string(),
    }
}

/// Labels every pair of every round.
pub fn classify_sessions(records: &[SessionRecord]) -> Vec<LabelRecord> {
    let mut out = Vec::new();
    for record in records {
        let treatment = treatment_key(&record.treatment);
        for round in &record.rounds {
            for (agent, pair) in round.decisions.iter().enumerate() {
                let label = classify_decision(pair, round.imbalance, round.verdict);
                let info = record.agents.get(agent);
                out.push(LabelRecord {
                    treatment: treatment.clone(),
                    session: record.session_index,
                    round: round.round,
                    agent,
                    model: info.map_or_else(|| "unknown".to_string(), |i| i.model_key.clone()),
                    variant: info.map_or_else(|| "rule".to_string(), variant_key),
                    price: round.displayed_price,
                    imbalance: round.imbalance,
                    verdict: round.verdict,
                    label: label.map(|l| l.label),
                    cascade_detail: label.and_then(|l| l.cascade_detail),
                    action_good: pair.action_good,
                    action_bad: pair.action_bad,
                    realized_signal: round.realized_signal,
                });
            }
        }
    }
    out
}

/// Which keys split the table into rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Grouping {
    pub by_model: bool,
    pub by_variant: bool,
}

/// Name used for the equal-weight model-average rows.
pub const MODEL_AVERAGE: &str = "average";

/// One table row; percentages are over valid pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorRow {
    pub treatment: String,
    pub model: String,
    pub variant: String,
    pub valid: usize,
    pub invalid: usize,
    pub rational: f64,
    pub partial_rational: f64,
    pub cascade_trading: f64,
    pub optimal_herding: f64,
    pub suboptimal_herding: f64,
    pub contrarian: f64,
    pub undetermined: f64,
    pub cascade_no_trading: f64,
    pub error: f64,
    /// Share of trading periods whose pre-trade verdict calls for herding.
    pub herding_optimal_periods: Option<f64>,
    /// Same, counted over valid decisions.
    pub herding_optimal_decisions: Option<f64>,
}

impl BehaviorRow {
    pub fn percent(&self, behavior: Behavior) -> f64 {
        match behavior {
            Behavior::Rational => self.rational,
            Behavior::PartialRational => self.partial_rational,
            Behavior::CascadeTrading => self.cascade_trading,
            Behavior::CascadeNoTrading => self.cascade_no_trading,
            Behavior::Error => self.error,
        }
    }

    /// Sum of the five top-level categories; 100 for any non-empty row.
    pub fn total(&self) -> f64 {
        Behavior::ALL.iter().map(|&b| self.percent(b)).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BehaviorTable {
    pub rows: Vec<BehaviorRow>,
}

impl BehaviorTable {
    pub fn find(&self, treatment: &str, model: &str) -> Option<&BehaviorRow> {
        self.rows.iter().find(|r| r.treatment == treatment && r.model == model)
    }
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

fn row_for(treatment: &str, model: &str, variant: &str, labels: &[&LabelRecord]) -> BehaviorRow {
    let valid: Vec<&&LabelRecord> = labels.iter().filter(|l| l.is_valid()).collect();
    let n = valid.len();
    let count = |b: Behavior| valid.iter().filter(|l| l.label == Some(b)).count();
    let detail = |d: CascadeDetail| valid.iter().filter(|l| l.cascade_detail == Some(d)).count();

    let periods: BTreeSet<(u32, u32)> = labels.iter().map(|l| (l.session, l.round)).collect();
    let herd_periods: BTreeSet<(u32, u32)> = labels
        .iter()
        .filter(|l| l.verdict != HerdingVerdict::None)
        .map(|l| (l.session, l.round))
        .collect();
    let herd_decisions = valid.iter().filter(|l| l.verdict != HerdingVerdict::None).count();

    BehaviorRow {
        treatment: treatment.to_string(),
        model: model.to_string(),
        variant: variant.to_string(),
        valid: n,
        invalid: labels.len() - n,
        rational: pct(count(Behavior::Rational), n),
        partial_rational: pct(count(Behavior::PartialRational), n),
        cascade_trading: pct(count(Behavior::CascadeTrading), n),
        optimal_herding: pct(detail(CascadeDetail::OptimalHerding), n),
        suboptimal_herding: pct(detail(CascadeDetail::SuboptimalHerding), n),
        contrarian: pct(detail(CascadeDetail::Contrarian), n),
        undetermined: pct(detail(CascadeDetail::Undetermined), n),
        cascade_no_trading: pct(count(Behavior::CascadeNoTrading), n),
        error: pct(count(Behavior::Error), n),
        herding_optimal_periods: (!periods.is_empty()).then(|| pct(herd_periods.len(), periods.len())),
        herding_optimal_decisions: (n > 0).then(|| pct(herd_decisions, n)),
    }
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// Equal-weight average of per-model rows.
fn average_row(rows: &[&BehaviorRow]) -> BehaviorRow {
    let k = rows.len() as f64;
    let avg = |f: fn(&BehaviorRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / k;
    BehaviorRow {
        treatment: rows[0].treatment.clone(),
        model: MODEL_AVERAGE.to_string(),
        variant: rows[0].variant.clone(),
        valid: rows.iter().map(|r| r.valid).sum(),
        invalid: rows.iter().map(|r| r.invalid).sum(),
        rational: avg(|r| r.rational),
        partial_rational: avg(|r| r.partial_rational),
        cascade_trading: avg(|r| r.cascade_trading),
        optimal_herding: avg(|r| r.optimal_herding),
        suboptimal_herding: avg(|r| r.suboptimal_herding),
        contrarian: avg(|r| r.contrarian),
        undetermined: avg(|r| r.undetermined),
        cascade_no_trading: avg(|r| r.cascade_no_trading),
        error: avg(|r| r.error),
        herding_optimal_periods: mean_opt(rows.iter().map(|r| r.herding_optimal_periods)),
        herding_optimal_decisions: mean_opt(rows.iter().map(|r| r.herding_optimal_decisions)),
    }
}

/// Percentages per group. Rows are always split by treatment; with
/// `by_model` each (treatment, variant) also gets a model-average row that
/// weights every model equally.
pub fn aggregate_table(labels: &[LabelRecord], grouping: Grouping) -> BehaviorTable {
    let mut groups: BTreeMap<(String, String, String), Vec<&LabelRecord>> = BTreeMap::new();
    for l in labels {
        let model = if grouping.by_model {
            l.model.clone()
        } else {
            "all".to_string()
        };
        let variant = if grouping.by_variant {
            l.variant.clone()
        } else {
            "all".to_string()
        };
        groups.entry((l.treatment.clone(), variant, model)).or_default().push(l);
    }
    let mut rows = Vec::new();
    let mut current: Vec<BehaviorRow> = Vec::new();
    let flush = |current: &mut Vec<BehaviorRow>, rows: &mut Vec<BehaviorRow>| {
        if grouping.by_model && !current.is_empty() {
            let refs: Vec<&BehaviorRow> = current.iter().collect();
            let avg = average_row(&refs);
            rows.append(current);
            rows.push(avg);
        } else {
            rows.append(current);
        }
    };
    let mut last_key: Option<(String, String)> = None;
    for ((treatment, variant, model), members) in &groups {
        let key = (treatment.clone(), variant.clone());
        if last_key.as_ref() != Some(&key) {
            flush(&mut current, &mut rows);
            last_key = Some(key);
        }
        current.push(row_for(treatment, model, variant, members));
    }
    flush(&mut current, &mut rows);
    BehaviorTable { rows }
}

/// How often herding is optimal, as percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HerdingFrequency {
    /// Over trading periods; `None` without periods.
    pub per_period: Option<f64>,
    /// Over valid decision pairs; `None` without any.
    pub per_decision: Option<f64>,
}

pub fn herding_optimal_frequency(records: &[SessionRecord]) -> HerdingFrequency {
    let mut periods = 0usize;
    let mut herd_periods = 0usize;
    let mut decisions = 0usize;
    let mut herd_decisions = 0usize;
    for round in records.iter().flat_map(|r| &r.rounds) {
        let herd = round.verdict != HerdingVerdict::None;
        let valid = round.decisions.iter().filter(|d| d.valid).count();
        periods += 1;
        decisions += valid;
        if herd {
            herd_periods += 1;
            herd_decisions += valid;
        }
    }
    HerdingFrequency {
        per_period: (periods > 0).then(|| pct(herd_periods, periods)),
        per_decision: (decisions > 0).then(|| pct(herd_decisions, decisions)),
    }
}

/// Renders a table as fixed-width text for terminals.
pub fn render_table(table: &BehaviorTable) -> String {
    let mut out = format!(
        "{:<10} {:<28} {:<9} {:>6} {:>9} {:>9} {:>9} {:>8} {:>8} {:>8} {:>8} {:>9} {:>7} {:>8}\n",
        "treatment",
        "model",
        "variant",
        "valid",
        "rational",
        "partial",
        "cascade",
        "opt.herd",
        "sub.herd",
        "contra",
        "undet.",
        "no-trade",
        "error",
        "herd-opt"
    );
    for r in &table.rows {
        let herd = r
            .herding_optimal_periods
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
        out.push_str(&format!(
            "{:<10} {:<28} {:<9} {:>6} {:>9.2} {:>9.2} {:>9.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>9.2} {:>7.2} {:>8}\n",
            r.treatment,
            r.model,
            r.variant,
            r.valid,
            r.rational,
            r.partial_rational,
            r.cascade_trading,
            r.optimal_herding,
            r.suboptimal_herding,
            r.contrarian,
            r.undetermined,
            r.cascade_no_trading,
            r.error,
            herd
        ));
    }
    out
}
