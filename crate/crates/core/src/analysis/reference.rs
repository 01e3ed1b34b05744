//! Published reference figures for side-by-side reports.
//!
//! These are fixed constants, never recomputed. `human` holds figures from
//! the human laboratory, `ai` the averages reported for LLM agents.

use super::{BehaviorRow, BehaviorTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Rational,
    /// Rational plus partially rational.
    RationalOrPartial,
    Error,
    /// Any information cascade (trading or not).
    Cascade,
    CascadeTrading,
    /// Optimal herding among decisions.
    OptimalHerding,
    /// Share of decisions in which herding is optimal.
    HerdingOptimal,
    /// Mean expected payoff per agent, in lire.
    ExpectedPayoff,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rational => "rational",
            Metric::RationalOrPartial => "rational + partial",
            Metric::Error => "error",
            Metric::Cascade => "cascade",
            Metric::CascadeTrading => "cascade trading",
            Metric::OptimalHerding => "optimal herding",
            Metric::HerdingOptimal => "herding optimal",
            Metric::ExpectedPayoff => "expected payoff (lire)",
        }
    }

    /// The simulated value of this metric in a table row, when the row has it.
    pub fn of_row(self, row: &BehaviorRow) -> Option<f64> {
        match self {
            Metric::Rational => Some(row.rational),
            Metric::RationalOrPartial => Some(row.rational + row.partial_rational),
            Metric::Error => Some(row.error),
            Metric::Cascade => Some(row.cascade_trading + row.cascade_no_trading),
            Metric::CascadeTrading => Some(row.cascade_trading),
            Metric::OptimalHerding => Some(row.optimal_herding),
            Metric::HerdingOptimal => row.herding_optimal_decisions,
            Metric::ExpectedPayoff => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceValue {
    /// `I`, `II`, `III`, or `all` for figures quoted across treatments.
    pub treatment: &'static str,
    /// `baseline` or `optimal` prompt guidance.
    pub guidance: &'static str,
    pub metric: Metric,
    pub human: Option<f64>,
    pub ai: Option<f64>,
    /// Where the figure comes from and how to read it.
    pub source: &'static str,
}

const fn r(
    treatment: &'static str,
    guidance: &'static str,
    metric: Metric,
    human: Option<f64>,
    ai: Option<f64>,
    source: &'static str,
) -> ReferenceValue {
    ReferenceValue {
        treatment,
        guidance,
        metric,
        human,
        ai,
        source,
    }
}

pub const HUMAN_REFERENCE: &[ReferenceValue] = &[
    r(
        "I",
        "baseline",
        Metric::Rational,
        Some(46.0),
        Some(61.0),
        "share of decisions, treatment I",
    ),
    r(
        "I",
        "baseline",
        Metric::RationalOrPartial,
        Some(65.0),
        Some(90.0),
        "share of decisions, treatment I",
    ),
    r(
        "I",
        "baseline",
        Metric::Error,
        Some(3.40),
        Some(0.0),
        "share of all decisions, treatment I",
    ),
    r(
        "II",
        "baseline",
        Metric::Rational,
        Some(51.0),
        Some(97.0),
        "share of decisions, treatment II",
    ),
    r(
        "II",
        "baseline",
        Metric::CascadeTrading,
        None,
        Some(0.0),
        "no LLM agent herded in treatment II",
    ),
    r(
        "all",
        "baseline",
        Metric::Cascade,
        Some(20.0),
        None,
        "about 20% for humans; 0-9% of LLM decisions across treatments",
    ),
    r(
        "I",
        "baseline",
        Metric::CascadeTrading,
        None,
        Some(9.4),
        "LLM baseline, treatment I",
    ),
    r(
        "I",
        "optimal",
        Metric::CascadeTrading,
        None,
        Some(3.5),
        "LLM with optimal guidance, treatment I",
    ),
    r(
        "II",
        "optimal",
        Metric::HerdingOptimal,
        None,
        Some(81.51),
        "share of decisions, average across LLMs",
    ),
    r(
        "II",
        "optimal",
        Metric::OptimalHerding,
        None,
        Some(47.43),
        "share of decisions, average across LLMs",
    ),
    r(
        "III",
        "optimal",
        Metric::HerdingOptimal,
        None,
        Some(50.90),
        "share of decisions, average across LLMs",
    ),
    r(
        "III",
        "optimal",
        Metric::OptimalHerding,
        None,
        Some(44.36),
        "share of decisions, average across LLMs",
    ),
    r(
        "II",
        "baseline",
        Metric::ExpectedPayoff,
        None,
        Some(3.8),
        "mean expected payoff, baseline LLM agents",
    ),
    r(
        "II",
        "optimal",
        Metric::ExpectedPayoff,
        None,
        Some(15.0),
        "mean expected payoff, optimal-guidance LLM agents",
    ),
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Markdown table placing simulated rows next to the reference figures.
/// Reference entries with no matching simulated row are listed as omitted.
/// No statistical comparison is made.
pub fn compare_reference(table: &BehaviorTable, reference: &[ReferenceValue]) -> String {
    let mut out = String::from(
        "| treatment | model | variant | metric | simulated | human | LLM reference | note |\n|---|---|---|---|---|---|---|---|\n",
    );
    let mut omitted = Vec::new();
    for rv in reference {
        let rows: Vec<&BehaviorRow> = table
            .rows
            .iter()
            .filter(|row| {
                (rv.treatment == "all" || row.treatment == rv.treatment)
                    && (row.variant == "all" || row.variant == rv.guidance || row.variant == "rule")
            })
            .collect();
        let usable: Vec<(&BehaviorRow, f64)> = rows
            .iter()
            .filter_map(|row| rv.metric.of_row(row).map(|v| (*row, v)))
            .collect();
        if usable.is_empty() {
            omitted.push(rv);
            continue;
        }
        for (row, value) in usable {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {:.2} | {} | {} | {} |\n",
                row.treatment,
                row.model,
                row.variant,
                rv.metric.name(),
                value,
                cell(rv.human),
                cell(rv.ai),
                rv.source
            ));
        }
    }
    if !omitted.is_empty() {
        out.push_str("\nOmitted (no matching simulated data):\n");
        for rv in omitted {
            out.push_str(&format!(
                "- treatment {} ({}), {}: human {}, LLM {}\n",
                rv.treatment,
                rv.guidance,
                rv.metric.name(),
                cell(rv.human),
                cell(rv.ai)
            ));
        }
    }
    out
}
