//! Grading of free-text reasoning by a second model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::gateway::{ChatProvider, ChatRequest, Gateway, GatewayError, ProviderError, ProviderReply};
use crate::llm::parse::objects;
use crate::market::Signal;
use crate::session::SessionRecord;

/// The five questions put to the grader, in order.
pub const GRADING_QUESTIONS: [&str; 5] = [
    "Is the trader comparing the price to the expected fundamental value of the asset? (True/False)",
    "Is the expected value computed using only the signal accuracy and the signal, e.g., 0.7*100+0*0.3=70 or 0.7*0+0.3*100=30? (True/False)",
    "Does the trader consider the market trend or the trading history in their reasoning? (True/False)",
    "How does the trader characterize the attractiveness of the investment (very attractive, attractive, reasonable, less attractive, no incentive)?",
    "On a scale from 0-100 (where 100 represents purely emotional and 0 represents purely rational or logical), how much is the investor driven by emotions in their assessment?",
];

const GRADER_SYSTEM: &str = "You read short passages in which a trader in a laboratory asset market explains a decision. Answer questions about each passage precisely and reply with JSON only.";

const PASSAGE_START: &str = "<passage>";
const PASSAGE_END: &str = "</passage>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attractiveness {
    VeryAttractive,
    Attractive,
    Reasonable,
    LessAttractive,
    NoIncentive,
}

impl Attractiveness {
    pub const ALL: [Attractiveness; 5] = [
        Attractiveness::VeryAttractive,
        Attractiveness::Attractive,
        Attractiveness::Reasonable,
        Attractiveness::LessAttractive,
        Attractiveness::NoIncentive,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            Attractiveness::VeryAttractive => "very attractive",
            Attractiveness::Attractive => "attractive",
            Attractiveness::Reasonable => "reasonable",
            Attractiveness::LessAttractive => "less attractive",
            Attractiveness::NoIncentive => "no incentive",
        }
    }

    pub fn from_phrase(s: &str) -> Option<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', '-'], " ");
        Self::ALL.into_iter().find(|a| a.phrase() == norm)
    }
}

/// Answers to the five questions for one passage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedReasoning {
    pub q1: bool,
    pub q2: bool,
    pub q3: bool,
    pub q4: Attractiveness,
    /// 0 (purely rational) to 100 (purely emotional).
    pub q5: u8,
}

/// System and user prompt for grading one passage.
pub fn build_grading_prompt(passage: &str) -> (String, String) {
    let mut user = String::from("Read the following reasoning given by a trader:\n\n");
    user.push_str(PASSAGE_START);
    user.push('\n');
    user.push_str(passage.trim());
    user.push('\n');
    user.push_str(PASSAGE_END);
    user.push_str("\n\nAnswer the following five questions:\n");
    for (i, q) in GRADING_QUESTIONS.iter().enumerate() {
        user.push_str(&format!("Question {}: {q}\n", i + 1));
    }
    user.push_str(
        "\nReply in JSON with the format:\n{\n    \"q1\": true or false,\n    \"q2\": true or false,\n    \"q3\": true or false,\n    \"q4\": \"very attractive\" | \"attractive\" | \"reasonable\" | \"less attractive\" | \"no incentive\",\n    \"q5\": an integer from 0 to 100\n}",
    );
    (GRADER_SYSTEM.to_string(), user)
}

fn as_bool(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" => Some(true),
            "false" | "no" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

fn as_score(v: &Value) -> Option<u8> {
    let x = match v {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().trim_end_matches('%').parse().ok()?,
        _ => return None,
    };
    (0.0..=100.0).contains(&x).then(|| x.round() as u8)
}

/// Reads the five answers from a grader reply; `None` if any is missing
/// or out of range.
pub fn parse_grade(text: &str) -> Option<GradedReasoning> {
    objects(text).into_iter().find_map(|map| {
        let get = |k: &str| {
            map.iter()
                .find(|(key, _)| key.trim().eq_ignore_ascii_case(k))
                .map(|(_, v)| v)
        };
        Some(GradedReasoning {
            q1: as_bool(get("q1")?)?,
            q2: as_bool(get("q2")?)?,
            q3: as_bool(get("q3")?)?,
            q4: Attractiveness::from_phrase(get("q4")?.as_str()?)?,
            q5: as_score(get("q5")?)?,
        })
    })
}

/// Offline grader answering by keyword rules. Deterministic, so it keeps
/// the grading pipeline testable without a model; its answers are a rough
/// stand-in, not a substitute for a real grader.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicGrader;

const HISTORY_WORDS: &[&str] = &[
    "history",
    "previous",
    "past",
    "trend",
    "momentum",
    "other participants",
    "other traders",
    "increasing",
    "decreasing",
    "rising",
    "falling",
    "has risen",
    "has fallen",
    "market has",
];
const EMOTION_WORDS: &[&str] = &[
    "feel", "fear", "afraid", "panic", "excited", "worried", "nervous", "gut", "hope", "regret", "anxious",
];

impl HeuristicGrader {
    pub fn grade(passage: &str) -> GradedReasoning {
        let p = passage.to_ascii_lowercase();
        let has = |words: &[&str]| words.iter().any(|w| p.contains(w));
        let q1 = p.contains("price") && (p.contains("expected value") || p.contains("worth") || p.contains("value"));
        let q3 = has(HISTORY_WORDS);
        let accuracy_terms = has(&["% chance", "70%", "30%", "0.7", "0.3", "signal accuracy"]);
        let q2 = accuracy_terms && !q3;
        let q4 = if has(&["no incentive", "no clear advantage", "no advantage", "no profit"]) {
            Attractiveness::NoIncentive
        } else if has(&[
            "very attractive",
            "highly profitable",
            "significant",
            "substantial",
            "strong",
        ]) {
            Attractiveness::VeryAttractive
        } else if has(&["matches", "equal to", "fair", "close to"]) {
            Attractiveness::Reasonable
        } else if has(&["risky", "uncertain", "limited", "small"]) {
            Attractiveness::LessAttractive
        } else if has(&["profit", "undervalued", "overvalued", "opportunity", "below", "above"]) {
            Attractiveness::Attractive
        } else {
            Attractiveness::Reasonable
        };
        let hits = EMOTION_WORDS.iter().filter(|w| p.contains(*w)).count();
        GradedReasoning {
            q1,
            q2,
            q3,
            q4,
            q5: (hits * 20).min(100) as u8,
        }
    }
}

impl ChatProvider for HeuristicGrader {
    fn send(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        let user = &request.user;
        let passage = match (user.find(PASSAGE_START), user.find(PASSAGE_END)) {
            (Some(a), Some(b)) if a < b => &user[a + PASSAGE_START.len()..b],
            _ => return Err(ProviderError::Fatal("heuristic grader expects a grading prompt".into())),
        };
        let g = Self::grade(passage);
        let reply = serde_json::json!({
            "q1": g.q1,
            "q2": g.q2,
            "q3": g.q3,
            "q4": g.q4.phrase(),
            "q5": g.q5,
        });
        Ok(reply.to_string().into())
    }
}

/// One reasoning passage taken from a session record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub treatment: String,
    pub session: u32,
    pub round: u32,
    pub agent: usize,
    pub model: String,
    pub signal: Signal,
    pub text: String,
}

/// All non-empty reasoning texts of valid pairs.
pub fn reasoning_passages(records: &[SessionRecord]) -> Vec<Passage> {
    let mut out = Vec::new();
    for r in records {
        let treatment = super::treatment_key(&r.treatment);
        for round in &r.rounds {
            for (agent, pair) in round.decisions.iter().enumerate().filter(|(_, p)| p.valid) {
                for signal in [Signal::Good, Signal::Bad] {
                    let text = pair.reasoning_for(signal).trim();
                    if text.is_empty() {
                        continue;
                    }
                    out.push(Passage {
                        treatment: treatment.clone(),
                        session: r.session_index,
                        round: round.round,
                        agent,
                        model: r.agents.get(agent).map_or_else(String::new, |i| i.model_key.clone()),
                        signal,
                        text: text.to_string(),
                    });
                }
            }
        }
    }
    out
}

/// Grades each passage; unparsable replies leave the passage ungraded
/// (`None`). Transport and auth failures abort.
pub fn grade_reasoning(passages: &[String], gateway: &Gateway) -> Result<Vec<Option<GradedReasoning>>, GatewayError> {
    passages
        .iter()
        .map(|p| {
            let (system, user) = build_grading_prompt(p);
            let reply = gateway.complete(&system, &user)?;
            let grade = parse_grade(&reply.text);
            if grade.is_none() {
                log::warn!("grader reply could not be parsed; passage left ungraded");
            }
            Ok(grade)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeSummary {
    pub graded: usize,
    pub ungraded: usize,
    /// Fractions of `True` answers among graded passages.
    pub q1_true: f64,
    pub q2_true: f64,
    pub q3_true: f64,
    /// Fraction of graded passages per attractiveness answer.
    pub q4: BTreeMap<Attractiveness, f64>,
    pub q5_mean: f64,
    pub q5_median: f64,
}

pub fn aggregate_grades(grades: &[Option<GradedReasoning>]) -> GradeSummary {
    let graded: Vec<&GradedReasoning> = grades.iter().flatten().collect();
    let n = graded.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let q4 = Attractiveness::ALL
        .into_iter()
        .map(|a| (a, frac(graded.iter().filter(|g| g.q4 == a).count())))
        .collect();
    let scores: Vec<f64> = graded.iter().map(|g| f64::from(g.q5)).collect();
    let stats = super::Stats::of(&scores);
    GradeSummary {
        graded: n,
        ungraded: grades.len() - n,
        q1_true: frac(graded.iter().filter(|g| g.q1).count()),
        q2_true: frac(graded.iter().filter(|g| g.q2).count()),
        q3_true: frac(graded.iter().filter(|g| g.q3).count()),
        q4,
        q5_mean: stats.mean,
        q5_median: stats.median,
    }
}
