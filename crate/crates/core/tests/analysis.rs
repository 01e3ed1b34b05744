mod common;

use std::sync::Arc;

use herdsim::agents::AgentKind;
use herdsim::analysis::{
    aggregate_grades, aggregate_table, classify_decision, classify_sessions, compare_reference, grade_reasoning,
    herding_optimal_frequency, parse_grade, payoff_stats, price_series, write_labels_csv, write_payoffs_csv,
    write_price_series_csv, write_table_csv, Behavior, CascadeDetail, Grouping, HeuristicGrader, HUMAN_REFERENCE,
};
use herdsim::gateway::{AdapterKind, Gateway, ProviderConfig, ScriptedProvider};
use herdsim::market::expected_payoff;
use herdsim::{Action, AssetValue, BeliefPair, DecisionPair, HerdingVerdict, SessionRecord, Signal, TreatmentSpec};

fn run_forced(spec: TreatmentSpec, kind: AgentKind, signals: &[Signal]) -> SessionRecord {
    common::forced_session(spec, &[kind; 8], signals, AssetValue::High)
}

#[test]
fn rational_agents_never_err_or_herd_badly() {
    for spec in [
        TreatmentSpec::treatment_i(),
        TreatmentSpec::treatment_ii(),
        TreatmentSpec::treatment_iii(),
    ] {
        let cfg = common::rule_config(spec, AgentKind::BayesianRational, 50, 3);
        for l in classify_sessions(&common::simulate_rules(&cfg)) {
            match (l.label.unwrap(), l.cascade_detail) {
                (Behavior::Rational | Behavior::PartialRational, None) => {}
                (Behavior::CascadeTrading, Some(CascadeDetail::OptimalHerding)) => {}
                other => panic!("{other:?} in {l:?}"),
            }
        }
    }
}

#[test]
fn signal_only_contrarian_exactly_outside_thirty_seventy() {
    // Signal-only traders alone never move the price past 70, so rational
    // leaders push it there first.
    use AgentKind::{BayesianRational as R, SignalOnly as S};
    let mut records = Vec::new();
    for lead in 0..4 {
        let mut kinds = [S; 8];
        kinds[..lead].fill(R);
        for (value, signal) in [(AssetValue::High, Signal::Good), (AssetValue::Low, Signal::Bad)] {
            let mut signals = vec![signal; 8];
            signals[6] = if signal == Signal::Good {
                Signal::Bad
            } else {
                Signal::Good
            };
            records.push(common::forced_session(
                TreatmentSpec::treatment_i(),
                &kinds,
                &signals,
                value,
            ));
        }
    }
    let labels = classify_sessions(&records);
    let mut seen = 0;
    for l in labels.iter().filter(|l| l.model == S.name()) {
        let contrarian = l.cascade_detail == Some(CascadeDetail::Contrarian);
        assert_eq!(contrarian, l.price > 70.0 || l.price < 30.0, "{l:?}");
        seen += usize::from(contrarian);
    }
    assert!(seen > 0);
}

#[test]
fn herding_frequency_fixture_is_half() {
    use Signal::{Bad as B, Good as G};
    let record = run_forced(
        TreatmentSpec::treatment_iii(),
        AgentKind::SignalOnly,
        &[G, G, B, G, G, B, B, G],
    );
    let freq = herding_optimal_frequency(&[record]);
    assert_eq!(freq.per_period, Some(50.0));
    assert_eq!(freq.per_decision, Some(50.0));
}

#[test]
fn treatment_one_never_calls_for_herding() {
    let cfg = common::rule_config(TreatmentSpec::treatment_i(), AgentKind::Noise, 100, 6);
    let f = herding_optimal_frequency(&common::simulate_rules(&cfg));
    assert_eq!(f.per_period, Some(0.0));
}

#[test]
fn expected_payoff_of_a_first_round_buy() {
    let beliefs = BeliefPair {
        ev_good: 70.0,
        ev_bad: 30.0,
    };
    assert_eq!(expected_payoff(Action::Buy, 50.0, &beliefs, Signal::Good), 20.0);
    let record = run_forced(TreatmentSpec::treatment_i(), AgentKind::SignalOnly, &[Signal::Good; 8]);
    let first = &record.payoffs[0];
    assert_eq!(first.trades[0].action, Action::Buy);
    assert!((first.expected_lire - 20.0).abs() < 1e-9);
}

#[test]
fn no_trade_sessions_have_zero_payoffs() {
    let record = run_forced(TreatmentSpec::treatment_i(), AgentKind::FixedHerd, &[Signal::Good; 8]);
    let stats = payoff_stats(&[record]);
    assert_eq!(stats.len(), 1);
    for s in [&stats[0].realized, &stats[0].expected, &stats[0].decision_expected] {
        assert_eq!((s.mean, s.median, s.deciles), (0.0, 0.0, [0.0; 9]));
    }
}

#[test]
fn price_series_shapes() {
    let cfg = common::rule_config(TreatmentSpec::treatment_iii(), AgentKind::Noise, 4, 1);
    let series = price_series(&common::simulate_rules(&cfg));
    assert_eq!(series.len(), 4);
    for s in &series {
        assert_eq!(s.points.len(), 8);
        assert!(s.points.iter().all(|p| p.1 == 50.0));
    }
    let rising = price_series(&[run_forced(
        TreatmentSpec::treatment_i(),
        AgentKind::BayesianRational,
        &[Signal::Good; 8],
    )]);
    assert!(rising[0].points.windows(2).all(|w| w[1].1 > w[0].1));
}

fn mean_distance_from_fifty(spec: TreatmentSpec) -> f64 {
    let cfg = common::rule_config(spec, AgentKind::SignalOnly, 300, 77);
    let series = price_series(&common::simulate_rules(&cfg));
    let all: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| (p.1 - 50.0).abs()))
        .collect();
    all.iter().sum::<f64>() / all.len() as f64
}

#[test]
fn treatment_two_prices_stay_nearer_fifty() {
    assert!(
        mean_distance_from_fifty(TreatmentSpec::treatment_ii())
            < mean_distance_from_fifty(TreatmentSpec::treatment_i())
    );
}

#[test]
fn tables_sum_to_one_hundred() {
    let cfg = common::rule_config(TreatmentSpec::treatment_ii(), AgentKind::Noise, 20, 4);
    let labels = classify_sessions(&common::simulate_rules(&cfg));
    for grouping in [
        Grouping::default(),
        Grouping {
            by_model: true,
            by_variant: true,
        },
    ] {
        for row in aggregate_table(&labels, grouping).rows {
            assert!((row.total() - 100.0).abs() < 0.01, "{row:?}");
        }
    }
}

#[test]
fn grading_the_quoted_passages() {
    let g = HeuristicGrader::grade(
        "With a Blue signal, the expected value is 30 (30% chance of 100, 70% chance of 0). Since this matches the current price, there's no clear advantage to trading.",
    );
    assert!(g.q1 && g.q2 && !g.q3, "{g:?}");
    let g = HeuristicGrader::grade("Given the increasing market price and previous buy decisions, I will buy.");
    assert!(g.q3, "{g:?}");
}

#[test]
fn grading_through_a_gateway() {
    let passages = vec![
        "The expected value is 70, above the price of 50, so buying is profitable.".to_string(),
        "I feel nervous and fear the price will fall after the previous sells.".to_string(),
    ];
    let gw = Gateway::new(
        ProviderConfig::offline("grader", AdapterKind::HeuristicGrader),
        Arc::new(HeuristicGrader),
    );
    let grades = grade_reasoning(&passages, &gw).unwrap();
    assert!(grades.iter().all(Option::is_some));
    let summary = aggregate_grades(&grades);
    assert_eq!(summary.graded, 2);
    assert_eq!(summary.q3_true, 0.5);
    assert!(summary.q5_mean > 0.0);

    // A scripted grader gives fixed fractions; garbage leaves a passage ungraded.
    let scripted = ScriptedProvider::replies([
        r#"{"q1": true, "q2": true, "q3": false, "q4": "attractive", "q5": 10}"#,
        r#"{"q1": true, "q2": false, "q3": true, "q4": "reasonable", "q5": 30}"#,
        "I cannot answer that.",
    ]);
    let gw = Gateway::new(
        ProviderConfig::offline("grader", AdapterKind::Synthetic),
        Arc::new(scripted),
    );
    let mut three = passages.clone();
    three.push("third".into());
    let summary = aggregate_grades(&grade_reasoning(&three, &gw).unwrap());
    assert_eq!((summary.graded, summary.ungraded), (2, 1));
    assert_eq!((summary.q1_true, summary.q2_true, summary.q3_true), (1.0, 0.5, 0.5));
    assert_eq!(summary.q5_mean, 20.0);
    assert!(parse_grade("nothing").is_none());
}

#[test]
fn reference_comparison_cites_constants() {
    let cfg = common::rule_config(TreatmentSpec::treatment_i(), AgentKind::BayesianRational, 4, 1);
    let mut labels = classify_sessions(&common::simulate_rules(&cfg));
    let cfg2 = common::rule_config(TreatmentSpec::treatment_ii(), AgentKind::BayesianRational, 4, 1);
    labels.extend(classify_sessions(&common::simulate_rules(&cfg2)));
    let report = compare_reference(&aggregate_table(&labels, Grouping::default()), HUMAN_REFERENCE);
    assert!(
        report.contains("| I | all | all | rational | 100.00 | 46.00 | 61.00 |"),
        "{report}"
    );
    assert!(report.contains("| II | all | all | rational |"));
    assert!(report.contains("51.00 | 97.00"));
    assert!(report.contains("| error | 0.00 | 3.40 |"));
    // No treatment III rows were simulated.
    assert!(report.contains("Omitted"));
}

#[test]
fn brute_force_partition() {
    use Action::*;
    for g in Action::ALL {
        for b in Action::ALL {
            for imbalance in [-2, 0, 2] {
                for verdict in [
                    HerdingVerdict::None,
                    HerdingVerdict::BuyHerdOptimal,
                    HerdingVerdict::SellHerdOptimal,
                ] {
                    let label = classify_decision(&DecisionPair::new(g, b), imbalance, verdict).unwrap();
                    assert_eq!(label.cascade_detail.is_some(), label.label == Behavior::CascadeTrading);
                    if (g, b) == (Sell, Buy) {
                        assert_eq!(label.label, Behavior::Error);
                    }
                }
            }
        }
    }
}

#[test]
fn exports_are_readable_csv() {
    let cfg = common::rule_config(TreatmentSpec::treatment_ii(), AgentKind::Noise, 2, 1);
    let records = common::simulate_rules(&cfg);
    let labels = classify_sessions(&records);
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    write_labels_csv(&p("labels.csv"), &labels).unwrap();
    write_table_csv(&p("table.csv"), &aggregate_table(&labels, Grouping::default())).unwrap();
    write_payoffs_csv(&p("payoffs.csv"), &payoff_stats(&records)).unwrap();
    write_price_series_csv(&p("prices.csv"), &price_series(&records)).unwrap();
    let rows = |n: &str| csv::Reader::from_path(p(n)).unwrap().records().count();
    assert_eq!(rows("labels.csv"), 128);
    assert_eq!(rows("table.csv"), 1);
    assert_eq!(rows("payoffs.csv"), 3);
    assert_eq!(rows("prices.csv"), 18);
    let header = std::fs::read_to_string(p("labels.csv")).unwrap();
    assert!(header.starts_with("treatment,session,round,agent,model,variant,price,imbalance,verdict,label"));
}
