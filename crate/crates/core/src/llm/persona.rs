//! Persona blocks for the system prompt.
//!
//! The characteristics sampler draws a demographic profile and then applies
//! consistency rules (minimum age per degree, tenure bounded by working
//! years, occupation implied by seniority). The marginal distributions are
//! configurable; the defaults are illustrative, not measured.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{render, templates};

/// Fixed persona texts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaPreset {
    Human,
    ProfessionalTrader,
    RoboAdvisor,
    Rational,
}

impl PersonaPreset {
    pub const ALL: [PersonaPreset; 4] = [
        PersonaPreset::Human,
        PersonaPreset::ProfessionalTrader,
        PersonaPreset::RoboAdvisor,
        PersonaPreset::Rational,
    ];

    pub fn text(self) -> &'static str {
        match self {
            PersonaPreset::Human => "You act as a typical human being. That is, you attempt to maximize payoff, but you are subject to bounded rationality and your decision making is partly driven by greed and fear.",
            PersonaPreset::ProfessionalTrader => "You act as a human being, working in the finance industry. You know financial market dynamics very well. You are trained to make decisions that maximize profits for your firm.",
            PersonaPreset::RoboAdvisor => "You are a robo-advisor acting according to pre-defined rules. Your decision making process is algorithmic in nature. You are programmed to use all available information to maximize payoff.",
            PersonaPreset::Rational => "You are a rational agent behaving according to the concept of homo economicus. That is, you use all available information to maximize payoff.",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "human" => Some(PersonaPreset::Human),
            "professional_trader" => Some(PersonaPreset::ProfessionalTrader),
            "robo_advisor" => Some(PersonaPreset::RoboAdvisor),
            "rational" => Some(PersonaPreset::Rational),
            _ => None,
        }
    }
}

pub const PHD: &str = "Ph.D.";
pub const MASTERS: &str = "M.A./M.S.";

/// A sampled participant profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Characteristics {
    pub age: u32,
    pub gender: String,
    pub occupation: String,
    pub tenure: u32,
    pub education_level: String,
    pub education_field: String,
}

impl Characteristics {
    pub fn render(&self) -> String {
        render(
            templates::CHARACTERISTICS,
            &[
                ("age", &self.age.to_string()),
                ("gender", &self.gender),
                ("occupation", &self.occupation),
                ("tenure", &self.tenure.to_string()),
                ("education_level", &self.education_level),
                ("education_field", &self.education_field),
            ],
        )
    }

    /// Checks the consistency rules the sampler enforces.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.education_level == PHD && self.age < 27 {
            out.push(format!("Ph.D. at age {}", self.age));
        }
        if self.education_level == MASTERS && self.age < 24 {
            out.push(format!("master's degree at age {}", self.age));
        }
        if self.tenure + 21 > self.age {
            out.push(format!("tenure {} at age {}", self.tenure, self.age));
        }
        if self.age > 30 && self.tenure >= 7 && self.occupation != "manager" {
            out.push(format!("senior profile working as {}", self.occupation));
        }
        out
    }
}

/// Weighted marginals for the profile sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsSampler {
    pub genders: Vec<(String, f64)>,
    pub education_levels: Vec<(String, f64)>,
    pub education_fields: Vec<(String, f64)>,
    pub min_age: u32,
    pub max_age: u32,
    /// Fallback occupations when no rule applies.
    pub occupations: Vec<(String, f64)>,
    /// Probability that a "likely" occupation rule fires.
    pub likely_probability: f64,
}

fn weighted(items: &[(&str, f64)]) -> Vec<(String, f64)> {
    items.iter().map(|(s, w)| (s.to_string(), *w)).collect()
}

impl Default for CharacteristicsSampler {
    fn default() -> Self {
        Self {
            genders: weighted(&[("man", 0.8), ("woman", 0.2)]),
            education_levels: weighted(&[("B.A./B.S.", 0.5), (MASTERS, 0.4), (PHD, 0.1)]),
            education_fields: weighted(&[
                ("economics", 0.35),
                ("finance", 0.25),
                ("business", 0.15),
                ("mathematics", 0.15),
                ("engineering", 0.10),
            ]),
            min_age: 22,
            max_age: 55,
            occupations: weighted(&[
                ("trader", 0.3),
                ("market analyst", 0.3),
                ("risk analyst", 0.2),
                ("portfolio manager", 0.2),
            ]),
            likely_probability: 0.75,
        }
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, items: &[(String, f64)]) -> String {
    let dist = WeightedIndex::new(items.iter().map(|(_, w)| *w)).expect("weights must be positive");
    items[dist.sample(rng)].0.clone()
}

impl CharacteristicsSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Characteristics {
        let gender = pick(rng, &self.genders);
        let education_level = pick(rng, &self.education_levels);
        let education_field = pick(rng, &self.education_fields);
        let floor = match education_level.as_str() {
            PHD => 27,
            MASTERS => 24,
            _ => 21,
        };
        let min_age = self.min_age.max(floor);
        let age = rng.gen_range(min_age..=self.max_age.max(min_age));
        let tenure = rng.gen_range(0..=age - 21);

        let likely = |rng: &mut R| rng.gen_bool(self.likely_probability.clamp(0.0, 1.0));
        let occupation = if age > 30 && tenure >= 7 {
            "manager".to_string()
        } else if age < 30 && tenure < 7 && education_level == PHD {
            if rng.gen_bool(0.5) { "market analyst" } else { "trader" }.to_string()
        } else if age > 28 && tenure >= 4 && likely(rng) {
            "investment banker".to_string()
        } else if age > 25 && tenure >= 2 && likely(rng) {
            if rng.gen_bool(0.5) {
                "salesperson"
            } else {
                "investment manager"
            }
            .to_string()
        } else {
            pick(rng, &self.occupations)
        };
        Characteristics {
            age,
            gender,
            occupation,
            tenure,
            education_level,
            education_field,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn render_fills_every_slot() {
        let c = Characteristics {
            age: 34,
            gender: "woman".into(),
            occupation: "manager".into(),
            tenure: 9,
            education_level: MASTERS.into(),
            education_field: "finance".into(),
        };
        assert_eq!(
            c.render(),
            "You are a 34-year old woman. You work as a manager and you have 9 years of tenure. You have a M.A./M.S. degree in finance. Respond in way that is consistent with the knowledge and expected behavior of a person with these characteristics."
        );
    }

    #[test]
    fn sampled_profiles_are_consistent() {
        let sampler = CharacteristicsSampler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5_000 {
            let c = sampler.sample(&mut rng);
            assert!(c.violations().is_empty(), "{c:?}: {:?}", c.violations());
        }
    }

    #[test]
    fn young_phd_is_analyst_or_trader() {
        let sampler = CharacteristicsSampler {
            education_levels: weighted(&[(PHD, 1.0)]),
            max_age: 29,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let c = sampler.sample(&mut rng);
            if c.tenure < 7 {
                assert!(matches!(c.occupation.as_str(), "market analyst" | "trader"), "{c:?}");
            }
        }
    }
}
