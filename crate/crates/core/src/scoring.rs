//! Survey scoring: partial scores per characteristic, summed and compared
//! against a risk threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::DataItemId;
use crate::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDefinition {
    pub characteristics: Vec<Characteristic>,
    /// Totals strictly below this value are low risk.
    pub threshold: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Characteristic {
    pub id: DataItemId,
    pub label: String,
    pub options: Vec<ScoreOption>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOption {
    pub label: String,
    pub score: i64,
}

/// Answers collected so far, with the instant each scene was answered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub answers: BTreeMap<DataItemId, String>,
    pub answered_at: BTreeMap<DataItemId, Instant>,
}

impl SurveyResponse {
    pub fn answer(&mut self, id: DataItemId, option: impl Into<String>, at: Instant) {
        self.answered_at.insert(id.clone(), at);
        self.answers.insert(id, option.into());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskClass {
    LowRisk,
    IntermediateHighRisk,
}

impl RiskClass {
    pub const ALL: [RiskClass; 2] = [RiskClass::LowRisk, RiskClass::IntermediateHighRisk];

    /// Label used for the risk enumeration data item.
    pub fn label(self) -> &'static str {
        match self {
            RiskClass::LowRisk => "LowRisk",
            RiskClass::IntermediateHighRisk => "IntermediateHighRisk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub total: i64,
    pub risk_class: RiskClass,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoringError {
    #[error("characteristic `{0}` has not been answered")]
    IncompleteResponse(DataItemId),
    #[error("`{option}` is not an option of `{characteristic}`")]
    UnknownOption {
        characteristic: DataItemId,
        option: String,
    },
}

impl ScoreDefinition {
    pub fn characteristic(&self, id: &str) -> Option<&Characteristic> {
        self.characteristics.iter().find(|c| c.id.as_str() == id)
    }
}

impl Characteristic {
    pub fn option(&self, label: &str) -> Option<&ScoreOption> {
        self.options.iter().find(|o| o.label == label)
    }
}

pub fn classify(total: i64, threshold: i64) -> RiskClass {
    if total < threshold {
        RiskClass::LowRisk
    } else {
        RiskClass::IntermediateHighRisk
    }
}

pub fn compute_score(
    def: &ScoreDefinition,
    resp: &SurveyResponse,
) -> Result<ScoreResult, ScoringError> {
    let mut total = 0i64;
    for c in &def.characteristics {
        let chosen = resp
            .answers
            .get(&c.id)
            .ok_or_else(|| ScoringError::IncompleteResponse(c.id.clone()))?;
        let option = c.option(chosen).ok_or_else(|| ScoringError::UnknownOption {
            characteristic: c.id.clone(),
            option: chosen.clone(),
        })?;
        total += option.score;
    }
    Ok(ScoreResult {
        total,
        risk_class: classify(total, def.threshold),
    })
}

/// What the survey wizard shows next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SceneState {
    Scene {
        /// Zero-based position of the characteristic.
        index: usize,
        characteristic: DataItemId,
        question: String,
        options: Vec<String>,
        answered: usize,
        total: usize,
        transitions: usize,
    },
    SurveyComplete {
        transitions: usize,
    },
}

impl SceneState {
    pub fn transitions(&self) -> usize {
        match self {
            SceneState::Scene { transitions, .. } | SceneState::SurveyComplete { transitions } => {
                *transitions
            }
        }
    }

    pub fn is_complete(&self) -> bool {
        matches!(self, SceneState::SurveyComplete { .. })
    }
}

/// First unanswered characteristic, in definition order.
///
/// Every answer but the last moves the wizard to a new scene, so a complete
/// survey of N characteristics has gone through N - 1 transitions.
pub fn next_scene(def: &ScoreDefinition, resp: &SurveyResponse) -> SceneState {
    let total = def.characteristics.len();
    let answered = def
        .characteristics
        .iter()
        .filter(|c| resp.answers.contains_key(&c.id))
        .count();
    let transitions = answered.min(total.saturating_sub(1));
    match def
        .characteristics
        .iter()
        .enumerate()
        .find(|(_, c)| !resp.answers.contains_key(&c.id))
    {
        Some((index, c)) => SceneState::Scene {
            index,
            characteristic: c.id.clone(),
            question: c.label.clone(),
            options: c.options.iter().map(|o| o.label.clone()).collect(),
            answered,
            total,
            transitions,
        },
        None => SceneState::SurveyComplete { transitions },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(partials: &[i64], threshold: i64) -> (ScoreDefinition, SurveyResponse) {
        let names = ["A", "B", "C", "D"];
        let def = ScoreDefinition {
            characteristics: partials
                .iter()
                .zip(names)
                .map(|(&p, name)| Characteristic {
                    id: DataItemId::new(name),
                    label: format!("characteristic {name}"),
                    options: vec![
                        ScoreOption { label: "x".into(), score: p },
                        ScoreOption { label: "other".into(), score: 0 },
                    ],
                })
                .collect(),
            threshold,
        };
        let mut resp = SurveyResponse::default();
        for name in names.iter().take(partials.len()) {
            resp.answer(DataItemId::new(*name), "x", Instant::from_millis(0));
        }
        (def, resp)
    }

    #[test]
    fn all_zero_partials_are_low_risk() {
        let (def, resp) = table(&[0, 0, 0, 0], 4);
        assert_eq!(
            compute_score(&def, &resp).unwrap(),
            ScoreResult { total: 0, risk_class: RiskClass::LowRisk }
        );
    }

    #[test]
    fn threshold_boundary() {
        let (def, resp) = table(&[2, 1, 0, 1], 4);
        assert_eq!(
            compute_score(&def, &resp).unwrap(),
            ScoreResult { total: 4, risk_class: RiskClass::IntermediateHighRisk }
        );
        let (def, resp) = table(&[1, 1, 0, 1], 4);
        assert_eq!(
            compute_score(&def, &resp).unwrap(),
            ScoreResult { total: 3, risk_class: RiskClass::LowRisk }
        );
        let (def, resp) = table(&[2, 2, 0, 1], 4);
        assert_eq!(compute_score(&def, &resp).unwrap().risk_class, RiskClass::IntermediateHighRisk);
    }

    #[test]
    fn negative_partials_are_summed() {
        let (def, resp) = table(&[3, -1, 1, 0], 4);
        assert_eq!(compute_score(&def, &resp).unwrap().total, 3);
    }

    #[test]
    fn incomplete_and_unknown() {
        let (def, mut resp) = table(&[1, 1, 1, 1], 4);
        resp.answers.remove(&DataItemId::new("C"));
        assert_eq!(
            compute_score(&def, &resp),
            Err(ScoringError::IncompleteResponse(DataItemId::new("C")))
        );
        resp.answers.insert(DataItemId::new("C"), "nope".into());
        assert!(matches!(
            compute_score(&def, &resp),
            Err(ScoringError::UnknownOption { .. })
        ));
    }

    #[test]
    fn scenes_follow_definition_order() {
        let (def, full) = table(&[1, 1, 1, 1], 4);
        let empty = SurveyResponse::default();
        match next_scene(&def, &empty) {
            SceneState::Scene { index, characteristic, transitions, .. } => {
                assert_eq!(index, 0);
                assert_eq!(characteristic.as_str(), "A");
                assert_eq!(transitions, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut three = full.clone();
        three.answers.remove(&DataItemId::new("D"));
        match next_scene(&def, &three) {
            SceneState::Scene { characteristic, transitions, .. } => {
                assert_eq!(characteristic.as_str(), "D");
                assert_eq!(transitions, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(next_scene(&def, &full), SceneState::SurveyComplete { transitions: 3 });
    }
}
