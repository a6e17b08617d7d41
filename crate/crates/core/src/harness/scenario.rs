use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knowledge the remover has about the perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Ignorant,
    SemiInformed,
    WellInformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    /// Per-utterance optimization against the white-box encoder.
    Mifgsm,
    /// Feedforward generator.
    Ssed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Removal {
    None,
    Qt,
    Ms,
    An,
    /// SSED remover trained on additive-noise pairs.
    NoiseDenoiser,
    /// SSED remover trained on (original, adversarial) pairs of the attack.
    PairDenoiser,
    /// SSED remover trained against the frozen attack generator.
    DenoisingG,
    /// Remover trained jointly with the attack generator.
    Joint,
    /// Generator and remover trained one after the other.
    Independent,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Ignorant, Scenario::SemiInformed, Scenario::WellInformed];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Ignorant => "ignorant",
            Scenario::SemiInformed => "semi",
            Scenario::WellInformed => "well",
        }
    }
}

impl AttackKind {
    pub const ALL: [AttackKind; 2] = [AttackKind::Mifgsm, AttackKind::Ssed];

    pub fn id(self) -> &'static str {
        match self {
            AttackKind::Mifgsm => "mifgsm",
            AttackKind::Ssed => "ssed",
        }
    }
}

impl Removal {
    pub const ALL: [Removal; 9] = [
        Removal::None,
        Removal::Qt,
        Removal::Ms,
        Removal::An,
        Removal::NoiseDenoiser,
        Removal::PairDenoiser,
        Removal::DenoisingG,
        Removal::Joint,
        Removal::Independent,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Removal::None => "none",
            Removal::Qt => "qt",
            Removal::Ms => "ms",
            Removal::An => "an",
            Removal::NoiseDenoiser => "noise-denoiser",
            Removal::PairDenoiser => "pair-denoiser",
            Removal::DenoisingG => "denoising-g",
            Removal::Joint => "joint",
            Removal::Independent => "independent",
        }
    }
}

macro_rules! parse_by_id {
    ($t:ty, $what:literal) => {
        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::ALL
                    .into_iter()
                    .find(|v| v.id() == s)
                    .ok_or_else(|| {
                        let ids: Vec<&str> = Self::ALL.iter().map(|v| v.id()).collect();
                        Error::Config(format!("unknown {} '{s}', expected one of {}", $what, ids.join(", ")))
                    })
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.id())
            }
        }
    };
}

parse_by_id!(Scenario, "scenario");
parse_by_id!(AttackKind, "attack");
parse_by_id!(Removal, "removal method");

/// Why a combination is rejected, or `None` when it is allowed.
pub fn rejection(scenario: Scenario, attack: AttackKind, removal: Removal) -> Option<&'static str> {
    use Removal::*;
    use Scenario::*;
    if attack == AttackKind::Mifgsm && scenario == WellInformed {
        return Some(
            "optimization-based generation has no trained model to share with a remover, \
             so it is not applicable in the well-informed scenario",
        );
    }
    match (removal, scenario) {
        (None, _) => Option::None,
        (Qt | Ms | An | NoiseDenoiser, Ignorant) => Option::None,
        (Qt | Ms | An | NoiseDenoiser, _) => {
            Some("non-informed defenses and noise-trained denoisers are evaluated only in the ignorant scenario")
        }
        (PairDenoiser, SemiInformed) => Option::None,
        (PairDenoiser, _) => Some("denoisers trained on adversarial pairs belong to the semi-informed scenario"),
        (DenoisingG, SemiInformed) if attack == AttackKind::Ssed => Option::None,
        (DenoisingG, SemiInformed) => Some("Denoising-G needs the SSED generator that produced the perturbation"),
        (DenoisingG, _) => Some("Denoising-G belongs to the semi-informed scenario"),
        (Joint | Independent, WellInformed) => Option::None,
        (Joint | Independent, _) => Some("trained generator/remover pairs belong to the well-informed scenario"),
    }
}

/// One cell of the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub attack: AttackKind,
    pub removal: Removal,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, attack: AttackKind, removal: Removal) -> Result<Self> {
        let spec = Self {
            scenario,
            attack,
            removal,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match rejection(self.scenario, self.attack, self.removal) {
            Some(reason) => Err(Error::NotApplicable(format!(
                "{} + {} + {}: {reason}",
                self.scenario, self.attack, self.removal
            ))),
            None => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.scenario, self.attack, self.removal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Expected acceptance per (scenario, attack, removal), written out cell by cell.
    fn expected(s: &str, a: &str, r: &str) -> bool {
        const ACCEPTED: &[(&str, &str, &str)] = &[
            ("ignorant", "mifgsm", "none"),
            ("ignorant", "mifgsm", "qt"),
            ("ignorant", "mifgsm", "ms"),
            ("ignorant", "mifgsm", "an"),
            ("ignorant", "mifgsm", "noise-denoiser"),
            ("ignorant", "ssed", "none"),
            ("ignorant", "ssed", "qt"),
            ("ignorant", "ssed", "ms"),
            ("ignorant", "ssed", "an"),
            ("ignorant", "ssed", "noise-denoiser"),
            ("semi", "mifgsm", "none"),
            ("semi", "mifgsm", "pair-denoiser"),
            ("semi", "ssed", "none"),
            ("semi", "ssed", "pair-denoiser"),
            ("semi", "ssed", "denoising-g"),
            ("well", "ssed", "none"),
            ("well", "ssed", "joint"),
            ("well", "ssed", "independent"),
        ];
        ACCEPTED.contains(&(s, a, r))
    }

    #[test]
    fn applicability_matrix_cell_by_cell() {
        let mut accepted = 0;
        for s in Scenario::ALL {
            for a in AttackKind::ALL {
                for r in Removal::ALL {
                    let ok = ScenarioSpec::new(s, a, r).is_ok();
                    assert_eq!(ok, expected(s.id(), a.id(), r.id()), "{s} {a} {r}");
                    accepted += ok as usize;
                }
            }
        }
        assert_eq!(accepted, 18);
    }

    #[test]
    fn mifgsm_well_informed_is_rejected_with_reason() {
        let err = ScenarioSpec::new(Scenario::WellInformed, AttackKind::Mifgsm, Removal::Joint).unwrap_err();
        assert!(matches!(err, Error::NotApplicable(ref m) if m.contains("well-informed")));
    }

    #[test]
    fn ids_round_trip() {
        for r in Removal::ALL {
            assert_eq!(r.id().parse::<Removal>().unwrap(), r);
        }
        assert_eq!("semi".parse::<Scenario>().unwrap(), Scenario::SemiInformed);
        assert!("gra".parse::<AttackKind>().is_err());
    }
}
