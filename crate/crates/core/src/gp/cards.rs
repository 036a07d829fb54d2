use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Card rank; suits play no role in the game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Card {
    Ace,
    Two,
    Three,
    Four,
    Five,
    Six,
    Seven,
    Eight,
    Nine,
    Ten,
    Jack,
    Queen,
    King,
}

impl Card {
    pub const ALL: [Card; 13] = [
        Card::Ace,
        Card::Two,
        Card::Three,
        Card::Four,
        Card::Five,
        Card::Six,
        Card::Seven,
        Card::Eight,
        Card::Nine,
        Card::Ten,
        Card::Jack,
        Card::Queen,
        Card::King,
    ];

    pub fn token(self) -> &'static str {
        const TOKENS: [&str; 13] = ["A", "2", "3", "4", "5", "6", "7", "8", "9", "10", "J", "Q", "K"];
        TOKENS[self as usize]
    }

    pub fn is_face(self) -> bool {
        matches!(self, Card::Jack | Card::Queen | Card::King)
    }
}

impl fmt::Display for Card {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Card {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        Card::ALL
            .into_iter()
            .find(|c| c.token().eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown card {s:?} (expected A, 2-10, J, Q, K)"))
    }
}

/// Card interpretation variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleVariant {
    /// J, Q and K all count as 10.
    Id,
    /// J, Q and K count as 11, 12 and 13.
    Ood,
}

/// How cards map to numbers. The ace is 1 under both variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rule {
    pub variant: RuleVariant,
    /// Values of J, Q, K.
    pub face_values: [u32; 3],
}

impl Rule {
    pub const ID: Rule = Rule {
        variant: RuleVariant::Id,
        face_values: [10, 10, 10],
    };
    pub const OOD: Rule = Rule {
        variant: RuleVariant::Ood,
        face_values: [11, 12, 13],
    };

    pub fn of(variant: RuleVariant) -> Rule {
        match variant {
            RuleVariant::Id => Rule::ID,
            RuleVariant::Ood => Rule::OOD,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            RuleVariant::Id => "id",
            RuleVariant::Ood => "ood",
        }
    }
}

impl FromStr for Rule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "id" => Ok(Rule::ID),
            "ood" => Ok(Rule::OOD),
            other => Err(format!("unknown rule {other:?} (expected id or ood)")),
        }
    }
}

pub fn interpret_card(card: Card, rule: &Rule) -> u32 {
    match card {
        Card::Jack => rule.face_values[0],
        Card::Queen => rule.face_values[1],
        Card::King => rule.face_values[2],
        other => other as u32 + 1,
    }
}

/// Four cards and the number to reach.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GpState {
    pub cards: [Card; 4],
    pub target: u32,
}

impl GpState {
    pub const DEFAULT_TARGET: u32 = 24;

    pub fn new(cards: [Card; 4]) -> Self {
        Self {
            cards,
            target: Self::DEFAULT_TARGET,
        }
    }

    pub fn with_target(cards: [Card; 4], target: u32) -> Self {
        Self { cards, target }
    }

    /// Parses tokens like `["5", "4", "K", "7"]`.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], target: u32) -> Result<Self, String> {
        if tokens.len() != 4 {
            return Err(format!("need exactly 4 cards, got {}", tokens.len()));
        }
        if target == 0 {
            return Err("target must be at least 1".into());
        }
        let mut cards = [Card::Ace; 4];
        for (slot, t) in cards.iter_mut().zip(tokens) {
            *slot = t.as_ref().parse()?;
        }
        Ok(Self { cards, target })
    }

    pub fn values(&self, rule: &Rule) -> [u32; 4] {
        self.cards.map(|c| interpret_card(c, rule))
    }

    pub fn tokens(&self) -> Vec<String> {
        self.cards.iter().map(|c| c.token().to_string()).collect()
    }
}
