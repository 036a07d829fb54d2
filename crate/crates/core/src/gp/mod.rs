//! The 24-game: four cards, each used once, combined with `+ - * /` to hit a
//! target. Arithmetic is exact over arbitrary-precision rationals.

mod cards;
mod expr;
mod game;
mod transcript;

pub use cards::{interpret_card, Card, GpState, Rule, RuleVariant};
pub use expr::{evaluate, format_rational, parse_equation, Equation, Expr, Op, ParseError};
pub use game::{
    deal, deal_with_target, extract_equation, solve, validate, Reason, Verdict, DEFAULT_MARKER,
};
pub use transcript::{
    score_transcript_text, score_transcripts, ScoredRecord, TranscriptError, TranscriptScore,
};

/// Conventions the game rules leave open, reported alongside tool output.
pub fn conventions() -> serde_json::Value {
    serde_json::json!({
        "ace_value": 1,
        "suits": "ignored",
        "deal": "ranks uniform with replacement",
        "literals": "positive decimal integers, no unary minus",
    })
}
