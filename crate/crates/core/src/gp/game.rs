use std::fmt;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cards::{Card, GpState, Rule};
use super::expr::{evaluate, format_rational, parse_equation, Equation, Expr, Op};

/// Marker searched for by [`extract_equation`] when none is given explicitly.
pub const DEFAULT_MARKER: &str = "Answer:";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reason {
    #[serde(rename = "OK")]
    Ok,
    ParseError,
    WrongOperandMultiset,
    DivisionByZero,
    WrongValue,
    NoEquationFound,
}

impl Reason {
    pub const ALL: [Reason; 6] = [
        Reason::Ok,
        Reason::ParseError,
        Reason::WrongOperandMultiset,
        Reason::DivisionByZero,
        Reason::WrongValue,
        Reason::NoEquationFound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Ok => "OK",
            Reason::ParseError => "ParseError",
            Reason::WrongOperandMultiset => "WrongOperandMultiset",
            Reason::DivisionByZero => "DivisionByZero",
            Reason::WrongValue => "WrongValue",
            Reason::NoEquationFound => "NoEquationFound",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of checking one candidate answer. `valid` holds exactly when the
/// reason is [`Reason::Ok`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub valid: bool,
    pub reason: Reason,
    /// Exact value whenever the equation could be evaluated.
    pub value: Option<BigRational>,
    pub detail: Option<String>,
}

impl Verdict {
    fn new(reason: Reason, value: Option<BigRational>, detail: Option<String>) -> Self {
        Self {
            valid: reason == Reason::Ok,
            reason,
            value,
            detail,
        }
    }

    pub fn no_equation(detail: Option<String>) -> Self {
        Self::new(Reason::NoEquationFound, None, detail)
    }

    /// Binary reward: 1 for a correct answer, 0 otherwise.
    pub fn reward(&self) -> u8 {
        u8::from(self.valid)
    }

    pub fn value_string(&self) -> Option<String> {
        self.value.as_ref().map(format_rational)
    }
}

/// Checks a candidate equation against a state. Never fails; problems are
/// reported through the verdict's reason, checked in the order parse,
/// operand multiset, division by zero, value.
pub fn validate(state: &GpState, rule: &Rule, text: &str) -> Verdict {
    let eq = match parse_equation(text) {
        Ok(eq) => eq,
        Err(e) => return Verdict::new(Reason::ParseError, None, Some(e.to_string())),
    };
    let value = evaluate(&eq);

    let mut leaves = eq.expr.leaves();
    leaves.sort_unstable();
    let mut wanted: Vec<u64> = state.values(rule).iter().map(|&v| u64::from(v)).collect();
    wanted.sort_unstable();
    if leaves != wanted {
        let detail = format!("operands {leaves:?}, cards give {wanted:?}");
        return Verdict::new(Reason::WrongOperandMultiset, value, Some(detail));
    }

    match value {
        None => Verdict::new(Reason::DivisionByZero, None, None),
        Some(v) if v == BigRational::from_integer(BigInt::from(state.target)) => {
            Verdict::new(Reason::Ok, Some(v), None)
        }
        Some(v) => Verdict::new(Reason::WrongValue, Some(v), None),
    }
}

const PERMUTATIONS: [[usize; 4]; 24] = [
    [0, 1, 2, 3],
    [0, 1, 3, 2],
    [0, 2, 1, 3],
    [0, 2, 3, 1],
    [0, 3, 1, 2],
    [0, 3, 2, 1],
    [1, 0, 2, 3],
    [1, 0, 3, 2],
    [1, 2, 0, 3],
    [1, 2, 3, 0],
    [1, 3, 0, 2],
    [1, 3, 2, 0],
    [2, 0, 1, 3],
    [2, 0, 3, 1],
    [2, 1, 0, 3],
    [2, 1, 3, 0],
    [2, 3, 0, 1],
    [2, 3, 1, 0],
    [3, 0, 1, 2],
    [3, 0, 2, 1],
    [3, 1, 0, 2],
    [3, 1, 2, 0],
    [3, 2, 0, 1],
    [3, 2, 1, 0],
];

/// The five full binary trees over four ordered leaves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    /// ((a b) c) d
    LeftComb,
    /// (a (b c)) d
    LeftInner,
    /// (a b) (c d)
    Balanced,
    /// a ((b c) d)
    RightInner,
    /// a (b (c d))
    RightComb,
}

const SHAPES: [Shape; 5] = [
    Shape::LeftComb,
    Shape::LeftInner,
    Shape::Balanced,
    Shape::RightInner,
    Shape::RightComb,
];

fn eval_shape(shape: Shape, x: [Rational64; 4], o: [Op; 3]) -> Option<Rational64> {
    let [a, b, c, d] = x;
    match shape {
        Shape::LeftComb => o[2].apply(o[1].apply(o[0].apply(a, b)?, c)?, d),
        Shape::LeftInner => o[2].apply(o[0].apply(a, o[1].apply(b, c)?)?, d),
        Shape::Balanced => o[1].apply(o[0].apply(a, b)?, o[2].apply(c, d)?),
        Shape::RightInner => o[0].apply(a, o[2].apply(o[1].apply(b, c)?, d)?),
        Shape::RightComb => o[0].apply(a, o[1].apply(b, o[2].apply(c, d)?)?),
    }
}

fn build_shape(shape: Shape, x: [u64; 4], o: [Op; 3]) -> Expr {
    let [a, b, c, d] = x.map(Expr::Lit);
    match shape {
        Shape::LeftComb => Expr::bin(o[2], Expr::bin(o[1], Expr::bin(o[0], a, b), c), d),
        Shape::LeftInner => Expr::bin(o[2], Expr::bin(o[0], a, Expr::bin(o[1], b, c)), d),
        Shape::Balanced => Expr::bin(o[1], Expr::bin(o[0], a, b), Expr::bin(o[2], c, d)),
        Shape::RightInner => Expr::bin(o[0], a, Expr::bin(o[2], Expr::bin(o[1], b, c), d)),
        Shape::RightComb => Expr::bin(o[0], a, Expr::bin(o[1], b, Expr::bin(o[2], c, d))),
    }
}

/// Exhaustive search over operand orders, operators and tree shapes.
/// Returns the first hit in a fixed enumeration order, printed with minimal
/// parentheses.
///
/// Card values are at most 13, so every intermediate of a four-card
/// expression fits comfortably in `i64` numerators and denominators.
pub fn solve(state: &GpState, rule: &Rule) -> Option<Equation> {
    let values = state.values(rule).map(u64::from);
    let target = Rational64::from_integer(i64::from(state.target));
    for perm in PERMUTATIONS {
        let ordered = perm.map(|i| values[i]);
        let exact = ordered.map(|v| Rational64::from_integer(v as i64));
        for o0 in Op::ALL {
            for o1 in Op::ALL {
                for o2 in Op::ALL {
                    let ops = [o0, o1, o2];
                    for shape in SHAPES {
                        if eval_shape(shape, exact, ops) == Some(target) {
                            return Some(Equation::from_expr(build_shape(shape, ordered, ops)));
                        }
                    }
                }
            }
        }
    }
    None
}

/// Deals `n` states with ranks drawn uniformly with replacement. With
/// `solvable_only`, unsolvable draws are discarded and redrawn.
pub fn deal(seed: u64, n: usize, rule: &Rule, solvable_only: bool) -> Vec<GpState> {
    deal_with_target(seed, n, rule, solvable_only, GpState::DEFAULT_TARGET)
        .expect("the default target is reachable")
}

/// Like [`deal`] with a custom target. Returns `None` when `solvable_only`
/// is set and no hand at all reaches the target.
pub fn deal_with_target(
    seed: u64,
    n: usize,
    rule: &Rule,
    solvable_only: bool,
    target: u32,
) -> Option<Vec<GpState>> {
    if solvable_only && !any_hand_reaches(rule, target) {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let cards: [Card; 4] = std::array::from_fn(|_| Card::ALL[rng.gen_range(0..13)]);
        let state = GpState::with_target(cards, target);
        if !solvable_only || solve(&state, rule).is_some() {
            out.push(state);
        }
    }
    Some(out)
}

fn any_hand_reaches(rule: &Rule, target: u32) -> bool {
    let ranks = Card::ALL;
    (0..13).any(|a| {
        (a..13).any(|b| {
            (b..13).any(|c| {
                (c..13).any(|d| {
                    let s = GpState::with_target([ranks[a], ranks[b], ranks[c], ranks[d]], target);
                    solve(&s, rule).is_some()
                })
            })
        })
    })
}

fn is_equation_char(c: char) -> bool {
    c.is_ascii_digit() || matches!(c, '+' | '-' | '*' | '/' | '(' | ')') || c.is_whitespace()
}

/// Pulls a candidate equation out of free text.
///
/// When `marker` is given and occurs in the response, the candidate is the
/// rest of the line after its last occurrence. Otherwise the response is
/// scanned for the last, then longest, substring that parses.
pub fn extract_equation(response: &str, marker: Option<&str>) -> Option<String> {
    if let Some(m) = marker.filter(|m| !m.is_empty()) {
        if let Some(idx) = response.rfind(m) {
            let rest = &response[idx + m.len()..];
            let line = rest.lines().next().unwrap_or("").trim();
            return (!line.is_empty()).then(|| line.to_string());
        }
    }
    scan_for_equation(response)
}

fn scan_for_equation(text: &str) -> Option<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if is_equation_char(chars[i]) {
            let start = i;
            while i < chars.len() && is_equation_char(chars[i]) {
                i += 1;
            }
            runs.push((start, i));
        } else {
            i += 1;
        }
    }
    for &(start, end) in runs.iter().rev() {
        let run = &chars[start..end];
        for hi in (1..=run.len()).rev() {
            if run[hi - 1].is_whitespace() {
                continue;
            }
            for lo in 0..hi {
                if run[lo].is_whitespace() {
                    continue;
                }
                let candidate: String = run[lo..hi].iter().collect();
                if parse_equation(&candidate).is_ok() {
                    return Some(candidate);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(tokens: &[&str]) -> GpState {
        GpState::from_tokens(tokens, 24).unwrap()
    }

    #[test]
    fn validate_examples() {
        let s = state(&["5", "4", "10", "7"]);
        let v = validate(&s, &Rule::ID, "(7-5)*10+4");
        assert!(v.valid);
        assert_eq!(v.reason, Reason::Ok);
        assert_eq!(v.value_string().as_deref(), Some("24"));
        assert_eq!(v.reward(), 1);
        let v = validate(&s, &Rule::ID, "(7-5)*10+5");
        assert_eq!(v.reason, Reason::WrongOperandMultiset);
        assert_eq!(v.reward(), 0);

        let k = state(&["5", "4", "K", "7"]);
        assert_eq!(validate(&k, &Rule::OOD, "(7-5)*10+4").reason, Reason::WrongOperandMultiset);
        assert!(validate(&k, &Rule::ID, "(7-5)*10+4").valid);
    }

    #[test]
    fn validate_reason_order() {
        let s = state(&["5", "5", "5", "5"]);
        assert_eq!(validate(&s, &Rule::ID, "5/(5-5").reason, Reason::ParseError);
        assert_eq!(validate(&s, &Rule::ID, "5/(5-5)").reason, Reason::WrongOperandMultiset);
        assert_eq!(validate(&s, &Rule::ID, "5/(5-5)+5").reason, Reason::DivisionByZero);
        let v = validate(&s, &Rule::ID, "5+5+5+5");
        assert_eq!(v.reason, Reason::WrongValue);
        assert_eq!(v.value_string().as_deref(), Some("20"));
        assert!(!v.valid);
    }

    #[test]
    fn exact_target_only() {
        let s = state(&["3", "3", "8", "8"]);
        assert!(validate(&s, &Rule::ID, "8/(3-8/3)").valid);
        let s = state(&["A", "2", "3", "7"]);
        assert_eq!(validate(&s, &Rule::ID, "7*3+2+1").reason, Reason::Ok);
        assert_eq!(validate(&s, &Rule::ID, "7*3+2/1").reason, Reason::WrongValue);
    }

    #[test]
    fn solver_known_cases() {
        let s = state(&["5", "4", "10", "7"]);
        let w = solve(&s, &Rule::ID).unwrap();
        assert!(validate(&s, &Rule::ID, &w.source_text).valid);

        let s = state(&["3", "3", "8", "8"]);
        for rule in [Rule::ID, Rule::OOD] {
            let w = solve(&s, &rule).expect("3 3 8 8 is solvable");
            assert!(validate(&s, &rule, &w.source_text).valid);
        }
        assert!(solve(&state(&["A", "A", "A", "A"]), &Rule::ID).is_none());
    }

    #[test]
    fn solver_is_deterministic_and_uses_all_shapes() {
        let s = state(&["6", "6", "6", "6"]);
        assert_eq!(solve(&s, &Rule::ID).unwrap().source_text, "6+6+6+6");
        let s = state(&["3", "3", "8", "8"]);
        assert_eq!(solve(&s, &Rule::ID), solve(&s, &Rule::ID));
        // Only reachable through a nested right subtree.
        assert_eq!(solve(&s, &Rule::ID).unwrap().source_text, "8/(3-8/3)");
    }

    #[test]
    fn deal_is_seeded() {
        assert_eq!(deal(7, 20, &Rule::ID, false), deal(7, 20, &Rule::ID, false));
        assert_ne!(deal(7, 20, &Rule::ID, false), deal(8, 20, &Rule::ID, false));
        for s in deal(3, 50, &Rule::OOD, true) {
            assert!(solve(&s, &Rule::OOD).is_some());
        }
        assert!(deal_with_target(3, 5, &Rule::ID, true, 1_000_000).is_none());
        assert_eq!(deal_with_target(3, 5, &Rule::ID, false, 1_000_000).unwrap().len(), 5);
    }

    #[test]
    fn deal_rank_frequencies_are_uniform() {
        let states = deal(11, 1000, &Rule::ID, false);
        let mut counts = [0usize; 13];
        for s in &states {
            for c in s.cards {
                counts[c as usize] += 1;
            }
        }
        let n: f64 = 4000.0;
        let p: f64 = 1.0 / 13.0;
        let sigma = (n * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n * p).abs() < 5.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn extraction() {
        assert_eq!(
            extract_equation("…so the Answer: (7-5)*10+4", Some(DEFAULT_MARKER)).as_deref(),
            Some("(7-5)*10+4")
        );
        assert_eq!(extract_equation("I cannot solve this.", Some(DEFAULT_MARKER)), None);
        assert_eq!(
            extract_equation("maybe 3*8 … final: (3+5)*(7-4)", None).as_deref(),
            Some("(3+5)*(7-4)")
        );
        assert_eq!(
            extract_equation("maybe 3*8 … final: (3+5)*(7-4)", Some(DEFAULT_MARKER)).as_deref(),
            Some("(3+5)*(7-4)")
        );
        assert_eq!(
            extract_equation("Answer: 1+1\nAnswer: 2*3\nthanks", Some(DEFAULT_MARKER)).as_deref(),
            Some("2*3")
        );
        assert_eq!(extract_equation("Answer:   ", Some(DEFAULT_MARKER)), None);
        assert_eq!(extract_equation("try (1+2)) then", None).as_deref(), Some("(1+2)"));
        assert_eq!(extract_equation("", None), None);
    }
}
