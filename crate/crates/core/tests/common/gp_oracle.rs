//! Brute-force reference for the card game: repeatedly replace two numbers
//! by any result of combining them, in exact rationals.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use spectral_surgery::gp::{interpret_card, solve, Card, GpState, Rule};

pub fn reachable(nums: &[BigRational], target: &BigRational) -> bool {
    if nums.len() == 1 {
        return &nums[0] == target;
    }
    for i in 0..nums.len() {
        for j in i + 1..nums.len() {
            let (a, b) = (&nums[i], &nums[j]);
            let mut rest: Vec<BigRational> = nums
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i && k != j)
                .map(|(_, x)| x.clone())
                .collect();
            let mut options = vec![a + b, a - b, b - a, a * b];
            if !b.is_zero() {
                options.push(a / b);
            }
            if !a.is_zero() {
                options.push(b / a);
            }
            for o in options {
                rest.push(o);
                if reachable(&rest, target) {
                    return true;
                }
                rest.pop();
            }
        }
    }
    false
}

pub fn oracle_solvable(state: &GpState, rule: &Rule) -> bool {
    let nums: Vec<BigRational> = state
        .cards
        .iter()
        .map(|&c| BigRational::from_integer(BigInt::from(interpret_card(c, rule))))
        .collect();
    reachable(&nums, &BigRational::from_integer(BigInt::from(state.target)))
}

/// Every multiset of four ranks, 1820 in all, in lexicographic order.
pub fn all_rank_multisets() -> Vec<[Card; 4]> {
    let mut out = Vec::with_capacity(1820);
    for a in 0..13 {
        for b in a..13 {
            for c in b..13 {
                for d in c..13 {
                    out.push([Card::ALL[a], Card::ALL[b], Card::ALL[c], Card::ALL[d]]);
                }
            }
        }
    }
    out
}

/// Ground-truth category of a synthetic transcript line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Planted {
    Valid,
    WrongMultiset,
    WrongValue,
    Unparseable,
}

fn line(cards: &[Card; 4], response: &str) -> String {
    let tokens: Vec<&str> = cards.iter().map(|c| c.token()).collect();
    serde_json::json!({ "cards": tokens, "response": response }).to_string()
}

/// A transcript with the requested number of lines in each category, under
/// the in-distribution rule and the default marker. Lines are interleaved
/// so every category appears throughout the file.
pub fn synthetic_transcript(valid: usize, multiset: usize, value: usize, unparseable: usize) -> (String, Vec<Planted>) {
    let rule = Rule::ID;
    let hands = all_rank_multisets();
    let solved: Vec<([Card; 4], String)> = hands
        .iter()
        .filter_map(|h| solve(&GpState::new(*h), &rule).map(|e| (*h, e.source_text)))
        .collect();
    let sum = |h: &[Card; 4]| h.iter().map(|&c| interpret_card(c, &rule)).sum::<u32>();
    let sorted_values = |h: &[Card; 4]| {
        let mut v: Vec<u32> = h.iter().map(|&c| interpret_card(c, &rule)).collect();
        v.sort_unstable();
        v
    };
    let off_target: Vec<[Card; 4]> = hands.iter().copied().filter(|h| sum(h) != 24).collect();

    let mut plan = Vec::new();
    plan.extend(std::iter::repeat_n(Planted::Valid, valid));
    plan.extend(std::iter::repeat_n(Planted::WrongMultiset, multiset));
    plan.extend(std::iter::repeat_n(Planted::WrongValue, value));
    plan.extend(std::iter::repeat_n(Planted::Unparseable, unparseable));
    // Deterministic interleave by a fixed stride coprime to the length.
    let n = plan.len();
    let stride = (1..).map(|k| 7 * k + 3).find(|s| gcd(*s, n) == 1).unwrap();
    let plan: Vec<Planted> = (0..n).map(|i| plan[(i * stride) % n]).collect();

    let mut lines = Vec::with_capacity(n);
    for (i, kind) in plan.iter().enumerate() {
        let l = match kind {
            Planted::Valid => {
                let (h, w) = &solved[i % solved.len()];
                line(h, &format!("Let me think step by step.\nAnswer: {w}"))
            }
            Planted::WrongMultiset => {
                let (h, w) = &solved[i % solved.len()];
                let other = solved
                    .iter()
                    .cycle()
                    .skip(i % solved.len() + 1)
                    .find(|(o, _)| sorted_values(o) != sorted_values(h))
                    .unwrap();
                line(&other.0, &format!("Answer: {w}"))
            }
            Planted::WrongValue => {
                let h = &off_target[i % off_target.len()];
                let expr: Vec<String> = h.iter().map(|&c| interpret_card(c, &rule).to_string()).collect();
                line(h, &format!("I believe this works.\nAnswer: {}", expr.join(" + ")))
            }
            Planted::Unparseable => {
                let (h, w) = &solved[i % solved.len()];
                line(h, &format!("Answer: ({w} *"))
            }
        };
        lines.push(l);
    }
    (lines.join("\n") + "\n", plan)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
