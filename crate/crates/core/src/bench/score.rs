use std::sync::OnceLock;

use regex::Regex;

use super::Gold;

/// max(0, 1 - 0.75 |gold - predicted|)
pub fn score_numeric(gold: f64, predicted: f64) -> f64 {
    (1.0 - 0.75 * (gold - predicted).abs()).max(0.0)
}

/// The capture of the last `Answer:\s*(.+)` match, or the whole text.
pub fn extract_answer(raw: &str) -> &str {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"Answer:\s*(.+)").unwrap());
    re.captures_iter(raw)
        .last()
        .map_or(raw, |c| c.get(1).unwrap().as_str())
}

/// Trim, casefold, collapse whitespace runs to one space.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// The first decimal number in `text`, with optional sign and fraction.
pub fn parse_first_number(text: &str) -> Option<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)").unwrap());
    re.find(text)
        .and_then(|m| m.as_str().parse::<f64>().ok())
        .filter(|v| v.is_finite())
}

/// Score in [0, 1]; a missing answer scores 0.
pub fn score_answer(gold: &Gold, raw_answer: Option<&str>) -> f64 {
    let Some(raw) = raw_answer else {
        return 0.0;
    };
    let answer = normalize(extract_answer(raw));
    let hit = |ok: bool| if ok { 1.0 } else { 0.0 };
    match gold {
        Gold::ExactText { answers } => {
            hit(!answers.is_empty() && answers.iter().all(|a| answer.contains(&normalize(a))))
        }
        Gold::ExactLabel { label } => hit(answer == normalize(label)),
        Gold::Numeric { value } => parse_first_number(&answer).map_or(0.0, |p| score_numeric(*value, p)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    /// Exact rational evaluation of the penalty formula.
    fn oracle(y: f64, p: f64) -> f64 {
        let y = BigRational::from_float(y).unwrap();
        let p = BigRational::from_float(p).unwrap();
        let diff = if y > p { &y - &p } else { &p - &y };
        let one = BigRational::from_integer(1.into());
        let s = &one - BigRational::new(3.into(), 4.into()) * diff;
        let zero = BigRational::from_integer(0.into());
        let s = if s < zero { zero } else { s };
        let (n, d) = (s.numer().clone(), s.denom().clone());
        let n: f64 = n.to_string().parse().unwrap();
        let d: f64 = d.to_string().parse().unwrap();
        n / d
    }

    #[test]
    fn numeric_grid_matches_oracle() {
        for i in 0..=40 {
            for j in 0..=40 {
                let (y, p) = (i as f64 * 0.25, j as f64 * 0.25);
                assert!((score_numeric(y, p) - oracle(y, p)).abs() <= 1e-12, "{y} {p}");
            }
        }
        assert_eq!(score_numeric(5.0, 5.0), 1.0);
        assert_eq!(score_numeric(4.0, 3.0), 0.25);
        assert_eq!(score_numeric(4.0, 6.0), 0.0);
    }

    #[test]
    fn text_answers_use_containment() {
        let gold = Gold::ExactText {
            answers: vec!["7412905".into()],
        };
        assert_eq!(score_answer(&gold, Some("The magic number is 7412905.")), 1.0);
        assert_eq!(score_answer(&gold, Some("The magic number is 741290.")), 0.0);
        assert_eq!(score_answer(&gold, None), 0.0);
    }

    #[test]
    fn labels_are_casefolded() {
        let gold = Gold::ExactLabel {
            label: "entity".into(),
        };
        assert_eq!(score_answer(&gold, Some("Answer: Entity")), 1.0);
        assert_eq!(
            score_answer(&gold, Some("Answer: location\nAnswer:  ENTITY ")),
            1.0
        );
        assert_eq!(score_answer(&gold, Some("It is an entity")), 0.0);
    }

    #[test]
    fn numeric_answers_parse_the_extracted_text() {
        let gold = Gold::Numeric { value: 5.0 };
        assert_eq!(score_answer(&gold, Some("Answer: 5")), 1.0);
        assert_eq!(score_answer(&gold, Some("I count 12 rows.\nAnswer: 4")), 0.25);
        let collapsed = "```repl\nprint(f\"Answer: {abbreviation_count}\")\n```";
        assert_eq!(score_answer(&gold, Some(collapsed)), 0.0);
        assert_eq!(score_answer(&gold, Some("no idea")), 0.0);
    }

    #[test]
    fn extraction_is_case_sensitive_and_takes_the_last() {
        assert_eq!(extract_answer("answer: 1"), "answer: 1");
        assert_eq!(extract_answer("Answer: 1\nAnswer: 2\n"), "2");
    }

    proptest! {
        #[test]
        fn numeric_is_symmetric_and_bounded(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let s = score_numeric(a, b);
            prop_assert_eq!(s, score_numeric(b, a));
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(score_numeric(a, a), 1.0);
        }

        #[test]
        fn score_answer_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..256), v in -100f64..100.0) {
            let text = String::from_utf8_lossy(&bytes);
            for gold in [
                Gold::Numeric { value: v },
                Gold::ExactLabel { label: "x".into() },
                Gold::ExactText { answers: vec!["x".into()] },
            ] {
                let s = score_answer(&gold, Some(&text));
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }
    }
}
