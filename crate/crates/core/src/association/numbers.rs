//! Explicit table-number references ("Table 3", "Tab. IV").

use std::collections::BTreeSet;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

static TABLE_REF: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)\b(?:table\s+|tab\.\s*)([0-9]+|[ivxlc]+)\b").expect("static regex")
});

const ROMAN: [&str; 20] = [
    "I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII", "XIII", "XIV", "XV",
    "XVI", "XVII", "XVIII", "XIX", "XX",
];

/// Set of table numbers a text refers to, normalized to arabic integers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableNumberRefs {
    pub numbers: BTreeSet<u32>,
}

impl TableNumberRefs {
    pub fn contains(&self, n: u32) -> bool {
        self.numbers.contains(&n)
    }

    pub fn is_empty(&self) -> bool {
        self.numbers.is_empty()
    }
}

fn normalize_token(token: &str) -> Option<u32> {
    if token.bytes().all(|b| b.is_ascii_digit()) {
        // Leading zeros ("Table 03") are not a table number.
        if token.starts_with('0') || token.len() > 3 {
            return None;
        }
        return token.parse().ok();
    }
    let upper = token.to_ascii_uppercase();
    ROMAN.iter().position(|r| *r == upper).map(|i| i as u32 + 1)
}

/// Table numbers referenced in `text`, in order of first appearance.
pub fn table_number_mentions(text: &str) -> Vec<u32> {
    let mut out = Vec::new();
    for cap in TABLE_REF.captures_iter(text) {
        if let Some(n) = normalize_token(&cap[1]) {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    out
}

/// All numbered table references (`Table <n>` / `Tab. <n>`, arabic 1–999 or
/// roman I–XX, case-insensitive).
pub fn extract_table_numbers(text: &str) -> TableNumberRefs {
    TableNumberRefs {
        numbers: table_number_mentions(text).into_iter().collect(),
    }
}

/// The number a table block identifies itself with: the first reference in
/// its own OCR text, if any.
pub fn own_table_number(table_text: &str) -> Option<u32> {
    table_number_mentions(table_text).first().copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(v: &[u32]) -> BTreeSet<u32> {
        v.iter().copied().collect()
    }

    #[test]
    fn arabic_reference() {
        assert_eq!(
            extract_table_numbers("As shown in Table 3, accuracy improves.").numbers,
            set(&[3])
        );
    }

    #[test]
    fn plural_without_number() {
        assert!(extract_table_numbers("Tables are useful.").is_empty());
    }

    #[test]
    fn roman_and_arabic_mixed() {
        // Hand-enumerated: "Table II" -> 2, "Table 4" -> 4.
        assert_eq!(
            extract_table_numbers("Table II and Table 4 report ...").numbers,
            set(&[2, 4])
        );
    }

    #[test]
    fn abbreviation_and_case() {
        assert_eq!(extract_table_numbers("see tab. 7 and TABLE xii").numbers, set(&[7, 12]));
        assert_eq!(extract_table_numbers("Tab.3").numbers, set(&[3]));
    }

    #[test]
    fn out_of_range_tokens_ignored() {
        assert!(extract_table_numbers("Table 1000 and Table 0 and Table XXI").is_empty());
        assert!(extract_table_numbers("the table is large").is_empty());
        assert!(extract_table_numbers("Table S1").is_empty());
        assert_eq!(extract_table_numbers("Table 999").numbers, set(&[999]));
        assert_eq!(extract_table_numbers("Table XX").numbers, set(&[20]));
    }

    #[test]
    fn own_number_is_first_mention() {
        assert_eq!(own_table_number("Table 5: compared with Table 2"), Some(5));
        assert_eq!(own_table_number("1 2 3"), None);
    }

    proptest! {
        #[test]
        fn idempotent_under_duplication(s in "(Table|Tab\\.|II|[0-9]{1,3}|x| |[a-z]{1,5}|\\.){0,20}") {
            // Terminated so that no reference can straddle the join.
            let t = format!("{s}!");
            let once = extract_table_numbers(&t);
            let twice = extract_table_numbers(&format!("{t} {t}"));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn references_are_positive(n in 1u32..1000, prefix in "[a-z ]{0,20}") {
            let refs = extract_table_numbers(&format!("{prefix} Table {n}."));
            prop_assert!(refs.contains(n));
            prop_assert!(refs.numbers.iter().all(|&x| x >= 1));
        }
    }
}
