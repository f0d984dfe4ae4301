//! Rule-based tokenizer shared by every token-denominated quantity in the
//! crate: annotator output budgets, prompt sizes and per-token action NLL.
//!
//! Rules, applied to the lowercased input:
//! - maximal runs of alphabetic characters form one token,
//! - maximal runs of ASCII digits form one token,
//! - every other non-whitespace character is a token on its own,
//! - whitespace separates tokens and is discarded.

/// Identifier recorded in model files so a model is never scored with a
/// different tokenizer than the one it was trained with.
pub const TOKENIZER_ID: &str = "lfm-rules-v1";

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Alpha,
    Digit,
}

fn class_of(c: char) -> Option<Class> {
    if c.is_ascii_digit() {
        Some(Class::Digit)
    } else if c.is_alphabetic() {
        Some(Class::Alpha)
    } else {
        None
    }
}

/// Split `text` into lowercase tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut cur_class: Option<Class> = None;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            cur_class = None;
            continue;
        }
        match class_of(ch) {
            Some(class) => {
                if cur_class != Some(class) && !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                cur.extend(ch.to_lowercase());
                cur_class = Some(class);
            }
            None => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                cur_class = None;
                out.push(ch.to_lowercase().collect());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Number of tokens in `text`.
pub fn count_tokens(text: &str) -> usize {
    tokenize(text).len()
}

/// Keep at most `max_tokens` tokens of `text`, cutting at a token boundary
/// of the original string (so the returned slice re-tokenizes to exactly
/// `min(max_tokens, count_tokens(text))` tokens).
pub fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    if count_tokens(text) <= max_tokens {
        return text;
    }
    // Walk char boundaries until the prefix holds max_tokens tokens and the
    // next char would start a new one.
    let mut end = 0;
    for (idx, ch) in text.char_indices() {
        let next = idx + ch.len_utf8();
        if count_tokens(&text[..next]) > max_tokens {
            break;
        }
        end = next;
    }
    text[..end].trim_end()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_words_digits_and_punctuation() {
        assert_eq!(
            tokenize("Step 28. Your action: put candle 3 in/on drawer1"),
            vec![
                "step", "28", ".", "your", "action", ":", "put", "candle", "3", "in", "/", "on",
                "drawer", "1"
            ]
        );
        assert_eq!(tokenize("Yes\n- Step 28\n- Step 29").len(), 7);
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("   \n"), 0);
        assert_eq!(count_tokens("1234567"), 1);
    }

    #[test]
    fn truncation_respects_budget() {
        assert_eq!(truncate_tokens("go to fridge 1", 10), "go to fridge 1");
        assert_eq!(truncate_tokens("go to fridge 1", 3), "go to fridge");
        assert_eq!(count_tokens(truncate_tokens("a, b, c, d", 3)), 3);
    }

    proptest! {
        #[test]
        fn non_blank_text_has_tokens(s in "[ a-zA-Z0-9,.:/-]{0,40}") {
            if !s.trim().is_empty() {
                prop_assert!(count_tokens(&s) >= 1);
            }
        }

        #[test]
        fn concatenation_merges_at_most_one_boundary(a in "[ a-z0-9,.]{0,20}", b in "[ a-z0-9,.]{0,20}") {
            let joined = format!("{a}{b}");
            let (ta, tb, tj) = (count_tokens(&a), count_tokens(&b), count_tokens(&joined));
            prop_assert!(ta + tb >= tj);
            prop_assert!(tj + 1 >= ta + tb);
        }

        #[test]
        fn truncation_is_exact(s in "[ a-z0-9,.]{0,40}", k in 0usize..12) {
            let cut = truncate_tokens(&s, k);
            prop_assert_eq!(count_tokens(cut), k.min(count_tokens(&s)));
        }
    }
}
