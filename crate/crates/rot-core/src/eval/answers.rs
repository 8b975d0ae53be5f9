//! Boxed-answer extraction and answer canonicalization.

/// Content of the last `\boxed{...}` expression in the text, with balanced
/// braces (escaped braces ignored), trimmed and stripped of surrounding
/// math delimiters. Absent when no complete boxed expression exists.
pub fn extract_answer(text: &str) -> Option<String> {
    let mut last: Option<String> = None;
    let bytes = text.as_bytes();
    let mut search_from = 0;
    while let Some(found) = text[search_from..].find("\\boxed") {
        let start = search_from + found + "\\boxed".len();
        search_from = start;
        // Optional whitespace, then the opening brace.
        let mut i = start;
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() || bytes[i] != b'{' {
            continue;
        }
        let content_start = i + 1;
        let mut depth = 1usize;
        let mut escaped = false;
        let mut end = None;
        for (offset, c) in text[content_start..].char_indices() {
            if escaped {
                escaped = false;
                continue;
            }
            match c {
                '\\' => escaped = true,
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(content_start + offset);
                        break;
                    }
                }
                _ => {}
            }
        }
        if let Some(end) = end {
            last = Some(strip_math_delimiters(text[content_start..end].trim()).to_string());
            search_from = end + 1;
        }
    }
    last
}

/// Strip matching outer `$...$`, `$$...$$`, `\(...\)`, or `\[...\]` pairs.
fn strip_math_delimiters(s: &str) -> &str {
    let mut out = s.trim();
    loop {
        let stripped = if let Some(rest) = out.strip_prefix("$$").and_then(|r| r.strip_suffix("$$"))
        {
            rest
        } else if let Some(rest) = out.strip_prefix('$').and_then(|r| r.strip_suffix('$')) {
            rest
        } else if let Some(rest) = out.strip_prefix("\\(").and_then(|r| r.strip_suffix("\\)")) {
            rest
        } else if let Some(rest) = out.strip_prefix("\\[").and_then(|r| r.strip_suffix("\\]")) {
            rest
        } else {
            break;
        };
        out = stripped.trim();
        if out.is_empty() {
            break;
        }
    }
    out
}

/// Canonical comparison form: trimmed, outer math delimiters stripped, and
/// pure integers reduced to their numeric form (drops leading zeros and a
/// leading plus).
pub fn canonicalize_answer(answer: &str) -> String {
    let stripped = strip_math_delimiters(answer.trim());
    if let Ok(n) = stripped.parse::<i128>() {
        return n.to_string();
    }
    stripped.to_string()
}

pub fn answers_match(extracted: &str, gold: &str) -> bool {
    canonicalize_answer(extracted) == canonicalize_answer(gold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_a_simple_boxed_answer() {
        assert_eq!(
            extract_answer("…the answer is $\\boxed{25}$").as_deref(),
            Some("25")
        );
    }

    #[test]
    fn absent_box_yields_none() {
        assert_eq!(extract_answer("no boxed content here"), None);
        assert_eq!(extract_answer("\\boxed{unclosed"), None);
    }

    #[test]
    fn last_box_wins() {
        assert_eq!(
            extract_answer("first \\boxed{12} then \\boxed{25}").as_deref(),
            Some("25")
        );
    }

    #[test]
    fn incomplete_last_box_falls_back_to_the_previous_one() {
        assert_eq!(
            extract_answer("first \\boxed{12} then \\boxed{unclosed").as_deref(),
            Some("12")
        );
    }

    #[test]
    fn nested_braces_are_balanced() {
        assert_eq!(
            extract_answer("\\boxed{\\frac{1}{2}}").as_deref(),
            Some("\\frac{1}{2}")
        );
    }

    #[test]
    fn double_dollar_wrapping_is_stripped() {
        assert_eq!(
            extract_answer("Final Answer: $$\\boxed{25}$$").as_deref(),
            Some("25")
        );
        assert_eq!(extract_answer("\\boxed{$25$}").as_deref(), Some("25"));
    }

    #[test]
    fn canonicalization_handles_integers_and_delimiters() {
        assert_eq!(canonicalize_answer(" 025 "), "25");
        assert_eq!(canonicalize_answer("$25$"), "25");
        assert_eq!(canonicalize_answer("+7"), "7");
        assert_eq!(canonicalize_answer("-12"), "-12");
        assert_eq!(canonicalize_answer("x+1"), "x+1");
    }

    #[test]
    fn matching_is_canonical_on_both_sides() {
        assert!(answers_match("$25$", "25"));
        assert!(answers_match("025", "25"));
        assert!(!answers_match("24", "25"));
    }
}
