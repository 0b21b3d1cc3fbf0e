use crate::anonymize::PLACEHOLDERS;
use crate::model::Language;

pub const CHINESE_MIN_RATIO: f64 = 0.7;
pub const ENGLISH_MAX_RATIO: f64 = 0.1;

/// CJK unified ideographs, extension A/B and compatibility ideographs.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0xF900..=0xFAFF | 0x20000..=0x2A6DF)
}

/// Letters from the Latin blocks (Basic Latin through Latin Extended-B).
pub fn is_latin_letter(c: char) -> bool {
    c.is_alphabetic() && (c as u32) < 0x0250
}

/// Counts of CJK characters and Latin letters, ignoring placeholder codes.
pub fn script_counts(text: &str) -> (usize, usize) {
    let mut cjk = 0;
    let mut latin = 0;
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if c == '<' {
            if let Some(p) = PLACEHOLDERS.iter().find(|p| rest.starts_with(**p)) {
                rest = &rest[p.len()..];
                continue;
            }
        }
        if is_cjk(c) {
            cjk += 1;
        } else if is_latin_letter(c) {
            latin += 1;
        }
        rest = &rest[c.len_utf8()..];
    }
    (cjk, latin)
}

/// Classifies by the share of CJK characters among CJK plus Latin letters.
pub fn detect_language(text: &str) -> Language {
    let (cjk, latin) = script_counts(text);
    if cjk + latin == 0 {
        return Language::Unknown;
    }
    let r = cjk as f64 / (cjk + latin) as f64;
    if r >= CHINESE_MIN_RATIO {
        Language::Chinese
    } else if r <= ENGLISH_MAX_RATIO {
        Language::English
    } else {
        Language::Mixed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_cases() {
        assert_eq!(detect_language("你好吗"), Language::Chinese);
        assert_eq!(detect_language("see you tmr"), Language::English);
        assert_eq!(detect_language("<#>!!"), Language::Unknown);
        assert_eq!(detect_language(""), Language::Unknown);
    }

    #[test]
    fn placeholders_do_not_count_as_latin() {
        assert_eq!(detect_language("<EMAIL> 你好"), Language::Chinese);
        assert_eq!(detect_language("<URL> <DATE> <TIME>"), Language::Unknown);
    }

    #[test]
    fn thresholds() {
        // 7 CJK, 3 Latin -> 0.7
        assert_eq!(detect_language("一二三四五六七abc"), Language::Chinese);
        // 6 CJK, 4 Latin -> 0.6
        assert_eq!(detect_language("一二三四五六abcd"), Language::Mixed);
        // 1 CJK, 9 Latin -> 0.1
        assert_eq!(detect_language("一abcdefghi"), Language::English);
        assert_eq!(detect_language("一abcdefgh"), Language::Mixed);
    }

    #[test]
    fn other_scripts_are_not_letters_here() {
        assert_eq!(detect_language("привет"), Language::Unknown);
        assert_eq!(detect_language("café"), Language::English);
    }
}
