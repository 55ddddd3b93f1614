//! BCP-47 tags and the response-language instruction they imply.

/// Structural check: a 2-3 letter (or 4-8 letter registered) primary
/// subtag followed by 1-8 character alphanumeric subtags.
pub fn is_valid_locale(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let primary = parts.next().unwrap_or_default();
    if !(2..=8).contains(&primary.len()) || !primary.chars().all(|c| c.is_ascii_alphabetic()) {
        return false;
    }
    parts.all(|p| (1..=8).contains(&p.len()) && p.chars().all(|c| c.is_ascii_alphanumeric()))
}

/// English name of the tag's language, when known.
pub fn language_name(tag: &str) -> Option<&'static str> {
    let primary = tag.split('-').next()?.to_ascii_lowercase();
    Some(match primary.as_str() {
        "en" => "English",
        "es" => "Spanish",
        "de" => "German",
        "fr" => "French",
        "zh" => "Chinese",
        "it" => "Italian",
        "pt" => "Portuguese",
        "ja" => "Japanese",
        "ko" => "Korean",
        "ar" => "Arabic",
        "hi" => "Hindi",
        "ru" => "Russian",
        "nl" => "Dutch",
        "vi" => "Vietnamese",
        _ => return None,
    })
}

/// Sentence asking the model to answer in the tag's language.
pub fn response_instruction(tag: &str) -> String {
    match language_name(tag) {
        Some(name) => format!("Always respond in {name} (locale {tag})."),
        None => format!("Always respond in the language of locale {tag}."),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_tags() {
        for ok in ["en", "en-US", "zh-Hans-CN", "de", "es-419"] {
            assert!(is_valid_locale(ok), "{ok}");
        }
        for bad in ["", "e", "en_US", "en-", "123", "en-toolongsubtag"] {
            assert!(!is_valid_locale(bad), "{bad}");
        }
    }

    #[test]
    fn instructions_name_the_language() {
        assert_eq!(response_instruction("de"), "Always respond in German (locale de).");
        assert!(response_instruction("tlh").contains("tlh"));
    }
}
