use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

/// Lowercased alphanumeric runs, English-stemmed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| stemmer().stem(&t.to_lowercase()).into_owned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plurals_share_a_stem() {
        assert_eq!(tokenize("Accounts"), tokenize("account"));
        assert_eq!(tokenize("Shops"), tokenize("shop"));
        assert_eq!(tokenize("How To Find Cardable Shops "), vec!["how", "to", "find", "cardabl", "shop"]);
    }

    #[test]
    fn splits_on_punctuation() {
        assert_eq!(tokenize("case-42, (urgent)"), vec!["case", "42", "urgent"]);
        assert!(tokenize(" -- ").is_empty());
    }
}
