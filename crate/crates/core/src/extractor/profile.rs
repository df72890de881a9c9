use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use scraper::Selector;
use serde::{Deserialize, Serialize};

use super::ExtractError;
use crate::dndo::scraped_keys;
use crate::frontier::DEFAULT_LISTING_URL_LEN;

pub const DEFAULT_MIN_BODY_BYTES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PostNormalize {
    #[default]
    None,
    Price,
    Quantity,
    Country,
    ProductClass,
    Count,
}

/// One `[[field_rules]]` entry as written in a profile file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleConfig {
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<String>,
    /// Read this attribute of the selected element instead of its text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default)]
    pub post_normalize: PostNormalize,
}

/// On-disk profile document, one per market.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub market_id: String,
    pub listing_marker: String,
    /// Marker present on every genuine page of the market (navigation pages
    /// included). Defaults to `listing_marker`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_marker: Option<String>,
    pub challenge_signature: String,
    #[serde(default = "default_url_len_bounds")]
    pub url_len_bounds: (usize, usize),
    #[serde(default = "default_min_body_bytes")]
    pub min_body_bytes: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub category_map: BTreeMap<String, String>,
    pub field_rules: Vec<RuleConfig>,
}

fn default_url_len_bounds() -> (usize, usize) {
    DEFAULT_LISTING_URL_LEN
}

fn default_min_body_bytes() -> usize {
    DEFAULT_MIN_BODY_BYTES
}

#[derive(Debug, Clone)]
pub struct ExtractionRule {
    pub field: String,
    pub selector: Option<Selector>,
    pub attribute: Option<String>,
    pub pattern: Option<Regex>,
    pub post_normalize: PostNormalize,
}

/// A compiled, validated market profile.
#[derive(Debug, Clone)]
pub struct MarketProfile {
    pub market_id: String,
    pub field_rules: Vec<ExtractionRule>,
    pub listing_marker: Regex,
    pub page_marker: Regex,
    pub challenge_signature: Regex,
    pub url_len_bounds: (usize, usize),
    pub min_body_bytes: usize,
    pub category_map: BTreeMap<String, String>,
    config: ProfileConfig,
}

fn profile_err(msg: impl Into<String>) -> ExtractError {
    ExtractError::ProfileError(msg.into())
}

fn compile_regex(what: &str, pattern: &str) -> Result<Regex, ExtractError> {
    Regex::new(pattern).map_err(|e| profile_err(format!("{what}: {e}")))
}

impl MarketProfile {
    pub fn compile(config: ProfileConfig) -> Result<Self, ExtractError> {
        if config.market_id.trim().is_empty() {
            return Err(profile_err("market_id is empty"));
        }
        let (min, max) = config.url_len_bounds;
        if min > max {
            return Err(profile_err(format!("url_len_bounds ({min}, {max}) out of order")));
        }
        let mut rules = Vec::with_capacity(config.field_rules.len());
        for rule in &config.field_rules {
            if !scraped_keys().contains(&rule.field.as_str()) {
                return Err(profile_err(format!("rule names unknown field `{}`", rule.field)));
            }
            if rule.selector.is_none() && rule.pattern.is_none() {
                return Err(profile_err(format!(
                    "rule for `{}` needs a selector or a pattern",
                    rule.field
                )));
            }
            if rule.attribute.is_some() && rule.selector.is_none() {
                return Err(profile_err(format!(
                    "rule for `{}` names an attribute without a selector",
                    rule.field
                )));
            }
            let selector = match &rule.selector {
                Some(css) => Some(Selector::parse(css).map_err(|e| {
                    profile_err(format!("selector for `{}`: {e:?}", rule.field))
                })?),
                None => None,
            };
            let pattern = match &rule.pattern {
                Some(p) => {
                    let re = compile_regex(&format!("pattern for `{}`", rule.field), p)?;
                    if re.captures_len() != 2 {
                        return Err(profile_err(format!(
                            "pattern for `{}` must have exactly one capture group",
                            rule.field
                        )));
                    }
                    Some(re)
                }
                None => None,
            };
            rules.push(ExtractionRule {
                field: rule.field.clone(),
                selector,
                attribute: rule.attribute.clone(),
                pattern,
                post_normalize: rule.post_normalize,
            });
        }
        for required in ["title", "seller"] {
            if !rules.iter().any(|r| r.field == required) {
                return Err(profile_err(format!("no rule for required field `{required}`")));
            }
        }
        let listing_marker = compile_regex("listing_marker", &config.listing_marker)?;
        let page_marker = match &config.page_marker {
            Some(p) => compile_regex("page_marker", p)?,
            None => listing_marker.clone(),
        };
        Ok(MarketProfile {
            market_id: config.market_id.clone(),
            field_rules: rules,
            listing_marker,
            page_marker,
            challenge_signature: compile_regex("challenge_signature", &config.challenge_signature)?,
            url_len_bounds: config.url_len_bounds,
            min_body_bytes: config.min_body_bytes,
            category_map: config.category_map.clone(),
            config,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ExtractError> {
        let config: ProfileConfig =
            toml::from_str(text).map_err(|e| profile_err(format!("profile syntax: {e}")))?;
        Self::compile(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExtractError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| profile_err(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn config(&self) -> &ProfileConfig {
        &self.config
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&self.config).expect("profile config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
market_id = "m"
listing_marker = 'class="listing"'
challenge_signature = 'captcha'

[[field_rules]]
field = "title"
selector = "h1"

[[field_rules]]
field = "seller"
pattern = 'Vendor: (\w+)'
"#;

    #[test]
    fn loads_minimal_profile() {
        let p = MarketProfile::from_toml_str(MINIMAL).unwrap();
        assert_eq!(p.field_rules.len(), 2);
        assert_eq!(p.url_len_bounds, (114, 120));
        assert_eq!(p.min_body_bytes, 512);
        assert_eq!(p.page_marker.as_str(), p.listing_marker.as_str());
        let again = MarketProfile::from_toml_str(&p.to_toml()).unwrap();
        assert_eq!(again.config(), p.config());
    }

    fn expect_error(text: &str, needle: &str) {
        match MarketProfile::from_toml_str(text) {
            Err(ExtractError::ProfileError(msg)) => assert!(msg.contains(needle), "{msg}"),
            other => panic!("expected profile error, got {other:?}"),
        }
    }

    #[test]
    fn rule_errors_fail_at_load() {
        expect_error(&MINIMAL.replace("field = \"title\"", "field = \"headline\""), "unknown field");
        expect_error(&MINIMAL.replace("selector = \"h1\"", "selector = \"h1[[\""), "selector");
        expect_error(&MINIMAL.replace(r"(\w+)", r"\w+"), "capture group");
        expect_error(&MINIMAL.replace(r"(\w+)", r"(\w+"), "pattern");
        expect_error(
            &MINIMAL.replace("field = \"seller\"\npattern = 'Vendor: (\\w+)'", "field = \"views\"\npattern = '(\\d+)'"),
            "required field `seller`",
        );
        expect_error(&MINIMAL.replace("selector = \"h1\"", ""), "selector or a pattern");
        expect_error("market_id = 3", "syntax");
    }
}
