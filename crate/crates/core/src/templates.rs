//! Prompt templates shipped as versioned resource files.
//!
//! A template file has an optional `# System Prompt` block and a
//! `# User Prompt` block; `{name}` marks a slot.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub system: String,
    pub user: String,
}

const SYSTEM_MARK: &str = "# System Prompt\n";
const USER_MARK: &str = "# User Prompt\n";

impl Template {
    pub fn parse(name: &'static str, source: &str) -> Result<Self> {
        let (before, user) = source
            .split_once(USER_MARK)
            .ok_or_else(|| Error::Config(format!("template {name} has no user prompt block")))?;
        let system = match before.split_once(SYSTEM_MARK) {
            Some((_, sys)) => sys.trim_end_matches('\n').to_string(),
            None => String::new(),
        };
        Ok(Self {
            name,
            system,
            user: user.strip_suffix('\n').unwrap_or(user).to_string(),
        })
    }

    /// Substitutes every `{slot}` in the user block in one left-to-right pass,
    /// so slot values are never rescanned.
    pub fn render_user(&self, slots: &BTreeMap<&str, String>) -> Result<String> {
        let mut out = String::with_capacity(self.user.len() + 256);
        let mut rest = self.user.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after
                .find('}')
                .ok_or_else(|| Error::Config(format!("unclosed slot in template {}", self.name)))?;
            let key = &after[..close];
            let value = slots
                .get(key)
                .ok_or_else(|| Error::Config(format!("template {} needs slot `{key}`", self.name)))?;
            out.push_str(value);
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }

    pub fn slot_names(&self) -> Vec<&str> {
        let mut names = Vec::new();
        let mut rest = self.user.as_str();
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            let Some(close) = after.find('}') else { break };
            names.push(&after[..close]);
            rest = &after[close + 1..];
        }
        names
    }
}

pub const FACT_SOURCE: &str = include_str!("../templates/fact.v1.txt");
pub const REASONING_SOURCE: &str = include_str!("../templates/reasoning.v1.txt");
pub const ENCODE_DEFAULT_SOURCE: &str = include_str!("../templates/encode_default.v1.txt");
pub const ENCODE_PROMPT1_SOURCE: &str = include_str!("../templates/encode_prompt1.v1.txt");
pub const ENCODE_PROMPT2_SOURCE: &str = include_str!("../templates/encode_prompt2.v1.txt");

pub fn fact() -> Template {
    Template::parse("fact.v1", FACT_SOURCE).expect("bundled template")
}

pub fn reasoning() -> Template {
    Template::parse("reasoning.v1", REASONING_SOURCE).expect("bundled template")
}

pub fn encode_default() -> Template {
    Template::parse("encode_default.v1", ENCODE_DEFAULT_SOURCE).expect("bundled template")
}

pub fn encode_prompt1() -> Template {
    Template::parse("encode_prompt1.v1", ENCODE_PROMPT1_SOURCE).expect("bundled template")
}

pub fn encode_prompt2() -> Template {
    Template::parse("encode_prompt2.v1", ENCODE_PROMPT2_SOURCE).expect("bundled template")
}
