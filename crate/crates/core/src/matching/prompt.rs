//! Chat prompts for skill extraction and green-skill validation, and parsers
//! for the replies they ask for.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sentinel the extraction prompt asks for when a posting names no skills.
pub const NOT_MENTIONED: &str = "Not mentioned";
/// Reply meaning no candidate is a valid match.
pub const NO_MATCH: &str = "No";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: String) -> Self {
        ChatMessage {
            role: role.to_string(),
            content,
        }
    }
}

pub fn extraction_messages(job_description: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::new(
            "system",
            "You are an information extraction system specialized in identifying skills within job descriptions. \
             Your task is to recognize both technical skills (hard skills) and interpersonal skills (soft skills) \
             explicitly mentioned in the text."
                .to_string(),
        ),
        ChatMessage::new(
            "user",
            format!(
                "The following is the job description. Extract all the skills that are explicitly mentioned and \
                 return them as a Python list.\nIf no skills are mentioned, respond exactly with: \"{NOT_MENTIONED}\".\n\n\
                 Employee Job Description:\n{job_description}"
            ),
        ),
        ChatMessage::new(
            "developer",
            format!(
                "You must respond strictly in the following format:\n\
                 [skill_1, skill_2, skill_3, ...]   (if skills are mentioned)\n\
                 \"{NOT_MENTIONED}\"                    (if no skills are mentioned)"
            ),
        ),
    ]
}

pub fn validation_messages(skill: &str, job_context: &str, candidates: &[&str]) -> Vec<ChatMessage> {
    let list: String = candidates.iter().map(|c| format!("- {c}\n")).collect();
    vec![
        ChatMessage::new(
            "system",
            "You are an expert in identifying whether a skill can be considered a green skill within the ESCO taxonomy.\n\
             A green skill is defined as the knowledge, abilities, values, and attitudes needed to live in, develop, \
             and support a society that reduces the environmental impact of human activities.\n\
             Evaluate whether the provided skill can be used to perform tasks that contribute to environmental sustainability."
                .to_string(),
        ),
        ChatMessage::new(
            "user",
            format!(
                "Determine whether the following skill can be semantically associated with any of the provided ESCO green skills.\n\n\
                 Skill to classify: \"{skill}\"\n\
                 Job context: \"{job_context}\"\n\n\
                 Closest green skills (candidate set):\n{list}\n\
                 Decide whether the skill can be reasonably linked to any of the above based on its meaning, context, \
                 and contribution to environmental sustainability."
            ),
        ),
        ChatMessage::new(
            "developer",
            format!(
                "You must respond strictly using the following format:\n\
                 <Main Name>   (if a valid semantic match exists)\n\
                 {NO_MATCH}            (if no match exists)"
            ),
        ),
    ]
}

fn strip_wrapping(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('`', '`'), ('<', '>')] {
        if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
            return s[open.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s
}

/// Maps a validation reply to the index of the named candidate, or `None`
/// for `No`. Anything else is a protocol error: a label outside the
/// candidate set is never accepted.
pub fn parse_validation_reply(reply: &str, candidates: &[&str]) -> Result<Option<usize>> {
    let answer = strip_wrapping(reply);
    let answer = answer.trim_end_matches('.').trim();
    if answer.eq_ignore_ascii_case(NO_MATCH) {
        return Ok(None);
    }
    candidates
        .iter()
        .position(|c| c.trim().eq_ignore_ascii_case(answer))
        .map(Some)
        .ok_or_else(|| {
            Error::Protocol(format!(
                "reply {reply:?} is neither {NO_MATCH:?} nor a candidate label"
            ))
        })
}

/// Parses an extraction reply: a Python-style list of (optionally quoted)
/// skills, or the "Not mentioned" sentinel, which yields an empty list.
pub fn parse_extraction_reply(reply: &str) -> Result<Vec<String>> {
    let trimmed = reply.trim();
    if strip_wrapping(trimmed).eq_ignore_ascii_case(NOT_MENTIONED) {
        return Ok(Vec::new());
    }
    let inner = trimmed
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::Protocol(format!("extraction reply is not a list: {reply:?}")))?;

    let mut items = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), '\\') => {
                if let Some(next) = chars.next() {
                    current.push(next);
                }
            }
            (Some(_), c) => current.push(c),
            (None, '"' | '\'') if current.trim().is_empty() => {
                current.clear();
                quote = Some(c);
            }
            (None, ',') => {
                items.push(std::mem::take(&mut current));
            }
            (None, c) => current.push(c),
        }
    }
    if quote.is_some() {
        return Err(Error::Protocol(format!("unterminated quote in {reply:?}")));
    }
    items.push(current);
    Ok(items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANDS: [&str; 3] = ["plant trees", "care for the wildlife", "manage forests"];

    #[test]
    fn no_is_rejection() {
        assert_eq!(parse_validation_reply("No", &CANDS).unwrap(), None);
        assert_eq!(parse_validation_reply(" no.\n", &CANDS).unwrap(), None);
    }

    #[test]
    fn label_maps_to_candidate() {
        assert_eq!(parse_validation_reply("plant trees", &CANDS).unwrap(), Some(0));
        assert_eq!(parse_validation_reply("\"Care for the wildlife\"", &CANDS).unwrap(), Some(1));
        assert_eq!(parse_validation_reply("<manage forests>", &CANDS).unwrap(), Some(2));
    }

    #[test]
    fn unknown_label_is_protocol_error() {
        let err = parse_validation_reply("recycle waste", &CANDS).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
        assert!(parse_validation_reply("Yes, plant trees", &CANDS).is_err());
    }

    #[test]
    fn validation_prompt_lists_candidates() {
        let msgs = validation_messages("ayudar a la reforestación", "técnico forestal", &CANDS);
        assert_eq!(
            msgs.iter().map(|m| m.role.as_str()).collect::<Vec<_>>(),
            vec!["system", "user", "developer"]
        );
        assert!(msgs[1].content.contains("Skill to classify: \"ayudar a la reforestación\""));
        assert!(msgs[1].content.contains("Job context: \"técnico forestal\""));
        assert!(msgs[1].content.contains("- plant trees\n- care for the wildlife\n- manage forests\n"));
        assert!(msgs[2].content.contains("No "));
    }

    #[test]
    fn extraction_prompt_embeds_description() {
        let msgs = extraction_messages("Monitor emissions.");
        assert!(msgs[1].content.ends_with("Monitor emissions."));
        assert!(msgs[1].content.contains("\"Not mentioned\""));
    }

    #[test]
    fn extraction_reply_variants() {
        assert!(parse_extraction_reply("\"Not mentioned\"").unwrap().is_empty());
        assert!(parse_extraction_reply("Not mentioned").unwrap().is_empty());
        assert_eq!(
            parse_extraction_reply("['big data management', \"ISO 14001, auditing\", teamwork]").unwrap(),
            vec!["big data management", "ISO 14001, auditing", "teamwork"]
        );
        assert_eq!(parse_extraction_reply("[]").unwrap(), Vec::<String>::new());
        assert_eq!(parse_extraction_reply("['it\\'s fine']").unwrap(), vec!["it's fine"]);
        assert!(parse_extraction_reply("skills: welding").is_err());
        assert!(parse_extraction_reply("['open").is_err());
    }
}
