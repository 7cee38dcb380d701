//! Consuming model replies: reasoning text followed by a final fenced
//! JSON block.

use serde_json::Value;

use super::prompts::PromptId;
use super::DirectorError;
use crate::backends::Backend;

/// Splits a reply into (reasoning, JSON text of the last ```json block).
/// A reply that is bare JSON is accepted with empty reasoning.
pub fn split_reply(reply: &str) -> Option<(&str, &str)> {
    if let Some(open) = reply.rfind("```json") {
        let body_start = open + "```json".len();
        let close = reply[body_start..].find("```")? + body_start;
        return Some((reply[..open].trim(), reply[body_start..close].trim()));
    }
    let trimmed = reply.trim();
    (trimmed.starts_with('{') && trimmed.ends_with('}')).then_some(("", trimmed))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Sends one request and hands the final JSON to `accept`. A reply that
/// cannot be parsed or is rejected gets one repair attempt, after which
/// the failure becomes a schema violation. Reasoning text goes to `log`.
pub(crate) fn ask<T>(
    backend: &dyn Backend,
    id: PromptId,
    user: &str,
    label: &str,
    log: &mut Vec<String>,
    accept: impl Fn(Value) -> Result<T, String>,
) -> Result<T, DirectorError> {
    let system = id.system_prompt();
    let mut prompt = user.to_string();
    let mut last_error = String::new();
    for attempt in 0..2 {
        let reply = backend.chat_complete(&system, &prompt)?;
        let outcome = match split_reply(&reply) {
            None => Err("no fenced ```json block found".to_string()),
            Some((reasoning, body)) => {
                if !reasoning.is_empty() {
                    log.push(format!("[{id} {label}] {}", one_line(reasoning)));
                }
                serde_json::from_str::<Value>(body)
                    .map_err(|e| format!("invalid JSON: {e}"))
                    .and_then(&accept)
            }
        };
        match outcome {
            Ok(v) => return Ok(v),
            Err(e) => {
                log.push(format!("[{id} {label}] attempt {} rejected: {e}", attempt + 1));
                last_error = e;
                prompt = format!(
                    "{user}\n\nYour previous answer could not be used ({last_error}). Reply again, ending with \
                     one fenced ```json block that follows the requested shape exactly."
                );
            }
        }
    }
    Err(DirectorError::SchemaViolation(format!("{id} {label}: {last_error}")))
}
