//! Policy backed by an OpenAI-compatible chat endpoint with tool calling.

use serde_json::{json, Value};

use super::prompts::{render_prompt, render_tool_instructions};
use super::tool_schema::{parse_tool_arguments, remote_tool_schema, MEMORY_TOOL_NAME};
use super::{ActContext, Decision, MemorySession, Policy, PolicyError, PolicyOutput, RoundInput};
use crate::env::Feedback;
use crate::memory::OpResult;
use crate::transport::{ChatClient, ChatClientConfig, ChatMessage, ToolCall};

const RETRY_FORMAT: &str = "Your reply could not be parsed. Answer with only a JSON object of the form \
{\"reasoning\": \"...\", \"final_diagnosis\": \"...\"} where final_diagnosis is one of the candidates.";

/// Extracts `(reasoning, final_diagnosis)` from a model reply.
///
/// Accepts code fences and surrounding prose; the outermost `{...}` span must
/// parse as a JSON object with a non-empty string `final_diagnosis`.
pub fn parse_final_answer(text: &str) -> Result<(String, String), String> {
    let start = text.find('{').ok_or("no JSON object in reply")?;
    let end = text.rfind('}').filter(|&e| e > start).ok_or("unterminated JSON object")?;
    let value: Value = serde_json::from_str(&text[start..=end]).map_err(|e| e.to_string())?;
    let diagnosis = value
        .get("final_diagnosis")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or("`final_diagnosis` missing or empty")?;
    let reasoning = value.get("reasoning").and_then(Value::as_str).unwrap_or_default();
    Ok((reasoning.to_owned(), diagnosis.to_owned()))
}

#[derive(Debug)]
pub struct RemotePolicy {
    client: ChatClient,
    capacity: usize,
}

impl RemotePolicy {
    pub fn new(cfg: ChatClientConfig, capacity: usize) -> Result<Self, PolicyError> {
        let client = ChatClient::new(cfg).map_err(|e| PolicyError::Init(e.to_string()))?;
        Ok(Self { client, capacity })
    }

    fn send(&self, transcript: &[ChatMessage], with_tools: bool, ctx: &ActContext) -> Result<ChatMessage, PolicyError> {
        let mut req = self.client.request(transcript.to_vec());
        if with_tools {
            req.tools = vec![remote_tool_schema()];
            req.tool_choice = Some(json!("auto"));
        }
        req.seed = Some(ctx.seed);
        Ok(self.client.complete(&req)?)
    }

    /// Executes each call against memory and appends the tool results.
    fn run_tools(&self, calls: &[ToolCall], memory: &mut MemorySession<'_>, transcript: &mut Vec<ChatMessage>) {
        for call in calls {
            let reply = if call.function.name != MEMORY_TOOL_NAME {
                json!({"ok": false, "error": format!("unknown tool {:?}", call.function.name)})
            } else {
                match call.arguments().and_then(|a| parse_tool_arguments(&a)) {
                    Err(e) => json!({"ok": false, "error": e}),
                    Ok(op) => match memory.apply(op) {
                        Ok(result) => json!({"ok": true, "result": describe(&result)}),
                        Err(e) => json!({"ok": false, "error": e.to_string()}),
                    },
                }
            };
            transcript.push(ChatMessage::tool_result(call.id.clone(), reply.to_string()));
        }
    }
}

fn describe(result: &OpResult) -> Value {
    match result {
        OpResult::Listed { view } => json!({"memory": super::render_memory(view)}),
        other => serde_json::to_value(other).unwrap_or(Value::Null),
    }
}

impl Policy for RemotePolicy {
    fn name(&self) -> &str {
        "remote"
    }

    fn decide(
        &self,
        input: &RoundInput,
        memory: &mut MemorySession<'_>,
        ctx: &ActContext,
    ) -> Result<Decision, PolicyError> {
        let tools = input.template.uses_memory();
        let mut transcript = Vec::new();
        if tools {
            transcript.push(ChatMessage::system(render_tool_instructions(self.capacity)));
        }
        transcript.push(ChatMessage::user(render_prompt(input)));

        let mut turns = 0u32;
        let mut format_retry_used = false;
        while turns < ctx.max_turns {
            let reply = self.send(&transcript, tools, ctx)?;
            turns += 1;
            transcript.push(reply.clone());

            if !reply.tool_calls.is_empty() {
                turns = turns.saturating_add(reply.tool_calls.len() as u32);
                self.run_tools(&reply.tool_calls, memory, &mut transcript);
                continue;
            }

            let text = reply.content.unwrap_or_default();
            match parse_final_answer(&text) {
                Ok((reasoning, prediction)) => {
                    return Ok(Decision {
                        reasoning,
                        prediction,
                        turns_used: turns.min(ctx.max_turns),
                        response_text: text,
                        transcript,
                    })
                }
                Err(e) if format_retry_used => return Err(PolicyError::MalformedOutput(e)),
                Err(e) => {
                    log::debug!("unparseable answer ({e}); asking once more");
                    format_retry_used = true;
                    transcript.push(ChatMessage::user(RETRY_FORMAT));
                }
            }
        }
        Err(PolicyError::TurnBudgetExhausted {
            max_turns: ctx.max_turns,
        })
    }

    fn observe_feedback(
        &self,
        input: &RoundInput,
        output: &PolicyOutput,
        feedback: &Feedback,
        memory: &mut MemorySession<'_>,
        ctx: &ActContext,
    ) -> Result<(), PolicyError> {
        if !input.template.uses_memory() || output.transcript.is_empty() {
            return Ok(());
        }
        let mut transcript = output.transcript.clone();
        transcript.push(ChatMessage::user(format!(
            "Feedback: {} Update your memory with the `{MEMORY_TOOL_NAME}` tool as needed, then reply DONE.",
            feedback.to_text()
        )));
        for _ in 0..ctx.max_turns {
            let reply = self.send(&transcript, true, ctx)?;
            transcript.push(reply.clone());
            if reply.tool_calls.is_empty() {
                return Ok(());
            }
            self.run_tools(&reply.tool_calls, memory, &mut transcript);
        }
        log::warn!("case {}: memory update stopped after {} turns", input.case.id, ctx.max_turns);
        Ok(())
    }
}
