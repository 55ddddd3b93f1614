use super::{ChatMessage, ToolSpec};

/// Rough token estimate: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Estimate for a whole request, counting message bodies, tool-call
/// arguments and tool schemas.
pub fn estimate_request_tokens(messages: &[ChatMessage], tools: &[ToolSpec]) -> usize {
    let messages: usize = messages
        .iter()
        .map(|m| {
            estimate_tokens(&m.content)
                + m.tool_calls
                    .iter()
                    .map(|c| estimate_tokens(&c.tool_name) + estimate_tokens(&c.arguments.to_string()))
                    .sum::<usize>()
                + 4
        })
        .sum();
    let tools: usize = tools
        .iter()
        .map(|t| estimate_tokens(&t.name) + estimate_tokens(&t.description) + estimate_tokens(&t.parameters.to_string()))
        .sum();
    messages + tools
}
