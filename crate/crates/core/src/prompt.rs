//! Prompt templates and the parse-or-repair chat loop.
//!
//! Templates are plain text with `{{slot}}` placeholders. Any change to a
//! template changes request digests, so recorded transcripts are tied to
//! [`TEMPLATE_VERSION`].

use thiserror::Error;

use crate::oracle::{ChatRequest, Oracle, OracleError};

pub const TEMPLATE_VERSION: &str = "1";

#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! template {
    ($id:ident, $file:literal) => {
        pub const $id: Template = Template {
            name: $file,
            text: include_str!(concat!("../templates/", $file, ".txt")),
        };
    };
}

template!(SYSTEM, "system");
template!(PROPOSE, "propose");
template!(REVISE, "revise");
template!(PROBLEMS, "problems");
template!(REFINE, "refine");
template!(VERIFY, "verify");
template!(REPAIR, "repair");
template!(GROUP, "group");
template!(INITIAL_PROBLEM, "initial_problem");
template!(REFINED_PROBLEM, "refined_problem");
template!(EQUIVALENCE, "equivalence");

impl Template {
    /// Fills every `{{slot}}`. Panics if a slot is left unfilled, which is
    /// a programming error rather than a runtime condition.
    pub fn render(&self, slots: &[(&str, &str)]) -> String {
        let mut out = self.text.to_string();
        for (k, v) in slots {
            out = out.replace(&format!("{{{{{k}}}}}"), v);
        }
        if let Some(i) = out.find("{{") {
            let end = out[i..].find("}}").map_or(out.len(), |j| i + j + 2);
            panic!("template `{}` has unfilled slot {}", self.name, &out[i..end]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RepairError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("no usable {what} after {attempts} attempt(s): {diagnostics}")]
    Unparseable {
        what: String,
        attempts: usize,
        diagnostics: String,
    },
}

/// Sends `req`; if `parse` rejects the reply, appends the reply and the
/// diagnostics to the conversation and asks again, up to `retries` times.
pub fn chat_with_repair<T>(
    oracle: &Oracle,
    mut req: ChatRequest,
    what: &str,
    retries: usize,
    mut parse: impl FnMut(&str) -> Result<T, String>,
) -> Result<T, RepairError> {
    let mut last = String::new();
    for attempt in 0..=retries {
        let reply = oracle.chat(&req)?;
        match parse(&reply) {
            Ok(v) => return Ok(v),
            Err(diag) => {
                log::info!("{what}: attempt {} rejected: {diag}", attempt + 1);
                req = req
                    .assistant(reply)
                    .user(REPAIR.render(&[("diagnostics", &diag), ("what", what)]));
                last = diag;
            }
        }
    }
    Err(RepairError::Unparseable {
        what: what.to_string(),
        attempts: retries + 1,
        diagnostics: last,
    })
}
