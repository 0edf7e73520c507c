use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::OracleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// A message part in the OpenAI content-array shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Part {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

impl Part {
    pub fn text(t: impl Into<String>) -> Self {
        Part::Text { text: t.into() }
    }

    /// Inlines an image file as a base64 data URI.
    pub fn image_file(path: &Path) -> Result<Self, OracleError> {
        let bytes = std::fs::read(path).map_err(|e| OracleError::Io(format!("{}: {e}", path.display())))?;
        let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => "image/png",
            Some("jpg" | "jpeg") => "image/jpeg",
            Some("pgm" | "ppm" | "pnm") => "image/x-portable-anymap",
            _ => "application/octet-stream",
        };
        let data = base64::engine::general_purpose::STANDARD.encode(bytes);
        Ok(Part::ImageUrl {
            image_url: ImageUrl {
                url: format!("data:{mime};base64,{data}"),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: Vec<Part>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            messages: Vec::new(),
            temperature: 0.0,
            max_tokens: 4096,
        }
    }

    pub fn system(mut self, text: impl Into<String>) -> Self {
        self.messages.push(Message {
            role: Role::System,
            content: vec![Part::text(text)],
        });
        self
    }

    pub fn user(self, text: impl Into<String>) -> Self {
        self.user_parts(vec![Part::text(text)])
    }

    pub fn user_parts(mut self, content: Vec<Part>) -> Self {
        self.messages.push(Message {
            role: Role::User,
            content,
        });
        self
    }

    pub fn assistant(mut self, text: impl Into<String>) -> Self {
        self.messages.push(Message {
            role: Role::Assistant,
            content: vec![Part::text(text)],
        });
        self
    }

    /// All text parts joined by newlines; handy for scripted backends.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .flat_map(|m| &m.content)
            .filter_map(|p| match p {
                Part::Text { text } => Some(text.as_str()),
                Part::ImageUrl { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Text of the last user message.
    pub fn last_user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .and_then(|m| {
                m.content.iter().find_map(|p| match p {
                    Part::Text { text } => Some(text.as_str()),
                    Part::ImageUrl { .. } => None,
                })
            })
            .unwrap_or("")
    }

    pub fn n_images(&self) -> usize {
        self.messages
            .iter()
            .flat_map(|m| &m.content)
            .filter(|p| matches!(p, Part::ImageUrl { .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model: String,
    pub input: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Request {
    Chat(ChatRequest),
    Embed(EmbedRequest),
}

impl Request {
    /// sha256 over the request serialized with sorted keys. Prompt text is
    /// hashed verbatim.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_value(self).expect("requests serialize").to_string();
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// The form stored in transcripts: image payloads are replaced by their
    /// sha256 so transcripts stay small and diffable.
    pub fn abbreviated(&self) -> serde_json::Value {
        let mut req = self.clone();
        if let Request::Chat(c) = &mut req {
            for part in c.messages.iter_mut().flat_map(|m| m.content.iter_mut()) {
                if let Part::ImageUrl { image_url } = part {
                    let h: String = Sha256::digest(image_url.url.as_bytes())
                        .iter()
                        .map(|b| format!("{b:02x}"))
                        .collect();
                    image_url.url = format!("sha256:{h}");
                }
            }
        }
        serde_json::to_value(req).expect("requests serialize")
    }
}
