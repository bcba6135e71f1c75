//! Chat-completion and embedding clients.
//!
//! Every language-model call in the crate goes through [`ChatClient`] and
//! every embedding through [`EmbedClient`], so the pipeline runs unchanged
//! against a live service or the deterministic mocks in [`mock`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub mod http;
pub mod mock;
mod throttle;

pub use throttle::{Permit, Throttle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid input at index {index}: {reason}")]
    InvalidInput { index: usize, reason: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("service returned {status}: {message}")]
    Service { status: u16, message: String },
    #[error("malformed service response: {0}")]
    Decode(String),
    #[error("mock client: {0}")]
    Mock(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;

    /// Single user-turn request at temperature 0.
    pub fn user(prompt: impl Into<String>) -> Self {
        Self {
            messages: vec![Message { role: Role::User, content: prompt.into() }],
            temperature: 0.0,
            max_output_tokens: Self::DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.messages.insert(0, Message { role: Role::System, content: system.into() });
        self
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.messages.is_empty() {
            return Err(ClientError::InvalidRequest("at least one message is required".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ClientError::InvalidRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(ClientError::InvalidRequest("max_output_tokens must be >= 1".into()));
        }
        Ok(())
    }

    /// Concatenation of all message contents, the text the mocks match on.
    pub fn transcript(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

pub trait ChatClient: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError>;
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).chat(request)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Arc<C> {
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).chat(request)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).chat(request)
    }
}

/// Dense embedding of fixed dimension with finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<T = f64> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, ClientError> {
        if values.is_empty() {
            return Err(ClientError::Decode("embedding has zero dimensions".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ClientError::Decode(format!("embedding component {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn norm(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    /// Converts the components to another scalar type.
    pub fn cast<U: Scalar>(&self) -> EmbeddingVector<U> {
        EmbeddingVector { values: self.values.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect() }
    }
}

pub trait EmbedClient: Send + Sync {
    /// Output dimension, constant for the lifetime of the client.
    fn dim(&self) -> usize;

    /// Largest batch accepted by a single [`EmbedClient::embed`] call.
    fn max_batch(&self) -> usize;

    /// Embeds each text, preserving order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<f64>>, ClientError>;

    /// Embeds any number of texts by splitting into `max_batch` batches.
    fn embed_all(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<f64>>, ClientError> {
        let mut out = Vec::with_capacity(texts.len());
        let batch = self.max_batch().max(1);
        for (b, slice) in texts.chunks(batch).enumerate() {
            let vectors = self.embed(slice).map_err(|e| match e {
                ClientError::InvalidInput { index, reason } => {
                    ClientError::InvalidInput { index: index + b * batch, reason }
                }
                other => other,
            })?;
            out.extend(vectors);
        }
        Ok(out)
    }
}

impl<E: EmbedClient + ?Sized> EmbedClient for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn max_batch(&self) -> usize {
        (**self).max_batch()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<f64>>, ClientError> {
        (**self).embed(texts)
    }
}

impl<E: EmbedClient + ?Sized> EmbedClient for Arc<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn max_batch(&self) -> usize {
        (**self).max_batch()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<f64>>, ClientError> {
        (**self).embed(texts)
    }
}

impl<E: EmbedClient + ?Sized> EmbedClient for Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn max_batch(&self) -> usize {
        (**self).max_batch()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<f64>>, ClientError> {
        (**self).embed(texts)
    }
}

/// Checks the batch preconditions shared by all embedders.
pub fn check_embed_batch(texts: &[&str], max_batch: usize) -> Result<(), ClientError> {
    if texts.len() > max_batch {
        return Err(ClientError::InvalidRequest(format!("batch of {} exceeds maximum {max_batch}", texts.len())));
    }
    if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(ClientError::InvalidInput { index, reason: "empty text".into() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_message_request_is_invalid() {
        let req = ChatRequest { messages: vec![], temperature: 0.0, max_output_tokens: 10 };
        assert!(matches!(req.validate(), Err(ClientError::InvalidRequest(_))));
        assert!(ChatRequest::user("hi").validate().is_ok());
    }

    #[test]
    fn negative_temperature_is_invalid() {
        let mut req = ChatRequest::user("hi");
        req.temperature = -0.1;
        assert!(req.validate().is_err());
    }

    #[test]
    fn embedding_rejects_non_finite() {
        assert!(EmbeddingVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(EmbeddingVector::<f64>::new(vec![]).is_err());
        let v = EmbeddingVector::new(vec![3.0f64, 4.0]).unwrap();
        assert_eq!(v.norm(), 5.0);
        assert_eq!(v.cast::<f32>().values(), &[3.0f32, 4.0]);
    }

    #[test]
    fn batch_check_reports_index() {
        assert_eq!(
            check_embed_batch(&["a", "", "b"], 8),
            Err(ClientError::InvalidInput { index: 1, reason: "empty text".into() })
        );
        assert!(check_embed_batch(&["a", "b"], 1).is_err());
    }
}
