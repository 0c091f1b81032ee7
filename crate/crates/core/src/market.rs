//! Canonical market records: the tradable unit with its identifiers,
//! outcome-token pair, and descriptive metadata.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

use crate::ids::{Address, Hash32, TokenId};
use crate::time::{iso_seconds, iso_seconds_option};

/// How a market entered the canonical relation: through the metadata API
/// or reconstructed from on-chain token registrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Api,
    OnchainRecovered,
}

/// Non-key descriptive attributes of a market. Markets hang off an
/// event, which in turn may hang off a series; the two slugs preserve
/// that hierarchy without modeling it as separate relations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketMetadata {
    pub slug: String,
    pub title: String,
    pub description: String,
    #[serde(with = "iso_seconds")]
    pub created_at: DateTime<Utc>,
    #[serde(
        with = "iso_seconds_option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub end_date: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_slug: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_slug: Option<String>,
}

/// One canonical market: a binary question with YES/NO outcome tokens.
///
/// `condition_id` is the canonical key. `clob_token_ids`, when the
/// upstream API provides it, lists the tradable token ids with YES
/// first; when absent the `(yes_token, no_token)` pair is authoritative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_id: Option<String>,
    pub condition_id: Hash32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<Hash32>,
    pub oracle_address: Address,
    pub yes_token: TokenId,
    pub no_token: TokenId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clob_token_ids: Option<Vec<TokenId>>,
    pub metadata: MarketMetadata,
    pub provenance: Provenance,
}

impl MarketRecord {
    /// Tokens of this market in YES-first order, preferring the
    /// API-provided clob list when present.
    pub fn tokens(&self) -> Vec<TokenId> {
        match &self.clob_token_ids {
            Some(list) if !list.is_empty() => list.clone(),
            _ => vec![self.yes_token.clone(), self.no_token.clone()],
        }
    }
}

/// Invariant violations found in a single market record. Violations are
/// data, not failures: callers decide whether to quarantine or store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MarketViolation {
    MissingConditionId,
    DuplicateTokens,
    TokenOutsidePair(TokenId),
    MissingGammaId,
    CreatedAfterEnd,
    DuplicateTags,
}

impl MarketViolation {
    pub fn code(&self) -> &'static str {
        match self {
            Self::MissingConditionId => "MISSING_CONDITION_ID",
            Self::DuplicateTokens => "DUPLICATE_TOKENS",
            Self::TokenOutsidePair(_) => "TOKEN_OUTSIDE_PAIR",
            Self::MissingGammaId => "MISSING_GAMMA_ID",
            Self::CreatedAfterEnd => "CREATED_AFTER_END",
            Self::DuplicateTags => "DUPLICATE_TAGS",
        }
    }
}

impl fmt::Display for MarketViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TokenOutsidePair(t) => write!(f, "{}:{}", self.code(), t),
            _ => f.write_str(self.code()),
        }
    }
}

/// Checks every single-record invariant of [`MarketRecord`]. Returns an
/// empty report iff the record is clean. Cross-record invariants (key
/// uniqueness across the market relation) are enforced by storage.
pub fn validate_market(record: &MarketRecord) -> Vec<MarketViolation> {
    let mut report = Vec::new();
    if record.condition_id.is_zero() {
        report.push(MarketViolation::MissingConditionId);
    }
    if !record.yes_token.is_empty()
        && !record.no_token.is_empty()
        && record.yes_token == record.no_token
    {
        report.push(MarketViolation::DuplicateTokens);
    }
    if let Some(clob) = &record.clob_token_ids {
        for t in clob {
            if *t != record.yes_token && *t != record.no_token {
                report.push(MarketViolation::TokenOutsidePair(t.clone()));
            }
        }
    }
    if record.provenance == Provenance::Api && record.gamma_id.is_none() {
        report.push(MarketViolation::MissingGammaId);
    }
    if let Some(end) = record.metadata.end_date {
        if record.metadata.created_at > end {
            report.push(MarketViolation::CreatedAfterEnd);
        }
    }
    let mut seen = HashSet::new();
    if !record.metadata.tags.iter().all(|t| seen.insert(t)) {
        report.push(MarketViolation::DuplicateTags);
    }
    report
}
