// SPDX-License-Identifier: Apache-2.0

//! Scope tokens. Secrets are 128-bit random values shown to their holder
//! exactly once; only their SHA-256 digest is kept.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use pathharbor_core::Id;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::random_id;

const SECRET_PREFIX: &str = "pht_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    /// Issued to an app process for one job.
    Job,
    /// Issued to a workbench viewer for one slide.
    Viewer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token_id: Id,
    pub secret_sha256: String,
    pub kind: TokenKind,
    pub job_id: Option<Id>,
    pub allowed_slides: BTreeSet<Id>,
    pub allowed_output_keys: BTreeSet<String>,
    pub issued_at_ms: u64,
    pub expires_at_ms: u64,
    pub revoked: bool,
}

/// Something a token may be used for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resource {
    /// Slide info, tiles, regions and frames.
    Slide(Id),
    /// The App Interface endpoints of one job.
    JobData(Id),
    /// Reading overlays attached to a slide.
    OverlayRead(Id),
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resource::Slide(id) => write!(f, "slide:{id}"),
            Resource::JobData(id) => write!(f, "job:{id}"),
            Resource::OverlayRead(id) => write!(f, "overlays-of-slide:{id}"),
        }
    }
}

/// A denied request, kept for auditing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Denial {
    pub at_ms: u64,
    pub token_id: Option<Id>,
    pub job_id: Option<Id>,
    pub resource: String,
    pub reason: String,
}

pub fn hash_secret(secret: &str) -> String {
    hex::encode(Sha256::digest(secret.as_bytes()))
}

pub fn new_secret() -> String {
    format!("{SECRET_PREFIX}{}", random_id())
}

#[derive(Debug, Default)]
pub struct TokenStore {
    tokens: HashMap<Id, TokenRecord>,
    by_hash: HashMap<String, Id>,
    audit: Vec<Denial>,
}

impl TokenStore {
    /// Creates a token; returns its record and the clear secret.
    pub fn issue(&mut self, kind: TokenKind, job_id: Option<Id>, now_ms: u64, ttl_ms: u64) -> (TokenRecord, String) {
        let secret = new_secret();
        let record = TokenRecord {
            token_id: random_id(),
            secret_sha256: hash_secret(&secret),
            kind,
            job_id,
            allowed_slides: BTreeSet::new(),
            allowed_output_keys: BTreeSet::new(),
            issued_at_ms: now_ms,
            expires_at_ms: now_ms.saturating_add(ttl_ms),
            revoked: false,
        };
        self.put(record.clone());
        (record, secret)
    }

    /// Inserts or replaces a record (also used during replay).
    pub fn put(&mut self, record: TokenRecord) {
        self.by_hash.insert(record.secret_sha256.clone(), record.token_id);
        self.tokens.insert(record.token_id, record);
    }

    pub fn get(&self, token_id: Id) -> Option<&TokenRecord> {
        self.tokens.get(&token_id)
    }

    pub fn get_mut(&mut self, token_id: Id) -> Option<&mut TokenRecord> {
        self.tokens.get_mut(&token_id)
    }

    pub fn lookup_secret(&self, secret: &str) -> Option<&TokenRecord> {
        self.by_hash.get(&hash_secret(secret)).and_then(|id| self.tokens.get(id))
    }

    /// Allow iff the secret belongs to a live token whose scope covers
    /// `resource`. Every denial is recorded.
    pub fn authorize(&mut self, secret: Option<&str>, resource: &Resource, now_ms: u64) -> Result<TokenRecord, Denial> {
        let record = secret.and_then(|s| self.lookup_secret(s)).cloned();
        let verdict = match &record {
            None if secret.is_none() => Err("no bearer token"),
            None => Err("unknown token"),
            Some(t) if t.revoked => Err("token revoked"),
            Some(t) if now_ms >= t.expires_at_ms => Err("token expired"),
            Some(t) => {
                let ok = match resource {
                    Resource::Slide(id) | Resource::OverlayRead(id) => t.allowed_slides.contains(id),
                    Resource::JobData(job) => t.kind == TokenKind::Job && t.job_id == Some(*job),
                };
                if ok {
                    Ok(())
                } else {
                    Err("resource outside token scope")
                }
            }
        };
        match verdict {
            Ok(()) => Ok(record.expect("allowed implies record")),
            Err(reason) => {
                let denial = Denial {
                    at_ms: now_ms,
                    token_id: record.as_ref().map(|t| t.token_id),
                    job_id: record.as_ref().and_then(|t| t.job_id),
                    resource: resource.to_string(),
                    reason: reason.into(),
                };
                self.audit.push(denial.clone());
                Err(denial)
            }
        }
    }

    pub fn audit_log(&self) -> &[Denial] {
        &self.audit
    }
}
