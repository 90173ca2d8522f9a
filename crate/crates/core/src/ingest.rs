//! ThingSpeak-compatible channel update endpoint and the request format the
//! gateway uplinks with.
//!
//! `GET /update?api_key=KEY&field1=..&field8=` answers with the new entry id
//! as plain text, or `0` when the update is rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::medium::SimTime;

pub const MAX_FIELDS: u8 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestEntry {
    pub entry_id: u64,
    pub at_us: SimTime,
    pub fields: BTreeMap<u8, String>,
}

#[derive(Debug, Clone)]
pub struct Ingest {
    api_key: String,
    last_id: u64,
    entries: Vec<IngestEntry>,
}

impl Ingest {
    pub fn new(api_key: impl Into<String>) -> Self {
        Ingest {
            api_key: api_key.into(),
            last_id: 0,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[IngestEntry] {
        &self.entries
    }

    /// Accepts an update given its decoded query parameters. Returns the new
    /// entry id, or 0 on rejection (wrong key, no fields, bad field number).
    pub fn accept<'a, I>(&mut self, params: I, at_us: SimTime) -> u64
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut key = None;
        let mut fields = BTreeMap::new();
        for (name, value) in params {
            if name == "api_key" {
                key = Some(value);
            } else if let Some(n) = name.strip_prefix("field") {
                match n.parse::<u8>() {
                    Ok(n) if (1..=MAX_FIELDS).contains(&n) => {
                        fields.insert(n, value.to_string());
                    }
                    _ => return 0,
                }
            }
        }
        if key != Some(self.api_key.as_str()) || self.api_key.is_empty() || fields.is_empty() {
            return 0;
        }
        self.last_id += 1;
        self.entries.push(IngestEntry {
            entry_id: self.last_id,
            at_us,
            fields,
        });
        self.last_id
    }

    /// Accepts a raw query string (the part after `?`).
    pub fn accept_query(&mut self, query: &str, at_us: SimTime) -> u64 {
        let pairs: Vec<(String, String)> = form_urlencoded::parse(query.as_bytes())
            .into_owned()
            .collect();
        self.accept(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())), at_us)
    }
}

/// Builds `<base>/update?api_key=..&fieldN=..` with fields in ascending order.
pub fn update_url(base: &str, api_key: &str, fields: &BTreeMap<u8, i64>) -> String {
    let mut query = form_urlencoded::Serializer::new(String::new());
    query.append_pair("api_key", api_key);
    for (n, v) in fields {
        query.append_pair(&format!("field{n}"), &v.to_string());
    }
    format!("{}/update?{}", base.trim_end_matches('/'), query.finish())
}

/// Splits a URL (absolute or path-only) into its path and query parts.
pub fn split_url(url: &str) -> (&str, &str) {
    let without_scheme = url.split_once("://").map_or(url, |(_, rest)| rest);
    let path_and_query = if url.contains("://") {
        without_scheme
            .find('/')
            .map_or("/", |i| &without_scheme[i..])
    } else {
        without_scheme
    };
    path_and_query.split_once('?').unwrap_or((path_and_query, ""))
}
