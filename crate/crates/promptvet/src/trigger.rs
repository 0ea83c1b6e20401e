//! Trigger-word identification by rank difference, plus two-stage
//! refinement of the candidate list.
//!
//! For every word in the union of the benign and malicious vocabularies the
//! rank difference is `delta(w) = rank_benign(w) - rank_malicious(w)`, with
//! absent words ranked one past the owning table's worst rank. Large positive
//! deltas mark words that are common in injection text but rare in benign
//! text.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llmclient::{LlmClient, LlmError, PromptKind};
use crate::textproc::RankTable;

/// Lifecycle of a candidate word. Transitions only move forward:
/// `Candidate -> (LlmApproved | LlmRejected)` and
/// `LlmApproved -> (Final | ManuallyRejected)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerStatus {
    Candidate,
    LlmApproved,
    LlmRejected,
    ManuallyRejected,
    Final,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerCandidate {
    pub word: String,
    pub rank_benign: usize,
    pub rank_malicious: usize,
    pub delta: i64,
    pub status: TriggerStatus,
}

/// Ranked candidate list, sorted by delta descending with lexicographic
/// tie-breaking, truncated to the top `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerReport {
    pub candidates: Vec<TriggerCandidate>,
    pub k: usize,
    pub benign_source: String,
    pub malicious_source: String,
}

#[derive(Debug, Error)]
pub enum TriggerError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("candidate '{word}' has status {status:?}, expected {expected:?}")]
    InvalidStatus {
        word: String,
        status: TriggerStatus,
        expected: TriggerStatus,
    },
    #[error("llm refinement stopped at word '{word}': {source}")]
    RefineFailed {
        word: String,
        #[source]
        source: LlmError,
    },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report JSON: {0}")]
    Malformed(#[from] serde_json::Error),
}

impl TriggerReport {
    /// Words with the given status, in report order.
    pub fn words_with_status(&self, status: TriggerStatus) -> Vec<String> {
        self.candidates
            .iter()
            .filter(|c| c.status == status)
            .map(|c| c.word.clone())
            .collect()
    }

    /// Wire format: a JSON array of candidate objects.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.candidates).expect("report serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self, TriggerError> {
        let candidates: Vec<TriggerCandidate> = serde_json::from_str(raw)?;
        Ok(TriggerReport {
            k: candidates.len(),
            candidates,
            benign_source: String::new(),
            malicious_source: String::new(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TriggerError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| TriggerError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TriggerError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| TriggerError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&raw)
    }
}

/// Rank-difference identification over the union of both vocabularies.
///
/// Returns the top `k` words by delta descending; every candidate starts in
/// status `Candidate`. Two empty tables yield an empty report.
pub fn identify_triggers(
    benign: &RankTable,
    malicious: &RankTable,
    k: usize,
) -> Result<TriggerReport, TriggerError> {
    if k < 1 {
        return Err(TriggerError::Parameter(format!("k must be >= 1, got {k}")));
    }
    let words: BTreeSet<&str> = benign.words().chain(malicious.words()).collect();
    let mut candidates: Vec<TriggerCandidate> = words
        .into_iter()
        .map(|word| {
            let rank_benign = benign.rank_or_absent(word);
            let rank_malicious = malicious.rank_or_absent(word);
            TriggerCandidate {
                word: word.to_string(),
                rank_benign,
                rank_malicious,
                delta: rank_benign as i64 - rank_malicious as i64,
                status: TriggerStatus::Candidate,
            }
        })
        .collect();
    candidates.sort_by(|a, b| b.delta.cmp(&a.delta).then_with(|| a.word.cmp(&b.word)));
    candidates.truncate(k);
    Ok(TriggerReport {
        candidates,
        k,
        benign_source: benign.source().to_string(),
        malicious_source: malicious.source().to_string(),
    })
}

/// Ask the client whether each candidate word is injection-flavored.
///
/// The reply's leading token decides: "yes" approves, "no" rejects, anything
/// else rejects fail-closed. Order is preserved. A transport failure aborts,
/// naming the word where processing stopped.
pub fn refine_with_llm(
    report: &TriggerReport,
    client: &LlmClient,
) -> Result<TriggerReport, TriggerError> {
    refine_with_llm_parallel(report, client, 1)
}

/// Like [`refine_with_llm`] but with up to `max_in_flight` concurrent
/// queries. Output order is by candidate index regardless of completion
/// order.
pub fn refine_with_llm_parallel(
    report: &TriggerReport,
    client: &LlmClient,
    max_in_flight: usize,
) -> Result<TriggerReport, TriggerError> {
    for c in &report.candidates {
        if c.status != TriggerStatus::Candidate {
            return Err(TriggerError::InvalidStatus {
                word: c.word.clone(),
                status: c.status,
                expected: TriggerStatus::Candidate,
            });
        }
    }
    let n = report.candidates.len();
    let results: Mutex<Vec<Option<Result<TriggerStatus, LlmError>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    let next: Mutex<usize> = Mutex::new(0);
    let workers = max_in_flight.max(1).min(n.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = {
                    let mut guard = next.lock().expect("work queue lock");
                    if *guard >= n {
                        return;
                    }
                    let idx = *guard;
                    *guard += 1;
                    idx
                };
                let outcome = query_verdict(client, &report.candidates[idx].word);
                results.lock().expect("results lock")[idx] = Some(outcome);
            });
        }
    });

    let results = results.into_inner().expect("results lock");
    let mut candidates = report.candidates.clone();
    for (i, outcome) in results.into_iter().enumerate() {
        match outcome.expect("every index processed") {
            Ok(status) => candidates[i].status = status,
            Err(e) => {
                return Err(TriggerError::RefineFailed {
                    word: candidates[i].word.clone(),
                    source: e,
                })
            }
        }
    }
    Ok(TriggerReport {
        candidates,
        ..report.clone()
    })
}

fn query_verdict(client: &LlmClient, word: &str) -> Result<TriggerStatus, LlmError> {
    let mut bindings = std::collections::BTreeMap::new();
    bindings.insert("word".to_string(), word.to_string());
    let completion = client.complete(PromptKind::TriggerHarmfulness, &bindings)?;
    Ok(match parse_verdict(&completion.text) {
        Some(true) => TriggerStatus::LlmApproved,
        Some(false) => TriggerStatus::LlmRejected,
        None => {
            // Fail closed: an unparseable verdict keeps the word out.
            log::warn!(
                "ambiguous harmfulness verdict for '{word}': {:?}",
                completion.text.lines().next().unwrap_or("")
            );
            TriggerStatus::LlmRejected
        }
    })
}

/// Scan the reply for a leading yes/no token, case-insensitively.
fn parse_verdict(reply: &str) -> Option<bool> {
    let first: String = reply
        .trim_start()
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect();
    match first.to_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Apply a reviewer denylist: approved words on the list become
/// `ManuallyRejected`, remaining approved words become `Final`. Other
/// statuses are untouched.
pub fn apply_manual_review(
    report: &TriggerReport,
    denylist_path: impl AsRef<Path>,
) -> Result<TriggerReport, TriggerError> {
    let path = denylist_path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| TriggerError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let denylist: HashSet<&str> = raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    Ok(apply_denylist(report, &denylist))
}

/// In-memory form of [`apply_manual_review`]; an empty denylist finalizes
/// every approved word.
pub fn apply_denylist(report: &TriggerReport, denylist: &HashSet<&str>) -> TriggerReport {
    let candidates = report
        .candidates
        .iter()
        .map(|c| {
            let status = if c.status == TriggerStatus::LlmApproved {
                if denylist.contains(c.word.as_str()) {
                    TriggerStatus::ManuallyRejected
                } else {
                    TriggerStatus::Final
                }
            } else {
                c.status
            };
            TriggerCandidate {
                status,
                ..c.clone()
            }
        })
        .collect();
    TriggerReport {
        candidates,
        ..report.clone()
    }
}
