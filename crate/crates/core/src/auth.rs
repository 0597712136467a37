//! Reference database and decision rule: enrollment, lookup or whole-store
//! verification, and the append-only query log.
//!
//! Verification deliberately returns the full similarity score to the caller
//! even on rejection; that information leak is the attack surface the digital
//! forgery drivers exploit. There is no template protection, mirroring the
//! systems under study.
//!
//! The store is an in-memory structure; timestamps are supplied by the caller
//! so the core stays clock-free (the CLI layer persists records to disk and
//! provides wall-clock or reproducible timestamps).

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::config::CaptureMode;
use crate::map::{score, NormMap, SimilarityScore};
use crate::{Error, Result};

/// One enrolled (id, template) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateRecord {
    pub id: String,
    pub template: NormMap,
    pub enrolled_at: u64,
    pub source: CaptureMode,
}

/// Outcome of one verification. `matched_id` names the accepted record and
/// is `None` on rejection; `score` is always populated (the leak).
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub accepted: bool,
    pub score: SimilarityScore,
    pub matched_id: Option<String>,
}

/// One audit entry per verify call, in call order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryLogEntry {
    pub ts: u64,
    /// The id the caller asked about; `None` for whole-store search.
    pub id: Option<String>,
    pub score: SimilarityScore,
}

/// The reference database with its acceptance threshold and query log.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    threshold: f64,
    records: BTreeMap<String, TemplateRecord>,
    log: Vec<QueryLogEntry>,
}

impl TemplateStore {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidParam("threshold must lie in (0, 1)"));
        }
        Ok(TemplateStore {
            threshold,
            records: BTreeMap::new(),
            log: Vec::new(),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Enrolled ids in sorted order.
    pub fn ids(&self) -> Vec<String> {
        self.records.keys().cloned().collect()
    }

    pub fn get(&self, id: &str) -> Option<&TemplateRecord> {
        self.records.get(id)
    }

    /// Adds a record. Fails with [`Error::DuplicateId`] when the id exists.
    pub fn enroll(
        &mut self,
        id: &str,
        template: NormMap,
        source: CaptureMode,
        enrolled_at: u64,
    ) -> Result<()> {
        if self.records.contains_key(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        self.records.insert(
            id.to_string(),
            TemplateRecord {
                id: id.to_string(),
                template,
                enrolled_at,
                source,
            },
        );
        Ok(())
    }

    /// Scores `query` against one record (`id` given) or against the whole
    /// store (best record by min-component score) and applies the threshold.
    /// Every call appends to the query log, accepted or not.
    pub fn verify(&mut self, query: &NormMap, id: Option<&str>, ts: u64) -> Result<VerifyOutcome> {
        if self.records.is_empty() {
            return Err(Error::EmptyStore);
        }
        let (best_id, best_score) = match id {
            Some(id) => {
                let record = self
                    .records
                    .get(id)
                    .ok_or_else(|| Error::UnknownId(id.to_string()))?;
                (id.to_string(), score(query, &record.template)?)
            }
            None => {
                let mut best: Option<(String, SimilarityScore)> = None;
                for (rid, record) in &self.records {
                    let s = score(query, &record.template)?;
                    let better = match &best {
                        Some((_, b)) => s.min_component() > b.min_component(),
                        None => true,
                    };
                    if better {
                        best = Some((rid.clone(), s));
                    }
                }
                best.expect("store verified non-empty above")
            }
        };
        let accepted = best_score.min_component() >= self.threshold;
        self.log.push(QueryLogEntry {
            ts,
            id: id.map(|s| s.to_string()),
            score: best_score,
        });
        Ok(VerifyOutcome {
            accepted,
            score: best_score,
            matched_id: accepted.then_some(best_id),
        })
    }

    /// The append-only audit of every verify call.
    pub fn query_log(&self) -> &[QueryLogEntry] {
        &self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{generate_patch, true_norm_map};

    fn map(seed: u64) -> NormMap {
        true_norm_map(&generate_patch(seed, 32, 2.0, 0.08).unwrap())
    }

    #[test]
    fn enroll_then_get_round_trips_bit_exact() {
        let mut store = TemplateStore::new(0.3).unwrap();
        let m = map(1);
        store.enroll("a", m.clone(), CaptureMode::Scanner, 100).unwrap();
        assert_eq!(store.get("a").unwrap().template, m);
        assert_eq!(store.get("a").unwrap().enrolled_at, 100);
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut store = TemplateStore::new(0.3).unwrap();
        store.enroll("a", map(1), CaptureMode::Scanner, 0).unwrap();
        let err = store.enroll("a", map(2), CaptureMode::Scanner, 0);
        assert_eq!(err, Err(Error::DuplicateId("a".into())));
    }

    #[test]
    fn twelve_record_store() {
        let mut store = TemplateStore::new(0.3).unwrap();
        for sheet in 0..4 {
            for scan in 0..3 {
                let id = alloc::format!("sheet{sheet}-scan{scan}");
                store
                    .enroll(&id, map(sheet * 3 + scan + 1), CaptureMode::Scanner, 0)
                    .unwrap();
            }
        }
        assert_eq!(store.len(), 12);
    }

    #[test]
    fn verify_self_accepts_with_perfect_score() {
        let mut store = TemplateStore::new(0.3).unwrap();
        let m = map(1);
        store.enroll("a", m.clone(), CaptureMode::Scanner, 0).unwrap();
        let out = store.verify(&m, Some("a"), 1).unwrap();
        assert!(out.accepted);
        // Self-similarity is 1 up to summation rounding.
        assert!((out.score.corr_x - 1.0).abs() < 1e-12);
        assert!((out.score.corr_y - 1.0).abs() < 1e-12);
        assert_eq!(out.matched_id.as_deref(), Some("a"));
    }

    #[test]
    fn verify_unrelated_map_rejects_but_leaks_score() {
        let mut store = TemplateStore::new(0.3).unwrap();
        store.enroll("a", map(1), CaptureMode::Scanner, 0).unwrap();
        let out = store.verify(&map(99), None, 1).unwrap();
        assert!(!out.accepted);
        assert!(out.matched_id.is_none());
        assert!(out.score.corr_x.abs() < 0.5);
    }

    #[test]
    fn search_matches_best_single_id_outcome() {
        let mut store = TemplateStore::new(0.3).unwrap();
        for s in 0..5 {
            store
                .enroll(&alloc::format!("id{s}"), map(s + 1), CaptureMode::Scanner, 0)
                .unwrap();
        }
        let probe = map(3);
        let search = store.verify(&probe, None, 1).unwrap();
        let direct = store.verify(&probe, Some("id2"), 2).unwrap();
        assert_eq!(search.score, direct.score);
        assert_eq!(search.matched_id.as_deref(), Some("id2"));
    }

    #[test]
    fn unknown_id_and_empty_store_error() {
        let mut store = TemplateStore::new(0.3).unwrap();
        assert_eq!(store.verify(&map(1), None, 0), Err(Error::EmptyStore));
        store.enroll("a", map(1), CaptureMode::Scanner, 0).unwrap();
        assert_eq!(
            store.verify(&map(1), Some("zz"), 0),
            Err(Error::UnknownId("zz".into()))
        );
    }

    #[test]
    fn query_log_grows_by_one_per_verify_in_call_order() {
        let mut store = TemplateStore::new(0.3).unwrap();
        store.enroll("a", map(1), CaptureMode::Scanner, 0).unwrap();
        assert!(store.query_log().is_empty());
        for i in 0..5 {
            store.verify(&map(10 + i), Some("a"), i).unwrap();
        }
        assert_eq!(store.query_log().len(), 5);
        for (i, entry) in store.query_log().iter().enumerate() {
            assert_eq!(entry.ts, i as u64);
            assert_eq!(entry.id.as_deref(), Some("a"));
        }
    }

    #[test]
    fn verify_leaves_templates_untouched() {
        let mut store = TemplateStore::new(0.3).unwrap();
        let m = map(1);
        store.enroll("a", m.clone(), CaptureMode::Scanner, 0).unwrap();
        store.verify(&map(2), None, 0).unwrap();
        assert_eq!(store.get("a").unwrap().template, m);
    }

    #[test]
    fn failed_verifications_are_logged_too() {
        let mut store = TemplateStore::new(0.3).unwrap();
        store.enroll("a", map(1), CaptureMode::Scanner, 0).unwrap();
        let out = store.verify(&map(50), Some("a"), 7).unwrap();
        assert!(!out.accepted);
        assert_eq!(store.query_log().len(), 1);
        assert_eq!(store.query_log()[0].score, out.score);
    }
}
