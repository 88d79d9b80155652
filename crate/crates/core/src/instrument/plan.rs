//! Resolution of requested function names against an index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::index::{ExclusionReason, FunctionIndex, FunctionLocator};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedFunction {
    /// Every request that resolved to this function.
    pub requested: Vec<String>,
    pub locator: FunctionLocator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub requested: String,
    pub qualified_path: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unresolved {
    pub requested: String,
    /// Qualified paths of every match when the name was ambiguous.
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentationPlan {
    pub resolved: Vec<ResolvedFunction>,
    pub excluded: Vec<Exclusion>,
    pub unresolved: Vec<Unresolved>,
    pub notes: Vec<String>,
}

impl InstrumentationPlan {
    /// Stable digest of the functions selected for instrumentation.
    pub fn digest(&self) -> String {
        let mut keys: Vec<String> = self
            .resolved
            .iter()
            .map(|r| {
                format!(
                    "{}\0{}\0{}",
                    r.locator.qualified_path,
                    r.locator.file.display(),
                    r.locator.span.start
                )
            })
            .collect();
        keys.sort();
        let mut hasher = Sha256::new();
        for k in keys {
            hasher.update(k.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Resolved functions grouped by file.
    pub fn by_file(&self) -> BTreeMap<&std::path::Path, Vec<&FunctionLocator>> {
        let mut out: BTreeMap<&std::path::Path, Vec<&FunctionLocator>> = BTreeMap::new();
        for r in &self.resolved {
            out.entry(r.locator.file.as_path()).or_default().push(&r.locator);
        }
        out
    }
}

/// Partition `requested` into resolved, excluded and unresolved names.
///
/// A name resolves when exactly one instrumentable function matches it.
/// With no instrumentable match but an excluded one, the exclusion is
/// reported; with several instrumentable matches the name is ambiguous.
pub fn plan_instrumentation(requested: &[String], index: &FunctionIndex) -> InstrumentationPlan {
    let mut plan = InstrumentationPlan::default();
    for name in requested {
        let matches = index.lookup(name);
        match matches.as_slice() {
            [one] => {
                let loc = (*one).clone();
                if loc.trait_default {
                    plan.notes.push(format!(
                        "{name}: resolved to the default body of trait method {}; implementations that override it are not traced",
                        loc.qualified_path
                    ));
                }
                match plan
                    .resolved
                    .iter_mut()
                    .find(|r| r.locator.file == loc.file && r.locator.span == loc.span)
                {
                    Some(existing) => existing.requested.push(name.clone()),
                    None => plan.resolved.push(ResolvedFunction {
                        requested: vec![name.clone()],
                        locator: loc,
                    }),
                }
            }
            [] => match index.lookup_excluded(name).first() {
                Some(ex) => plan.excluded.push(Exclusion {
                    requested: name.clone(),
                    qualified_path: ex.qualified_path.clone(),
                    reason: ex.reason,
                }),
                None => plan.unresolved.push(Unresolved {
                    requested: name.clone(),
                    candidates: Vec::new(),
                }),
            },
            many => plan.unresolved.push(Unresolved {
                requested: name.clone(),
                candidates: many.iter().map(|m| m.qualified_path.clone()).collect(),
            }),
        }
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::index::index_functions;
    use std::fs;

    fn index(text: &str) -> (tempfile::TempDir, FunctionIndex) {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("Cargo.toml"), "[package]\nname = \"toy\"\n").unwrap();
        fs::create_dir_all(dir.path().join("src")).unwrap();
        fs::write(dir.path().join("src/lib.rs"), text).unwrap();
        let idx = index_functions(dir.path()).unwrap();
        (dir, idx)
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn partitions_every_request_once() {
        let (_d, idx) = index(
            "pub fn add(a: i32, b: i32) -> i32 { a + b }\n\
             mod a { pub fn run() {} }\nmod b { pub fn run() {} }\n\
             #[test] fn t() {}\n",
        );
        let plan = plan_instrumentation(&names(&["add", "run", "t", "missing", "a::run"]), &idx);
        assert_eq!(plan.resolved.len(), 2);
        assert_eq!(plan.resolved[0].locator.qualified_path, "toy::add");
        assert_eq!(plan.resolved[1].locator.qualified_path, "toy::a::run");
        assert_eq!(plan.excluded.len(), 1);
        assert_eq!(plan.excluded[0].reason, ExclusionReason::TestFunction);
        assert_eq!(plan.unresolved.len(), 2);
        assert_eq!(plan.unresolved[0].candidates, vec!["toy::a::run", "toy::b::run"]);
        assert!(plan.unresolved[1].candidates.is_empty());
    }

    #[test]
    fn duplicate_requests_merge() {
        let (_d, idx) = index("pub fn add() {}\n");
        let plan = plan_instrumentation(&names(&["add", "crate::add", "toy::add"]), &idx);
        assert_eq!(plan.resolved.len(), 1);
        assert_eq!(plan.resolved[0].requested.len(), 3);
    }

    #[test]
    fn trait_default_is_noted() {
        let (_d, idx) = index("pub trait T { fn d(&self) {} }\n");
        let plan = plan_instrumentation(&names(&["d"]), &idx);
        assert_eq!(plan.resolved.len(), 1);
        assert_eq!(plan.notes.len(), 1);
    }

    #[test]
    fn digest_ignores_request_order() {
        let (_d, idx) = index("pub fn a() {}\npub fn b() {}\n");
        let p1 = plan_instrumentation(&names(&["a", "b"]), &idx);
        let p2 = plan_instrumentation(&names(&["b", "a"]), &idx);
        assert_eq!(p1.digest(), p2.digest());
        assert_ne!(p1.digest(), plan_instrumentation(&names(&["a"]), &idx).digest());
    }
}
