//! Dataset manifests: a declarative listing of samples per domain, split
//! membership and long/short exposure pairing links.
//!
//! Concrete syntax is TOML. One file may carry several `[[section]]` blocks,
//! each scoped to a (domain, split); pairing links are validated across the
//! whole file.

use super::TensorIoError;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

/// The three data distributions: ordinary videos (A), sensor-specific
/// long-exposure images (B), sensor-specific short-exposure frames (C).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    A,
    B,
    C,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::A => write!(f, "A"),
            Domain::B => write!(f, "B"),
            Domain::C => write!(f, "C"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Video,
    Image,
}

/// One sample: a video clip directory or a single image tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Path relative to the data root. For videos this is a directory of
    /// `frame_<t>.sgt` files; for images a single `.sgt` file.
    pub path: String,
    pub kind: EntryKind,
    pub frame_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    /// Provenance of synthesized entries: checkpoint ids of the generators
    /// that produced them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_checkpoints: Option<Vec<String>>,
}

/// All entries of one (domain, split).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSection {
    pub domain: Domain,
    pub split: Split,
    #[serde(default, rename = "entry")]
    pub entries: Vec<ManifestEntry>,
}

/// A validated manifest file: one or more domain sections with resolved
/// B<->C pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(rename = "section")]
    pub sections: Vec<DomainSection>,
}

/// Per-domain entry counts, as reported by `stats`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DomainStats {
    pub a_count: usize,
    pub b_count: usize,
    pub c_count: usize,
    pub resolved_pairs: usize,
}

impl DatasetManifest {
    pub fn new(sections: Vec<DomainSection>) -> Result<Self, TensorIoError> {
        let m = DatasetManifest { sections };
        m.validate()?;
        Ok(m)
    }

    /// Checks every declared invariant: unique ids, exposures on B/C
    /// entries, and bidirectionally resolved pair links.
    pub fn validate(&self) -> Result<(), TensorIoError> {
        let mut ids = BTreeSet::new();
        for section in &self.sections {
            for entry in &section.entries {
                if !ids.insert(entry.id.clone()) {
                    return Err(TensorIoError::Manifest(format!(
                        "duplicate id {:?}",
                        entry.id
                    )));
                }
                if matches!(section.domain, Domain::B | Domain::C)
                    && entry.exposure_seconds.is_none()
                {
                    return Err(TensorIoError::Manifest(format!(
                        "entry {:?} in domain {} is missing exposure_seconds",
                        entry.id, section.domain
                    )));
                }
                if let Some(exp) = entry.exposure_seconds {
                    if !(exp >= 0.0) {
                        return Err(TensorIoError::Manifest(format!(
                            "entry {:?} has negative exposure {exp}",
                            entry.id
                        )));
                    }
                }
                if entry.frame_count == 0 {
                    return Err(TensorIoError::Manifest(format!(
                        "entry {:?} has frame_count 0",
                        entry.id
                    )));
                }
            }
        }
        self.check_pairs()?;
        Ok(())
    }

    fn check_pairs(&self) -> Result<(), TensorIoError> {
        // id -> (domain, pair_id)
        let mut index: BTreeMap<&str, (Domain, Option<&str>)> = BTreeMap::new();
        for section in &self.sections {
            for entry in &section.entries {
                index.insert(&entry.id, (section.domain, entry.pair_id.as_deref()));
            }
        }
        for section in &self.sections {
            for entry in &section.entries {
                let Some(pair_id) = entry.pair_id.as_deref() else {
                    continue;
                };
                let expected_domain = match section.domain {
                    Domain::B => Domain::C,
                    Domain::C => Domain::B,
                    Domain::A => {
                        return Err(TensorIoError::Manifest(format!(
                            "domain-A entry {:?} cannot carry a pair_id",
                            entry.id
                        )))
                    }
                };
                match index.get(pair_id) {
                    None => {
                        return Err(TensorIoError::Manifest(format!(
                            "entry {:?} has dangling pair_id {:?}",
                            entry.id, pair_id
                        )))
                    }
                    Some((domain, back)) => {
                        if *domain != expected_domain {
                            return Err(TensorIoError::Manifest(format!(
                                "entry {:?} pair_id {:?} resolves to domain {domain}, expected {expected_domain}",
                                entry.id, pair_id
                            )));
                        }
                        if let Some(back) = back {
                            if *back != entry.id {
                                return Err(TensorIoError::Manifest(format!(
                                    "pair link {:?} <-> {:?} is not symmetric (back-link {:?})",
                                    entry.id, pair_id, back
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn section(&self, domain: Domain, split: Split) -> Option<&DomainSection> {
        self.sections
            .iter()
            .find(|s| s.domain == domain && s.split == split)
    }

    /// All entries of a domain regardless of split.
    pub fn domain_entries(&self, domain: Domain) -> impl Iterator<Item = &ManifestEntry> {
        self.sections
            .iter()
            .filter(move |s| s.domain == domain)
            .flat_map(|s| s.entries.iter())
    }

    pub fn find_entry(&self, id: &str) -> Option<(&DomainSection, &ManifestEntry)> {
        self.sections
            .iter()
            .find_map(|s| s.entries.iter().find(|e| e.id == id).map(|e| (s, e)))
    }

    /// Resolved (B, C) entry pairs within a split.
    pub fn pairs(&self, split: Split) -> Vec<(&ManifestEntry, &ManifestEntry)> {
        let mut out = Vec::new();
        let Some(b) = self.section(Domain::B, split) else {
            return out;
        };
        for entry in &b.entries {
            if let Some(pair_id) = entry.pair_id.as_deref() {
                if let Some((sec, c_entry)) = self.find_entry(pair_id) {
                    if sec.domain == Domain::C {
                        out.push((entry, c_entry));
                    }
                }
            }
        }
        out
    }

    /// Sample-count statistics over the whole file.
    pub fn stats(&self) -> DomainStats {
        let mut stats = DomainStats::default();
        for section in &self.sections {
            let n = section.entries.len();
            match section.domain {
                Domain::A => stats.a_count += n,
                Domain::B => stats.b_count += n,
                Domain::C => stats.c_count += n,
            }
        }
        stats.resolved_pairs = [Split::Train, Split::Val, Split::Test]
            .iter()
            .map(|&s| self.pairs(s).len())
            .sum();
        stats
    }
}

/// Parses and validates manifest text.
pub fn parse_manifest(text: &str) -> Result<DatasetManifest, TensorIoError> {
    let manifest: DatasetManifest = toml::from_str(text)?;
    manifest.validate()?;
    Ok(manifest)
}

/// Loads and validates the manifest file at `path`.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, TensorIoError> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text)
}

pub fn save_manifest(
    path: impl AsRef<Path>,
    manifest: &DatasetManifest,
) -> Result<(), TensorIoError> {
    manifest.validate()?;
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let text = toml::to_string_pretty(manifest)
        .map_err(|e| TensorIoError::Manifest(format!("serialize: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, pair: Option<&str>, exposure: Option<f64>) -> ManifestEntry {
        ManifestEntry {
            id: id.to_string(),
            path: format!("{id}.sgt"),
            kind: EntryKind::Image,
            frame_count: 1,
            exposure_seconds: exposure,
            pair_id: pair.map(String::from),
            generator_checkpoints: None,
        }
    }

    fn paired_manifest() -> DatasetManifest {
        DatasetManifest {
            sections: vec![
                DomainSection {
                    domain: Domain::B,
                    split: Split::Train,
                    entries: vec![entry("b01", Some("s01"), Some(10.0))],
                },
                DomainSection {
                    domain: Domain::C,
                    split: Split::Train,
                    entries: vec![entry("s01", Some("b01"), Some(0.1))],
                },
            ],
        }
    }

    #[test]
    fn minimal_pairing_is_valid() {
        let m = paired_manifest();
        m.validate().unwrap();
        assert_eq!(m.stats().resolved_pairs, 1);
    }

    #[test]
    fn dangling_pair_is_rejected() {
        let m = DatasetManifest {
            sections: vec![DomainSection {
                domain: Domain::B,
                split: Split::Train,
                entries: vec![entry("b01", Some("missing"), Some(10.0))],
            }],
        };
        let err = m.validate().unwrap_err();
        assert!(err.to_string().contains("dangling"), "{err}");
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let m = DatasetManifest {
            sections: vec![DomainSection {
                domain: Domain::A,
                split: Split::Train,
                entries: vec![entry("x", None, None), entry("x", None, None)],
            }],
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn missing_exposure_on_c_is_rejected() {
        let m = DatasetManifest {
            sections: vec![DomainSection {
                domain: Domain::C,
                split: Split::Train,
                entries: vec![entry("s01", None, None)],
            }],
        };
        let err = m.validate().unwrap_err();
        assert!(err.to_string().contains("exposure"), "{err}");
    }

    #[test]
    fn toml_roundtrip() {
        let m = paired_manifest();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.toml");
        save_manifest(&path, &m).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn split_counts_surface_as_stats() {
        // Counting oracle: build a fixture with known per-split counts and
        // check stats against plain arithmetic.
        let train_n = 202;
        let test_n = 22;
        let mut train = Vec::new();
        for i in 0..train_n {
            train.push(entry(&format!("c_train_{i}"), None, Some(0.1)));
        }
        let mut test = Vec::new();
        for i in 0..test_n {
            test.push(entry(&format!("c_test_{i}"), None, Some(0.1)));
        }
        let m = DatasetManifest {
            sections: vec![
                DomainSection {
                    domain: Domain::C,
                    split: Split::Train,
                    entries: train,
                },
                DomainSection {
                    domain: Domain::C,
                    split: Split::Test,
                    entries: test,
                },
            ],
        };
        m.validate().unwrap();
        assert_eq!(m.stats().c_count, train_n + test_n);
        assert_eq!(m.section(Domain::C, Split::Train).unwrap().entries.len(), train_n);
        assert_eq!(m.section(Domain::C, Split::Test).unwrap().entries.len(), test_n);
    }

    #[test]
    fn mutations_that_break_invariants_are_rejected() {
        // Mutation-based check: each mutation of a valid manifest that
        // violates a declared invariant must fail validation.
        let base = paired_manifest();
        base.validate().unwrap();

        let mut dup = base.clone();
        let cloned = dup.sections[0].entries[0].clone();
        dup.sections[0].entries.push(cloned);
        assert!(dup.validate().is_err(), "duplicate id accepted");

        let mut dangling = base.clone();
        dangling.sections[0].entries[0].pair_id = Some("nope".into());
        assert!(dangling.validate().is_err(), "dangling pair accepted");

        let mut no_exp = base.clone();
        no_exp.sections[1].entries[0].exposure_seconds = None;
        assert!(no_exp.validate().is_err(), "missing exposure accepted");

        let mut asym = base.clone();
        asym.sections[1].entries[0].pair_id = Some("s01".into());
        assert!(asym.validate().is_err(), "asymmetric pair accepted");
    }
}
