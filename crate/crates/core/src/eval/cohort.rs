//! Picks a small, balanced evaluation cohort from a directory of bundles.
//!
//! Every living patient joins the first bucket whose codes match one of
//! their Condition or Procedure codes. One patient is then drawn from each
//! of `select_count` buckets so that the selection spans as many age bands
//! and genders as possible with the fewest male/female imbalance, subject
//! to a minimum number of patients with allergies.
//!
//! Patients in one bucket that share gender, age band and allergy status
//! are interchangeable for scoring; a seeded hash picks among them, and
//! the same hash breaks ties between equally scored selections.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::plan::patient_label;
use super::EvalError;
use crate::fhir::{parse_bundle, ResourceKind};
use crate::pipeline::{build_catalog, FilterConfig};
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub name: String,
    /// Condition or Procedure codes, either bare (`"49436004"`) or
    /// system-qualified (`"http://snomed.info/sct|49436004"`).
    pub codes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConstraints {
    pub min_with_allergies: usize,
    /// Buckets to draw from; defaults to all of them.
    pub select_count: Option<usize>,
    pub seed: u64,
}

impl Default for CohortConstraints {
    fn default() -> Self {
        Self {
            min_with_allergies: 2,
            select_count: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeBand {
    Child,
    YoungAdult,
    MiddleAged,
    Elderly,
}

impl AgeBand {
    pub fn of(age_years: u32) -> Self {
        match age_years {
            0..=17 => AgeBand::Child,
            18..=44 => AgeBand::YoungAdult,
            45..=64 => AgeBand::MiddleAged,
            _ => AgeBand::Elderly,
        }
    }

    fn bit(self) -> u8 {
        1 << self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortMember {
    pub label: String,
    pub path: PathBuf,
    pub bucket: String,
    pub name: String,
    pub gender: String,
    pub age_years: u32,
    pub conditions: Vec<String>,
    pub allergies: Vec<String>,
    pub medications: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub selected: Vec<CohortMember>,
    pub score: i64,
    pub with_allergies: usize,
    pub bucket_sizes: BTreeMap<String, usize>,
    pub excluded_deceased: Vec<String>,
    pub unassigned: Vec<String>,
}

impl CohortReport {
    /// Markdown table with one row per selected patient.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Name | Sex | Age | Conditions | Allergies | Medications |\n|---|---|---|---|---|---|\n");
        let list = |items: &[String]| if items.is_empty() { "-".to_string() } else { items.join("<br>") };
        for m in &self.selected {
            let sex = match m.gender.as_str() {
                "male" => "M",
                "female" => "F",
                other => other,
            };
            out.push_str(&format!(
                "| {} | {} | {} years | {} | {} | {} |\n",
                m.name,
                sex,
                m.age_years,
                list(&m.conditions),
                list(&m.allergies),
                list(&m.medications)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Infeasible {
    #[error("only {available} buckets have eligible patients, {requested} requested")]
    Buckets { available: usize, requested: usize },
    #[error("at most {achievable} selected patients can have allergies, {required} required")]
    AllergyQuota { required: usize, achievable: usize },
}

struct Candidate {
    member: CohortMember,
    band: AgeBand,
    has_allergy: bool,
    tie_break: String,
}

/// Balance score: ten points per distinct age band and per distinct
/// gender, minus the male/female count difference.
pub fn balance_score(members: &[(AgeBand, &str)]) -> i64 {
    let bands: BTreeSet<AgeBand> = members.iter().map(|(b, _)| *b).collect();
    let genders: BTreeSet<&str> = members.iter().map(|(_, g)| *g).collect();
    let male = members.iter().filter(|(_, g)| *g == "male").count() as i64;
    let female = members.iter().filter(|(_, g)| *g == "female").count() as i64;
    10 * (bands.len() + genders.len()) as i64 - (male - female).abs()
}

fn code_matches(bucket: &Bucket, system: Option<&str>, code: &str) -> bool {
    bucket.codes.iter().any(|c| match c.split_once('|') {
        Some((s, c)) => Some(s) == system && c == code,
        None => c == code,
    })
}

fn load_candidates(
    dir: &std::path::Path,
    buckets: &[Bucket],
    seed: u64,
    reference_date: NaiveDate,
) -> Result<(Vec<Vec<Candidate>>, Vec<String>, Vec<String>), EvalError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| EvalError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();

    let filter = FilterConfig::default();
    let mut per_bucket: Vec<Vec<Candidate>> = buckets.iter().map(|_| Vec::new()).collect();
    let mut deceased = Vec::new();
    let mut unassigned = Vec::new();
    for path in paths {
        let label = patient_label(&path);
        let bytes = std::fs::read(&path).map_err(|e| EvalError::io(&path, e))?;
        let bundle = parse_bundle(&bytes, &label).map_err(|source| EvalError::Fhir {
            path: path.clone(),
            source,
        })?;
        let catalog = build_catalog(&bundle, &filter, reference_date).map_err(|source| EvalError::Fhir {
            path: path.clone(),
            source,
        })?;
        if catalog.patient.deceased {
            deceased.push(label);
            continue;
        }
        let codes: Vec<(Option<&str>, &str)> = bundle
            .entries
            .iter()
            .filter(|e| matches!(e.kind, ResourceKind::Condition | ResourceKind::Procedure))
            .filter_map(|e| e.primary_code.as_ref())
            .map(|c| (Some(c.system.as_str()), c.code.as_str()))
            .collect();
        let Some(index) = buckets
            .iter()
            .position(|b| codes.iter().any(|(s, c)| code_matches(b, *s, c)))
        else {
            unassigned.push(label);
            continue;
        };
        let names = |kind: ResourceKind| -> Vec<String> {
            catalog.of_kind(&kind).map(|e| e.identifier.display_name.clone()).collect()
        };
        let allergies = names(ResourceKind::AllergyIntolerance);
        per_bucket[index].push(Candidate {
            band: AgeBand::of(catalog.patient.age_years),
            has_allergy: catalog.patient.allergies_count > 0,
            tie_break: sha256_hex(format!("{seed}:{label}").as_bytes()),
            member: CohortMember {
                label,
                path,
                bucket: buckets[index].name.clone(),
                name: catalog.patient.display_name(),
                gender: catalog.patient.administrative_gender.clone(),
                age_years: catalog.patient.age_years,
                conditions: names(ResourceKind::Condition),
                allergies,
                medications: names(ResourceKind::MedicationRequest),
            },
        });
    }
    Ok((per_bucket, deceased, unassigned))
}

type Path<'c> = Vec<Option<&'c Candidate>>;

fn key(path: &[Option<&Candidate>]) -> Vec<String> {
    path.iter()
        .map(|c| c.map_or_else(|| "~".to_string(), |c| c.tie_break.clone()))
        .collect()
}

fn offer<'c>(next: &mut BTreeMap<State, Path<'c>>, state: State, path: Path<'c>) {
    match next.get(&state) {
        Some(existing) if key(existing) <= key(&path) => {}
        _ => {
            next.insert(state, path);
        }
    }
}

/// Search state after deciding some prefix of the buckets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct State {
    chosen: usize,
    bands: u8,
    genders: BTreeSet<String>,
    male: usize,
    female: usize,
    allergies: usize,
}

pub fn select_cohort(
    patient_dir: &std::path::Path,
    buckets: &[Bucket],
    constraints: &CohortConstraints,
    reference_date: NaiveDate,
) -> Result<CohortReport, EvalError> {
    if buckets.is_empty() {
        return Err(EvalError::Invalid("no buckets given".into()));
    }
    let target = constraints.select_count.unwrap_or(buckets.len());
    if target == 0 || target > buckets.len() {
        return Err(EvalError::Invalid(format!(
            "select_count {target} must be between 1 and {}",
            buckets.len()
        )));
    }
    let (candidates, excluded_deceased, unassigned) =
        load_candidates(patient_dir, buckets, constraints.seed, reference_date)?;

    // One representative per (gender, band, allergy) class in each bucket.
    let classes: Vec<Vec<&Candidate>> = candidates
        .iter()
        .map(|bucket| {
            let mut best: BTreeMap<(&str, AgeBand, bool), &Candidate> = BTreeMap::new();
            for c in bucket {
                let key = (c.member.gender.as_str(), c.band, c.has_allergy);
                match best.get(&key) {
                    Some(existing) if existing.tie_break <= c.tie_break => {}
                    _ => {
                        best.insert(key, c);
                    }
                }
            }
            best.into_values().collect()
        })
        .collect();

    let available = classes.iter().filter(|c| !c.is_empty()).count();
    if available < target {
        return Err(Infeasible::Buckets {
            available,
            requested: target,
        }
        .into());
    }

    // Dynamic programme over buckets; each state keeps the choice sequence
    // with the smallest tie-break key.
    let cap = constraints.min_with_allergies;
    let mut states: BTreeMap<State, Path> = BTreeMap::new();
    states.insert(
        State {
            chosen: 0,
            bands: 0,
            genders: BTreeSet::new(),
            male: 0,
            female: 0,
            allergies: 0,
        },
        Vec::new(),
    );
    for bucket in &classes {
        let mut next: BTreeMap<State, Path> = BTreeMap::new();
        for (state, path) in &states {
            let mut skip = path.clone();
            skip.push(None);
            offer(&mut next, state.clone(), skip);
            if state.chosen == target {
                continue;
            }
            for &c in bucket {
                let mut s = state.clone();
                s.chosen += 1;
                s.bands |= c.band.bit();
                s.genders.insert(c.member.gender.clone());
                match c.member.gender.as_str() {
                    "male" => s.male += 1,
                    "female" => s.female += 1,
                    _ => {}
                }
                s.allergies = (s.allergies + usize::from(c.has_allergy)).min(cap.max(1));
                let mut p = path.clone();
                p.push(Some(c));
                offer(&mut next, s, p);
            }
        }
        states = next;
    }

    let complete: Vec<(&State, &Path)> =
        states.iter().filter(|(s, _)| s.chosen == target).collect();
    let achievable = complete.iter().map(|(s, _)| s.allergies).max().unwrap_or(0);
    let score = |s: &State| {
        10 * (s.bands.count_ones() as i64 + s.genders.len() as i64) - (s.male as i64 - s.female as i64).abs()
    };
    let best = complete
        .into_iter()
        .filter(|(s, _)| s.allergies >= cap)
        .max_by(|(a, pa), (b, pb)| score(a).cmp(&score(b)).then_with(|| key(pb).cmp(&key(pa))));
    let Some((state, path)) = best else {
        return Err(Infeasible::AllergyQuota {
            required: cap,
            achievable,
        }
        .into());
    };

    let selected: Vec<CohortMember> = path.iter().flatten().map(|c| c.member.clone()).collect();
    Ok(CohortReport {
        score: score(state),
        with_allergies: path.iter().flatten().filter(|c| c.has_allergy).count(),
        bucket_sizes: buckets
            .iter()
            .zip(&candidates)
            .map(|(b, c)| (b.name.clone(), c.len()))
            .collect(),
        selected,
        excluded_deceased,
        unassigned,
    })
}
