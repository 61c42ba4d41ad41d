//! Data-driven pass-benefit prior: per-occurrence marginal benefits over a
//! corpus, their aggregation into a Global Expected Benefit per pass, and
//! Star-Pass extraction per functional category.
//!
//! The normalized performance score of a sequence is cycles divided by the
//! program's -O3 baseline cycles, so benefits are dimensionless and
//! comparable across programs. The marginal benefit of an occurrence is the
//! normalized degradation caused by removing it from the optimal sequence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, ProgramHandle};
use crate::error::Result;
use crate::passes::{PassCategory, PassId, PassSequence, Vocabulary};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenefitSample {
    pub program_id: String,
    pub pass: PassId,
    /// Occurrence position inside the optimal sequence.
    pub position: usize,
    pub benefit: f64,
    /// True when the perturbed sequence failed to evaluate and the benefit
    /// is the configured cap rather than a measurement.
    pub flagged: bool,
}

/// Per-occurrence marginal benefits of `s_opt` on one program.
///
/// A backend failure on a perturbed sequence yields a flagged sample at
/// `failed_cap` (worst assumed degradation) instead of aborting the corpus.
pub fn marginal_benefits(
    backend: &Backend,
    program: &ProgramHandle,
    s_opt: &PassSequence,
    failed_cap: f64,
) -> Result<Vec<BenefitSample>> {
    if s_opt.is_empty() {
        return Ok(Vec::new());
    }
    let c_o3 = backend.baseline_o3_cycles(program)?.get() as f64;
    let c_opt = backend.evaluate(program, s_opt)?.require_cycles()?.get() as f64;
    let full_score = c_opt / c_o3;

    let mut samples = Vec::with_capacity(s_opt.len());
    for i in 0..s_opt.len() {
        let perturbed = s_opt.without_index(i);
        let (benefit, flagged) = match backend.evaluate(program, &perturbed)?.cycles() {
            Some(c) => (c.get() as f64 / c_o3 - full_score, false),
            None => (failed_cap, true),
        };
        samples.push(BenefitSample {
            program_id: program.id.clone(),
            pass: s_opt.passes()[i].clone(),
            position: i,
            benefit,
            flagged,
        });
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct BenefitEntry {
    /// E[b(p)]: arithmetic mean of this pass's samples (0 when unobserved).
    pub expected_benefit: f64,
    pub sample_count: u64,
}

/// Global Expected Benefit table covering every pass in V.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenefitTable {
    pub passes: BTreeMap<PassId, BenefitEntry>,
    /// Flagged samples excluded from the means (reported, not averaged).
    pub flagged_excluded: u64,
}

impl BenefitTable {
    /// A table of zeros over V; makes the strategic mutation term degenerate
    /// to uniform.
    pub fn zeros(vocab: &Vocabulary) -> Self {
        Self {
            passes: vocab
                .flags()
                .iter()
                .map(|p| (p.clone(), BenefitEntry::default()))
                .collect(),
            flagged_excluded: 0,
        }
    }

    pub fn expected(&self, pass: &PassId) -> f64 {
        self.passes
            .get(pass)
            .map(|e| e.expected_benefit)
            .unwrap_or(0.0)
    }

    /// E[b(p)] clamped at zero, as used inside the mutation mixture.
    pub fn expected_clamped(&self, pass: &PassId) -> f64 {
        self.expected(pass).max(0.0)
    }
}

/// Mean benefit per pass, zero-filled for unobserved passes. Flagged samples
/// are excluded from the means unless `include_flagged` is set; they are
/// counted in `flagged_excluded` either way it matters.
pub fn aggregate(
    samples: &[BenefitSample],
    vocab: &Vocabulary,
    include_flagged: bool,
) -> BenefitTable {
    let mut sums: BTreeMap<PassId, (f64, u64)> = BTreeMap::new();
    let mut flagged_excluded = 0u64;
    for s in samples {
        if s.flagged && !include_flagged {
            flagged_excluded += 1;
            continue;
        }
        let entry = sums.entry(s.pass.clone()).or_insert((0.0, 0));
        entry.0 += s.benefit;
        entry.1 += 1;
    }
    let passes = vocab
        .flags()
        .iter()
        .map(|p| {
            let entry = match sums.get(p) {
                Some((sum, n)) if *n > 0 => BenefitEntry {
                    expected_benefit: sum / *n as f64,
                    sample_count: *n,
                },
                _ => BenefitEntry::default(),
            };
            (p.clone(), entry)
        })
        .collect();
    BenefitTable {
        passes,
        flagged_excluded,
    }
}

/// Top-k passes by expected benefit within each category, descending, ties
/// broken lexicographically by flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StarPassSet {
    pub k: usize,
    pub categories: BTreeMap<PassCategory, Vec<StarPass>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StarPass {
    pub pass: PassId,
    pub expected_benefit: f64,
}

pub fn star_passes(table: &BenefitTable, vocab: &Vocabulary, k: usize) -> StarPassSet {
    let mut categories: BTreeMap<PassCategory, Vec<StarPass>> = PassCategory::ALL
        .iter()
        .map(|c| (*c, Vec::new()))
        .collect();
    for pass in vocab.flags() {
        let cat = vocab.category_of(pass);
        categories.get_mut(&cat).unwrap().push(StarPass {
            pass: pass.clone(),
            expected_benefit: table.expected(pass),
        });
    }
    for list in categories.values_mut() {
        list.sort_by(|a, b| {
            b.expected_benefit
                .partial_cmp(&a.expected_benefit)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.pass.flag().cmp(b.pass.flag()))
        });
        list.truncate(k);
    }
    StarPassSet { k, categories }
}
