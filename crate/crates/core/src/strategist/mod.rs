//! LLM strategist surfaces: prompt construction, chat-completion sampling,
//! output parsing, reward scoring, and intent-distribution derivation.
//!
//! Parsing is total — arbitrary input never raises, it just yields an output
//! flagged invalid. Prompt rendering is byte-stable (golden-file tested).

mod client;
mod prompts;
pub mod stub;

pub use client::{best_of_n, sample_candidates, BestOfN, CandidateSample, ChatClient};
pub use prompts::{render_judge_prompt, render_student_prompt, render_teacher_prompt};

use serde::{Deserialize, Serialize};

use crate::backend::CycleCount;
use crate::error::Result;
use crate::features::AutophaseVector;
use crate::passes::{PassCategory, PassSequence, Vocabulary};
use crate::tactician::IntentDistribution;

/// A parsed strategist completion. `format_valid` is true exactly when the
/// text carries a well-formed think block and an answer block whose content
/// is a JSON array of vocabulary flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategistOutput {
    pub raw_text: String,
    pub think: Option<String>,
    pub answer_sequence: Option<PassSequence>,
    pub format_valid: bool,
}

/// First `<tag>…</tag>` block in `text`, scanning left to right. Duplicated
/// or trailing junk after the first well-formed block is ignored; a missing
/// or unterminated block is None.
fn extract_tag_block<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open)? + open.len();
    let end = text[start..].find(&close)? + start;
    Some(&text[start..end])
}

/// Total parse of raw completion text. Never errors: every failure mode is
/// recorded in the flags instead.
pub fn parse_output(raw: &str, vocab: &Vocabulary) -> StrategistOutput {
    let think = extract_tag_block(raw, "think").map(|s| s.to_string());
    let answer_sequence = extract_tag_block(raw, "answer")
        .and_then(|body| serde_json::from_str::<Vec<String>>(body.trim()).ok())
        .and_then(|flags| vocab.validate_sequence(&flags).ok());
    let format_valid = think.is_some() && answer_sequence.is_some();
    StrategistOutput {
        raw_text: raw.to_string(),
        think,
        answer_sequence,
        format_valid,
    }
}

/// Composite reward: the performance term follows
/// r_perf = α·(C_O3 − C_gen)/C_O3 and may go negative for regressions; the
/// format term is 1 iff the output structure is valid. Unevaluable or
/// format-invalid candidates score a performance reward of 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format_reward: u8,
    pub performance_reward: f64,
    pub alpha: f64,
}

pub fn score(
    out: &StrategistOutput,
    c_o3: CycleCount,
    c_gen: Option<CycleCount>,
    alpha: f64,
) -> RewardBreakdown {
    let format_reward = u8::from(out.format_valid);
    let performance_reward = match c_gen {
        Some(c_gen) if out.format_valid => {
            alpha * (c_o3.get() as f64 - c_gen.get() as f64) / c_o3.get() as f64
        }
        _ => 0.0,
    };
    RewardBreakdown {
        format_reward,
        performance_reward,
        alpha,
    }
}

/// Intent distribution from the strategist's sequence: Laplace-smoothed
/// category frequency with λ = 1, counting pass multiplicity and ignoring
/// position. The smoothing keeps every category's weight positive, so the
/// downstream mutation mixture never loses ergodicity to a single-category
/// intent.
pub fn derive_intent(s0: &PassSequence, vocab: &Vocabulary) -> IntentDistribution {
    const LAMBDA: f64 = 1.0;
    let n_categories = PassCategory::ALL.len() as f64;
    let denom = s0.len() as f64 + LAMBDA * n_categories;
    let mut weights: std::collections::BTreeMap<PassCategory, f64> = PassCategory::ALL
        .iter()
        .map(|c| (*c, LAMBDA / denom))
        .collect();
    for pass in s0 {
        *weights.get_mut(&vocab.category_of(pass)).unwrap() += 1.0 / denom;
    }
    IntentDistribution { weights }
}

/// Verdict protocol for audit replies: the first line must be exactly
/// `Correct` or `Incorrect` (case-sensitive); anything else is Unparseable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Correct,
    Incorrect,
    Unparseable,
}

/// Parse a judge reply: (verdict, reason = everything after the first line).
pub fn parse_verdict(reply: &str) -> (Verdict, String) {
    let mut lines = reply.splitn(2, '\n');
    let first = lines.next().unwrap_or("").trim();
    let reason = lines.next().unwrap_or("").trim().to_string();
    let verdict = match first {
        "Correct" => Verdict::Correct,
        "Incorrect" => Verdict::Incorrect,
        _ => Verdict::Unparseable,
    };
    (verdict, reason)
}

/// A distilled training pair: initial features plus the rationale–sequence
/// concatenation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSample {
    pub program_id: String,
    pub features: AutophaseVector,
    pub rationale: String,
    pub sequence: PassSequence,
}

impl TrainingSample {
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        vocab.validate_sequence(&self.sequence.render())?;
        if self.rationale.trim().is_empty() {
            return Err(crate::error::Error::Parse(format!(
                "{}: empty rationale",
                self.program_id
            )));
        }
        Ok(())
    }
}
