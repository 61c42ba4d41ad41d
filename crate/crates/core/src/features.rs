//! The 56-dimensional Autophase static feature vector and its step deltas.
//!
//! Feature index semantics follow the AutoPhase feature set: indices 0..=55
//! cover basic-block shape counts, constant occurrences, per-opcode
//! instruction counts, and aggregate totals. JSON serialization is a
//! name-keyed object in index order so rendered prompts, evidence files, and
//! datasets are byte-stable.

use std::fmt;

use serde::de::{self, MapAccess, SeqAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const FEATURE_DIM: usize = 56;

/// Canonical feature names, index order. Index 51 is the all-types
/// instruction total; the `Num*Inst` opcode counts must never exceed it.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "BBNumArgsHi",          // 0: BBs with total phi args > 5
    "BBNumArgsLo",          // 1: BBs with total phi args in [1,5]
    "onePred",              // 2: BBs with 1 predecessor
    "onePredOneSuc",        // 3: BBs with 1 predecessor and 1 successor
    "onePredTwoSuc",        // 4: BBs with 1 predecessor and 2 successors
    "oneSuccessor",         // 5: BBs with 1 successor
    "twoPred",              // 6: BBs with 2 predecessors
    "twoPredOneSuc",        // 7: BBs with 2 predecessors and 1 successor
    "twoEach",              // 8: BBs with 2 predecessors and 2 successors
    "twoSuccessor",         // 9: BBs with 2 successors
    "morePreds",            // 10: BBs with >2 predecessors
    "BB03Phi",              // 11: BBs with phi count in (0,3]
    "BBHiPhi",              // 12: BBs with more than 3 phis
    "BBNoPhi",              // 13: BBs with no phis
    "beginPhi",             // 14: phi nodes at beginning of BB
    "BranchCount",          // 15: branches
    "returnInt",            // 16: calls returning an int
    "CriticalCount",        // 17: critical edges
    "NumEdges",             // 18: CFG edges
    "const32Bit",           // 19: 32-bit integer constants
    "const64Bit",           // 20: 64-bit integer constants
    "numConstZeroes",       // 21: occurrences of constant 0
    "numConstOnes",         // 22: occurrences of constant 1
    "UncondBranches",       // 23: unconditional branches
    "binaryConstArg",       // 24: binary ops with a constant operand
    "NumAShrInst",          // 25
    "NumAddInst",           // 26
    "NumAllocaInst",        // 27
    "NumAndInst",           // 28
    "BlockMid",             // 29: BBs with instruction count in [15,500]
    "BlockLow",             // 30: BBs with instruction count < 15
    "NumBitCastInst",       // 31
    "NumBrInst",            // 32
    "NumCallInst",          // 33
    "NumGetElementPtrInst", // 34
    "NumICmpInst",          // 35
    "NumLShrInst",          // 36
    "NumLoadInst",          // 37
    "NumMulInst",           // 38
    "NumOrInst",            // 39
    "NumPHIInst",           // 40
    "NumRetInst",           // 41
    "NumSExtInst",          // 42
    "NumSelectInst",        // 43
    "NumShlInst",           // 44
    "NumStoreInst",         // 45
    "NumSubInst",           // 46
    "NumTruncInst",         // 47
    "NumXorInst",           // 48
    "NumZExtInst",          // 49
    "TotalBlocks",          // 50
    "TotalInsts",           // 51: all instruction types
    "TotalMemInst",         // 52
    "TotalFuncs",           // 53: non-external functions
    "ArgsPhi",              // 54: total args to phi nodes
    "testUnary",            // 55: unary operations
];

pub const IDX_TOTAL_INSTS: usize = 51;

/// Indices of the per-opcode `Num*Inst` counts dominated by `TotalInsts`.
const OPCODE_COUNT_INDICES: [usize; 23] = [
    25, 26, 27, 28, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48, 49,
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// φ: 56 non-negative counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AutophaseVector {
    counts: [u64; FEATURE_DIM],
}

impl AutophaseVector {
    pub fn zero() -> Self {
        Self {
            counts: [0; FEATURE_DIM],
        }
    }

    /// Validates length and the TotalInsts dominance invariant.
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() != FEATURE_DIM {
            return Err(Error::Parse(format!(
                "feature vector has {} entries, expected {FEATURE_DIM}",
                counts.len()
            )));
        }
        let mut arr = [0u64; FEATURE_DIM];
        arr.copy_from_slice(&counts);
        let v = Self { counts: arr };
        v.check_dominance()?;
        Ok(v)
    }

    fn check_dominance(&self) -> Result<()> {
        let total = self.counts[IDX_TOTAL_INSTS];
        for &i in &OPCODE_COUNT_INDICES {
            if self.counts[i] > total {
                return Err(Error::Parse(format!(
                    "{} = {} exceeds TotalInsts = {}",
                    FEATURE_NAMES[i], self.counts[i], total
                )));
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> &[u64; FEATURE_DIM] {
        &self.counts
    }

    pub fn get(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn get_named(&self, name: &str) -> Option<u64> {
        feature_index(name).map(|i| self.counts[i])
    }

    /// δ = other − self, entrywise signed.
    pub fn delta_to(&self, other: &AutophaseVector) -> FeatureDelta {
        let mut deltas = [0i64; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            deltas[i] = other.counts[i] as i64 - self.counts[i] as i64;
        }
        FeatureDelta { deltas }
    }

    /// self + δ; errors if any entry would go negative.
    pub fn apply_delta(&self, delta: &FeatureDelta) -> Result<AutophaseVector> {
        let mut counts = [0u64; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            let v = self.counts[i] as i64 + delta.deltas[i];
            if v < 0 {
                return Err(Error::Parse(format!(
                    "delta drives {} below zero",
                    FEATURE_NAMES[i]
                )));
            }
            counts[i] = v as u64;
        }
        Ok(AutophaseVector { counts })
    }

    /// Saturating add used by the synthetic model: entries clamp at zero and
    /// TotalInsts is lifted to dominate every opcode count afterwards.
    pub fn saturating_apply(&self, sparse: &[(usize, i64)]) -> AutophaseVector {
        let mut counts = self.counts;
        for &(i, d) in sparse {
            let v = counts[i] as i64 + d;
            counts[i] = v.max(0) as u64;
        }
        let max_opcode = OPCODE_COUNT_INDICES
            .iter()
            .map(|&i| counts[i])
            .max()
            .unwrap_or(0);
        if counts[IDX_TOTAL_INSTS] < max_opcode {
            counts[IDX_TOTAL_INSTS] = max_opcode;
        }
        AutophaseVector { counts }
    }
}

impl Serialize for AutophaseVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(FEATURE_DIM))?;
        for i in 0..FEATURE_DIM {
            map.serialize_entry(FEATURE_NAMES[i], &self.counts[i])?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for AutophaseVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = AutophaseVector;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a 56-entry feature map or array")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut counts = [0u64; FEATURE_DIM];
                let mut seen = [false; FEATURE_DIM];
                while let Some((key, value)) = access.next_entry::<String, u64>()? {
                    let i = feature_index(&key)
                        .ok_or_else(|| de::Error::custom(format!("unknown feature {key}")))?;
                    counts[i] = value;
                    seen[i] = true;
                }
                if let Some(missing) = seen.iter().position(|s| !s) {
                    return Err(de::Error::custom(format!(
                        "missing feature {}",
                        FEATURE_NAMES[missing]
                    )));
                }
                AutophaseVector::new(counts.to_vec()).map_err(de::Error::custom)
            }

            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut counts = Vec::with_capacity(FEATURE_DIM);
                while let Some(v) = access.next_element::<u64>()? {
                    counts.push(v);
                }
                AutophaseVector::new(counts).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_any(V)
    }
}

/// δ_feat: the entrywise shift between consecutive feature vectors.
/// Serializes sparsely (non-zero entries only, index order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDelta {
    deltas: [i64; FEATURE_DIM],
}

impl FeatureDelta {
    pub fn zero() -> Self {
        Self {
            deltas: [0; FEATURE_DIM],
        }
    }

    /// Construct checked against the φ it applies to: φ + δ must stay
    /// non-negative entrywise.
    pub fn checked(deltas: [i64; FEATURE_DIM], base: &AutophaseVector) -> Result<Self> {
        let d = Self { deltas };
        base.apply_delta(&d)?;
        Ok(d)
    }

    pub fn deltas(&self) -> &[i64; FEATURE_DIM] {
        &self.deltas
    }

    pub fn is_zero(&self) -> bool {
        self.deltas.iter().all(|&d| d == 0)
    }

    pub fn get_named(&self, name: &str) -> Option<i64> {
        feature_index(name).map(|i| self.deltas[i])
    }

    pub fn sum_with(&self, other: &FeatureDelta) -> FeatureDelta {
        let mut deltas = [0i64; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            deltas[i] = self.deltas[i] + other.deltas[i];
        }
        FeatureDelta { deltas }
    }
}

impl Serialize for FeatureDelta {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let nonzero = self.deltas.iter().filter(|&&d| d != 0).count();
        let mut map = serializer.serialize_map(Some(nonzero))?;
        for i in 0..FEATURE_DIM {
            if self.deltas[i] != 0 {
                map.serialize_entry(FEATURE_NAMES[i], &self.deltas[i])?;
            }
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for FeatureDelta {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = FeatureDelta;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a sparse feature delta map")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut deltas = [0i64; FEATURE_DIM];
                while let Some((key, value)) = access.next_entry::<String, i64>()? {
                    let i = feature_index(&key)
                        .ok_or_else(|| de::Error::custom(format!("unknown feature {key}")))?;
                    deltas[i] = value;
                }
                Ok(FeatureDelta { deltas })
            }
        }
        deserializer.deserialize_map(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_cover_expected_indices() {
        assert_eq!(FEATURE_NAMES[0], "BBNumArgsHi");
        assert_eq!(FEATURE_NAMES[41], "NumRetInst");
        assert_eq!(FEATURE_NAMES[50], "TotalBlocks");
        assert_eq!(FEATURE_NAMES[51], "TotalInsts");
        assert_eq!(FEATURE_NAMES[55], "testUnary");
        assert_eq!(FEATURE_NAMES.len(), 56);
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(AutophaseVector::new(vec![0; 55]).is_err());
        assert!(AutophaseVector::new(vec![0; 57]).is_err());
    }

    #[test]
    fn rejects_opcode_exceeding_total() {
        let mut counts = vec![0u64; FEATURE_DIM];
        counts[37] = 5; // NumLoadInst
        counts[IDX_TOTAL_INSTS] = 4;
        assert!(AutophaseVector::new(counts).is_err());
    }

    #[test]
    fn delta_round_trip() {
        let mut a = vec![0u64; FEATURE_DIM];
        a[37] = 12;
        a[IDX_TOTAL_INSTS] = 20;
        let mut b = a.clone();
        b[37] = 2;
        b[IDX_TOTAL_INSTS] = 10;
        let va = AutophaseVector::new(a).unwrap();
        let vb = AutophaseVector::new(b).unwrap();
        let d = va.delta_to(&vb);
        assert_eq!(d.get_named("NumLoadInst"), Some(-10));
        assert_eq!(va.apply_delta(&d).unwrap(), vb);
    }

    #[test]
    fn delta_negative_underflow_rejected() {
        let base = AutophaseVector::zero();
        let mut deltas = [0i64; FEATURE_DIM];
        deltas[3] = -1;
        assert!(FeatureDelta::checked(deltas, &base).is_err());
    }

    #[test]
    fn sparse_delta_serialization() {
        let mut deltas = [0i64; FEATURE_DIM];
        deltas[37] = -10;
        deltas[IDX_TOTAL_INSTS] = -17;
        let d = FeatureDelta { deltas };
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"NumLoadInst":-10,"TotalInsts":-17}"#);
        let back: FeatureDelta = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn vector_serializes_name_keyed_in_index_order() {
        let v = AutophaseVector::zero();
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.starts_with(r#"{"BBNumArgsHi":0,"BBNumArgsLo":0"#));
        let back: AutophaseVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn saturating_apply_clamps_and_keeps_dominance() {
        let mut counts = vec![0u64; FEATURE_DIM];
        counts[37] = 3;
        counts[41] = 1;
        counts[IDX_TOTAL_INSTS] = 4;
        let v = AutophaseVector::new(counts).unwrap();
        let out = v.saturating_apply(&[(37, -10), (IDX_TOTAL_INSTS, -10)]);
        assert_eq!(out.get(37), 0);
        // TotalInsts clamped to zero then lifted back over NumRetInst = 1
        assert_eq!(out.get(IDX_TOTAL_INSTS), 1);
        assert!(AutophaseVector::new(out.counts().to_vec()).is_ok());
    }
}
