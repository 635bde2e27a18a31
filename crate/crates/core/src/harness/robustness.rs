//! Clean-versus-obfuscated evaluation.
//!
//! 1. Obfuscate each sample. Bytecode must pass the interpreter
//!    equivalence check; samples that are refused or fail the check are
//!    excluded.
//! 2. Rebuild opcode stream and CFG from the obfuscated bytes, and
//!    re-normalise the obfuscated source.
//! 3. Score the retained samples clean and obfuscated.

use serde::Serialize;

use super::dataset::ContractSample;
use super::metrics::{hamming_score, hs_degradation};
use super::model::{Features, Model};
use super::train::predict_all;
use super::HarnessError;
use crate::evm::{assemble, disassemble};
use crate::obfuscate::{
    obf_source, obfuscate_and_verify, BytecodePass, SourcePass, DEFAULT_JUNK_DENSITY,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Transforms {
    pub bytecode: Vec<BytecodePass>,
    pub source: Vec<SourcePass>,
    /// Junk insertion probability per site.
    pub density: f64,
}

impl Default for Transforms {
    fn default() -> Self {
        Transforms {
            bytecode: Vec::new(),
            source: Vec::new(),
            density: DEFAULT_JUNK_DENSITY,
        }
    }
}

impl Transforms {
    /// The composition of all four bytecode passes.
    pub fn all_bytecode() -> Self {
        Transforms {
            bytecode: BytecodePass::ALL.to_vec(),
            ..Transforms::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bytecode.is_empty() && self.source.is_empty()
    }

    pub fn name(&self) -> String {
        let names: Vec<&str> = BytecodePass::ALL
            .iter()
            .filter(|p| self.bytecode.contains(p))
            .map(|p| p.name())
            .chain(self.source.iter().map(|p| p.name()))
            .collect();
        if names.is_empty() {
            "none".into()
        } else {
            names.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub hs_base: f64,
    pub hs_obf: f64,
    pub degradation: f64,
    pub transforms: String,
    pub seed: u64,
    pub retained: usize,
    pub excluded: usize,
    pub trials: usize,
}

fn sample_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Obfuscated features for one sample, or `None` if it must be excluded.
fn obfuscated(
    model: &Model,
    s: &ContractSample,
    tf: &Transforms,
    seed: u64,
    trials: usize,
) -> Result<Option<Features>, HarnessError> {
    let program = disassemble(&s.bytecode()?);
    let program = if tf.bytecode.is_empty() {
        program
    } else {
        match obfuscate_and_verify(&program, &tf.bytecode, seed, tf.density, trials) {
            Ok((p, report)) if report.verified => disassemble(&assemble(&p)?),
            _ => return Ok(None),
        }
    };
    let source = match (&s.source, tf.source.is_empty()) {
        (Some(src), false) => match obf_source(src, seed, &tf.source) {
            Ok(out) => Some(out),
            Err(_) => return Ok(None),
        },
        (src, _) => src.clone(),
    };
    Ok(Some(model.featurize(source.as_deref(), &program)?))
}

pub fn robustness_eval(
    model: &Model,
    test_set: &[ContractSample],
    transforms: &Transforms,
    seed: u64,
    trials: usize,
) -> Result<RobustnessReport, HarnessError> {
    let mut clean = Vec::new();
    let mut obf = Vec::new();
    let mut y = Vec::new();
    let mut excluded = 0;
    for (i, s) in test_set.iter().enumerate() {
        match obfuscated(model, s, transforms, sample_seed(seed, i), trials)? {
            Some(f) => {
                clean.push(model.featurize_sample(s)?);
                obf.push(f);
                y.push(s.labels.clone());
            }
            None => excluded += 1,
        }
    }
    let (hs_base, hs_obf) = if y.is_empty() {
        (0.0, 0.0)
    } else {
        (
            hamming_score(&y, &predict_all(model, &clean)?)?,
            hamming_score(&y, &predict_all(model, &obf)?)?,
        )
    };
    Ok(RobustnessReport {
        hs_base,
        hs_obf,
        degradation: hs_degradation(hs_base, hs_obf),
        transforms: transforms.name(),
        seed,
        retained: y.len(),
        excluded,
        trials,
    })
}
