use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Config, Modality};
use super::dataset::ContractSample;
use super::HarnessError;
use crate::autodiff::{Array2D, Checkpoint, ParamId, ParamStore, Tape, Var};
use crate::cfg::{build_cfg, Cfg};
use crate::encoders::{encode_graph, encode_opcode, encode_source, node_features, EncoderParams};
use crate::evm::{disassemble, Program};
use crate::fusion::{bce_loss, classify, fuse, ClassifierParams, FusionParams, Prediction};
use crate::preprocess::{
    chunk_tokens, hash_tokenize, normalize_opcodes, normalize_source, ChunkedTokens, OpcodeVocab,
    UNK_ID,
};

/// Everything the encoders need from one contract, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    /// `None` when the contract has no source or the source has no tokens.
    pub chunks: Option<ChunkedTokens>,
    pub opcode_ids: Vec<usize>,
    pub cfg: Cfg,
}

/// Encoders, fusion and head over one parameter store.
#[derive(Debug)]
pub struct Model {
    pub config: Config,
    pub store: ParamStore,
    pub encoders: EncoderParams,
    pub fusion: FusionParams,
    pub head: ClassifierParams,
    /// Stands in for the source embedding when a contract has no source.
    pub placeholder: ParamId,
    vocab: OpcodeVocab,
}

impl Model {
    /// Fresh parameters drawn from `config.seed`.
    pub fn new(config: &Config) -> Result<Self, HarnessError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let encoders = EncoderParams::new(&mut store, &config.encoder_config(), &mut rng);
        let fc = config.fusion_config();
        let fusion = FusionParams::new(&mut store, &fc, &mut rng);
        let head = ClassifierParams::new(&mut store, &fc, &mut rng);
        let placeholder = store.add(
            "src.placeholder",
            Array2D::xavier(1, config.model_dim, &mut rng),
        );
        Ok(Model {
            config: config.clone(),
            store,
            encoders,
            fusion,
            head,
            placeholder,
            vocab: OpcodeVocab::new(),
        })
    }

    pub fn featurize(
        &self,
        source: Option<&str>,
        program: &Program,
    ) -> Result<Features, HarnessError> {
        let c = &self.config;
        let chunks = match source {
            Some(src) => {
                let words: Vec<&str> = c.stopwords.iter().map(String::as_str).collect();
                let text = normalize_source(src, &words).text;
                let ids = hash_tokenize(&text, c.vocab)?;
                if ids.is_empty() {
                    None
                } else {
                    Some(chunk_tokens(&ids, c.window, c.stride)?)
                }
            }
            None => None,
        };
        let ops = normalize_opcodes(program);
        let mut opcode_ids = self.vocab.ids(ops.mnemonics.iter().map(String::as_str));
        if c.max_opcodes > 0 {
            opcode_ids.truncate(c.max_opcodes);
        }
        if opcode_ids.is_empty() {
            opcode_ids.push(UNK_ID as usize);
        }
        Ok(Features {
            chunks,
            opcode_ids,
            cfg: build_cfg(program),
        })
    }

    pub fn featurize_sample(&self, s: &ContractSample) -> Result<Features, HarnessError> {
        self.featurize(s.source.as_deref(), &disassemble(&s.bytecode()?))
    }

    /// Label probabilities, `1 × L`.
    pub fn forward(&self, t: &mut Tape, f: &Features) -> Result<Var, HarnessError> {
        let mut inputs = Vec::with_capacity(self.config.modalities.len());
        for m in &self.config.modalities {
            inputs.push(match m {
                Modality::Source => match &f.chunks {
                    Some(ch) => encode_source(t, &self.encoders.source, ch)?,
                    None => t.param(self.placeholder),
                },
                Modality::Opcode => encode_opcode(t, &self.encoders.opcode, &f.opcode_ids)?,
                Modality::Graph => {
                    let feats = node_features(t, &f.cfg, &self.encoders.graph, &self.vocab)?;
                    encode_graph(t, &f.cfg, feats, &self.encoders.graph)?
                }
            });
        }
        let out = fuse(t, &inputs, &self.fusion, self.config.fusion)?;
        Ok(classify(t, out.f, &self.head)?)
    }

    pub fn loss(&self, t: &mut Tape, f: &Features, labels: &[bool]) -> Result<Var, HarnessError> {
        if labels.len() != self.config.labels {
            return Err(HarnessError::LabelWidth {
                expected: self.config.labels,
                found: labels.len(),
            });
        }
        let p = self.forward(t, f)?;
        Ok(bce_loss(t, p, labels)?)
    }

    pub fn predict(&self, f: &Features) -> Result<Prediction, HarnessError> {
        let mut t = Tape::new(&self.store);
        let p = self.forward(&mut t, f)?;
        Ok(Prediction::from_probs(
            t.value(p).data().to_vec(),
            self.head.tau,
        ))
    }

    /// Parameters plus every config key, with the fusion keys spelled out.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut meta = self.config.pairs();
        meta.push((
            "n_modalities".into(),
            self.config.modalities.len().to_string(),
        ));
        Checkpoint::from_store(&self.store, meta)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, HarnessError> {
        let pairs = ck
            .metadata
            .iter()
            .filter(|(k, _)| Config::KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.as_str(), v.as_str()));
        let config = Config::from_pairs(pairs)?;
        if ck.meta("n_modalities") != Some(config.modalities.len().to_string().as_str()) {
            return Err(HarnessError::CheckpointMismatch(
                "n_modalities disagrees with modalities".into(),
            ));
        }
        let mut model = Model::new(&config)?;
        ck.restore_into(&mut model.store)
            .map_err(|e| HarnessError::CheckpointMismatch(e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), HarnessError> {
        self.checkpoint()
            .save(path)
            .map_err(|e| HarnessError::Io(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let ck = Checkpoint::load(path).map_err(|e| HarnessError::Io(e.to_string()))?;
        Self::from_checkpoint(&ck)
    }
}
