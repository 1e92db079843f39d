//! The end-to-end experiment as a chain of file-to-file steps.
//!
//! ```text
//! prepare -> train wiki, train full -> audit -> rank
//!                                   -> generate wiki, generate full
//!                                                    -> report
//! ```
//!
//! Each step reads only the artifacts of earlier steps and the input corpora.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{
    self, accuracy, evaluate_pair, improved_types_report, mean_loss, per_type_test, write_records,
    write_type_stats, TokenLossRecord, Which,
};
use crate::checkpoint::{load_checkpoint, save_checkpoint, Model};
use crate::corpus::{
    build_vocab, read_corpus_dir, read_corpus_jsonl, read_passages, sample_passages, split_corpus,
    write_passages, Corpus, CorpusManifest, EncodedCorpus, Passage, Source, Vocab,
};
use crate::count::fit_counts;
use crate::error::{Error, Result};
use crate::gsn::{generate, write_samples_jsonl, write_samples_text, SamplerConfig};
use crate::infogain::{
    corpus_gain_from, passage_gains_from_records, rank_passages, winners_markdown, write_gains_csv,
    CorpusGain,
};
use crate::lm::check_model_vocab;
use crate::neural::{train_with, ModelConfig, TrainConfig};

/// The two models of the contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Trained on the base corpus only.
    Wiki,
    /// Trained on the base plus fiction mixture.
    Full,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Wiki, Role::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Wiki => "wiki",
            Role::Full => "full",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wiki" => Ok(Role::Wiki),
            "full" => Ok(Role::Full),
            _ => Err(Error::invalid(format!(
                "unknown role {s:?} (expected wiki or full)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Count,
    Neural,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    pub max_size: usize,
    pub min_count: u64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            max_size: 16_384,
            min_count: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backends {
    pub wiki: BackendChoice,
    pub full: BackendChoice,
}

impl Default for Backends {
    fn default() -> Self {
        Self {
            wiki: BackendChoice::Neural,
            full: BackendChoice::Neural,
        }
    }
}

impl Backends {
    pub fn get(&self, role: Role) -> BackendChoice {
        match role {
            Role::Wiki => self.wiki,
            Role::Full => self.full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountConfig {
    pub alpha: f64,
}

impl Default for CountConfig {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

/// Encoder shape; the vocab size comes from the prepared vocab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralShape {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub max_sequence_length: usize,
}

impl Default for NeuralShape {
    fn default() -> Self {
        let d = ModelConfig::desk_scale(0);
        Self {
            layers: d.layers,
            heads: d.heads,
            model_dim: d.model_dim,
            ffn_dim: d.ffn_dim,
            max_sequence_length: d.max_sequence_length,
        }
    }
}

impl NeuralShape {
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            heads: self.heads,
            model_dim: self.model_dim,
            ffn_dim: self.ffn_dim,
            max_sequence_length: self.max_sequence_length,
            vocab_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub fraction: f64,
    pub passages: usize,
    pub length: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            passages: 1000,
            length: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub min_n: usize,
    pub worst_k: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            min_n: audit::DEFAULT_MIN_N,
            worst_k: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankConfig {
    pub max_authors: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            max_authors: crate::infogain::DEFAULT_MAX_AUTHORS,
        }
    }
}

/// Everything a run depends on. The `seed` fields of `train` and `sampler`
/// are ignored: all seeds derive from the master `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory of `.txt` files or a JSON-lines file.
    pub base_corpus: PathBuf,
    pub fiction_corpus: PathBuf,
    /// Base tokens per fiction token in the mixture.
    #[serde(default = "default_ratio")]
    pub mixture_ratio: f64,
    #[serde(default)]
    pub vocab: VocabConfig,
    #[serde(default)]
    pub backends: Backends,
    #[serde(default)]
    pub count: CountConfig,
    #[serde(default)]
    pub neural: NeuralShape,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub test: TestConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub rank: RankConfig,
    /// Not part of the config hash: moving a run does not change its numbers.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_ratio() -> f64 {
    3.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("ccaudit-out")
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Input {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mixture_ratio > 0.0 && self.mixture_ratio.is_finite()) {
            return Err(Error::invalid("mixture_ratio must be positive"));
        }
        if !(self.count.alpha > 0.0) {
            return Err(Error::invalid("count.alpha must be positive"));
        }
        if self.test.length == 0 || self.test.passages == 0 {
            return Err(Error::invalid(
                "test.length and test.passages must be positive",
            ));
        }
        if self.uses_neural() {
            self.neural
                .model_config(crate::corpus::NUM_SPECIALS + 1)
                .validate()?;
            if self.test.length > self.neural.max_sequence_length {
                return Err(Error::SequenceTooLong {
                    len: self.test.length,
                    max: self.neural.max_sequence_length,
                });
            }
        }
        self.sampler.validate()
    }

    fn uses_neural(&self) -> bool {
        Role::BOTH
            .iter()
            .any(|&r| self.backends.get(r) == BackendChoice::Neural)
    }

    /// The config as hashed and echoed: `output_dir` removed.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        v
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(&self.echo()).expect("json"),
        ))
    }
}

/// A child seed: the first eight bytes of SHA-256(master ‖ label).
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub split_base: u64,
    pub split_fiction: u64,
    pub passages_base: u64,
    pub passages_fiction: u64,
    /// Shared by both roles, so the models differ only in their data.
    pub train: u64,
    pub sampler: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            split_base: derive_seed(master, "split/base"),
            split_fiction: derive_seed(master, "split/fiction"),
            passages_base: derive_seed(master, "passages/base"),
            passages_fiction: derive_seed(master, "passages/fiction"),
            train: derive_seed(master, "train"),
            sampler: derive_seed(master, "sampler"),
        }
    }
}

/// Embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub version: String,
    pub seeds: Seeds,
}

impl Provenance {
    pub fn of(config: &PipelineConfig) -> Self {
        Self {
            config_hash: config.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: Seeds::from_master(config.seed),
        }
    }

    /// One-line form for CSV and Markdown comments.
    pub fn line(&self) -> String {
        format!(
            "provenance {}",
            serde_json::to_string(self).expect("provenance serializes")
        )
    }
}

/// Fiction tokens taken into the mixture, per document in split order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePlan {
    pub ratio: f64,
    pub base_tokens: usize,
    pub fiction_tokens: usize,
    pub fiction_parts: Vec<(String, usize)>,
}

/// Fills a fiction budget of `floor(base_tokens / ratio)` from whole
/// documents in order, cutting the last one short.
pub fn plan_mixture(base_tokens: usize, fiction_train: &Corpus, ratio: f64) -> MixturePlan {
    let budget = (base_tokens as f64 / ratio).floor() as usize;
    let mut parts = Vec::new();
    let mut used = 0;
    for d in &fiction_train.documents {
        if used >= budget {
            break;
        }
        let take = d.tokens.len().min(budget - used);
        parts.push((d.id.clone(), take));
        used += take;
    }
    MixturePlan {
        ratio,
        base_tokens,
        fiction_tokens: used,
        fiction_parts: parts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub provenance: Provenance,
    pub vocab_size: usize,
    pub vocab_fingerprint: String,
    pub base_train_tokens: usize,
    pub fiction_train_tokens: usize,
    pub mixture: MixturePlan,
    pub base_test_passages: usize,
    pub fiction_test_passages: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPair {
    pub wiki: f64,
    pub full: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSetSummary {
    pub tokens: usize,
    pub accuracy: ModelPair,
    pub mean_loss: ModelPair,
    pub types_tested: usize,
    pub significant_improved: usize,
    pub significant_worse: usize,
    /// Tokens of the improved types, best first (at most 20).
    pub top_improved: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub provenance: Provenance,
    pub base_test: TestSetSummary,
    pub fiction_test: TestSetSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    pub provenance: Provenance,
    pub corpus_gain: CorpusGain,
    pub passages: usize,
    pub winners: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub provenance: Provenance,
    pub config: serde_json::Value,
    pub vocab_fingerprint: String,
    pub base_test: TestSetSummary,
    pub fiction_test: TestSetSummary,
    pub corpus_gain: CorpusGain,
    pub samples: ModelSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSamples {
    pub wiki: usize,
    pub full: usize,
}

/// A configured run rooted at an output directory.
pub struct Pipeline {
    config: PipelineConfig,
    /// Relative corpus paths resolve against this directory.
    root: PathBuf,
    out: PathBuf,
    provenance: Provenance,
    log: bool,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        root: impl Into<PathBuf>,
        out: impl Into<PathBuf>,
    ) -> Result<Self> {
        config.validate()?;
        let provenance = Provenance::of(&config);
        Ok(Self {
            config,
            root: root.into(),
            out: out.into(),
            provenance,
            log: false,
        })
    }

    /// Report training progress on stderr.
    pub fn with_log(mut self, log: bool) -> Self {
        self.log = log;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn require(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if !p.exists() {
            return Err(Error::MissingArtifact(p));
        }
        Ok(p)
    }

    fn load_corpus(&self, path: &Path, source: Source) -> Result<Corpus> {
        let path = self.root.join(path);
        if !path.exists() {
            return Err(Error::Input {
                path,
                reason: "no such file or directory".into(),
            });
        }
        if path.is_dir() {
            read_corpus_dir(&path, source)
        } else {
            read_corpus_jsonl(&path)
        }
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, rel: &str) -> Result<T> {
        let path = self.require(rel)?;
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    fn create(&self, rel: &str) -> Result<BufWriter<File>> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        Ok(BufWriter::new(File::create(path)?))
    }

    pub fn load_vocab(&self) -> Result<Vocab> {
        let path = self.require("vocab.txt")?;
        Vocab::read_from(BufReader::new(File::open(path)?))
    }

    pub fn load_passages(&self, source: Source) -> Result<Vec<Passage>> {
        read_passages(&self.require(&format!("passages/{}_test.jsonl", source_name(source)))?)
    }

    pub fn load_model(&self, role: Role) -> Result<Model> {
        let path = self.require(&format!("checkpoints/{}.ckpt", role.as_str()))?;
        Ok(load_checkpoint(&path)?.1)
    }

    /// Splits both corpora, builds the shared vocab, plans the mixture and samples test passages.
    pub fn prepare(&self) -> Result<PrepareSummary> {
        let seeds = self.provenance.seeds;
        let base = self.load_corpus(&self.config.base_corpus, Source::Base)?;
        let fiction = self.load_corpus(&self.config.fiction_corpus, Source::Fiction)?;
        let (base_train, base_test) =
            split_corpus(&base, self.config.test.fraction, seeds.split_base)?;
        let (fic_train, fic_test) =
            split_corpus(&fiction, self.config.test.fraction, seeds.split_fiction)?;

        let base_train_c = base.subset(&base_train)?;
        let fic_train_c = fiction.subset(&fic_train)?;
        let vocab = build_vocab(
            base_train_c
                .token_slices()
                .chain(fic_train_c.token_slices()),
            self.config.vocab.max_size,
            self.config.vocab.min_count,
        )?;
        let mixture = plan_mixture(
            base_train.token_count,
            &fic_train_c,
            self.config.mixture_ratio,
        );

        let len = self.config.test.length;
        let n = self.config.test.passages;
        let base_passages = sample_passages(
            &base.subset(&base_test)?.encode(&vocab),
            n,
            len,
            seeds.passages_base,
        )?;
        let fic_passages = sample_passages(
            &fiction.subset(&fic_test)?.encode(&vocab),
            n,
            len,
            seeds.passages_fiction,
        )?;

        fs::create_dir_all(&self.out)?;
        for (name, m) in [
            ("base_train", &base_train),
            ("base_test", &base_test),
            ("fiction_train", &fic_train),
            ("fiction_test", &fic_test),
        ] {
            self.write_json(&format!("manifests/{name}.json"), m)?;
        }
        let mut w = self.create("vocab.txt")?;
        vocab.write_to(&mut w)?;
        w.flush()?;
        self.write_json("manifests/mixture.json", &mixture)?;
        fs::create_dir_all(self.path("passages"))?;
        write_passages(&self.path("passages/base_test.jsonl"), &base_passages)?;
        write_passages(&self.path("passages/fiction_test.jsonl"), &fic_passages)?;

        let summary = PrepareSummary {
            provenance: self.provenance.clone(),
            vocab_size: vocab.len(),
            vocab_fingerprint: vocab.fingerprint().to_string(),
            base_train_tokens: base_train.token_count,
            fiction_train_tokens: fic_train.token_count,
            mixture,
            base_test_passages: base_passages.len(),
            fiction_test_passages: fic_passages.len(),
        };
        self.write_json("prepare.json", &summary)?;
        Ok(summary)
    }

    /// The encoded training data of `role`.
    pub fn training_data(&self, role: Role, vocab: &Vocab) -> Result<EncodedCorpus> {
        let base = self.load_corpus(&self.config.base_corpus, Source::Base)?;
        let base_train: CorpusManifest = self.read_json("manifests/base_train.json")?;
        let mut data = base.subset(&base_train)?.encode(vocab);
        if role == Role::Full {
            let fiction = self.load_corpus(&self.config.fiction_corpus, Source::Fiction)?;
            let fic_train: CorpusManifest = self.read_json("manifests/fiction_train.json")?;
            let plan: MixturePlan = self.read_json("manifests/mixture.json")?;
            let fic = fiction.subset(&fic_train)?.encode(vocab);
            let by_id: std::collections::HashMap<&str, &crate::corpus::EncodedDocument> =
                fic.documents.iter().map(|d| (d.id.as_str(), d)).collect();
            for (id, take) in &plan.fiction_parts {
                let doc = by_id.get(id.as_str()).ok_or_else(|| {
                    Error::invalid(format!("mixture names unknown document {id:?}"))
                })?;
                let mut part = (*doc).clone();
                part.ids.truncate(*take);
                data.documents.push(part);
            }
        }
        Ok(data)
    }

    pub fn train(&self, role: Role) -> Result<()> {
        let vocab = self.load_vocab()?;
        let data = self.training_data(role, &vocab)?;
        let seed = self.provenance.seeds.train;
        let model = match self.config.backends.get(role) {
            BackendChoice::Count => {
                Model::Count(fit_counts(&data, &vocab, self.config.count.alpha)?)
            }
            BackendChoice::Neural => {
                let config = self.config.neural.model_config(vocab.len());
                let tconfig = TrainConfig {
                    seed,
                    ..self.config.train
                };
                let mut log = self.create(&format!("logs/train_{}.csv", role.as_str()))?;
                writeln!(log, "# {}", self.provenance.line())?;
                writeln!(log, "step,masked_loss,learning_rate")?;
                let verbose = self.log;
                let total = tconfig.steps;
                let mut io_error = None;
                let trained = train_with(&config, &tconfig, &data, &vocab, |m| {
                    if let Err(e) =
                        writeln!(log, "{},{},{}", m.step, m.masked_loss, m.learning_rate)
                    {
                        io_error.get_or_insert(e);
                    }
                    if verbose && (m.step % 100 == 0 || m.step + 1 == total) {
                        eprintln!(
                            "[train {}] step {}/{} loss {:.4}",
                            role.as_str(),
                            m.step + 1,
                            total,
                            m.masked_loss
                        );
                    }
                })?;
                if let Some(e) = io_error {
                    return Err(e.into());
                }
                log.flush()?;
                Model::Neural(trained.model)
            }
        };
        fs::create_dir_all(self.path("checkpoints"))?;
        let echo = serde_json::json!({
            "role": role.as_str(),
            "training_tokens": data.token_count(),
            "pipeline": self.config.echo(),
            "provenance": self.provenance,
        });
        save_checkpoint(
            &self.path(&format!("checkpoints/{}.ckpt", role.as_str())),
            &model,
            seed,
            echo,
        )
    }

    fn test_set(
        &self,
        name: &str,
        records: &[TokenLossRecord],
        vocab: &Vocab,
    ) -> Result<TestSetSummary> {
        let line = self.provenance.line();
        write_records(
            self.create(&format!("audit/records_{name}.csv"))?,
            records,
            vocab,
            Some(&line),
        )?;
        let stats = per_type_test(records, self.config.audit.min_n)?;
        write_type_stats(
            self.create(&format!("audit/type_stats_{name}.csv"))?,
            &stats,
            vocab,
            Some(&line),
        )?;
        let report = improved_types_report(&stats, vocab, self.config.audit.worst_k);
        fs::write(
            self.path(&format!("audit/improved_types_{name}.md")),
            report.to_markdown(Some(&line)),
        )?;
        Ok(TestSetSummary {
            tokens: records.len(),
            accuracy: ModelPair {
                wiki: accuracy(records, Which::A)?,
                full: accuracy(records, Which::B)?,
            },
            mean_loss: ModelPair {
                wiki: mean_loss(records, Which::A)?,
                full: mean_loss(records, Which::B)?,
            },
            types_tested: stats.len(),
            significant_improved: stats
                .iter()
                .filter(|s| s.significant && s.mean_delta > 0.0)
                .count(),
            significant_worse: stats
                .iter()
                .filter(|s| s.significant && s.mean_delta < 0.0)
                .count(),
            top_improved: report
                .improved
                .iter()
                .take(20)
                .map(|r| r.token.clone())
                .collect(),
        })
    }

    /// Word-by-word comparison on both test sets (model A = wiki, B = full).
    pub fn audit(&self) -> Result<AuditSummary> {
        let vocab = self.load_vocab()?;
        let wiki = self.load_model(Role::Wiki)?;
        let full = self.load_model(Role::Full)?;
        let base_records = evaluate_pair(&wiki, &full, &vocab, &self.load_passages(Source::Base)?)?;
        let fic_records =
            evaluate_pair(&wiki, &full, &vocab, &self.load_passages(Source::Fiction)?)?;
        let summary = AuditSummary {
            provenance: self.provenance.clone(),
            base_test: self.test_set("base", &base_records, &vocab)?,
            fiction_test: self.test_set("fiction", &fic_records, &vocab)?,
        };
        self.write_json("audit/audit.json", &summary)?;
        Ok(summary)
    }

    pub fn generate(&self, role: Role) -> Result<usize> {
        let vocab = self.load_vocab()?;
        let model = self.load_model(role)?;
        check_model_vocab(&model, &vocab)?;
        let config = SamplerConfig {
            seed: self.provenance.seeds.sampler,
            ..self.config.sampler
        };
        let samples = generate(&model, &vocab, &config)?;
        fs::create_dir_all(self.path("samples"))?;
        write_samples_jsonl(
            &self.path(&format!("samples/{}.jsonl", role.as_str())),
            &samples,
        )?;
        write_samples_text(
            &self.path(&format!("samples/{}.txt", role.as_str())),
            &samples,
        )?;
        Ok(samples.len())
    }

    /// Information gain per fiction test passage, from the audit records.
    pub fn rank(&self) -> Result<GainSummary> {
        let vocab = self.load_vocab()?;
        let passages = self.load_passages(Source::Fiction)?;
        let records = audit::read_records(BufReader::new(File::open(
            self.require("audit/records_fiction.csv")?,
        )?))?;
        let mut gains = passage_gains_from_records(&records, &passages)?;
        // Duplicate draws of one window carry identical gains; rank each once.
        let mut seen = std::collections::HashSet::new();
        gains.retain(|g| seen.insert(g.passage_id.clone()));
        let corpus_gain = corpus_gain_from(&records, &gains)?;
        let report = rank_passages(&gains, self.config.rank.max_authors);
        let line = self.provenance.line();
        write_gains_csv(self.create("rank/gains.csv")?, &report.ranked, Some(&line))?;
        fs::write(
            self.path("rank/winners.md"),
            winners_markdown(&report, &passages, &vocab, Some(&line)),
        )?;
        let summary = GainSummary {
            provenance: self.provenance.clone(),
            corpus_gain,
            passages: report.ranked.len(),
            winners: report.winners.len(),
        };
        self.write_json("rank/gain.json", &summary)?;
        Ok(summary)
    }

    pub fn report(&self) -> Result<RunSummary> {
        let prepare: PrepareSummary = self.read_json("prepare.json")?;
        let audit: AuditSummary = self.read_json("audit/audit.json")?;
        let gain: GainSummary = self.read_json("rank/gain.json")?;
        let count_lines = |role: Role| -> Result<usize> {
            let p = self.require(&format!("samples/{}.jsonl", role.as_str()))?;
            Ok(fs::read_to_string(p)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .count())
        };
        for (what, p) in [
            ("audit", &audit.provenance),
            ("rank", &gain.provenance),
            ("prepare", &prepare.provenance),
        ] {
            if *p != self.provenance {
                return Err(Error::invalid(format!(
                    "{what} artifacts were produced by a different configuration"
                )));
            }
        }
        let summary = RunSummary {
            provenance: self.provenance.clone(),
            config: self.config.echo(),
            vocab_fingerprint: prepare.vocab_fingerprint,
            base_test: audit.base_test,
            fiction_test: audit.fiction_test,
            corpus_gain: gain.corpus_gain,
            samples: ModelSamples {
                wiki: count_lines(Role::Wiki)?,
                full: count_lines(Role::Full)?,
            },
        };
        self.write_json("run_summary.json", &summary)?;
        Ok(summary)
    }

    pub fn run(&self) -> Result<RunSummary> {
        self.prepare()?;
        for role in Role::BOTH {
            self.train(role)?;
        }
        self.audit()?;
        self.rank()?;
        for role in Role::BOTH {
            self.generate(role)?;
        }
        self.report()
    }
}

fn source_name(source: Source) -> &'static str {
    match source {
        Source::Base => "base",
        Source::Fiction => "fiction",
    }
}
