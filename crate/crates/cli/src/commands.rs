use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use g2p_bridge_core::codec::{canonicalize, normalize_persian, IntermediateAlphabet};
use g2p_bridge_core::corpus::{
    augment, load_corpus, save_corpus, split_corpus, CorpusEntry, ParallelCorpus, Register, Split,
};
use g2p_bridge_core::homograph::{annotate_homographs, HomographLexicon};
use g2p_bridge_core::metrics::{evaluate, EvalReport, SentenceRecord};
use g2p_bridge_core::model::{
    build_model, load_checkpoint, read_checkpoint, save_checkpoint, train, StopReason, CHECKPOINT_MAGIC,
};
use g2p_bridge_core::pipeline::{encode_pairs, transliterate};
use g2p_bridge_core::provenance::ArtifactMeta;
use g2p_bridge_core::tokenizer::{interleave, BpeTokenizer};
use g2p_bridge_core::Transducer;
use serde::Serialize;
use serde_json::json;

use crate::args::{
    AlphabetArg, AugmentArgs, Cli, Command, ConvertArgs, EvaluateArgs, Format, InspectArgs, LexiconCommand, SplitArgs,
    SplitChoice, TrainArgs, TrainTokenizerArgs,
};
use crate::config::PipelineConfig;
use crate::UsageError;

struct Ctx {
    cfg: PipelineConfig,
    format: Format,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => {
            require_exists(path, "--config")?;
            PipelineConfig::load(path)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let ctx = Ctx { cfg, format: cli.format };
    match cli.command {
        Command::Normalize => ctx.normalize(),
        Command::Canonicalize(a) => ctx.canonicalize(&a),
        Command::Lexicon(LexiconCommand::Check { lexicon, alphabet }) => ctx.lexicon_check(lexicon, &alphabet),
        Command::Lexicon(LexiconCommand::Annotate { lexicon, corpus, out, alphabet }) => {
            ctx.lexicon_annotate(lexicon, corpus, &out, &alphabet)
        }
        Command::Split(a) => ctx.split(a),
        Command::Augment(a) => ctx.augment(a),
        Command::TrainTokenizer(a) => ctx.train_tokenizer(a),
        Command::Train(a) => ctx.train(a),
        Command::Convert(a) => ctx.convert(a),
        Command::Evaluate(a) => ctx.evaluate(a),
        Command::Inspect(a) => ctx.inspect(a),
    }
}

fn require_exists(path: &Path, flag: &str) -> Result<()> {
    if !path.exists() {
        return Err(UsageError(format!("{flag}: {} does not exist", path.display())).into());
    }
    Ok(())
}

/// Flag value, else the config path, else a usage error naming the flag.
fn pick(flag_value: Option<PathBuf>, from_config: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    flag_value.or_else(|| from_config.clone()).ok_or_else(|| UsageError(format!("missing required flag {flag}")).into())
}

fn input(flag_value: Option<PathBuf>, from_config: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    let path = pick(flag_value, from_config, flag)?;
    require_exists(&path, flag)?;
    Ok(path)
}

fn beam_width(beam: Option<usize>, default: usize) -> Result<usize> {
    match beam {
        Some(0) => Err(UsageError("--beam must be at least 1".into()).into()),
        Some(b) => Ok(b),
        None => Ok(default),
    }
}

fn stdin_lines() -> impl Iterator<Item = io::Result<String>> {
    io::stdin().lock().lines()
}

fn split_entries(corpus: &ParallelCorpus, split: Split) -> Vec<CorpusEntry> {
    corpus.entries_in(split).cloned().collect()
}

impl Ctx {
    fn alphabet(&self, arg: &AlphabetArg) -> Result<IntermediateAlphabet> {
        match arg.alphabet.clone().or_else(|| self.cfg.paths.alphabet.clone()) {
            Some(path) => {
                require_exists(&path, "--alphabet")?;
                Ok(IntermediateAlphabet::load(&path)?)
            }
            None => Ok(IntermediateAlphabet::default_alphabet()),
        }
    }

    /// Provenance for written artifacts. Paths are left out of the digest
    /// so the same settings give the same digest wherever files live.
    fn meta(&self) -> ArtifactMeta {
        let mut settings = self.cfg.clone();
        settings.paths = Default::default();
        ArtifactMeta::new(&settings, Some(self.cfg.seed))
    }

    fn load_corpus(&self, flag_value: Option<PathBuf>, alphabet: &IntermediateAlphabet) -> Result<ParallelCorpus> {
        let path = input(flag_value, &self.cfg.paths.corpus, "--corpus")?;
        load_corpus(&path, alphabet).with_context(|| format!("loading corpus {}", path.display()))
    }

    fn load_tokenizer(&self, flag_value: Option<PathBuf>) -> Result<BpeTokenizer> {
        let path = input(flag_value, &self.cfg.paths.tokenizer, "--tokenizer")?;
        BpeTokenizer::load(&path).with_context(|| format!("loading tokenizer {}", path.display()))
    }

    fn load_model(&self, flag_value: Option<PathBuf>) -> Result<Transducer> {
        let path = input(flag_value, &self.cfg.paths.checkpoint, "--model")?;
        let (model, _) = load_checkpoint(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        Ok(model)
    }

    /// Prints `value` as JSON or `text`, depending on `--format`.
    fn emit(&self, value: &impl Serialize, text: &str) -> Result<()> {
        let mut out = io::stdout().lock();
        match self.format {
            Format::Json => writeln!(out, "{}", serde_json::to_string(value)?)?,
            Format::Text => write!(out, "{text}")?,
        }
        Ok(())
    }

    fn stream(&self, mut f: impl FnMut(&str) -> Result<(String, serde_json::Value)>) -> Result<()> {
        let mut out = BufWriter::new(io::stdout().lock());
        for (n, line) in stdin_lines().enumerate() {
            let line = line?;
            let (text, record) = f(&line).with_context(|| format!("input line {}", n + 1))?;
            match self.format {
                Format::Text => writeln!(out, "{text}")?,
                Format::Json => writeln!(out, "{}", serde_json::to_string(&record)?)?,
            }
        }
        out.flush()?;
        Ok(())
    }

    fn normalize(&self) -> Result<()> {
        self.stream(|line| {
            let out = normalize_persian(line);
            let record = json!({ "input": line, "output": out });
            Ok((out, record))
        })
    }

    fn canonicalize(&self, arg: &AlphabetArg) -> Result<()> {
        let abc = self.alphabet(arg)?;
        self.stream(|line| {
            let out = canonicalize(line, &abc)?;
            let record = json!({ "input": line, "output": out });
            Ok((out, record))
        })
    }

    fn lexicon_check(&self, lexicon: Option<PathBuf>, alphabet: &AlphabetArg) -> Result<()> {
        let abc = self.alphabet(alphabet)?;
        let path = input(lexicon, &self.cfg.paths.lexicon, "--lexicon")?;
        let lex = HomographLexicon::load(&path)?;
        let problems: Vec<String> = lex.check(&abc).iter().map(ToString::to_string).collect();
        let readings: usize = lex.iter().map(|(_, r)| r.len()).sum();
        let summary = json!({ "entries": lex.len(), "readings": readings, "problems": problems });
        let mut text = format!("{} entries, {readings} readings\n", lex.len());
        for p in &problems {
            text.push_str(&format!("problem: {p}\n"));
        }
        self.emit(&summary, &text)?;
        if !problems.is_empty() {
            bail!("{} invalid reading(s) in {}", problems.len(), path.display());
        }
        Ok(())
    }

    fn lexicon_annotate(
        &self,
        lexicon: Option<PathBuf>,
        corpus: Option<PathBuf>,
        out: &Path,
        alphabet: &AlphabetArg,
    ) -> Result<()> {
        let abc = self.alphabet(alphabet)?;
        let lex = HomographLexicon::load(input(lexicon, &self.cfg.paths.lexicon, "--lexicon")?)?;
        let mut corpus = self.load_corpus(corpus, &abc)?;
        let mut unmatched = 0usize;
        for entry in &mut corpus.entries {
            let (annotated, misses) = annotate_homographs(entry, &lex);
            for m in &misses {
                log::warn!(
                    "{}: word {} {:?} read as {:?} matches no reading",
                    m.entry_id,
                    m.word_index,
                    m.surface,
                    m.pg_word
                );
            }
            unmatched += misses.len();
            *entry = annotated;
        }
        let occurrences: usize = corpus.entries.iter().map(|e| e.homographs.len()).sum();
        save_corpus(out, &corpus, Some(&self.meta()))?;
        let summary = json!({ "entries": corpus.len(), "occurrences": occurrences, "unmatched": unmatched });
        self.emit(&summary, &format!("{occurrences} homograph occurrences annotated, {unmatched} unmatched\n"))
    }

    fn split(&self, a: SplitArgs) -> Result<()> {
        let abc = self.alphabet(&a.alphabet)?;
        let corpus = self.load_corpus(a.corpus, &abc)?;
        let val = a.val.unwrap_or(self.cfg.split.val);
        let test = a.test.unwrap_or(self.cfg.split.test);
        let labeled = split_corpus(&corpus, val, test, self.cfg.seed)?;
        save_corpus(&a.out, &labeled, Some(&self.meta()))?;
        let counts = split_counts(&labeled);
        self.emit(&counts, &format!("train {} / val {} / test {}\n", counts["train"], counts["val"], counts["test"]))
    }

    fn augment(&self, a: AugmentArgs) -> Result<()> {
        let abc = self.alphabet(&a.alphabet)?;
        let corpus = self.load_corpus(a.corpus, &abc)?;
        let mut cfg = self.cfg.augment.clone();
        cfg.seed = self.cfg.seed;
        if let Some(n) = a.target_size {
            cfg.target_size = n;
        }
        if let Some(k) = a.max_words {
            cfg.max_words = k;
        }
        let grown = augment(&corpus, &cfg)?;
        grown.check(&abc)?;
        save_corpus(&a.out, &grown, Some(&self.meta()))?;
        let summary = json!({ "before": corpus.len(), "after": grown.len(), "splits": split_counts(&grown) });
        self.emit(&summary, &format!("{} -> {} entries\n", corpus.len(), grown.len()))
    }

    fn train_tokenizer(&self, a: TrainTokenizerArgs) -> Result<()> {
        let abc = self.alphabet(&a.alphabet)?;
        let out = pick(a.out, &self.cfg.paths.tokenizer, "--out")?;
        let corpus = self.load_corpus(a.corpus, &abc)?;
        let entries: Vec<&CorpusEntry> = if corpus.is_labeled() {
            corpus.entries_in(Split::Train).collect()
        } else {
            corpus.entries.iter().collect()
        };
        let fa: Vec<&str> = entries.iter().map(|e| e.fa.as_str()).collect();
        let pg: Vec<&str> = entries.iter().map(|e| e.pg.as_str()).collect();
        let tok = BpeTokenizer::train(&interleave(&fa, &pg)?, self.cfg.tokenizer)?;
        tok.save(&out)?;
        let summary = json!({
            "lines": fa.len() * 2,
            "vocab_size": tok.vocab_size(),
            "merges": tok.merges().len(),
        });
        self.emit(
            &summary,
            &format!("vocab {} ({} merges) -> {}\n", tok.vocab_size(), tok.merges().len(), out.display()),
        )
    }

    fn train(&self, a: TrainArgs) -> Result<()> {
        let abc = self.alphabet(&a.alphabet)?;
        let out = pick(a.out, &self.cfg.paths.checkpoint, "--out")?;
        let tok = self.load_tokenizer(a.tokenizer)?;
        let mut corpus = self.load_corpus(a.corpus, &abc)?;
        if !corpus.is_labeled() {
            log::info!(
                "corpus has no split labels; holding out {} val / {} test",
                self.cfg.split.val,
                self.cfg.split.test
            );
            corpus = split_corpus(&corpus, self.cfg.split.val, self.cfg.split.test, self.cfg.seed)?;
        }
        let train_pairs = encode_pairs(&tok, corpus.entries_in(Split::Train));
        let val_pairs = encode_pairs(&tok, corpus.entries_in(Split::Val));

        let mut model_cfg = self.cfg.model.clone();
        if model_cfg.vocab_size != tok.vocab_size() {
            log::info!("model vocab_size set to the tokenizer's {}", tok.vocab_size());
            model_cfg.vocab_size = tok.vocab_size();
        }
        let mut train_cfg = self.cfg.train.clone();
        train_cfg.seed = self.cfg.seed;
        let model: Transducer = build_model(model_cfg, self.cfg.seed)?;
        log::info!(
            "training {} parameters on {} pairs ({} validation)",
            model.parameter_count(),
            train_pairs.len(),
            val_pairs.len()
        );
        let trained = train(model, &train_pairs, &train_cfg, &val_pairs)?;
        save_checkpoint(&trained.model, Some(&self.meta()), &out)?;

        let h = &trained.history;
        let stop = match h.stop {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStopped => "early_stopped",
        };
        let summary = json!({
            "epochs": h.epochs.len(),
            "best_epoch": h.best_epoch,
            "best_val_loss": h.best_val_loss,
            "stop": stop,
            "parameters": trained.model.parameter_count(),
            "checkpoint": out,
        });
        let text = format!(
            "{} epochs ({stop}), best val loss {:.4} at epoch {} -> {}\n",
            h.epochs.len(),
            h.best_val_loss,
            h.best_epoch,
            out.display()
        );
        self.emit(&summary, &text)
    }

    fn convert(&self, a: ConvertArgs) -> Result<()> {
        let mut opts = self.cfg.eval.decode;
        opts.beam_width = beam_width(a.beam, opts.beam_width)?;
        let model = self.load_model(a.model)?;
        let tok = self.load_tokenizer(a.tokenizer)?;
        model.check_vocab(tok.vocab_size())?;
        self.stream(|line| {
            let t = transliterate(&model, &tok, line, opts)?;
            if t.truncated {
                log::warn!("output truncated at the length limit");
            }
            let record = json!({ "input": line, "output": t.text, "truncated": t.truncated });
            Ok((t.text, record))
        })
    }

    fn evaluate(&self, a: EvaluateArgs) -> Result<()> {
        // usage problems first, before any file is read
        let model_path = input(a.model, &self.cfg.paths.checkpoint, "--model")?;
        let mut opts = self.cfg.eval;
        opts.decode.beam_width = beam_width(a.beam, opts.decode.beam_width)?;
        let abc = self.alphabet(&a.alphabet)?;
        let model = self.load_model(Some(model_path))?;
        let tok = self.load_tokenizer(a.tokenizer)?;
        let corpus = self.load_corpus(a.corpus, &abc)?;
        let choice = a.split.unwrap_or(if corpus.is_labeled() { SplitChoice::Test } else { SplitChoice::All });
        let (name, entries) = match choice {
            SplitChoice::All => ("all", corpus.entries.clone()),
            SplitChoice::Train => ("train", split_entries(&corpus, Split::Train)),
            SplitChoice::Val => ("val", split_entries(&corpus, Split::Val)),
            SplitChoice::Test => ("test", split_entries(&corpus, Split::Test)),
        };
        let evaluation = evaluate(&model, &tok, &entries, &abc, &opts)?;
        let file = ReportFile {
            meta: self.meta(),
            split: name,
            options: opts,
            report: &evaluation.report,
            sentences: &evaluation.sentences,
        };
        if let Some(out) = a.out.or_else(|| self.cfg.paths.report.clone()) {
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            serde_json::to_writer_pretty(&mut w, &file)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.emit(&evaluation.report, &summary_text(name, &evaluation.report))
    }

    fn inspect(&self, a: InspectArgs) -> Result<()> {
        require_exists(&a.path, "path")?;
        let mut head = [0u8; 8];
        let n = File::open(&a.path)?.read(&mut head)?;
        if head[..n].starts_with(CHECKPOINT_MAGIC) {
            let (model, meta) = read_checkpoint::<f64>(File::open(&a.path)?)?;
            let tensors: BTreeMap<&str, &[usize]> =
                model.layout().specs().iter().map(|s| (s.name.as_str(), s.shape.as_slice())).collect();
            let summary = json!({
                "kind": "checkpoint",
                "config": model.config(),
                "meta": meta,
                "parameters": model.parameter_count(),
                "tensors": tensors,
            });
            let c = model.config();
            let text = format!(
                "checkpoint: {}+{} layers, hidden {}, heads {}, vocab {}, {} parameters\nprovenance: {}\n",
                c.encoder_layers,
                c.decoder_layers,
                c.hidden_size,
                c.attention_heads,
                c.vocab_size,
                model.parameter_count(),
                meta.map_or("none".into(), |m| format!("{} digest {} seed {:?}", m.tool, m.config_digest, m.seed)),
            );
            return self.emit(&summary, &text);
        }
        if head[..n].starts_with(b"g2p-bpe") {
            let tok = BpeTokenizer::load(&a.path)?;
            let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
            for id in 0..tok.vocab_size() as u32 {
                if !BpeTokenizer::is_special(id) {
                    *lengths.entry(tok.token(id).map_or(0, |t| t.chars().count())).or_default() += 1;
                }
            }
            let summary = json!({
                "kind": "tokenizer",
                "config": tok.config(),
                "vocab_size": tok.vocab_size(),
                "merges": tok.merges().len(),
                "token_lengths": lengths,
            });
            let text = format!(
                "tokenizer: vocab {}, {} merges, token lengths {:?}\n",
                tok.vocab_size(),
                tok.merges().len(),
                lengths
            );
            return self.emit(&summary, &text);
        }
        let abc = self.alphabet(&a.alphabet)?;
        let corpus = load_corpus(&a.path, &abc).context("not a checkpoint, tokenizer or corpus file")?;
        let formal = corpus.entries.iter().filter(|e| e.register == Register::Formal).count();
        let ezafe: usize = corpus.entries.iter().map(|e| e.ezafe.len()).sum();
        let homographs: usize = corpus.entries.iter().map(|e| e.homographs.len()).sum();
        let summary = json!({
            "kind": "corpus",
            "entries": corpus.len(),
            "splits": corpus.is_labeled().then(|| split_counts(&corpus)),
            "formal": formal,
            "informal": corpus.len() - formal,
            "ezafe_words": ezafe,
            "homograph_occurrences": homographs,
        });
        let text = format!(
            "corpus: {} entries ({formal} formal), {ezafe} Ezafe words, {homographs} homograph occurrences\n",
            corpus.len()
        );
        self.emit(&summary, &text)
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    meta: ArtifactMeta,
    split: &'a str,
    options: g2p_bridge_core::metrics::EvalOptions,
    report: &'a EvalReport,
    sentences: &'a [SentenceRecord],
}

fn split_counts(corpus: &ParallelCorpus) -> BTreeMap<&'static str, usize> {
    BTreeMap::from([
        ("train", corpus.count(Split::Train)),
        ("val", corpus.count(Split::Val)),
        ("test", corpus.count(Split::Test)),
    ])
}

fn summary_text(split: &str, r: &EvalReport) -> String {
    let homograph = r.homograph_accuracy.map_or("n/a".to_string(), |a| format!("{:.2}%", a * 100.0));
    format!(
        "split {split}: {} sentences\n\
         BLEU {:.2}\n\
         PER {:.2}% (ins {} / del {} / sub {} over {} phonemes)\n\
         Ezafe P {:.3} R {:.3} F1 {:.3}\n\
         homograph accuracy {homograph}\n",
        r.counts.sentences,
        r.bleu * 100.0,
        r.per * 100.0,
        r.edits.insertions,
        r.edits.deletions,
        r.edits.substitutions,
        r.edits.total_ref,
        r.ezafe_precision,
        r.ezafe_recall,
        r.ezafe_f1,
    )
}
