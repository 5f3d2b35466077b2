//! The pipeline stages behind the CLI subcommands.
//!
//! Stages communicate only through artifacts in the output directory; each
//! one checks its prerequisites and errors with the name of the subcommand
//! that produces a missing artifact. One stage runs at a time per output
//! directory (see [`super::artifacts::StageLock`]).

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::PathBuf;
use std::str::FromStr;

use crate::analysis::{
    lexicon_differential, load_lexicons_dir, masking_influence, surface_examples, top_confident,
    bundled_lexicons, DifferentialConfig, EnglishFilter, ScoredComment,
};
use crate::biasmodel::{self, BiasModel, Checkpoint, LabeledComment, Prediction};
use crate::corpus::{
    ingest_reader, split_by_author, split_from_assignment, Corpus, Gender, SplitAssignment,
    SubstitutionLexicon,
};
use crate::error::{Error, Result};
use crate::evalharness::{evaluate_with_positive, random_baseline, read_tagged_posts, transfer_eval, BaselineKind, EvalReport, Tag};
use crate::lexstats::{build_confound_vectors, diagnose_gender_polarity, write_confound_vectors, PolarWord};
use crate::propensity::{
    audit_matched_set, greedy_match, matched_set_from_corpus, score_posts, train_propensity_model,
    write_pairs, write_scores, PropensityScore,
};
use crate::report;
use crate::synthgen;

use super::artifacts::{atomic_write, require_artifact, Provenance, StageLock};
use super::config::{PipelineConfig, Preset};

/// Artifact file names inside the output directory.
pub mod names {
    pub const GROUND_TRUTH: &str = "ground_truth.json";
    pub const CORPUS: &str = "corpus.jsonl";
    pub const INGEST_REPORT: &str = "ingest_report.json";
    pub const SPLITS: &str = "splits.json";
    pub const CORPUS_PRE: &str = "corpus_preprocessed.jsonl";
    pub const PROPENSITY_MODEL: &str = "propensity_model.json";
    pub const SCORES: &str = "propensity_scores.tsv";
    pub const PAIRS: &str = "matched_pairs.tsv";
    pub const MATCHED_COMMENTS: &str = "matched_comments.txt";
    pub const POLARITY_BEFORE: &str = "polarity_before.tsv";
    pub const POLARITY_AFTER: &str = "polarity_after.tsv";

    pub fn confounds(preset: &str) -> String {
        format!("confound_vectors_{preset}.txt")
    }
    pub fn model(preset: &str) -> String {
        format!("model_{preset}.json")
    }
    pub fn predictions(preset: &str) -> String {
        format!("predictions_{preset}.tsv")
    }
    pub fn eval(preset: &str) -> String {
        format!("eval_{preset}.json")
    }
    pub fn eval_text(preset: &str) -> String {
        format!("eval_{preset}.txt")
    }
    pub fn transfer(preset: &str) -> String {
        format!("transfer_{preset}.json")
    }
    pub fn masking(preset: &str) -> String {
        format!("masking_report_{preset}.tsv")
    }
    pub fn differential(preset: &str) -> String {
        format!("lexicon_differential_{preset}.json")
    }
    pub fn surfaced(preset: &str) -> String {
        format!("surfaced_{preset}.tsv")
    }
    pub fn top_confident(preset: &str) -> String {
        format!("top_confident_{preset}.txt")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    Split,
    Preprocess,
    Match,
    Train,
    Predict,
    Eval,
    TransferEval,
    Analyze,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Preprocess => "preprocess",
            Stage::Match => "match",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Eval => "eval",
            Stage::TransferEval => "transfer-eval",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }

    pub fn all() -> [Stage; 11] {
        [
            Stage::Synth,
            Stage::Ingest,
            Stage::Split,
            Stage::Preprocess,
            Stage::Match,
            Stage::Train,
            Stage::Predict,
            Stage::Eval,
            Stage::TransferEval,
            Stage::Analyze,
            Stage::Report,
        ]
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        Stage::all()
            .into_iter()
            .find(|st| st.name() == s.trim().to_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown subcommand {s:?}")))
    }
}

/// What a stage produced, for the CLI to print.
#[derive(Debug, Clone, Default)]
pub struct StageReport {
    pub stage: String,
    pub outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

/// Runs one stage under the output-directory lock.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<StageReport> {
    cfg.validate()?;
    let out_dir = cfg.out_dir();
    let _lock = StageLock::acquire(&out_dir)?;
    match stage {
        Stage::Synth => synth(cfg),
        Stage::Ingest => ingest(cfg),
        Stage::Split => split(cfg),
        Stage::Preprocess => preprocess(cfg),
        Stage::Match => match_stage(cfg),
        Stage::Train => train(cfg),
        Stage::Predict => predict(cfg),
        Stage::Eval => eval(cfg),
        Stage::TransferEval => transfer(cfg),
        Stage::Analyze => analyze(cfg),
        Stage::Report => report_stage(cfg),
    }
}

fn provenance(cfg: &PipelineConfig, stage: Stage) -> Provenance {
    Provenance::new(stage.name(), &cfg.canonical_json(), cfg.seeds())
}

fn finish(
    cfg: &PipelineConfig,
    stage: Stage,
    mut prov: Provenance,
    outputs: Vec<PathBuf>,
    notes: Vec<String>,
) -> Result<StageReport> {
    for o in &outputs {
        prov.record_output(o);
    }
    prov.write(&cfg.out_dir())?;
    Ok(StageReport {
        stage: stage.name().to_string(),
        outputs,
        notes,
    })
}

fn load_lexicon(cfg: &PipelineConfig) -> Result<SubstitutionLexicon> {
    if cfg.paths.substitutions.is_empty() {
        Ok(SubstitutionLexicon::default_lexicon())
    } else {
        SubstitutionLexicon::from_path(std::path::Path::new(&cfg.paths.substitutions))
    }
}

fn load_preprocessed(cfg: &PipelineConfig) -> Result<Corpus> {
    let path = require_artifact(&cfg.out_dir().join(names::CORPUS_PRE), "preprocess")?;
    Corpus::read_jsonl_path(&path)
}

fn load_splits(cfg: &PipelineConfig) -> Result<SplitAssignment> {
    let path = require_artifact(&cfg.out_dir().join(names::SPLITS), "split")?;
    let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

fn labeled_comments(corpus: &Corpus) -> Vec<LabeledComment> {
    corpus
        .comments
        .iter()
        .map(|c| LabeledComment {
            comment_id: c.comment_id.clone(),
            tokens: c.subst_tokens.clone(),
            gender: corpus.comment_gender(c),
        })
        .collect()
}

fn post_gender_pairs(corpus: &Corpus) -> Vec<(Vec<String>, Gender)> {
    corpus
        .posts
        .iter()
        .map(|p| (p.tokens.clone(), corpus.author_of_post(p).gender))
        .collect()
}

// Polarity diagnostics use the standard three-column log-odds text format
// (word, label, score); the label is F and positive scores mean
// F-associated.
fn write_polarity(path: &PathBuf, words: &[PolarWord]) -> Result<()> {
    let mut text = String::new();
    for w in words {
        text.push_str(&format!("{}\tF\t{}\n", w.word, w.score));
    }
    atomic_write(path, text.as_bytes())
}

pub fn read_polarity(path: &PathBuf) -> Result<Vec<PolarWord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::ArtifactFormat {
                path: path.clone(),
                reason: format!("row {}: expected word, label, score", i + 1),
            });
        }
        out.push(PolarWord {
            word: fields[0].to_string(),
            score: fields[2].trim().parse().map_err(|e| Error::ArtifactFormat {
                path: path.clone(),
                reason: format!("row {}: {e}", i + 1),
            })?,
        });
    }
    Ok(out)
}

fn write_predictions(path: &PathBuf, preds: &[Prediction]) -> Result<()> {
    let mut text = String::new();
    for p in preds {
        text.push_str(&format!("{}\t{}\n", p.comment_id, p.score));
    }
    atomic_write(path, text.as_bytes())
}

pub fn read_predictions(path: &PathBuf) -> Result<Vec<Prediction>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, score) = line.split_once('\t').ok_or_else(|| Error::ArtifactFormat {
            path: path.clone(),
            reason: format!("row {}: missing tab", i + 1),
        })?;
        let score: f64 = score.trim().parse().map_err(|e| Error::ArtifactFormat {
            path: path.clone(),
            reason: format!("row {}: {e}", i + 1),
        })?;
        out.push(Prediction {
            comment_id: id.to_string(),
            dist: [1.0 - score, score],
            score,
        });
    }
    Ok(out)
}

fn load_bias_model(cfg: &PipelineConfig, preset: Preset) -> Result<BiasModel> {
    let path = require_artifact(&cfg.out_dir().join(names::model(preset.name())), "train")?;
    Checkpoint::read_json_path(&path)?.into_bias_model()
}

// --- stages -----------------------------------------------------------------

fn synth(cfg: &PipelineConfig) -> Result<StageReport> {
    let prov = provenance(cfg, Stage::Synth);
    let (rows, truth) = synthgen::generate(&cfg.synth)?;
    let raw_path = cfg.raw_path();
    atomic_write(&raw_path, synthgen::rows_to_tsv(&rows).as_bytes())?;
    let truth_path = cfg.out_dir().join(names::GROUND_TRUTH);
    atomic_write(&truth_path, serde_json::to_string_pretty(&truth)?.as_bytes())?;
    finish(
        cfg,
        Stage::Synth,
        prov,
        vec![raw_path, truth_path],
        vec![format!("{} rows", rows.len())],
    )
}

fn ingest(cfg: &PipelineConfig) -> Result<StageReport> {
    let raw_path = require_artifact(&cfg.raw_path(), "synth")?;
    let mut prov = provenance(cfg, Stage::Ingest);
    prov.record_input(&raw_path)?;
    let f = std::fs::File::open(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let (corpus, report) = ingest_reader(std::io::BufReader::new(f), cfg.delimiter()?)?;
    let corpus_path = cfg.out_dir().join(names::CORPUS);
    let mut buf = Vec::new();
    corpus.write_jsonl(&mut buf)?;
    atomic_write(&corpus_path, &buf)?;
    let report_path = cfg.out_dir().join(names::INGEST_REPORT);
    atomic_write(&report_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    finish(
        cfg,
        Stage::Ingest,
        prov,
        vec![corpus_path, report_path],
        vec![format!(
            "{} rows kept, {} rejected",
            report.rows_kept, report.rows_rejected
        )],
    )
}

fn split(cfg: &PipelineConfig) -> Result<StageReport> {
    let corpus_path = require_artifact(&cfg.out_dir().join(names::CORPUS), "ingest")?;
    let mut prov = provenance(cfg, Stage::Split);
    prov.record_input(&corpus_path)?;
    let corpus = Corpus::read_jsonl_path(&corpus_path)?;
    let split = split_by_author(&corpus, cfg.split.ratios, cfg.split.seed)?;
    debug_assert!(split.assignment.is_disjoint());
    let path = cfg.out_dir().join(names::SPLITS);
    atomic_write(&path, serde_json::to_string_pretty(&split.assignment)?.as_bytes())?;
    finish(
        cfg,
        Stage::Split,
        prov,
        vec![path],
        vec![format!(
            "{}/{}/{} train/dev/test authors",
            split.assignment.train.len(),
            split.assignment.dev.len(),
            split.assignment.test.len()
        )],
    )
}

fn preprocess(cfg: &PipelineConfig) -> Result<StageReport> {
    let corpus_path = require_artifact(&cfg.out_dir().join(names::CORPUS), "ingest")?;
    let mut prov = provenance(cfg, Stage::Preprocess);
    prov.record_input(&corpus_path)?;
    let corpus = Corpus::read_jsonl_path(&corpus_path)?;
    let lexicon = load_lexicon(cfg)?;
    let before = corpus.comments.len();
    let prepped = corpus
        .with_substitutions(&lexicon)
        .with_min_comment_tokens(cfg.preprocess.min_tokens);
    let path = cfg.out_dir().join(names::CORPUS_PRE);
    let mut buf = Vec::new();
    prepped.write_jsonl(&mut buf)?;
    atomic_write(&path, &buf)?;
    finish(
        cfg,
        Stage::Preprocess,
        prov,
        vec![path],
        vec![format!(
            "{} comments kept of {} ({} substitution terms)",
            prepped.comments.len(),
            before,
            lexicon.len()
        )],
    )
}

fn match_stage(cfg: &PipelineConfig) -> Result<StageReport> {
    let out_dir = cfg.out_dir();
    let corpus_path = require_artifact(&out_dir.join(names::CORPUS_PRE), "preprocess")?;
    let splits_path = require_artifact(&out_dir.join(names::SPLITS), "split")?;
    let mut prov = provenance(cfg, Stage::Match);
    prov.record_input(&corpus_path)?;
    prov.record_input(&splits_path)?;

    let corpus = Corpus::read_jsonl_path(&corpus_path)?;
    let assignment = load_splits(cfg)?;
    let split = split_from_assignment(&corpus, assignment);

    let train_posts = post_gender_pairs(&split.train);
    let dev_posts = post_gender_pairs(&split.dev);
    let model = train_propensity_model(&train_posts, &dev_posts, cfg.propensity.to_hyper())?;

    let scores = score_posts(&model, &corpus.posts)?;
    let score_map: HashMap<String, f64> = scores
        .iter()
        .map(|s| (s.post_id.clone(), s.e))
        .collect();

    let pool_of = |g: Gender| -> Vec<PropensityScore> {
        split
            .train
            .posts
            .iter()
            .filter(|p| split.train.author_of_post(p).gender == g)
            .map(|p| PropensityScore {
                post_id: p.post_id.clone(),
                e: score_map[&p.post_id],
            })
            .collect()
    };
    let query_gender =
        Gender::parse(&cfg.matching.query_gender).expect("validated query gender");
    let queries = pool_of(query_gender);
    let candidates = pool_of(match query_gender {
        Gender::F => Gender::M,
        Gender::M => Gender::F,
    });

    let mut outcome = greedy_match(&queries, &candidates, &cfg.match_config()?)?;
    if query_gender == Gender::M {
        // greedy_match puts the query post in the first slot; keep the
        // artifact's post_f column genuinely F.
        for pair in &mut outcome.pairs {
            std::mem::swap(&mut pair.post_f, &mut pair.post_m);
        }
        outcome.pairs.sort_by(|a, b| a.post_f.cmp(&b.post_f));
    }
    let matched = matched_set_from_corpus(&split.train, &outcome.pairs, cfg.matching.seed);
    audit_matched_set(&split.train, &score_map, &outcome, &matched)?;

    // Matching diagnostics: post-word polarity before and after matching.
    let before = diagnose_gender_polarity(&train_posts)?;
    let paired_posts: Vec<(Vec<String>, Gender)> = outcome
        .pairs
        .iter()
        .flat_map(|pair| [pair.post_f.as_str(), pair.post_m.as_str()])
        .filter_map(|pid| split.train.post(pid))
        .map(|p| (p.tokens.clone(), split.train.author_of_post(p).gender))
        .collect();
    let mut notes = vec![format!(
        "{} pairs, {} F posts discarded, caliper {:.6}",
        outcome.pairs.len(),
        outcome.discarded_f,
        outcome.caliper
    )];
    let after = if paired_posts.is_empty() {
        notes.push("warning: no matches found within the caliper".to_string());
        Vec::new()
    } else {
        diagnose_gender_polarity(&paired_posts)?
    };

    let model_path = out_dir.join(names::PROPENSITY_MODEL);
    let ckpt = Checkpoint::for_propensity(&model);
    atomic_write(&model_path, serde_json::to_string(&ckpt)?.as_bytes())?;
    let scores_path = out_dir.join(names::SCORES);
    let mut buf = Vec::new();
    write_scores(&mut buf, &scores)?;
    atomic_write(&scores_path, &buf)?;
    let pairs_path = out_dir.join(names::PAIRS);
    let mut buf = Vec::new();
    write_pairs(&mut buf, &outcome)?;
    atomic_write(&pairs_path, &buf)?;
    let matched_path = out_dir.join(names::MATCHED_COMMENTS);
    atomic_write(&matched_path, (matched.comment_ids.join("\n") + "\n").as_bytes())?;
    let before_path = out_dir.join(names::POLARITY_BEFORE);
    write_polarity(&before_path, &before)?;
    let after_path = out_dir.join(names::POLARITY_AFTER);
    write_polarity(&after_path, &after)?;

    notes.push(format!("{} balanced comments", matched.comment_ids.len()));
    finish(
        cfg,
        Stage::Match,
        prov,
        vec![
            model_path,
            scores_path,
            pairs_path,
            matched_path,
            before_path,
            after_path,
        ],
        notes,
    )
}

fn train(cfg: &PipelineConfig) -> Result<StageReport> {
    let out_dir = cfg.out_dir();
    let corpus_path = require_artifact(&out_dir.join(names::CORPUS_PRE), "preprocess")?;
    let splits_path = require_artifact(&out_dir.join(names::SPLITS), "split")?;
    let preset = cfg.model.preset()?;
    let mut prov = provenance(cfg, Stage::Train);
    prov.record_input(&corpus_path)?;
    prov.record_input(&splits_path)?;

    let corpus = Corpus::read_jsonl_path(&corpus_path)?;
    let assignment = load_splits(cfg)?;
    let split = split_from_assignment(&corpus, assignment);

    let mut train_set = labeled_comments(&split.train);
    if preset.uses_matching() {
        let matched_path = require_artifact(&out_dir.join(names::MATCHED_COMMENTS), "match")?;
        prov.record_input(&matched_path)?;
        let text = std::fs::read_to_string(&matched_path).map_err(|e| Error::io(&matched_path, e))?;
        let keep: std::collections::BTreeSet<&str> =
            text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        train_set.retain(|c| keep.contains(c.comment_id.as_str()));
        if train_set.is_empty() {
            return Err(Error::Model(
                "the matched training set is empty; check the caliper".to_string(),
            ));
        }
    }
    let dev_set = labeled_comments(&split.dev);

    let mut outputs = Vec::new();
    let confound_map = if preset.uses_demotion() {
        let author_of: HashMap<&str, &str> = split
            .train
            .comments
            .iter()
            .map(|c| {
                let author = &split.train.post(&c.post_id).unwrap().author_id;
                (c.comment_id.as_str(), author.as_str())
            })
            .collect();
        let items: Vec<(&str, &[String], &str)> = train_set
            .iter()
            .map(|c| {
                (
                    c.comment_id.as_str(),
                    c.tokens.as_slice(),
                    author_of[c.comment_id.as_str()],
                )
            })
            .collect();
        let (model, vectors) = build_confound_vectors(&items, &cfg.confound.to_config()?)?;
        let conf_path = out_dir.join(names::confounds(preset.name()));
        let mut buf = Vec::new();
        write_confound_vectors(&mut buf, &model.authors, &vectors)?;
        atomic_write(&conf_path, &buf)?;
        outputs.push(conf_path);
        Some(
            vectors
                .into_iter()
                .map(|v| (v.comment_id, v.probs))
                .collect::<HashMap<String, Vec<f64>>>(),
        )
    } else {
        None
    };

    let hyper = cfg.model.to_hyper(preset.uses_demotion());
    let model = biasmodel::train(&train_set, confound_map.as_ref(), &dev_set, hyper)?;
    let model_path = out_dir.join(names::model(preset.name()));
    atomic_write(&model_path, serde_json::to_string(&Checkpoint::for_bias(&model))?.as_bytes())?;
    outputs.insert(0, model_path);

    finish(
        cfg,
        Stage::Train,
        prov,
        outputs,
        vec![format!(
            "preset {}: {} training comments, adversary dim {}",
            preset.name(),
            train_set.len(),
            model.adversary_dim
        )],
    )
}

fn predict(cfg: &PipelineConfig) -> Result<StageReport> {
    let out_dir = cfg.out_dir();
    let preset = cfg.model.preset()?;
    let model = load_bias_model(cfg, preset)?;
    let corpus = load_preprocessed(cfg)?;
    let assignment = load_splits(cfg)?;
    let split = split_from_assignment(&corpus, assignment);
    let mut prov = provenance(cfg, Stage::Predict);
    prov.record_input(&out_dir.join(names::model(preset.name())))?;

    let items: Vec<(&str, &[String])> = split
        .test
        .comments
        .iter()
        .map(|c| (c.comment_id.as_str(), c.subst_tokens.as_slice()))
        .collect();
    let preds = biasmodel::predict_comments(&model, &items)?;
    let path = out_dir.join(names::predictions(preset.name()));
    write_predictions(&path, &preds)?;
    finish(
        cfg,
        Stage::Predict,
        prov,
        vec![path],
        vec![format!("{} test comments scored", preds.len())],
    )
}

fn eval(cfg: &PipelineConfig) -> Result<StageReport> {
    let out_dir = cfg.out_dir();
    let preset = cfg.model.preset()?;
    let preds_path = require_artifact(&out_dir.join(names::predictions(preset.name())), "predict")?;
    let mut prov = provenance(cfg, Stage::Eval);
    prov.record_input(&preds_path)?;

    let preds = read_predictions(&preds_path)?;
    let corpus = load_preprocessed(cfg)?;
    let assignment = load_splits(cfg)?;
    let split = split_from_assignment(&corpus, assignment);
    let gold: HashMap<String, Gender> = split
        .test
        .comments
        .iter()
        .map(|c| (c.comment_id.clone(), split.test.comment_gender(c)))
        .collect();
    let positive = Gender::parse(&cfg.eval.positive_class).expect("validated positive class");
    let report = evaluate_with_positive(&preds, &gold, positive)?;

    let json_path = out_dir.join(names::eval(preset.name()));
    atomic_write(&json_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    let text_path = out_dir.join(names::eval_text(preset.name()));
    let table = report::format_metrics_table(&[(preset.table_label().to_string(), report.clone())]);
    atomic_write(&text_path, table.as_bytes())?;
    finish(
        cfg,
        Stage::Eval,
        prov,
        vec![json_path, text_path],
        vec![format!(
            "P {:.3} R {:.3} F1 {:.3} Acc {:.3}{}",
            report.precision,
            report.recall,
            report.f1,
            report.accuracy,
            if report.degenerate { " (degenerate)" } else { "" }
        )],
    )
}

/// Transfer report: the model plus the two random baselines, Table-3 style.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TransferReport {
    pub model: EvalReport,
    pub random: EvalReport,
    pub class_random: EvalReport,
    pub n_posts: usize,
    pub positive_rate: f64,
}

fn transfer(cfg: &PipelineConfig) -> Result<StageReport> {
    let out_dir = cfg.out_dir();
    let preset = cfg.model.preset()?;
    let model = load_bias_model(cfg, preset)?;
    if cfg.paths.tagged.is_empty() {
        return Err(Error::Config(
            "paths.tagged must point to a tagged-post file for transfer-eval".to_string(),
        ));
    }
    let tagged_path = PathBuf::from(&cfg.paths.tagged);
    let mut prov = provenance(cfg, Stage::TransferEval);
    prov.record_input(&tagged_path)?;

    let lexicon = load_lexicon(cfg)?;
    let f = std::fs::File::open(&tagged_path).map_err(|e| Error::io(&tagged_path, e))?;
    let posts = read_tagged_posts(std::io::BufReader::new(f), cfg.delimiter()?, &lexicon)?;
    if posts.is_empty() {
        return Err(Error::Eval("no usable tagged posts".to_string()));
    }
    let model_report = transfer_eval(&model, &posts)?;
    let positive_rate =
        posts.iter().filter(|p| p.tag == Tag::Gender).count() as f64 / posts.len() as f64;
    let random = random_baseline(BaselineKind::Uniform, positive_rate, posts.len(), cfg.baseline.seed)?;
    let class_random = random_baseline(
        BaselineKind::ClassPrior,
        positive_rate,
        posts.len(),
        cfg.baseline.seed.wrapping_add(1),
    )?;
    let report = TransferReport {
        model: model_report,
        random,
        class_random,
        n_posts: posts.len(),
        positive_rate,
    };
    let path = out_dir.join(names::transfer(preset.name()));
    atomic_write(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    finish(
        cfg,
        Stage::TransferEval,
        prov,
        vec![path],
        vec![format!(
            "model F1 {:.3} vs class-random F1 {:.3} over {} posts",
            report.model.f1, report.class_random.f1, report.n_posts
        )],
    )
}

fn analyze(cfg: &PipelineConfig) -> Result<StageReport> {
    let out_dir = cfg.out_dir();
    let preset = cfg.model.preset()?;
    let model = load_bias_model(cfg, preset)?;
    let preds_path = require_artifact(&out_dir.join(names::predictions(preset.name())), "predict")?;
    let scores_path = require_artifact(&out_dir.join(names::SCORES), "match")?;
    let mut prov = provenance(cfg, Stage::Analyze);
    prov.record_input(&preds_path)?;
    prov.record_input(&scores_path)?;

    let corpus = load_preprocessed(cfg)?;
    let assignment = load_splits(cfg)?;
    let split = split_from_assignment(&corpus, assignment);
    let preds = read_predictions(&preds_path)?;
    let pred_map: HashMap<&str, f64> = preds
        .iter()
        .map(|p| (p.comment_id.as_str(), p.score))
        .collect();

    // Influential words over the most confident F predictions.
    let (top, truncated) = top_confident(&preds, cfg.analysis.top_n, Gender::F);
    let top_path = out_dir.join(names::top_confident(preset.name()));
    let mut text = String::new();
    for p in &top {
        text.push_str(&format!("{}\t{}\n", p.comment_id, p.score));
    }
    atomic_write(&top_path, text.as_bytes())?;

    let tokens_of: HashMap<&str, &crate::corpus::Comment> = split
        .test
        .comments
        .iter()
        .map(|c| (c.comment_id.as_str(), c))
        .collect();
    let mask_input: Vec<(String, Vec<String>)> = top
        .iter()
        .filter_map(|p| tokens_of.get(p.comment_id.as_str()))
        .map(|c| (c.comment_id.clone(), c.subst_tokens.clone()))
        .collect();
    let masking = masking_influence(|tokens| model.score_tokens(tokens), &mask_input)?;
    let mask_path = out_dir.join(names::masking(preset.name()));
    let mut text = String::new();
    for e in &masking.entries {
        text.push_str(&format!("{}\t{}\t{}\n", e.word, e.mean_delta, e.occurrences));
    }
    atomic_write(&mask_path, text.as_bytes())?;

    // Stereotype-lexicon differentials over test comments.
    let scored: Vec<ScoredComment> = split
        .test
        .comments
        .iter()
        .filter_map(|c| {
            pred_map.get(c.comment_id.as_str()).map(|&score| ScoredComment {
                comment_id: c.comment_id.clone(),
                tokens: c.subst_tokens.clone(),
                gold: split.test.comment_gender(c),
                score,
            })
        })
        .collect();
    let lexicons = if cfg.paths.lexicons.is_empty() {
        bundled_lexicons()
    } else {
        load_lexicons_dir(std::path::Path::new(&cfg.paths.lexicons))?
    };
    let diff_cfg = DifferentialConfig {
        threshold: cfg.analysis.high_threshold,
        seed: cfg.analysis.seed,
        english: cfg
            .analysis
            .english_filter
            .then(|| EnglishFilter::bundled(0.5)),
    };
    let differential = lexicon_differential(&scored, &lexicons, &diff_cfg)?;
    let diff_path = out_dir.join(names::differential(preset.name()));
    atomic_write(&diff_path, serde_json::to_string_pretty(&differential)?.as_bytes())?;

    // Strongly gendered replies to weakly gendered posts, over the whole
    // corpus.
    let f = std::fs::File::open(&scores_path).map_err(|e| Error::io(&scores_path, e))?;
    let post_scores: HashMap<String, f64> = crate::propensity::read_scores(std::io::BufReader::new(f))?
        .into_iter()
        .map(|s| (s.post_id, s.e))
        .collect();
    let all_items: Vec<(&str, &[String])> = corpus
        .comments
        .iter()
        .map(|c| (c.comment_id.as_str(), c.subst_tokens.as_slice()))
        .collect();
    let all_preds = biasmodel::predict_comments(&model, &all_items)?;
    let with_posts: Vec<(Prediction, String)> = all_preds
        .into_iter()
        .zip(corpus.comments.iter())
        .map(|(p, c)| (p, c.post_id.clone()))
        .collect();
    let surfaced = surface_examples(
        &post_scores,
        &with_posts,
        cfg.analysis.post_threshold,
        cfg.analysis.comment_threshold,
    )?;
    let surf_path = out_dir.join(names::surfaced(preset.name()));
    let mut text = String::new();
    for s in &surfaced {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            s.post_id, s.comment_id, s.post_score, s.comment_score
        ));
    }
    atomic_write(&surf_path, text.as_bytes())?;

    let mut notes = vec![
        format!("top {} comments masked", mask_input.len()),
        format!("{} comments surfaced", surfaced.len()),
    ];
    if truncated {
        notes.push(format!(
            "fewer than {} test comments available for the confident set",
            cfg.analysis.top_n
        ));
    }
    finish(
        cfg,
        Stage::Analyze,
        prov,
        vec![top_path, mask_path, diff_path, surf_path],
        notes,
    )
}

fn report_stage(cfg: &PipelineConfig) -> Result<StageReport> {
    let out_dir = cfg.out_dir();
    let report_dir = out_dir.join("report");
    let prov = provenance(cfg, Stage::Report);
    let mut outputs = Vec::new();
    let mut notes = Vec::new();

    // Held-out metrics table over every preset with an eval artifact.
    let mut rows = Vec::new();
    for preset in Preset::all() {
        let path = out_dir.join(names::eval(preset.name()));
        if path.exists() {
            let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            let report: EvalReport = serde_json::from_reader(std::io::BufReader::new(f))?;
            rows.push((preset.table_label().to_string(), report));
        }
    }
    if rows.is_empty() {
        return Err(Error::MissingArtifact {
            path: out_dir.join(names::eval("<preset>")),
            producer: "eval".to_string(),
        });
    }
    let table_path = report_dir.join("heldout_metrics.txt");
    atomic_write(&table_path, report::format_metrics_table(&rows).as_bytes())?;
    outputs.push(table_path);

    // Transfer table, when available.
    let mut transfer_rows = Vec::new();
    for preset in Preset::all() {
        let path = out_dir.join(names::transfer(preset.name()));
        if path.exists() {
            let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            let report: TransferReport = serde_json::from_reader(std::io::BufReader::new(f))?;
            transfer_rows.push((preset.table_label().to_string(), report));
        }
    }
    if let Some((_, first)) = transfer_rows.first() {
        let mut rows: Vec<(String, EvalReport)> = transfer_rows
            .iter()
            .map(|(label, t)| (label.clone(), t.model.clone()))
            .collect();
        rows.push(("random".to_string(), first.random.clone()));
        rows.push(("class random".to_string(), first.class_random.clone()));
        let path = report_dir.join("transfer_metrics.txt");
        atomic_write(&path, report::format_metrics_table(&rows).as_bytes())?;
        outputs.push(path);
    } else {
        notes.push("no transfer reports found; skipping transfer table".to_string());
    }

    // Polarity reduction chart (before vs after matching).
    let before_path = out_dir.join(names::POLARITY_BEFORE);
    let after_path = out_dir.join(names::POLARITY_AFTER);
    if before_path.exists() && after_path.exists() {
        let before = read_polarity(&before_path)?;
        let after = read_polarity(&after_path)?;
        let after_map: BTreeMap<&str, f64> =
            after.iter().map(|p| (p.word.as_str(), p.score)).collect();
        let groups: Vec<report::BarGroup> = before
            .iter()
            .take(10)
            .map(|p| report::BarGroup {
                label: p.word.clone(),
                values: vec![p.score, after_map.get(p.word.as_str()).copied().unwrap_or(0.0)],
            })
            .collect();
        let svg = report::svg_bar_chart(
            "Post-word gender polarity (log-odds), before vs after matching",
            &["unmatched", "matched"],
            &groups,
        );
        let path = report_dir.join("polarity.svg");
        atomic_write(&path, svg.as_bytes())?;
        outputs.push(path);
    } else {
        notes.push("no matching diagnostics found; skipping polarity chart".to_string());
    }

    // Lexicon differential chart for the configured preset.
    let preset = cfg.model.preset()?;
    let diff_path = out_dir.join(names::differential(preset.name()));
    if diff_path.exists() {
        let f = std::fs::File::open(&diff_path).map_err(|e| Error::io(&diff_path, e))?;
        let differential: crate::analysis::LexiconDifferential =
            serde_json::from_reader(std::io::BufReader::new(f))?;
        let groups: Vec<report::BarGroup> = differential
            .categories
            .iter()
            .map(|c| report::BarGroup {
                label: c.category.clone(),
                values: vec![c.differential],
            })
            .collect();
        let svg = report::svg_bar_chart(
            "Lexicon differentials: high-confidence vs random gold-F comments",
            &["differential"],
            &groups,
        );
        let path = report_dir.join("lexicon_differential.svg");
        atomic_write(&path, svg.as_bytes())?;
        outputs.push(path);
    } else {
        notes.push("no lexicon differential found; skipping chart".to_string());
    }

    finish(cfg, Stage::Report, prov, outputs, notes)
}
