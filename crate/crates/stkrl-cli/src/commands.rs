//! The seven commands. Each prints machine-readable TSV on stdout, sends
//! prose to stderr, optionally writes a JSON report sidecar, and returns a
//! process exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use stkrl::evaluator::{
    build_eval_context, fit_thresholds, link_prediction, make_tc_instances,
    triple_classification, EvalContext,
};
use stkrl::kg::{
    extract_reference_sentences, generate_synthetic_dataset, load_corpus, load_triples,
    load_word_vectors, save_corpus, EntityId, KnowledgeGraph, ReferenceCorpus, Split,
    WordFeatureTable,
};
use stkrl::model::{load_checkpoint, rank_sentences, save_checkpoint, EnergyMode, ModelParams};
use stkrl::trainer::{gradcheck_model, train};
use stkrl::{Error, Result};

use crate::config::CliConfig;

/// Seeds for the sampling streams that live outside the training loop are
/// derived from the single global seed by fixed offsets, so each stream is
/// independent yet reproducible from one knob.
const WORD_INIT_SEED_OFFSET: u64 = 1;
const TC_NEGATIVE_SEED_OFFSET: u64 = 2;

pub fn extract(config: &CliConfig) -> Result<i32> {
    let kg = load_graph(config, false)?;
    let text = std::fs::read_to_string(config.require("text")?)?;
    let corpus =
        extract_reference_sentences(&text, &kg, config.cap, config.hyper.clip_distance)?;
    save_corpus(&corpus, &kg, config.require("corpus")?)?;
    let covered = (0..kg.n_entities() as u32)
        .filter(|&e| !corpus.sentences(EntityId(e)).is_empty())
        .count();
    eprintln!(
        "extracted {} sentences ({} distinct words) covering {covered}/{} entities",
        corpus.n_sentences(),
        corpus.n_words(),
        kg.n_entities()
    );
    println!("sentences\t{}", corpus.n_sentences());
    println!("words\t{}", corpus.n_words());
    println!("entities_covered\t{covered}");
    write_report(
        config,
        &json!({
            "command": "extract",
            "sentences": corpus.n_sentences(),
            "words": corpus.n_words(),
            "entities_covered": covered,
        }),
    )?;
    Ok(0)
}

pub fn synth(config: &CliConfig) -> Result<i32> {
    let mut spec = config.synth;
    spec.clip_distance = config.hyper.clip_distance;
    let (kg, corpus) = generate_synthetic_dataset(&spec, config.hyper.seed)?;
    save_triples(&kg, Split::Train, config.require("train_triples")?)?;
    save_triples(&kg, Split::Valid, config.require("valid_triples")?)?;
    save_triples(&kg, Split::Test, config.require("test_triples")?)?;
    save_corpus(&corpus, &kg, config.require("corpus")?)?;
    eprintln!(
        "generated {} entities, {} relations, {}/{}/{} train/valid/test triples, {} sentences",
        kg.n_entities(),
        kg.n_relations(),
        kg.train().len(),
        kg.valid().len(),
        kg.test().len(),
        corpus.n_sentences()
    );
    println!("entities\t{}", kg.n_entities());
    println!("relations\t{}", kg.n_relations());
    println!("train\t{}", kg.train().len());
    println!("valid\t{}", kg.valid().len());
    println!("test\t{}", kg.test().len());
    println!("sentences\t{}", corpus.n_sentences());
    println!("words\t{}", corpus.n_words());
    write_report(
        config,
        &json!({
            "command": "synth",
            "entities": kg.n_entities(),
            "relations": kg.n_relations(),
            "train": kg.train().len(),
            "valid": kg.valid().len(),
            "test": kg.test().len(),
            "sentences": corpus.n_sentences(),
            "words": corpus.n_words(),
        }),
    )?;
    Ok(0)
}

pub fn train_cmd(config: &CliConfig) -> Result<i32> {
    let kg = load_graph(config, false)?;
    let corpus = load_corpus_for(config, &kg, config.hyper.energy_mode)?;
    let words = load_words_if_configured(config, &corpus)?;
    let train_config = config.train_config();
    eprintln!(
        "training {} on {} triples ({} entities, {} relations, {} sentences)",
        config.hyper.encoder.as_str(),
        kg.train().len(),
        kg.n_entities(),
        kg.n_relations(),
        corpus.n_sentences()
    );
    let outcome = train::<f64>(&train_config, &kg, &corpus, words, |entry| {
        println!("{}", entry.render_tsv());
    })?;
    save_checkpoint(&outcome.params, config.require("checkpoint_out")?)?;
    let log_json: Vec<_> = outcome
        .log
        .iter()
        .map(|e| {
            json!({
                "epoch": e.epoch,
                "loss": e.loss,
                "val_hits10": e.val_hits10,
                "seconds": e.seconds,
            })
        })
        .collect();
    write_report(
        config,
        &json!({
            "command": "train",
            "epochs_run": outcome.log.len(),
            "log": log_json,
            "failure": outcome.failure,
        }),
    )?;
    match &outcome.failure {
        Some(reason) => {
            eprintln!("training aborted ({reason}); last good checkpoint written");
            Ok(1)
        }
        None => {
            eprintln!("trained {} epochs; checkpoint written", outcome.log.len());
            Ok(0)
        }
    }
}

pub fn eval_tc(config: &CliConfig) -> Result<i32> {
    let kg = load_graph(config, false)?;
    let (params, ctx, _) = load_model(config, &kg)?;
    let mut rng =
        ChaCha8Rng::seed_from_u64(config.hyper.seed.wrapping_add(TC_NEGATIVE_SEED_OFFSET));
    let val_instances = make_tc_instances(&ctx, &kg, kg.valid(), &mut rng)?;
    let table = fit_thresholds(&val_instances)?;
    let accuracy = triple_classification(&ctx, &kg, kg.test(), &table, &mut rng)?;
    eprintln!(
        "classified {} test triples with thresholds fitted on {} validation instances",
        kg.test().len(),
        val_instances.len()
    );
    println!("accuracy\t{accuracy:.4}");
    let per_relation: serde_json::Map<String, serde_json::Value> = table
        .per_relation
        .iter()
        .map(|(&r, &delta)| (kg.relations.name(r).to_string(), json!(delta)))
        .collect();
    write_report(
        config,
        &json!({
            "command": "eval-tc",
            "accuracy": accuracy,
            "encoder": params.hyper.encoder.as_str(),
            "global_threshold": table.global,
            "per_relation_thresholds": per_relation,
        }),
    )?;
    Ok(0)
}

pub fn eval_lp(config: &CliConfig) -> Result<i32> {
    let kg = load_graph(config, false)?;
    let (params, ctx, _) = load_model(config, &kg)?;
    let result = link_prediction(&ctx, &kg, kg.test())?;
    eprintln!("ranked {} test triples from both sides", kg.test().len());
    println!(
        "overall\t-\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
        result.raw_mean_rank,
        result.filtered_mean_rank,
        result.raw_hits10,
        result.filtered_hits10
    );
    for row in &result.by_category {
        println!(
            "{}\t{}\t{}\t{:.4}\t{:.4}",
            row.side.as_str(),
            row.category.as_str(),
            row.count,
            row.raw_hits10,
            row.filtered_hits10
        );
    }
    write_report(
        config,
        &json!({
            "command": "eval-lp",
            "encoder": params.hyper.encoder.as_str(),
            "result": result,
        }),
    )?;
    Ok(0)
}

pub fn rank_sentences_cmd(config: &CliConfig) -> Result<i32> {
    let kg = load_graph(config, false)?;
    let (params, _, corpus) = load_model(config, &kg)?;
    let mut report_rows = Vec::new();
    for e in 0..kg.n_entities() as u32 {
        let entity = EntityId(e);
        let ranked = rank_sentences(entity, &params, &corpus)?;
        let name = kg.entities.name(e);
        for (position, &(index, score)) in ranked.iter().enumerate() {
            let tokens: Vec<&str> = corpus.sentences(entity)[index]
                .tokens
                .iter()
                .map(|w| corpus.vocab.name(w.0))
                .collect();
            println!(
                "{name}\t{}\t{index}\t{score:.6}\t{}",
                position + 1,
                tokens.join(" ")
            );
        }
        report_rows.push(json!({
            "entity": name,
            "ranking": ranked
                .iter()
                .enumerate()
                .map(|(position, &(index, score))| json!({
                    "rank": position + 1,
                    "sentence": index,
                    "score": score,
                }))
                .collect::<Vec<_>>(),
        }));
    }
    write_report(
        config,
        &json!({ "command": "rank-sentences", "entities": report_rows }),
    )?;
    Ok(0)
}

pub fn gradcheck(config: &CliConfig) -> Result<i32> {
    let mut spec = config.synth;
    spec.clip_distance = config.hyper.clip_distance;
    let (kg, corpus) = generate_synthetic_dataset(&spec, config.hyper.seed)?;
    let report = gradcheck_model::<f64>(
        &config.train_config(),
        &kg,
        &corpus,
        config.gradcheck_coords,
        config.gradcheck_step,
        config.gradcheck_tolerance,
    )?;
    eprintln!(
        "checked {} coordinates of a {}-entity toy with the {} encoder",
        report.coords_checked,
        kg.n_entities(),
        config.hyper.encoder.as_str()
    );
    print!("{}", report.render());
    write_report(
        config,
        &json!({
            "command": "gradcheck",
            "encoder": config.hyper.encoder.as_str(),
            "coords_checked": report.coords_checked,
            "max_rel_error": report.max_rel_error,
            "per_table_max": report.per_table_max,
            "pass": report.pass,
        }),
    )?;
    Ok(if report.pass { 0 } else { 1 })
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Loads whatever triple files are configured (train is always required;
/// valid/test only when `require_eval_splits`).
fn load_graph(config: &CliConfig, require_eval_splits: bool) -> Result<KnowledgeGraph> {
    let mut kg = KnowledgeGraph::new();
    load_triples(config.require("train_triples")?, &mut kg, Split::Train)?;
    match (&config.valid_triples, require_eval_splits) {
        (Some(path), _) => load_triples(path, &mut kg, Split::Valid)?,
        (None, true) => return Err(Error::Config("required path 'valid_triples' is not configured".into())),
        (None, false) => {}
    }
    match (&config.test_triples, require_eval_splits) {
        (Some(path), _) => load_triples(path, &mut kg, Split::Test)?,
        (None, true) => return Err(Error::Config("required path 'test_triples' is not configured".into())),
        (None, false) => {}
    }
    kg.validate()?;
    Ok(kg)
}

/// Loads the corpus when configured. Structure-only models run fine without
/// one (an empty corpus stands in); the full energy requires it.
fn load_corpus_for(
    config: &CliConfig,
    kg: &KnowledgeGraph,
    energy: EnergyMode,
) -> Result<ReferenceCorpus> {
    match (&config.corpus, energy) {
        (Some(path), _) => load_corpus(path, kg, config.cap, config.hyper.clip_distance),
        (None, EnergyMode::TransEOnly) => Ok(ReferenceCorpus::new(kg.n_entities(), config.cap)),
        (None, EnergyMode::Full) => Err(Error::Config(
            "required path 'corpus' is not configured (full energy mode trains on sentences)"
                .into(),
        )),
    }
}

fn load_words_if_configured(
    config: &CliConfig,
    corpus: &ReferenceCorpus,
) -> Result<Option<WordFeatureTable<f64>>> {
    match &config.word_vectors {
        None => Ok(None),
        Some(path) => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(config.hyper.seed.wrapping_add(WORD_INIT_SEED_OFFSET));
            let table = load_word_vectors(path, &corpus.vocab, config.hyper.k_w, &mut rng)?;
            Ok(Some(table))
        }
    }
}

/// Loads the checkpoint named by `checkpoint_in`, cross-checks it against the
/// graph and corpus, and precomputes the evaluation context. The corpus clip
/// distance and sentence cap come from the checkpoint's hyperparameters so
/// evaluation reproduces the training-time view of the text.
fn load_model(
    config: &CliConfig,
    kg: &KnowledgeGraph,
) -> Result<(ModelParams<f64>, EvalContext<f64>, ReferenceCorpus)> {
    let params: ModelParams<f64> = load_checkpoint(config.require("checkpoint_in")?)?;
    if params.entity_struct.len() != kg.n_entities()
        || params.relation.len() != kg.n_relations()
    {
        return Err(Error::Usage(format!(
            "checkpoint covers {} entities / {} relations, graph has {} / {}",
            params.entity_struct.len(),
            params.relation.len(),
            kg.n_entities(),
            kg.n_relations()
        )));
    }
    let corpus = match (&config.corpus, params.hyper.energy_mode) {
        (Some(path), _) => load_corpus(path, kg, config.cap, params.hyper.clip_distance)?,
        (None, EnergyMode::TransEOnly) => ReferenceCorpus::new(kg.n_entities(), config.cap),
        (None, EnergyMode::Full) => {
            return Err(Error::Config(
                "required path 'corpus' is not configured (checkpoint uses the full energy)"
                    .into(),
            ))
        }
    };
    if corpus.n_words() != params.words.len() {
        return Err(Error::Usage(format!(
            "corpus has {} distinct words but the checkpoint's word table has {}",
            corpus.n_words(),
            params.words.len()
        )));
    }
    let ctx = build_eval_context(&params, &corpus)?;
    Ok((params, ctx, corpus))
}

/// Writes triples of one split as `head<TAB>relation<TAB>tail` lines.
fn save_triples(kg: &KnowledgeGraph, split: Split, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in kg.split(split) {
        writeln!(
            out,
            "{}\t{}\t{}",
            kg.entities.name(t.head.0),
            kg.relations.name(t.relation.0),
            kg.entities.name(t.tail.0)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the JSON report sidecar when a report path is configured.
fn write_report(config: &CliConfig, value: &serde_json::Value) -> Result<()> {
    let Some(path) = &config.report else {
        return Ok(());
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Error::Format(format!("cannot serialize report: {e}")))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
