//! Mini-batch SGD over the joint objective: structural embeddings and the
//! shared sentence encoder learn simultaneously. Each step freezes its
//! stochastic choices (negative samples, sentence selections, attention
//! weights) into a plan, evaluates the batch loss with exact gradients, and
//! applies the update; the same plan evaluation drives finite-difference
//! gradient checking.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{select_top_m, ScoredSentence};
use crate::encoders::{encode_sentence, EncoderParams, EncoderTape, PositionFeatureTable};
use crate::error::{Error, Result};
use crate::evaluator::{build_eval_context, filtered_hits10};
use crate::kg::{EntityId, KnowledgeGraph, ReferenceCorpus, Triple, WordFeatureTable};
use crate::model::loss::{sample_negative, CorruptedTriple};
use crate::model::{
    load_checkpoint, AggregationMode, EnergyMode, HyperParams, LossMode, ModelParams,
};
use crate::model::energy::energy_term_with_grad;
use crate::numerics::{
    clamp_min, cosine, finite_diff_check, normalize_l2, project_unit_ball, uniform_symmetric,
    GradCheckReport, GradCheckTarget, Vector,
};
use crate::scalar::{real, to_f64, Scalar};

/// Where the structural tables start from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitSource {
    /// Everything drawn uniformly at random.
    Random,
    /// Entity and relation tables copied from a previously trained
    /// structure-only checkpoint; feature tables and encoder drawn fresh.
    Warm(PathBuf),
}

impl InitSource {
    pub fn parse(s: &str) -> InitSource {
        if s == "random" {
            InitSource::Random
        } else {
            InitSource::Warm(PathBuf::from(s))
        }
    }
}

/// When sentence selections and attention weights are recomputed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefreshPolicy {
    /// Fresh selection for the batch's entities in every step (default).
    PerStep,
    /// Selections fixed once per epoch for all entities.
    PerEpoch,
}

impl RefreshPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            RefreshPolicy::PerStep => "per-step",
            RefreshPolicy::PerEpoch => "per-epoch",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per-step" => Ok(RefreshPolicy::PerStep),
            "per-epoch" => Ok(RefreshPolicy::PerEpoch),
            other => Err(Error::Config(format!("unknown refresh policy '{other}'"))),
        }
    }
}

/// Everything a training run needs beyond the data.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub hyper: HyperParams,
    pub init: InitSource,
    /// Kept for API completeness: batches are always processed sequentially
    /// with a fixed reduction order, so runs are deterministic either way.
    pub deterministic: bool,
    /// Validate (and consider early stopping) every this many epochs.
    pub validation_interval: usize,
    /// Stop after this many consecutive non-improving validations.
    pub patience: usize,
    pub refresh: RefreshPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hyper: HyperParams::default(),
            init: InitSource::Random,
            deterministic: true,
            validation_interval: 10,
            patience: 5,
            refresh: RefreshPolicy::PerStep,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.validation_interval < 1 {
            return Err(Error::Config("validation interval must be ≥ 1".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One epoch of the training log.
#[derive(Clone, Debug)]
pub struct TrainLogEntry {
    pub epoch: usize,
    /// Mean per-positive batch loss over the epoch.
    pub loss: f64,
    /// Filtered Hits@10 (percent) on the validation sample, when evaluated
    /// this epoch.
    pub val_hits10: Option<f64>,
    pub seconds: f64,
}

impl TrainLogEntry {
    /// `epoch<TAB>loss<TAB>val_hits10<TAB>seconds`; `-` when no validation
    /// ran this epoch.
    pub fn render_tsv(&self) -> String {
        let val = match self.val_hits10 {
            Some(v) => format!("{v:.4}"),
            None => "-".to_string(),
        };
        format!("{}\t{:.6}\t{val}\t{:.3}", self.epoch, self.loss, self.seconds)
    }
}

/// Result of a training run. `failure` is set when a numeric failure aborted
/// the run early; `params` then holds the last good model.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub log: Vec<TrainLogEntry>,
    pub failure: Option<String>,
}

/// Draws the initial model.
///
/// Random mode draws entity, relation and encoder entries uniformly from
/// `[−6/√k, 6/√k]` (feature tables use their own dimension in the bound),
/// then projects entity rows onto the unit ball and L2-normalizes relation
/// rows once. Warm mode copies entity and relation tables verbatim from a
/// checkpoint and draws the rest fresh. `words` supplies pre-trained word
/// vectors; when absent the word table is drawn too. Draw order: entities,
/// relations, words (when drawn), positions, encoder.
pub fn init_params<T: Scalar>(
    config: &TrainConfig,
    kg: &KnowledgeGraph,
    corpus: &ReferenceCorpus,
    words: Option<WordFeatureTable<T>>,
    rng: &mut impl Rng,
) -> Result<ModelParams<T>> {
    config.validate()?;
    let h = config.hyper.clone();
    let width = 6.0 / (h.k as f64).sqrt();
    fn draw<T: Scalar, R: Rng>(rng: &mut R, n: usize, dim: usize, w: f64) -> Vec<Vector<T>> {
        (0..n)
            .map(|_| Vector::from_vec((0..dim).map(|_| uniform_symmetric(rng, w)).collect()))
            .collect()
    }

    let (entity_struct, relation) = match &config.init {
        InitSource::Random => {
            let mut entity_struct = draw(rng, kg.n_entities(), h.k, width);
            for v in &mut entity_struct {
                project_unit_ball(v);
            }
            let mut relation = draw(rng, kg.n_relations(), h.k, width);
            for v in &mut relation {
                normalize_l2(v);
            }
            (entity_struct, relation)
        }
        InitSource::Warm(path) => {
            let ck: ModelParams<T> = load_checkpoint(path)?;
            if ck.hyper.k != h.k {
                return Err(Error::Config(format!(
                    "warm-start checkpoint has k={}, configured k={}",
                    ck.hyper.k, h.k
                )));
            }
            if ck.entity_struct.len() != kg.n_entities()
                || ck.relation.len() != kg.n_relations()
            {
                return Err(Error::Config(format!(
                    "warm-start checkpoint covers {} entities / {} relations, \
                     graph has {} / {}",
                    ck.entity_struct.len(),
                    ck.relation.len(),
                    kg.n_entities(),
                    kg.n_relations()
                )));
            }
            (ck.entity_struct, ck.relation)
        }
    };

    let words = match words {
        Some(w) => {
            if w.dim() != h.k_w || w.len() != corpus.vocab.len() {
                return Err(Error::Config(format!(
                    "word table is {}×{}, corpus needs {}×{}",
                    w.len(),
                    w.dim(),
                    corpus.vocab.len(),
                    h.k_w
                )));
            }
            w
        }
        None => WordFeatureTable::random(corpus.vocab.len(), h.k_w, rng),
    };
    let positions =
        PositionFeatureTable::random(h.clip_distance, h.k_p, 6.0 / (h.k_p as f64).sqrt(), rng);
    let encoder = EncoderParams::random(h.encoder, h.k, h.input_dim(), width, rng);

    let params = ModelParams {
        entity_struct,
        relation,
        words,
        positions,
        encoder,
        hyper: h,
    };
    params.validate()?;
    Ok(params)
}

/// A step's frozen stochastic choices: the positives, their negative samples
/// per hinge, and each involved entity's sentence selection with clamped
/// attention weights. With the plan fixed, the batch loss is a deterministic,
/// differentiable function of the parameters (weights are treated as
/// constants: the attention path carries no gradient).
#[derive(Clone, Debug)]
pub struct BatchPlan<T> {
    pub positives: Vec<Triple>,
    /// Per positive: four negatives (one per energy term) in term order
    /// KK, SK, KS, SS, or a single negative in summed mode.
    pub negatives: Vec<Vec<CorruptedTriple>>,
    /// Per entity id: `(sentence index, clamped weight)` pairs; an empty list
    /// means the entity has no sentences and its text representation aliases
    /// the structural one. Empty map in structure-only mode.
    pub text: BTreeMap<u32, Vec<(usize, T)>>,
}

/// The frozen sentence selection for one entity under the current parameters:
/// encode every sentence, score it against the structural embedding, then
/// keep the top-m with weights `max(score, ε)` (or all sentences with unit
/// weights in mean-aggregation mode).
pub fn text_plan_for_entity<T: Scalar>(
    params: &ModelParams<T>,
    corpus: &ReferenceCorpus,
    entity: EntityId,
) -> Result<Vec<(usize, T)>> {
    let sentences = corpus.sentences(entity);
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    match params.hyper.aggregation {
        AggregationMode::Mean => Ok((0..sentences.len()).map(|i| (i, T::one())).collect()),
        AggregationMode::TopM => {
            let e_k = params.entity(entity);
            let mut scored = Vec::with_capacity(sentences.len());
            for (index, s) in sentences.iter().enumerate() {
                let (repr, _) = encode_sentence(
                    &params.encoder,
                    params.hyper.encoder,
                    s,
                    &params.words,
                    &params.positions,
                )?;
                let score = cosine(&repr, e_k)?;
                scored.push(ScoredSentence { index, repr, score });
            }
            let eps = real::<T>(params.hyper.epsilon);
            Ok(select_top_m(&scored, params.hyper.top_m)
                .into_iter()
                .map(|idx| (idx, clamp_min(scored[idx].score, eps)))
                .collect())
        }
    }
}

/// Builds the plan for one batch. Negative draw order: positives in batch
/// order, hinges in term order within each positive. Text plans cover every
/// entity appearing in a positive or corrupted triple; `cached` (the
/// per-epoch refresh policy) supplies them instead when given.
pub fn plan_batch<T: Scalar>(
    batch: &[Triple],
    params: &ModelParams<T>,
    kg: &KnowledgeGraph,
    corpus: &ReferenceCorpus,
    rng: &mut impl Rng,
    cached: Option<&BTreeMap<u32, Vec<(usize, T)>>>,
) -> Result<BatchPlan<T>> {
    if batch.is_empty() {
        return Err(Error::Usage("cannot plan an empty batch".into()));
    }
    let hinges = match params.hyper.loss_mode {
        LossMode::FourHinges => 4,
        LossMode::Summed => 1,
    };
    let mut negatives = Vec::with_capacity(batch.len());
    for t in batch {
        let mut per = Vec::with_capacity(hinges);
        for _ in 0..hinges {
            per.push(sample_negative(t, kg, rng)?);
        }
        negatives.push(per);
    }

    let mut text = BTreeMap::new();
    if params.hyper.energy_mode == EnergyMode::Full {
        let mut involved = BTreeSet::new();
        for (t, negs) in batch.iter().zip(&negatives) {
            involved.insert(t.head.0);
            involved.insert(t.tail.0);
            for n in negs {
                involved.insert(n.triple.head.0);
                involved.insert(n.triple.tail.0);
            }
        }
        for e in involved {
            let plan = match cached {
                Some(map) => map
                    .get(&e)
                    .cloned()
                    .ok_or_else(|| Error::Usage(format!("entity {e} missing from text cache")))?,
                None => text_plan_for_entity(params, corpus, EntityId(e))?,
            };
            text.insert(e, plan);
        }
    }
    Ok(BatchPlan {
        positives: batch.to_vec(),
        negatives,
        text,
    })
}

/// Sparse gradients of one batch: entries exist only for touched rows; the
/// encoder gradient is dense (shaped like the parameters).
#[derive(Clone, Debug)]
pub struct Grads<T> {
    pub entity_struct: BTreeMap<u32, Vector<T>>,
    pub relation: BTreeMap<u32, Vector<T>>,
    pub words: BTreeMap<u32, Vector<T>>,
    pub positions: BTreeMap<i32, Vector<T>>,
    pub encoder: EncoderParams<T>,
}

impl<T: Scalar> Grads<T> {
    fn new(params: &ModelParams<T>) -> Self {
        Grads {
            entity_struct: BTreeMap::new(),
            relation: BTreeMap::new(),
            words: BTreeMap::new(),
            positions: BTreeMap::new(),
            encoder: params.encoder.zeros_like(),
        }
    }
}

/// Which representation a term slot uses.
#[derive(Clone, Copy, PartialEq, Eq)]
enum RepKind {
    Struct,
    Text,
}

/// Term order shared by planning, evaluation, and the loss definition.
const TERM_KINDS: [(RepKind, RepKind); 4] = [
    (RepKind::Struct, RepKind::Struct),
    (RepKind::Text, RepKind::Struct),
    (RepKind::Struct, RepKind::Text),
    (RepKind::Text, RepKind::Text),
];

/// One entity's materialized text representation inside a batch evaluation.
struct EntityRep<T> {
    repr: Vector<T>,
    /// Tapes and `w_i / Σw` coefficients of the selected sentences; `None`
    /// when the representation aliases the structural embedding.
    parts: Option<(Vec<EncoderTape<T>>, Vec<T>)>,
}

/// Evaluates the mean per-positive hinge loss of a planned batch, optionally
/// with gradients for every parameter table. Attention weights come frozen
/// from the plan; sentence encodings are recomputed from the current
/// parameters, so the value is exactly the function the gradients derive.
pub fn eval_batch<T: Scalar>(
    params: &ModelParams<T>,
    plan: &BatchPlan<T>,
    corpus: &ReferenceCorpus,
    want_grads: bool,
) -> Result<(T, Option<Grads<T>>)> {
    let h = &params.hyper;
    let gamma = real::<T>(h.margin);
    let batch_len = real::<T>(plan.positives.len() as f64);
    let upstream = T::one() / batch_len;

    // Materialize the text representation of every planned entity.
    let mut reps: BTreeMap<u32, EntityRep<T>> = BTreeMap::new();
    for (&e, selected) in &plan.text {
        let entity = EntityId(e);
        if selected.is_empty() {
            reps.insert(
                e,
                EntityRep {
                    repr: params.entity(entity).clone(),
                    parts: None,
                },
            );
            continue;
        }
        let sentences = corpus.sentences(entity);
        let mut tapes = Vec::with_capacity(selected.len());
        let mut weights = Vec::with_capacity(selected.len());
        let mut sum = Vector::zeros(h.k);
        let mut wsum = T::zero();
        for &(idx, w) in selected {
            let s = sentences.get(idx).ok_or_else(|| {
                Error::Usage(format!("entity {e} has no sentence {idx} (stale plan)"))
            })?;
            let (c, tape) = encode_sentence(
                &params.encoder,
                h.encoder,
                s,
                &params.words,
                &params.positions,
            )?;
            sum.axpy(w, &c);
            wsum = wsum + w;
            tapes.push(tape);
            weights.push(w);
        }
        sum.scale(T::one() / wsum);
        let coeffs = weights.iter().map(|&w| w / wsum).collect();
        reps.insert(
            e,
            EntityRep {
                repr: sum,
                parts: Some((tapes, coeffs)),
            },
        );
    }

    let resolve = |e: EntityId, kind: RepKind| -> &Vector<T> {
        match kind {
            RepKind::Struct => params.entity(e),
            RepKind::Text => reps
                .get(&e.0)
                .map(|r| &r.repr)
                .unwrap_or_else(|| params.entity(e)),
        }
    };

    let mut acc = Grads::new(params);
    // Upstream gradients routed into each selected sentence's encoding,
    // keyed by entity; applied through the encoder tapes at the end.
    let mut dc: BTreeMap<u32, Vec<Vector<T>>> = BTreeMap::new();
    let route = |acc: &mut Grads<T>,
                     dc: &mut BTreeMap<u32, Vec<Vector<T>>>,
                     e: EntityId,
                     kind: RepKind,
                     coef: T,
                     g: &Vector<T>| {
        let into_entity = |acc: &mut Grads<T>| {
            acc.entity_struct
                .entry(e.0)
                .or_insert_with(|| Vector::zeros(h.k))
                .axpy(coef, g);
        };
        match kind {
            RepKind::Struct => into_entity(acc),
            RepKind::Text => match reps.get(&e.0) {
                None => into_entity(acc),
                Some(rep) => match &rep.parts {
                    None => into_entity(acc),
                    Some((tapes, coeffs)) => {
                        let slots = dc
                            .entry(e.0)
                            .or_insert_with(|| vec![Vector::zeros(h.k); tapes.len()]);
                        for (slot, &c_i) in slots.iter_mut().zip(coeffs) {
                            slot.axpy(coef * c_i, g);
                        }
                    }
                },
            },
        }
    };

    let mut total = T::zero();
    for (t, negs) in plan.positives.iter().zip(&plan.negatives) {
        let r = t.relation;
        let r_vec = params.relation_vec(r);
        match h.loss_mode {
            LossMode::FourHinges => {
                for (term, neg) in TERM_KINDS.iter().zip(negs) {
                    let (hk, tk) = *term;
                    let nt = &neg.triple;
                    let (pos, g_pos) = energy_term_with_grad(
                        resolve(t.head, hk),
                        r_vec,
                        resolve(t.tail, tk),
                        h.norm,
                    )?;
                    let (negv, g_neg) = energy_term_with_grad(
                        resolve(nt.head, hk),
                        r_vec,
                        resolve(nt.tail, tk),
                        h.norm,
                    )?;
                    let hinge = gamma + pos - negv;
                    if !hinge.is_finite() {
                        return Err(Error::Numeric(format!(
                            "hinge for {t:?} is not finite"
                        )));
                    }
                    if hinge > T::zero() {
                        total = total + hinge;
                        if want_grads {
                            route(&mut acc, &mut dc, t.head, hk, upstream, &g_pos);
                            route(&mut acc, &mut dc, t.tail, tk, -upstream, &g_pos);
                            route(&mut acc, &mut dc, nt.head, hk, -upstream, &g_neg);
                            route(&mut acc, &mut dc, nt.tail, tk, upstream, &g_neg);
                            acc.relation
                                .entry(r.0)
                                .or_insert_with(|| Vector::zeros(h.k))
                                .axpy(upstream, &g_pos.sub(&g_neg));
                        }
                    }
                }
            }
            LossMode::Summed => {
                let nt = &negs[0].triple;
                let mut pos_total = T::zero();
                let mut neg_total = T::zero();
                let mut pos_grads = Vec::with_capacity(4);
                let mut neg_grads = Vec::with_capacity(4);
                for (hk, tk) in TERM_KINDS {
                    let (p, gp) = energy_term_with_grad(
                        resolve(t.head, hk),
                        r_vec,
                        resolve(t.tail, tk),
                        h.norm,
                    )?;
                    let (v, gn) = energy_term_with_grad(
                        resolve(nt.head, hk),
                        r_vec,
                        resolve(nt.tail, tk),
                        h.norm,
                    )?;
                    pos_total = pos_total + p;
                    neg_total = neg_total + v;
                    pos_grads.push(gp);
                    neg_grads.push(gn);
                }
                let hinge = gamma + pos_total - neg_total;
                if !hinge.is_finite() {
                    return Err(Error::Numeric(format!("hinge for {t:?} is not finite")));
                }
                if hinge > T::zero() {
                    total = total + hinge;
                    if want_grads {
                        for ((hk, tk), (gp, gn)) in
                            TERM_KINDS.iter().zip(pos_grads.iter().zip(&neg_grads))
                        {
                            route(&mut acc, &mut dc, t.head, *hk, upstream, gp);
                            route(&mut acc, &mut dc, t.tail, *tk, -upstream, gp);
                            route(&mut acc, &mut dc, nt.head, *hk, -upstream, gn);
                            route(&mut acc, &mut dc, nt.tail, *tk, upstream, gn);
                            acc.relation
                                .entry(r.0)
                                .or_insert_with(|| Vector::zeros(h.k))
                                .axpy(upstream, &gp.sub(gn));
                        }
                    }
                }
            }
        }
    }

    let loss = total / batch_len;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "batch loss is not finite ({} over {} positives)",
            to_f64(loss),
            plan.positives.len()
        )));
    }
    if !want_grads {
        return Ok((loss, None));
    }

    // Pull the per-sentence upstreams through the encoder and into the
    // word/position tables, in ascending entity order.
    for (e, slots) in dc {
        let rep = &reps[&e];
        let (tapes, _) = rep.parts.as_ref().expect("dc only accumulates on parts");
        for (tape, slot) in tapes.iter().zip(slots) {
            if slot.as_slice().iter().all(|&x| x == T::zero()) {
                continue;
            }
            let back = crate::encoders::encoder_backward(&params.encoder, tape, &slot)?;
            acc.encoder.axpy(T::one(), &back.grads);
            for (wid, g) in back.words {
                acc.words
                    .entry(wid.0)
                    .or_insert_with(|| Vector::zeros(h.k_w))
                    .add_assign(&g);
            }
            for (pos, g) in back.positions {
                acc.positions
                    .entry(pos)
                    .or_insert_with(|| Vector::zeros(h.k_p))
                    .add_assign(&g);
            }
        }
    }
    Ok((loss, Some(acc)))
}

/// One SGD update: subtract `lr · grad` from every touched row (in ascending
/// id order) and from the encoder, then project each updated entity row back
/// onto the unit L2 ball.
pub fn apply_sgd<T: Scalar>(params: &mut ModelParams<T>, grads: &Grads<T>, lr: T) {
    for (&e, g) in &grads.entity_struct {
        let row = params.entity_mut(EntityId(e));
        row.axpy(-lr, g);
        project_unit_ball(row);
    }
    for (&r, g) in &grads.relation {
        params.relation[r as usize].axpy(-lr, g);
    }
    for (&w, g) in &grads.words {
        params
            .words
            .vector_mut(crate::kg::WordId(w))
            .axpy(-lr, g);
    }
    for (&p, g) in &grads.positions {
        params
            .positions
            .vector_mut(p)
            .expect("position ids in gradients are already clipped")
            .axpy(-lr, g);
    }
    params.encoder.axpy(-lr, &grads.encoder);
}

/// Plans, evaluates and applies one batch; returns the batch loss.
pub fn train_step<T: Scalar>(
    batch: &[Triple],
    params: &mut ModelParams<T>,
    kg: &KnowledgeGraph,
    corpus: &ReferenceCorpus,
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<T> {
    let _ = config;
    let plan = plan_batch(batch, params, kg, corpus, rng, None)?;
    let (loss, grads) = eval_batch(params, &plan, corpus, true)?;
    apply_sgd(params, &grads.expect("gradients requested"), real::<T>(params.hyper.learning_rate));
    Ok(loss)
}

/// Trains until the epoch cap or until validation stops improving.
///
/// Training triples are reshuffled every epoch under the seeded generator;
/// the validation metric is filtered Hits@10 on the first min(1000, |valid|)
/// validation triples, evaluated every `validation_interval` epochs, and the
/// best-validation parameters are returned (the final ones when the
/// validation split is empty). A numeric failure stops the run and returns
/// the last good parameters with `failure` set.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    kg: &KnowledgeGraph,
    corpus: &ReferenceCorpus,
    words: Option<WordFeatureTable<T>>,
    mut on_epoch: impl FnMut(&TrainLogEntry),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if kg.train().is_empty() {
        return Err(Error::Infeasible("training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.hyper.seed);
    let mut params = init_params(config, kg, corpus, words, &mut rng)?;
    let mut triples = kg.train().to_vec();
    let val_sample = &kg.valid()[..kg.valid().len().min(1000)];

    let lr = real::<T>(config.hyper.learning_rate);
    let mut log: Vec<TrainLogEntry> = Vec::new();
    let mut best: Option<(f64, ModelParams<T>)> = None;
    let mut last_good = params.clone();
    let mut strikes = 0usize;

    for epoch in 1..=config.hyper.epochs {
        let started = Instant::now();
        triples.shuffle(&mut rng);
        let cache = match config.refresh {
            RefreshPolicy::PerStep => None,
            RefreshPolicy::PerEpoch => {
                let mut map = BTreeMap::new();
                for e in 0..kg.n_entities() as u32 {
                    map.insert(e, text_plan_for_entity(&params, corpus, EntityId(e))?);
                }
                Some(map)
            }
        };

        let mut loss_sum = 0.0;
        for batch in triples.chunks(config.hyper.batch_size) {
            let step = plan_batch(batch, &params, kg, corpus, &mut rng, cache.as_ref())
                .and_then(|plan| eval_batch(&params, &plan, corpus, true));
            match step {
                Ok((loss, grads)) => {
                    apply_sgd(&mut params, &grads.expect("gradients requested"), lr);
                    loss_sum += to_f64(loss) * batch.len() as f64;
                }
                Err(Error::Numeric(msg)) => {
                    let params = best.map(|(_, p)| p).unwrap_or(last_good);
                    return Ok(TrainOutcome {
                        params,
                        log,
                        failure: Some(format!("epoch {epoch}: {msg}")),
                    });
                }
                Err(other) => return Err(other),
            }
        }
        let epoch_loss = loss_sum / triples.len() as f64;

        let val_hits10 = if epoch % config.validation_interval == 0 && !val_sample.is_empty() {
            let ctx = build_eval_context(&params, corpus)?;
            Some(filtered_hits10(&ctx, kg, val_sample)?)
        } else {
            None
        };
        let entry = TrainLogEntry {
            epoch,
            loss: epoch_loss,
            val_hits10,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.push(entry);
        last_good = params.clone();

        if let Some(v) = val_hits10 {
            let improved = best.as_ref().map_or(true, |(bv, _)| v > *bv);
            if improved {
                best = Some((v, params.clone()));
                strikes = 0;
            } else {
                strikes += 1;
                if strikes >= config.patience {
                    break;
                }
            }
        }
    }

    let final_params = best.map(|(_, p)| p).unwrap_or(params);
    Ok(TrainOutcome {
        params: final_params,
        log,
        failure: None,
    })
}

// ---------------------------------------------------------------------------
// Gradient checking of the full batch loss
// ---------------------------------------------------------------------------

/// The planned batch loss as a coordinate-indexed function of every
/// parameter table, with analytic gradients precomputed at the base point.
struct BatchGradTarget<'a, T: Scalar> {
    params: ModelParams<T>,
    plan: &'a BatchPlan<T>,
    corpus: &'a ReferenceCorpus,
    grads: Grads<T>,
    layout: Vec<(String, usize)>,
    coords: Vec<(usize, usize)>,
}

impl<'a, T: Scalar> GradCheckTarget<T> for BatchGradTarget<'a, T> {
    fn coord_count(&self) -> usize {
        self.coords.len()
    }

    fn label(&self, i: usize) -> String {
        self.layout[self.coords[i].0].0.clone()
    }

    fn get(&self, i: usize) -> T {
        let (table, offset) = self.coords[i];
        self.params.get_flat(table, offset)
    }

    fn set(&mut self, i: usize, value: T) {
        let (table, offset) = self.coords[i];
        self.params.set_flat(table, offset, value);
    }

    fn loss(&mut self) -> Result<T> {
        Ok(eval_batch(&self.params, self.plan, self.corpus, false)?.0)
    }

    fn analytic(&self, i: usize) -> T {
        let (table, offset) = self.coords[i];
        analytic_lookup(&self.grads, &self.params.hyper, table, offset)
    }
}

/// Reads the entry of a sparse batch gradient addressed by a flat
/// `(table, offset)` coordinate; untouched rows read as zero.
fn analytic_lookup<T: Scalar>(
    grads: &Grads<T>,
    h: &HyperParams,
    table: usize,
    offset: usize,
) -> T {
    match table {
        0 => {
            let (row, dim) = (offset / h.k, offset % h.k);
            grads
                .entity_struct
                .get(&(row as u32))
                .map_or(T::zero(), |g| g[dim])
        }
        1 => {
            let (row, dim) = (offset / h.k, offset % h.k);
            grads
                .relation
                .get(&(row as u32))
                .map_or(T::zero(), |g| g[dim])
        }
        2 => {
            let (row, dim) = (offset / h.k_w, offset % h.k_w);
            grads.words.get(&(row as u32)).map_or(T::zero(), |g| g[dim])
        }
        3 => {
            let (row, dim) = (offset / h.k_p, offset % h.k_p);
            let pos = row as i32 - h.clip_distance;
            grads.positions.get(&pos).map_or(T::zero(), |g| g[dim])
        }
        n => grads.encoder.table_slices()[n - 4].1[offset],
    }
}

/// Checks the analytic batch-loss gradient against central finite
/// differences on a toy problem, sampling up to `total_coords` coordinates
/// spread over every parameter table.
///
/// The model is drawn by [`init_params`], then the word, position and
/// encoder tables are scaled to a quarter of their initial width: at toy
/// dimensions the raw initialization saturates the recurrences, where finite
/// differences lose the precision this check needs.
///
/// Central differences of a loss of size `L` carry rounding noise of about
/// `ε·L / (2·step)` no matter how correct the analytic gradient is, so
/// coordinates whose true gradient is smaller than that floor (divided by
/// the tolerance, with a safety factor) are unverifiable and excluded from
/// sampling; each table still contributes its largest-gradient coordinates
/// when nothing clears the floor.
pub fn gradcheck_model<T: Scalar>(
    config: &TrainConfig,
    kg: &KnowledgeGraph,
    corpus: &ReferenceCorpus,
    total_coords: usize,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    config.validate()?;
    if kg.train().is_empty() {
        return Err(Error::Infeasible("gradient check needs training triples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.hyper.seed);
    let mut params = init_params::<T>(config, kg, corpus, None, &mut rng)?;
    let quarter = real::<T>(0.25);
    let layout = params.flat_layout();
    for (table, (_, count)) in layout.iter().enumerate().skip(2) {
        for offset in 0..*count {
            let v = params.get_flat(table, offset);
            params.set_flat(table, offset, v * quarter);
        }
    }

    let batch: Vec<Triple> = kg.train().to_vec();
    let plan = plan_batch(&batch, &params, kg, corpus, &mut rng, None)?;
    let (loss, grads) = eval_batch(&params, &plan, corpus, true)?;
    let grads = grads.expect("gradients requested");

    let fd_noise = f64::EPSILON * to_f64(loss).abs().max(1.0) / (2.0 * step);
    let floor = 2.5 * fd_noise / tolerance;
    let per_table = (total_coords / layout.len()).max(1);
    let mut coords = Vec::new();
    for (table, (_, count)) in layout.iter().enumerate() {
        if *count == 0 {
            continue;
        }
        let mut candidates: Vec<usize> = (0..*count)
            .filter(|&off| to_f64(analytic_lookup(&grads, &params.hyper, table, off)).abs() >= floor)
            .collect();
        if candidates.is_empty() {
            let mut by_magnitude: Vec<usize> = (0..*count).collect();
            by_magnitude.sort_by(|&a, &b| {
                let ga = to_f64(analytic_lookup(&grads, &params.hyper, table, a)).abs();
                let gb = to_f64(analytic_lookup(&grads, &params.hyper, table, b)).abs();
                gb.partial_cmp(&ga).unwrap().then(a.cmp(&b))
            });
            by_magnitude.truncate(per_table);
            candidates = by_magnitude;
        }
        let amount = per_table.min(candidates.len());
        for idx in rand::seq::index::sample(&mut rng, candidates.len(), amount) {
            coords.push((table, candidates[idx]));
        }
    }

    let mut target = BatchGradTarget {
        params,
        plan: &plan,
        corpus,
        grads,
        layout,
        coords,
    };
    finite_diff_check(&mut target, step, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderKind;
    use crate::kg::{generate_synthetic_dataset, SynthSpec};
    use crate::model::save_checkpoint;
    use crate::numerics::NormKind;

    /// Tiny config over a synthetic task.
    fn toy_config(encoder: EncoderKind, seed: u64) -> TrainConfig {
        let mut config = TrainConfig::default();
        config.hyper.k = 4;
        config.hyper.k_w = 4;
        config.hyper.k_p = 2;
        config.hyper.clip_distance = 3;
        config.hyper.top_m = 2;
        config.hyper.batch_size = 8;
        config.hyper.epochs = 3;
        config.hyper.seed = seed;
        config.hyper.encoder = encoder;
        config
    }

    fn toy_data(seed: u64) -> (KnowledgeGraph, ReferenceCorpus) {
        let spec = SynthSpec {
            n_entities: 8,
            n_relations: 2,
            n_triples: 24,
            signal_sentences: 1,
            noise_sentences: 1,
            sentence_length: 5,
            vocab_size: 20,
            clip_distance: 3,
        };
        generate_synthetic_dataset(&spec, seed).unwrap()
    }

    #[test]
    fn random_init_is_bounded_normalized_and_deterministic() {
        let config = toy_config(EncoderKind::Rnn, 3);
        let (kg, corpus) = toy_data(3);
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        let a: ModelParams<f64> = init_params(&config, &kg, &corpus, None, &mut r1).unwrap();
        let b: ModelParams<f64> = init_params(&config, &kg, &corpus, None, &mut r2).unwrap();
        assert_eq!(a, b);
        let bound = 6.0 / (config.hyper.k as f64).sqrt();
        for v in &a.entity_struct {
            assert!(v.norm2() <= 1.0 + 1e-12);
            assert!(v.as_slice().iter().all(|x| x.abs() <= bound));
        }
        for v in &a.relation {
            assert!((v.norm2() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn warm_start_copies_structural_tables_bit_for_bit() {
        let config = toy_config(EncoderKind::Rnn, 4);
        let (kg, corpus) = toy_data(4);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let source: ModelParams<f64> =
            init_params(&config, &kg, &corpus, None, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("warm.ckpt");
        save_checkpoint(&source, &path).unwrap();

        let mut warm_config = config.clone();
        warm_config.init = InitSource::Warm(path.clone());
        let mut rng2 = ChaCha8Rng::seed_from_u64(99);
        let warmed: ModelParams<f64> =
            init_params(&warm_config, &kg, &corpus, None, &mut rng2).unwrap();
        assert_eq!(warmed.entity_struct, source.entity_struct);
        assert_eq!(warmed.relation, source.relation);
        assert_ne!(warmed.encoder, source.encoder);

        // Dimension mismatch is a configuration error.
        let mut bad = warm_config.clone();
        bad.hyper.k = 5;
        let err = init_params::<f64>(&bad, &kg, &corpus, None, &mut rng2).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }

    #[test]
    fn inactive_hinges_leave_parameters_untouched() {
        // Entities on a line spaced 0.25 apart with r = +0.25: every train
        // triple translates exactly while corruptions are off by ≥ 0.25, so
        // with a margin below that gap every hinge is inactive.
        let mut kg = KnowledgeGraph::new();
        crate::kg::load_triples_from(
            std::io::Cursor::new("e0\tr\te1\ne1\tr\te2\ne2\tr\te3\n"),
            &mut kg,
            crate::kg::Split::Train,
        )
        .unwrap();
        let corpus = ReferenceCorpus::new(4, 5);
        let mut config = toy_config(EncoderKind::Rnn, 5);
        config.hyper.k = 2;
        config.hyper.k_w = 2;
        config.hyper.margin = 0.1;
        config.hyper.energy_mode = EnergyMode::TransEOnly;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut params: ModelParams<f64> =
            init_params(&config, &kg, &corpus, None, &mut rng).unwrap();
        let scale = 0.25;
        for (i, v) in params.entity_struct.iter_mut().enumerate() {
            *v = Vector::from_vec(vec![i as f64 * scale, 0.0]);
        }
        params.relation[0] = Vector::from_vec(vec![scale, 0.0]);

        let before = params.clone();
        let batch: Vec<Triple> = kg.train().to_vec();
        let loss = train_step(&batch, &mut params, &kg, &corpus, &config, &mut rng).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(params, before);
    }

    #[test]
    fn batch_loss_is_nonnegative_across_seeds_and_modes() {
        for seed in 0..4u64 {
            for loss_mode in [LossMode::FourHinges, LossMode::Summed] {
                let mut config = toy_config(EncoderKind::Rnn, seed);
                config.hyper.loss_mode = loss_mode;
                let (kg, corpus) = toy_data(seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut params: ModelParams<f64> =
                    init_params(&config, &kg, &corpus, None, &mut rng).unwrap();
                let batch: Vec<Triple> = kg.train().iter().take(8).copied().collect();
                let loss =
                    train_step(&batch, &mut params, &kg, &corpus, &config, &mut rng).unwrap();
                assert!(loss >= 0.0);
            }
        }
    }

    #[test]
    fn entity_rows_stay_inside_the_unit_ball() {
        let config = toy_config(EncoderKind::Rnn, 6);
        let (kg, corpus) = toy_data(6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut params: ModelParams<f64> =
            init_params(&config, &kg, &corpus, None, &mut rng).unwrap();
        let triples = kg.train().to_vec();
        for batch in triples.chunks(config.hyper.batch_size) {
            train_step(batch, &mut params, &kg, &corpus, &config, &mut rng).unwrap();
            for v in &params.entity_struct {
                assert!(v.norm2() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn structure_only_mode_never_touches_text_tables() {
        let mut config = toy_config(EncoderKind::Lstm, 7);
        config.hyper.energy_mode = EnergyMode::TransEOnly;
        let (kg, corpus) = toy_data(7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut params: ModelParams<f64> =
            init_params(&config, &kg, &corpus, None, &mut rng).unwrap();
        let words_before = params.words.clone();
        let positions_before = params.positions.clone();
        let encoder_before = params.encoder.clone();
        let entities_before = params.entity_struct.clone();
        let triples = kg.train().to_vec();
        for batch in triples.chunks(config.hyper.batch_size) {
            train_step(batch, &mut params, &kg, &corpus, &config, &mut rng).unwrap();
        }
        assert_eq!(params.words, words_before);
        assert_eq!(params.positions, positions_before);
        assert_eq!(params.encoder, encoder_before);
        assert_ne!(params.entity_struct, entities_before);
    }

    #[test]
    fn training_is_bit_deterministic_under_a_seed() {
        let mut config = toy_config(EncoderKind::Rnn, 8);
        config.hyper.epochs = 3;
        config.validation_interval = 2;
        let (kg, corpus) = toy_data(8);
        let run = || train::<f64>(&config, &kg, &corpus, None, |_| {}).unwrap();
        let a = run();
        let b = run();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log.len(), b.log.len());
        for (x, y) in a.log.iter().zip(&b.log) {
            assert_eq!(x.loss, y.loss);
            assert_eq!(x.val_hits10, y.val_hits10);
        }
    }

    #[test]
    fn patience_one_with_flat_metric_stops_after_one_extra_eval() {
        // With 8 entities every rank is ≤ 10, so validation Hits@10 is
        // pinned at 100% and can never improve after the first evaluation.
        let mut config = toy_config(EncoderKind::Rnn, 9);
        config.hyper.epochs = 50;
        config.validation_interval = 1;
        config.patience = 1;
        let (kg, corpus) = toy_data(9);
        assert!(!kg.valid().is_empty());
        let out = train::<f64>(&config, &kg, &corpus, None, |_| {}).unwrap();
        assert_eq!(out.log.len(), 2);
        assert_eq!(out.log[0].val_hits10, Some(100.0));
        assert!(out.failure.is_none());
    }

    #[test]
    fn loss_decreases_on_a_small_memorization_task() {
        let mut config = toy_config(EncoderKind::Rnn, 10);
        config.hyper.epochs = 30;
        config.hyper.learning_rate = 0.05;
        config.validation_interval = 30;
        let (kg, corpus) = toy_data(10);
        let out = train::<f64>(&config, &kg, &corpus, None, |_| {}).unwrap();
        let first = out.log.first().unwrap().loss;
        let last = out.log.last().unwrap().loss;
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn log_entries_render_as_tsv() {
        let entry = TrainLogEntry {
            epoch: 3,
            loss: 0.5,
            val_hits10: Some(87.5),
            seconds: 0.25,
        };
        assert_eq!(entry.render_tsv(), "3\t0.500000\t87.5000\t0.250");
        let quiet = TrainLogEntry {
            epoch: 4,
            loss: 0.25,
            val_hits10: None,
            seconds: 0.125,
        };
        assert_eq!(quiet.render_tsv(), "4\t0.250000\t-\t0.125");
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for encoder in [EncoderKind::Rnn, EncoderKind::RnnPool, EncoderKind::Lstm] {
            for seed in [1u64, 2] {
                let mut config = toy_config(encoder, seed);
                config.hyper.batch_size = 24;
                let (kg, corpus) = toy_data(seed);
                let report =
                    gradcheck_model::<f64>(&config, &kg, &corpus, 150, 1e-5, 1e-4).unwrap();
                assert!(
                    report.pass,
                    "{:?} seed {seed} failed:\n{}",
                    encoder,
                    report.render()
                );
            }
        }
    }

    #[test]
    fn gradcheck_detects_zeroed_encoder_gradients() {
        let mut config = toy_config(EncoderKind::Rnn, 12);
        config.hyper.batch_size = 24;
        let (kg, corpus) = toy_data(12);
        let mut rng = ChaCha8Rng::seed_from_u64(config.hyper.seed);
        let mut params: ModelParams<f64> =
            init_params(&config, &kg, &corpus, None, &mut rng).unwrap();
        let layout = params.flat_layout();
        for (table, (_, count)) in layout.iter().enumerate().skip(2) {
            for offset in 0..*count {
                let v = params.get_flat(table, offset);
                params.set_flat(table, offset, v * 0.25);
            }
        }
        let batch: Vec<Triple> = kg.train().to_vec();
        let plan = plan_batch(&batch, &params, &kg, &corpus, &mut rng, None).unwrap();
        let (loss, grads) = eval_batch(&params, &plan, &corpus, true).unwrap();
        let mut grads = grads.unwrap();

        // Pick coordinates the check can resolve (true gradient above the
        // finite-difference noise floor), then erase the encoder gradients:
        // every encoder coordinate must now disagree with the numeric value.
        let floor = 2.5 * f64::EPSILON * loss.abs().max(1.0) / (2.0 * 1e-5) / 1e-4;
        let mut coords = Vec::new();
        for (table, (_, count)) in layout.iter().enumerate() {
            let strong: Vec<usize> = (0..*count)
                .filter(|&off| {
                    analytic_lookup(&grads, &params.hyper, table, off).abs() >= floor
                })
                .collect();
            let amount = strong.len().min(20);
            for idx in rand::seq::index::sample(&mut rng, strong.len(), amount) {
                coords.push((table, strong[idx]));
            }
        }
        assert!(coords.iter().any(|&(t, _)| t >= 4), "no encoder coordinates sampled");
        grads.encoder = grads.encoder.zeros_like();
        let mut target = BatchGradTarget {
            params,
            plan: &plan,
            corpus: &corpus,
            grads,
            layout,
            coords,
        };
        let report = finite_diff_check(&mut target, 1e-5, 1e-4).unwrap();
        assert!(!report.pass);
        let worst = report.worst.as_ref().unwrap();
        assert!(
            worst.table.starts_with("encoder."),
            "worst: {worst:?}\n{}",
            report.render()
        );
    }

    #[test]
    fn per_epoch_refresh_also_trains() {
        let mut config = toy_config(EncoderKind::Rnn, 13);
        config.refresh = RefreshPolicy::PerEpoch;
        config.hyper.epochs = 2;
        let (kg, corpus) = toy_data(13);
        let out = train::<f64>(&config, &kg, &corpus, None, |_| {}).unwrap();
        assert_eq!(out.log.len(), 2);
        assert!(out.failure.is_none());
    }

    #[test]
    fn non_finite_parameters_fail_with_a_numeric_error() {
        let config = toy_config(EncoderKind::Rnn, 14);
        let (kg, corpus) = toy_data(14);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut params: ModelParams<f64> =
            init_params(&config, &kg, &corpus, None, &mut rng).unwrap();
        let batch: Vec<Triple> = kg.train().to_vec();
        let plan = plan_batch(&batch, &params, &kg, &corpus, &mut rng, None).unwrap();
        let victim = batch[0].head;
        params.entity_mut(victim)[0] = f64::NAN;
        let err = eval_batch(&params, &plan, &corpus, true).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "got {err:?}");
    }

    #[test]
    fn summed_mode_gradients_also_pass_finite_differences() {
        let mut config = toy_config(EncoderKind::Rnn, 15);
        config.hyper.loss_mode = LossMode::Summed;
        config.hyper.norm = NormKind::L2;
        config.hyper.batch_size = 24;
        let (kg, corpus) = toy_data(15);
        let report = gradcheck_model::<f64>(&config, &kg, &corpus, 150, 1e-5, 1e-4).unwrap();
        assert!(report.pass, "{}", report.render());
    }
}
