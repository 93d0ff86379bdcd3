//! Evaluation protocols over a trained model: triple classification with
//! per-relation thresholds, and link prediction with raw/filtered mean rank,
//! Hits@10, and a relation-category breakdown.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, ReferenceCorpus, RelationId, Triple};
use crate::model::{build_text_representation, energy_term, EnergyMode, ModelParams};
use crate::numerics::{NormKind, Vector};
use crate::scalar::{real, Scalar};

/// Which representation scores the head and the tail of a triple:
/// first letter head, second letter tail; `K` structural, `S` text-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComboKind {
    KK,
    SK,
    KS,
    SS,
}

impl ComboKind {
    pub const ALL: [ComboKind; 4] = [ComboKind::KK, ComboKind::SK, ComboKind::KS, ComboKind::SS];

    pub fn as_str(self) -> &'static str {
        match self {
            ComboKind::KK => "KK",
            ComboKind::SK => "SK",
            ComboKind::KS => "KS",
            ComboKind::SS => "SS",
        }
    }

    pub fn head_is_text(self) -> bool {
        matches!(self, ComboKind::SK | ComboKind::SS)
    }

    pub fn tail_is_text(self) -> bool {
        matches!(self, ComboKind::KS | ComboKind::SS)
    }
}

/// Frozen per-entity representations used throughout an evaluation run. Text
/// representations are built once from the checkpointed parameters; in
/// structure-only mode they are aliases of the structural ones.
#[derive(Clone, Debug)]
pub struct EvalContext<T> {
    pub e_k: Vec<Vector<T>>,
    pub e_s: Vec<Vector<T>>,
    pub relation: Vec<Vector<T>>,
    pub norm: NormKind,
}

pub fn build_eval_context<T: Scalar>(
    params: &ModelParams<T>,
    corpus: &ReferenceCorpus,
) -> Result<EvalContext<T>> {
    params.validate()?;
    let e_k = params.entity_struct.clone();
    let e_s = match params.hyper.energy_mode {
        EnergyMode::TransEOnly => e_k.clone(),
        EnergyMode::Full => {
            let att = params.hyper.attention();
            (0..params.n_entities())
                .into_par_iter()
                .map(|e| {
                    build_text_representation(
                        EntityId(e as u32),
                        params,
                        corpus,
                        &att,
                        params.hyper.aggregation,
                    )
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(EvalContext {
        e_k,
        e_s,
        relation: params.relation.clone(),
        norm: params.hyper.norm,
    })
}

impl<T: Scalar> EvalContext<T> {
    pub fn n_entities(&self) -> usize {
        self.e_k.len()
    }

    fn head_rep(&self, combo: ComboKind, e: EntityId) -> &Vector<T> {
        if combo.head_is_text() {
            &self.e_s[e.index()]
        } else {
            &self.e_k[e.index()]
        }
    }

    fn tail_rep(&self, combo: ComboKind, e: EntityId) -> &Vector<T> {
        if combo.tail_is_text() {
            &self.e_s[e.index()]
        } else {
            &self.e_k[e.index()]
        }
    }

    /// `‖head_rep + r − tail_rep‖` for one representation combination.
    pub fn combo_energy(&self, combo: ComboKind, t: &Triple) -> Result<T> {
        energy_term(
            self.head_rep(combo, t.head),
            &self.relation[t.relation.index()],
            self.tail_rep(combo, t.tail),
            self.norm,
        )
    }
}

// ---------------------------------------------------------------------------
// Triple classification
// ---------------------------------------------------------------------------

/// One classification instance: a triple scored under one combo, labeled
/// positive (a real triple) or negative (a corrupted one).
#[derive(Clone, Copy, Debug)]
pub struct TcInstance<T> {
    pub relation: RelationId,
    pub combo: ComboKind,
    pub score: T,
    pub positive: bool,
}

/// Per-relation classification thresholds with a global fallback. A triple is
/// predicted positive iff its energy is strictly below the threshold.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdTable<T> {
    pub per_relation: BTreeMap<u32, T>,
    pub global: T,
}

impl<T: Scalar> ThresholdTable<T> {
    pub fn threshold_for(&self, r: RelationId) -> T {
        self.per_relation.get(&r.0).copied().unwrap_or(self.global)
    }
}

/// Expands each triple into four combo instances plus four matched negatives.
///
/// Each negative corrupts the head or the tail (one fair draw), replacing it
/// with a uniformly drawn entity until the corrupted triple is not a known
/// true triple and the replacement differs from the original; the corrupted
/// entity is scored with the same representation type the combo assigns to
/// that slot. Draw order: per triple, combos in [`ComboKind::ALL`] order;
/// per attempt one side draw then one entity draw.
pub fn make_tc_instances<T: Scalar>(
    ctx: &EvalContext<T>,
    kg: &KnowledgeGraph,
    triples: &[Triple],
    rng: &mut impl Rng,
) -> Result<Vec<TcInstance<T>>> {
    let n = ctx.n_entities() as u32;
    if n < 2 {
        return Err(Error::Infeasible(
            "triple classification needs at least two entities".into(),
        ));
    }
    let mut out = Vec::with_capacity(triples.len() * 8);
    for t in triples {
        for combo in ComboKind::ALL {
            out.push(TcInstance {
                relation: t.relation,
                combo,
                score: ctx.combo_energy(combo, t)?,
                positive: true,
            });
            let mut negative = None;
            for _ in 0..100 {
                let corrupt_head = rng.random_range(0..2u8) == 0;
                let replacement = EntityId(rng.random_range(0..n));
                let candidate = if corrupt_head {
                    Triple { head: replacement, ..*t }
                } else {
                    Triple { tail: replacement, ..*t }
                };
                let original = if corrupt_head { t.head } else { t.tail };
                if replacement != original && !kg.is_true_triple(&candidate) {
                    negative = Some(candidate);
                    break;
                }
            }
            let negative = negative.ok_or_else(|| {
                Error::Sampling(format!(
                    "no valid corruption for triple ({}, {}, {}) in 100 attempts",
                    t.head.0, t.relation.0, t.tail.0
                ))
            })?;
            out.push(TcInstance {
                relation: t.relation,
                combo,
                score: ctx.combo_energy(combo, &negative)?,
                positive: false,
            });
        }
    }
    Ok(out)
}

/// Best accuracy and lowest such threshold for one pooled instance list.
/// Candidates are the midpoints between adjacent distinct scores plus one
/// sentinel below the minimum and one above the maximum.
fn sweep_threshold<T: Scalar>(instances: &[(T, bool)]) -> (T, usize) {
    let mut sorted: Vec<(T, bool)> = instances.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut distinct: Vec<T> = Vec::new();
    for &(s, _) in &sorted {
        if distinct.last().map_or(true, |&d| d != s) {
            distinct.push(s);
        }
    }
    let total_neg = sorted.iter().filter(|&&(_, p)| !p).count();
    let one = T::one();
    let two = real::<T>(2.0);
    // Walking boundaries between distinct values: boundary i puts the first
    // i distinct values below the threshold.
    let mut best_correct = 0usize;
    let mut best_delta = distinct.first().map_or(T::zero(), |&s| s - one);
    let mut pos_below = 0usize;
    let mut neg_below = 0usize;
    let mut cursor = 0usize;
    for boundary in 0..=distinct.len() {
        if boundary > 0 {
            let value = distinct[boundary - 1];
            while cursor < sorted.len() && sorted[cursor].0 == value {
                if sorted[cursor].1 {
                    pos_below += 1;
                } else {
                    neg_below += 1;
                }
                cursor += 1;
            }
        }
        let delta = if boundary == 0 {
            distinct[0] - one
        } else if boundary == distinct.len() {
            distinct[boundary - 1] + one
        } else {
            (distinct[boundary - 1] + distinct[boundary]) / two
        };
        let correct = pos_below + (total_neg - neg_below);
        if correct > best_correct {
            best_correct = correct;
            best_delta = delta;
        }
    }
    (best_delta, best_correct)
}

/// Fits the per-relation thresholds (and the global fallback) by maximizing
/// classification accuracy over the given instances, pooling all four combos
/// per relation. Ties between equally accurate thresholds go to the lowest.
pub fn fit_thresholds<T: Scalar>(instances: &[TcInstance<T>]) -> Result<ThresholdTable<T>> {
    if instances.is_empty() {
        return Err(Error::Infeasible(
            "cannot fit thresholds on zero instances".into(),
        ));
    }
    let all: Vec<(T, bool)> = instances.iter().map(|i| (i.score, i.positive)).collect();
    let (global, _) = sweep_threshold(&all);
    let mut grouped: BTreeMap<u32, Vec<(T, bool)>> = BTreeMap::new();
    for i in instances {
        grouped
            .entry(i.relation.0)
            .or_default()
            .push((i.score, i.positive));
    }
    let per_relation = grouped
        .into_iter()
        .map(|(r, list)| (r, sweep_threshold(&list).0))
        .collect();
    Ok(ThresholdTable {
        per_relation,
        global,
    })
}

/// Fraction of instances classified correctly under the table, in percent.
pub fn classification_accuracy<T: Scalar>(
    instances: &[TcInstance<T>],
    table: &ThresholdTable<T>,
) -> f64 {
    if instances.is_empty() {
        return 0.0;
    }
    let correct = instances
        .iter()
        .filter(|i| (i.score < table.threshold_for(i.relation)) == i.positive)
        .count();
    100.0 * correct as f64 / instances.len() as f64
}

/// Classification accuracy on `test`, expanding each triple into the four
/// combo instances with matched negatives and applying the fitted thresholds.
pub fn triple_classification<T: Scalar>(
    ctx: &EvalContext<T>,
    kg: &KnowledgeGraph,
    test: &[Triple],
    table: &ThresholdTable<T>,
    rng: &mut impl Rng,
) -> Result<f64> {
    let instances = make_tc_instances(ctx, kg, test, rng)?;
    Ok(classification_accuracy(&instances, table))
}

// ---------------------------------------------------------------------------
// Link prediction
// ---------------------------------------------------------------------------

/// Which slot of the triple is being predicted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Head,
    Tail,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Head, Side::Tail];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Head => "head",
            Side::Tail => "tail",
        }
    }
}

/// The true entity's rank in the structure-candidate list (`a`) and the
/// text-candidate list (`b`), raw and filtered.
#[derive(Clone, Copy, Debug)]
pub struct SideRanks {
    pub raw_a: usize,
    pub raw_b: usize,
    pub filtered_a: usize,
    pub filtered_b: usize,
}

impl SideRanks {
    pub fn raw_mean(&self) -> f64 {
        (self.raw_a + self.raw_b) as f64 / 2.0
    }

    pub fn filtered_mean(&self) -> f64 {
        (self.filtered_a + self.filtered_b) as f64 / 2.0
    }

    pub fn raw_hit10(&self) -> bool {
        self.raw_a <= 10 || self.raw_b <= 10
    }

    pub fn filtered_hit10(&self) -> bool {
        self.filtered_a <= 10 || self.filtered_b <= 10
    }
}

/// Ranks the true entity of `triple` on `side` against every candidate.
///
/// List `a` scores each candidate with its structural representation, list
/// `b` with its text representation; the fixed side always uses its
/// structural representation. Rank is 1 plus the number of candidates that
/// score strictly lower, plus those that tie with a smaller entity id. The
/// filtered variant skips candidates that form a known true triple.
pub fn side_ranks<T: Scalar>(
    ctx: &EvalContext<T>,
    kg: &KnowledgeGraph,
    triple: &Triple,
    side: Side,
) -> Result<SideRanks> {
    let r = &ctx.relation[triple.relation.index()];
    let true_id = match side {
        Side::Head => triple.head,
        Side::Tail => triple.tail,
    };
    let score = |cand: &Vector<T>| -> Result<T> {
        match side {
            Side::Head => energy_term(cand, r, &ctx.e_k[triple.tail.index()], ctx.norm),
            Side::Tail => energy_term(&ctx.e_k[triple.head.index()], r, cand, ctx.norm),
        }
    };
    let true_a = score(&ctx.e_k[true_id.index()])?;
    let true_b = score(&ctx.e_s[true_id.index()])?;
    let mut ranks = SideRanks {
        raw_a: 1,
        raw_b: 1,
        filtered_a: 1,
        filtered_b: 1,
    };
    for e in 0..ctx.n_entities() as u32 {
        let cand = EntityId(e);
        if cand == true_id {
            continue;
        }
        let corrupted = match side {
            Side::Head => Triple { head: cand, ..*triple },
            Side::Tail => Triple { tail: cand, ..*triple },
        };
        let known_true = kg.is_true_triple(&corrupted);
        let s_a = score(&ctx.e_k[cand.index()])?;
        let s_b = score(&ctx.e_s[cand.index()])?;
        let beats_a = s_a < true_a || (s_a == true_a && cand < true_id);
        let beats_b = s_b < true_b || (s_b == true_b && cand < true_id);
        if beats_a {
            ranks.raw_a += 1;
            if !known_true {
                ranks.filtered_a += 1;
            }
        }
        if beats_b {
            ranks.raw_b += 1;
            if !known_true {
                ranks.filtered_b += 1;
            }
        }
    }
    Ok(ranks)
}

/// How often relation instances repeat heads or tails, computed on train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationCategory {
    #[serde(rename = "1-to-1")]
    OneToOne,
    #[serde(rename = "1-to-N")]
    OneToMany,
    #[serde(rename = "N-to-1")]
    ManyToOne,
    #[serde(rename = "N-to-N")]
    ManyToMany,
}

impl RelationCategory {
    pub const ALL: [RelationCategory; 4] = [
        RelationCategory::OneToOne,
        RelationCategory::OneToMany,
        RelationCategory::ManyToOne,
        RelationCategory::ManyToMany,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationCategory::OneToOne => "1-to-1",
            RelationCategory::OneToMany => "1-to-N",
            RelationCategory::ManyToOne => "N-to-1",
            RelationCategory::ManyToMany => "N-to-N",
        }
    }
}

/// Categorizes every relation by its mean heads-per-tail (hpt) and
/// tails-per-head (tph) on the train split, split at 1.5: 1-to-1 when both
/// are small, 1-to-N when only tph is large, N-to-1 when only hpt is large,
/// N-to-N otherwise. Relations without train triples default to 1-to-1.
pub fn categorize_relations(kg: &KnowledgeGraph) -> BTreeMap<u32, RelationCategory> {
    use std::collections::HashSet;
    let mut triples: BTreeMap<u32, usize> = BTreeMap::new();
    let mut heads: BTreeMap<u32, HashSet<u32>> = BTreeMap::new();
    let mut tails: BTreeMap<u32, HashSet<u32>> = BTreeMap::new();
    for t in kg.train() {
        *triples.entry(t.relation.0).or_default() += 1;
        heads.entry(t.relation.0).or_default().insert(t.head.0);
        tails.entry(t.relation.0).or_default().insert(t.tail.0);
    }
    (0..kg.n_relations() as u32)
        .map(|r| {
            let n = triples.get(&r).copied().unwrap_or(0) as f64;
            let (hpt, tph) = if n == 0.0 {
                (0.0, 0.0)
            } else {
                (
                    n / tails[&r].len() as f64,
                    n / heads[&r].len() as f64,
                )
            };
            let cat = match (hpt < 1.5, tph < 1.5) {
                (true, true) => RelationCategory::OneToOne,
                (true, false) => RelationCategory::OneToMany,
                (false, true) => RelationCategory::ManyToOne,
                (false, false) => RelationCategory::ManyToMany,
            };
            (r, cat)
        })
        .collect()
}

/// One cell of the side × category Hits@10 grid.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CategoryRow {
    pub side: Side,
    pub category: RelationCategory,
    pub count: usize,
    pub raw_hits10: f64,
    pub filtered_hits10: f64,
}

/// Link-prediction metrics: mean rank and Hits@10 (percent), raw and
/// filtered, plus the per-category grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LpResult {
    pub raw_mean_rank: f64,
    pub filtered_mean_rank: f64,
    pub raw_hits10: f64,
    pub filtered_hits10: f64,
    pub by_category: Vec<CategoryRow>,
}

/// Full link-prediction pass over `test`: for every triple, rank the true
/// head and the true tail against all candidates in both representation
/// lists. Mean rank averages the two list ranks; Hits@10 counts a hit when
/// either list places the true entity in its top 10.
pub fn link_prediction<T: Scalar>(
    ctx: &EvalContext<T>,
    kg: &KnowledgeGraph,
    test: &[Triple],
) -> Result<LpResult> {
    if test.is_empty() {
        return Err(Error::Infeasible(
            "link prediction needs a nonempty test set".into(),
        ));
    }
    let per_triple: Vec<(SideRanks, SideRanks)> = test
        .par_iter()
        .map(|t| {
            Ok((
                side_ranks(ctx, kg, t, Side::Head)?,
                side_ranks(ctx, kg, t, Side::Tail)?,
            ))
        })
        .collect::<Result<_>>()?;

    let categories = categorize_relations(kg);
    let mut raw_rank_sum = 0.0;
    let mut filtered_rank_sum = 0.0;
    let mut raw_hits = 0usize;
    let mut filtered_hits = 0usize;
    #[derive(Default, Clone, Copy)]
    struct Cell {
        count: usize,
        raw_hits: usize,
        filtered_hits: usize,
    }
    let mut grid: BTreeMap<(usize, usize), Cell> = BTreeMap::new();
    for (t, (head_ranks, tail_ranks)) in test.iter().zip(&per_triple) {
        let cat = categories[&t.relation.0];
        let cat_idx = RelationCategory::ALL.iter().position(|&c| c == cat).unwrap();
        for (side_idx, ranks) in [head_ranks, tail_ranks].into_iter().enumerate() {
            raw_rank_sum += ranks.raw_mean();
            filtered_rank_sum += ranks.filtered_mean();
            raw_hits += ranks.raw_hit10() as usize;
            filtered_hits += ranks.filtered_hit10() as usize;
            let cell = grid.entry((side_idx, cat_idx)).or_default();
            cell.count += 1;
            cell.raw_hits += ranks.raw_hit10() as usize;
            cell.filtered_hits += ranks.filtered_hit10() as usize;
        }
    }
    let n_predictions = (test.len() * 2) as f64;
    let by_category = Side::BOTH
        .iter()
        .enumerate()
        .flat_map(|(side_idx, &side)| {
            let grid = &grid;
            RelationCategory::ALL
                .iter()
                .enumerate()
                .map(move |(cat_idx, &category)| {
                    let cell = grid.get(&(side_idx, cat_idx)).copied().unwrap_or_default();
                    let pct = |hits: usize| {
                        if cell.count == 0 {
                            0.0
                        } else {
                            100.0 * hits as f64 / cell.count as f64
                        }
                    };
                    CategoryRow {
                        side,
                        category,
                        count: cell.count,
                        raw_hits10: pct(cell.raw_hits),
                        filtered_hits10: pct(cell.filtered_hits),
                    }
                })
        })
        .collect();
    Ok(LpResult {
        raw_mean_rank: raw_rank_sum / n_predictions,
        filtered_mean_rank: filtered_rank_sum / n_predictions,
        raw_hits10: 100.0 * raw_hits as f64 / n_predictions,
        filtered_hits10: 100.0 * filtered_hits as f64 / n_predictions,
        by_category,
    })
}

/// Filtered Hits@10 (percent) over both sides of `triples` — the training
/// loop's validation metric.
pub fn filtered_hits10<T: Scalar>(
    ctx: &EvalContext<T>,
    kg: &KnowledgeGraph,
    triples: &[Triple],
) -> Result<f64> {
    if triples.is_empty() {
        return Ok(0.0);
    }
    let hits: usize = triples
        .par_iter()
        .map(|t| {
            let head = side_ranks(ctx, kg, t, Side::Head)?;
            let tail = side_ranks(ctx, kg, t, Side::Tail)?;
            Ok(head.filtered_hit10() as usize + tail.filtered_hit10() as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(100.0 * hits as f64 / (triples.len() * 2) as f64)
}
