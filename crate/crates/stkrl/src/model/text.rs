use crate::attention::{
    aggregate_attention, aggregate_mean, attention_score, rank_scored, select_top_m,
    take_selected, AttentionConfig, ScoredSentence,
};
use crate::encoders::encode_sentence;
use crate::error::Result;
use crate::kg::{EntityId, ReferenceCorpus};
use crate::model::hyper::AggregationMode;
use crate::model::params::ModelParams;
use crate::numerics::Vector;
use crate::scalar::Scalar;

/// Encodes every reference sentence of `entity` with the shared encoder and
/// scores it against the entity's structural embedding.
pub fn score_sentences<T: Scalar>(
    entity: EntityId,
    params: &ModelParams<T>,
    corpus: &ReferenceCorpus,
) -> Result<Vec<ScoredSentence<T>>> {
    let e_k = params.entity(entity);
    let mut out = Vec::new();
    for (index, sentence) in corpus.sentences(entity).iter().enumerate() {
        let (repr, _) = encode_sentence(
            &params.encoder,
            params.hyper.encoder,
            sentence,
            &params.words,
            &params.positions,
        )?;
        let score = attention_score(&repr, e_k)?;
        out.push(ScoredSentence { index, repr, score });
    }
    Ok(out)
}

/// The entity's text-based representation: encode all sentences, then either
/// attention-aggregate the top-m or take the plain mean. Entities without
/// sentences fall back to their structural embedding.
pub fn build_text_representation<T: Scalar>(
    entity: EntityId,
    params: &ModelParams<T>,
    corpus: &ReferenceCorpus,
    att: &AttentionConfig,
    mode: AggregationMode,
) -> Result<Vector<T>> {
    let scored = score_sentences(entity, params, corpus)?;
    if scored.is_empty() {
        return Ok(params.entity(entity).clone());
    }
    match mode {
        AggregationMode::TopM => {
            let chosen = select_top_m(&scored, att.top_m);
            let selected = take_selected(&scored, &chosen);
            aggregate_attention(&selected, att.epsilon)
        }
        AggregationMode::Mean => {
            let reprs: Vec<Vector<T>> = scored.into_iter().map(|s| s.repr).collect();
            aggregate_mean(&reprs)
        }
    }
}

/// Every sentence of `entity` ranked by attention score, descending (ties to
/// the lower index). Entities without sentences yield an empty list.
pub fn rank_sentences<T: Scalar>(
    entity: EntityId,
    params: &ModelParams<T>,
    corpus: &ReferenceCorpus,
) -> Result<Vec<(usize, T)>> {
    let scored = score_sentences(entity, params, corpus)?;
    Ok(rank_scored(&scored))
}
