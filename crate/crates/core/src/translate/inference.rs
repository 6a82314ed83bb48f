//! Deployment path: translation from a serialized model with nothing but
//! forward kernels loaded — no tape, no gradients.

use std::path::Path;

use super::batched::{translate_batch, ThroughputStats};
use super::beam::{BeamConfig, ScoredHypothesis};
use crate::error::{FormatResult, ModelResult};
use crate::format::{load_model, SavedModel};
use crate::model::EagerBackend;
use crate::textpipe::{detokenize, split_factors, tokenize, undo_bpe, BpeModel, EOS};

pub struct InferenceModel {
    saved: SavedModel,
    backend: EagerBackend,
}

/// Load config and parameters for forward-only use.
pub fn load_for_inference(path: &Path) -> FormatResult<InferenceModel> {
    let saved = load_model(path)?;
    let backend = EagerBackend::new(saved.config.clone(), &saved.params);
    Ok(InferenceModel { saved, backend })
}

impl InferenceModel {
    pub fn from_saved(saved: SavedModel) -> Self {
        let backend = EagerBackend::new(saved.config.clone(), &saved.params);
        InferenceModel { saved, backend }
    }

    pub fn saved(&self) -> &SavedModel {
        &self.saved
    }

    pub fn backend(&self) -> &EagerBackend {
        &self.backend
    }

    /// Map one raw text line to model ids (tokenize, optional BPE, factor
    /// annotations split off when the model is factored).
    pub fn line_to_ids(&self, line: &str, bpe: Option<&BpeModel>) -> (Vec<u32>, Vec<Vec<u32>>) {
        let n_factors = self.saved.config.factors.len();
        let mut ids = Vec::new();
        let mut factor_ids: Vec<Vec<u32>> = vec![Vec::new(); n_factors];
        for token in tokenize(line) {
            let (surface, annot) = if n_factors > 0 {
                split_factors(&token)
            } else {
                (token, Vec::new())
            };
            let pieces = match bpe {
                Some(model) => model.apply(&surface),
                None => vec![surface],
            };
            for piece in pieces {
                ids.push(self.saved.src_vocab.id(&piece));
                for j in 0..n_factors {
                    let value = annot.get(j).map(String::as_str).unwrap_or("");
                    factor_ids[j].push(self.saved.factor_vocabs[j].id(value));
                }
            }
        }
        (ids, factor_ids)
    }

    /// Render a finished hypothesis back to text. With `keep_tokens` the
    /// subword/tokenized form is emitted; otherwise BPE pieces are merged
    /// and the joiner markers resolved.
    pub fn render(&self, hyp: &ScoredHypothesis, keep_tokens: bool) -> String {
        let tokens: Vec<String> = hyp
            .content_tokens()
            .iter()
            .map(|&id| self.saved.tgt_vocab.token(id).to_string())
            .collect();
        if keep_tokens {
            tokens.join(" ")
        } else {
            detokenize(&undo_bpe(&tokens))
        }
    }

    /// Translate raw text lines end to end.
    pub fn translate_lines(
        &self,
        lines: &[String],
        beam: &BeamConfig,
        batch_size: usize,
        bpe: Option<&BpeModel>,
    ) -> ModelResult<(Vec<Vec<ScoredHypothesis>>, ThroughputStats)> {
        let mut sentences = Vec::with_capacity(lines.len());
        let mut factors = Vec::with_capacity(lines.len());
        for line in lines {
            let (ids, fids) = self.line_to_ids(line, bpe);
            sentences.push(ids);
            factors.push(fids);
        }
        let factors_arg: &[Vec<Vec<u32>>] =
            if self.saved.config.factors.is_empty() { &[] } else { &factors };
        translate_batch(&self.backend, &sentences, factors_arg, beam, batch_size)
    }
}

/// True when a hypothesis is EOS-terminated with no specials inside.
pub fn is_well_formed(hyp: &ScoredHypothesis) -> bool {
    hyp.tokens.last() == Some(&EOS)
        && hyp.content_tokens().iter().all(|&t| t != crate::textpipe::PAD && t != crate::textpipe::BOS && t != EOS)
}
