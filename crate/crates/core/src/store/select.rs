use globset::{GlobBuilder, GlobMatcher};

use super::{Checkpoint, StoreError, TensorRecord};

/// A compiled tensor-name glob (`*`, `?`, `[...]`, `{a,b}`). `*` crosses
/// dots, so `*q_proj*` matches every layer.
#[derive(Clone, Debug)]
pub struct TensorPattern {
    source: String,
    matcher: GlobMatcher,
}

impl TensorPattern {
    pub fn new(pattern: &str) -> Result<Self, StoreError> {
        if pattern.is_empty() {
            return Err(StoreError::InvalidPattern {
                pattern: pattern.to_string(),
                reason: "empty pattern".into(),
            });
        }
        let glob = GlobBuilder::new(pattern)
            .literal_separator(false)
            .backslash_escape(true)
            .build()
            .map_err(|e| StoreError::InvalidPattern {
                pattern: pattern.to_string(),
                reason: e.kind().to_string(),
            })?;
        Ok(Self {
            source: pattern.to_string(),
            matcher: glob.compile_matcher(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn is_match(&self, name: &str) -> bool {
        self.matcher.is_match(name)
    }
}

/// Result of [`select_tensors`].
#[derive(Debug)]
pub struct Selection<'a> {
    /// Matching 2-D tensors, in checkpoint order.
    pub matched: Vec<&'a TensorRecord>,
    /// Names that matched the pattern but are not matrices.
    pub skipped: Vec<String>,
}

pub fn select_tensors<'a>(ckpt: &'a Checkpoint, pattern: &str) -> Result<Selection<'a>, StoreError> {
    let pat = TensorPattern::new(pattern)?;
    let mut matched = Vec::new();
    let mut skipped = Vec::new();
    for rec in ckpt.records() {
        if !pat.is_match(&rec.name) {
            continue;
        }
        if rec.matrix_dims().is_some() {
            matched.push(rec);
        } else {
            skipped.push(rec.name.clone());
        }
    }
    Ok(Selection { matched, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::DType;
    use std::collections::BTreeMap;

    fn two_layer() -> Checkpoint {
        let mut recs = Vec::new();
        for l in 0..2 {
            for p in ["q_proj", "k_proj"] {
                recs.push(
                    TensorRecord::new(
                        format!("model.layers.{l}.self_attn.{p}.weight"),
                        vec![2, 2],
                        DType::F32,
                        vec![0.0; 4],
                    )
                    .unwrap(),
                );
            }
            recs.push(
                TensorRecord::new(format!("model.layers.{l}.self_attn.q_proj.bias"), vec![2], DType::F32, vec![0.0; 2])
                    .unwrap(),
            );
        }
        Checkpoint::new(recs, BTreeMap::new()).unwrap()
    }

    #[test]
    fn q_proj_selects_two_and_skips_bias() {
        let ck = two_layer();
        let sel = select_tensors(&ck, "*self_attn.q_proj*").unwrap();
        assert_eq!(sel.matched.len(), 2);
        assert_eq!(sel.skipped.len(), 2);
        assert_eq!(sel.matched[0].name, "model.layers.0.self_attn.q_proj.weight");
    }

    #[test]
    fn star_selects_all_matrices() {
        let ck = two_layer();
        assert_eq!(select_tensors(&ck, "*").unwrap().matched.len(), 4);
    }

    #[test]
    fn alternation_and_classes() {
        let ck = two_layer();
        assert_eq!(select_tensors(&ck, "*.{q,k}_proj.weight").unwrap().matched.len(), 4);
        assert_eq!(select_tensors(&ck, "*layers.[1].*").unwrap().matched.len(), 2);
    }

    #[test]
    fn invalid_pattern() {
        let ck = two_layer();
        assert!(matches!(
            select_tensors(&ck, "*[unclosed"),
            Err(StoreError::InvalidPattern { .. })
        ));
        assert!(select_tensors(&ck, "").is_err());
    }
}
