//! Checkpoint surgery: rebuild weight matrices from the singular directions
//! of one checkpoint and the singular values of another.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{compute_svd, reconstruct_with, LinalgError, SvdFactors};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::spectral::ceil_fraction;
use crate::store::{Checkpoint, StoreError, TensorPattern, TensorRecord};

/// Attention q/k/v/o and MLP up/gate/down projections.
pub const DEFAULT_PATTERN: &str = "*.{self_attn.q_proj,self_attn.k_proj,self_attn.v_proj,self_attn.o_proj,mlp.up_proj,mlp.gate_proj,mlp.down_proj}.weight";

/// Relative gap below which neighbouring singular values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SurgeryError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("rank scope resolves to head {head} + tail {tail} > rank {rank}")]
    RankOutOfRange { head: usize, tail: usize, rank: usize },
    #[error("tensor {tensor}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        tensor: String,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor {tensor}: not a 2-D matrix")]
    NotMatrix { tensor: String },
    #[error("tensor {tensor}: {source}")]
    Linalg {
        tensor: String,
        #[source]
        source: LinalgError,
    },
    #[error("{} tensor(s) failed:\n{}", .0.len(), format_failures(.0))]
    Aggregate(Vec<TensorFailure>),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorFailure {
    pub tensor: String,
    pub reason: String,
}

fn format_failures(f: &[TensorFailure]) -> String {
    f.iter()
        .map(|x| format!("  {}: {}", x.tensor, x.reason))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Which of the two input checkpoints a factor is taken from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Base,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankKind {
    Count,
    Fraction,
    Full,
    None,
}

/// Which singular indices (ordered by singular value) are transplanted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankScope {
    pub kind: RankKind,
    #[serde(default)]
    pub head: f64,
    #[serde(default)]
    pub tail: f64,
}

impl RankScope {
    pub fn full() -> Self {
        Self {
            kind: RankKind::Full,
            head: 0.0,
            tail: 0.0,
        }
    }

    pub fn none() -> Self {
        Self {
            kind: RankKind::None,
            head: 0.0,
            tail: 0.0,
        }
    }

    pub fn count(head: usize, tail: usize) -> Self {
        Self {
            kind: RankKind::Count,
            head: head as f64,
            tail: tail as f64,
        }
    }

    pub fn fraction(head: f64, tail: f64) -> Self {
        Self {
            kind: RankKind::Fraction,
            head,
            tail,
        }
    }
}

/// Resolves a scope against rank `r` into `(k_head, k_tail)`.
pub fn resolve_rank_scope(scope: &RankScope, r: usize) -> Result<(usize, usize), SurgeryError> {
    let (head, tail) = match scope.kind {
        RankKind::Full => (r, 0),
        RankKind::None => (0, 0),
        RankKind::Count => {
            let as_count = |x: f64, what: &str| {
                if x < 0.0 || x.fract() != 0.0 || !x.is_finite() {
                    Err(SurgeryError::Plan(format!("{what} count {x} is not a non-negative integer")))
                } else {
                    Ok(x as usize)
                }
            };
            (as_count(scope.head, "head")?, as_count(scope.tail, "tail")?)
        }
        RankKind::Fraction => {
            for x in [scope.head, scope.tail] {
                if !(0.0..=1.0).contains(&x) {
                    return Err(SurgeryError::Plan(format!("fraction {x} outside [0, 1]")));
                }
            }
            (ceil_fraction(scope.head, r), ceil_fraction(scope.tail, r))
        }
    };
    if head + tail > r {
        return Err(SurgeryError::RankOutOfRange { head, tail, rank: r });
    }
    Ok((head, tail))
}

/// Half-open layer index range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerRange {
    pub start: usize,
    pub end: usize,
}

/// Union of layer ranges, written `A..B[,C..D]` (a bare `K` means `K..K+1`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LayerScope(pub Vec<LayerRange>);

impl LayerScope {
    pub fn contains(&self, layer: usize) -> bool {
        self.0.iter().any(|r| (r.start..r.end).contains(&layer))
    }

    pub fn max_end(&self) -> usize {
        self.0.iter().map(|r| r.end).max().unwrap_or(0)
    }
}

impl FromStr for LayerScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim) {
            let parse = |x: &str| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|_| format!("bad layer index {x:?} in {s:?}"))
            };
            let range = match part.split_once("..") {
                Some((a, b)) => LayerRange {
                    start: parse(a)?,
                    end: parse(b)?,
                },
                None => {
                    let k = parse(part)?;
                    LayerRange { start: k, end: k + 1 }
                }
            };
            if range.start >= range.end {
                return Err(format!("empty layer range {part:?}"));
            }
            out.push(range);
        }
        Ok(LayerScope(out))
    }
}

impl TryFrom<String> for LayerScope {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<LayerScope> for String {
    fn from(l: LayerScope) -> String {
        l.to_string()
    }
}

impl fmt::Display for LayerScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|r| format!("{}..{}", r.start, r.end)).collect();
        f.write_str(&parts.join(","))
    }
}

fn default_pattern() -> String {
    DEFAULT_PATTERN.to_string()
}

/// A complete surgery recipe; serializes to the plan-file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurgeryPlan {
    pub direction_source: Role,
    pub value_source: Role,
    pub rank: RankScope,
    /// `None` means every layer.
    #[serde(default)]
    pub layers: Option<LayerScope>,
    #[serde(default = "default_pattern")]
    pub pattern: String,
    #[serde(default)]
    pub include_untied: bool,
}

impl SurgeryPlan {
    /// Base directions with target values over the full rank: undoes the
    /// rotation of singular vectors while keeping fine-tuned singular values.
    pub fn restore_directions() -> Self {
        Self {
            direction_source: Role::Base,
            value_source: Role::Target,
            rank: RankScope::full(),
            layers: None,
            pattern: default_pattern(),
            include_untied: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SurgeryError> {
        serde_json::from_str(text).map_err(|e| SurgeryError::Plan(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }
}

/// Embedding and output-head matrices, which are treated separately.
pub fn is_untied(name: &str) -> bool {
    name.contains("embed_tokens") || name.contains("lm_head")
}

/// Index blocks of (near-)equal singular values in either spectrum.
fn tie_blocks<T: Real>(a: &[T], b: &[T]) -> Vec<usize> {
    let r = a.len();
    let tol_a = a.first().copied().unwrap_or_else(T::zero) * T::lit(TIE_TOLERANCE);
    let tol_b = b.first().copied().unwrap_or_else(T::zero) * T::lit(TIE_TOLERANCE);
    let mut block = vec![0usize; r];
    for i in 1..r {
        let tied = (a[i - 1] - a[i]).abs() <= tol_a || (b[i - 1] - b[i]).abs() <= tol_b;
        block[i] = if tied { block[i - 1] } else { block[i - 1] + 1 };
    }
    block
}

/// The transplanted index set: first `k_head` and last `k_tail` indices,
/// widened so that no block of tied singular values is split.
pub fn transplant_set<T: Real>(dir_sigma: &[T], val_sigma: &[T], k_head: usize, k_tail: usize) -> Vec<bool> {
    let r = dir_sigma.len();
    let mut chosen: Vec<bool> = (0..r).map(|i| i < k_head || i >= r - k_tail).collect();
    if k_head == 0 && k_tail == 0 {
        return chosen;
    }
    let block = tie_blocks(dir_sigma, val_sigma);
    let nblocks = block.last().map_or(0, |b| b + 1);
    let mut touched = vec![false; nblocks];
    for i in 0..r {
        if chosen[i] {
            touched[block[i]] = true;
        }
    }
    for i in 0..r {
        chosen[i] = touched[block[i]];
    }
    chosen
}

/// `Σ_{i∈S} u_iᵈⁱʳ σ_iᵛᵃˡ v_iᵈⁱʳᵀ + Σ_{i∉S} u_iᵛᵃˡ σ_iᵛᵃˡ v_iᵛᵃˡᵀ` on
/// sign-canonical factors.
pub fn merge_factors<T: Real>(dir: &SvdFactors<T>, val: &SvdFactors<T>, k_head: usize, k_tail: usize) -> Matrix<T> {
    let chosen = transplant_set(&dir.sigma, &val.sigma, k_head, k_tail);
    let mut u = val.u.clone();
    let mut v = val.v.clone();
    for (j, &take) in chosen.iter().enumerate() {
        if take {
            u.set_column(j, &dir.u.column(j));
            v.set_column(j, &dir.v.column(j));
        }
    }
    reconstruct_with(&u, &val.sigma, &v)
}

fn matrix_of(rec: &TensorRecord) -> Result<Matrix<f64>, SurgeryError> {
    rec.to_matrix().ok_or_else(|| SurgeryError::NotMatrix {
        tensor: rec.name.clone(),
    })
}

fn svd_of(rec: &TensorRecord) -> Result<SvdFactors<f64>, SurgeryError> {
    compute_svd(&matrix_of(rec)?).map_err(|source| SurgeryError::Linalg {
        tensor: rec.name.clone(),
        source,
    })
}

fn same_shape(a: &TensorRecord, b: &TensorRecord) -> Result<(), SurgeryError> {
    if a.shape != b.shape {
        return Err(SurgeryError::ShapeMismatch {
            tensor: a.name.clone(),
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Ok(())
}

/// Directions from `dir_w` on the first `k_head` / last `k_tail` indices,
/// everything else (and every singular value) from `val_w`. The result
/// carries `val_w`'s name and dtype.
pub fn merge_spectral(dir_w: &TensorRecord, val_w: &TensorRecord, k_head: usize, k_tail: usize) -> Result<TensorRecord, SurgeryError> {
    same_shape(dir_w, val_w)?;
    let (m, n) = val_w.matrix_dims().ok_or_else(|| SurgeryError::NotMatrix {
        tensor: val_w.name.clone(),
    })?;
    let r = m.min(n);
    if k_head + k_tail > r {
        return Err(SurgeryError::RankOutOfRange {
            head: k_head,
            tail: k_tail,
            rank: r,
        });
    }
    let val = svd_of(val_w)?;
    let merged = if k_head == 0 && k_tail == 0 {
        val.reconstruct()
    } else {
        merge_factors(&svd_of(dir_w)?, &val, k_head, k_tail)
    };
    Ok(TensorRecord::from_matrix(val_w.name.clone(), &merged, val_w.source_dtype))
}

/// `U · diag(σ_source) · Vᵀ` with `U`, `V` from `dir_val_w`.
pub fn restore_values(dir_val_w: &TensorRecord, sigma_source: &TensorRecord) -> Result<TensorRecord, SurgeryError> {
    same_shape(dir_val_w, sigma_source)?;
    let dir = svd_of(dir_val_w)?;
    let src = svd_of(sigma_source)?;
    let out = reconstruct_with(&dir.u, &src.sigma, &dir.v);
    Ok(TensorRecord::from_matrix(dir_val_w.name.clone(), &out, dir_val_w.source_dtype))
}

fn in_scope(rec: &TensorRecord, pattern: &TensorPattern, plan: &SurgeryPlan) -> bool {
    if rec.matrix_dims().is_none() {
        return false;
    }
    if is_untied(&rec.name) {
        return plan.include_untied;
    }
    if !pattern.is_match(&rec.name) {
        return false;
    }
    match (&plan.layers, rec.layer_index()) {
        (None, _) => true,
        (Some(scope), Some(l)) => scope.contains(l),
        (Some(_), None) => false,
    }
}

/// Name, merged record and the resolved rank window of one in-scope tensor.
type MergedTensor = (String, TensorRecord, (usize, usize));

/// Applies `plan` to the two checkpoints. Out-of-scope tensors, 1-D
/// tensors and (for an empty rank scope) everything else are copied from
/// `target` verbatim; in-scope matrices are replaced by [`merge_spectral`]
/// output in the target's dtype.
pub fn apply_plan(base: &Checkpoint, target: &Checkpoint, plan: &SurgeryPlan) -> Result<Checkpoint, SurgeryError> {
    let pattern = TensorPattern::new(&plan.pattern)?;
    let depth = target.depth().max(base.depth());
    if let Some(scope) = &plan.layers {
        if scope.0.is_empty() {
            return Err(SurgeryError::Plan("empty layer scope".into()));
        }
        if scope.max_end() > depth {
            return Err(SurgeryError::Plan(format!(
                "layer scope {scope} exceeds model depth {depth}"
            )));
        }
    }
    let pick = |role: Role| match role {
        Role::Base => base,
        Role::Target => target,
    };
    let dir_ck = pick(plan.direction_source);
    let val_ck = pick(plan.value_source);

    let scoped: Vec<&TensorRecord> = target.records().iter().filter(|r| in_scope(r, &pattern, plan)).collect();
    let mut failures = Vec::new();
    for rec in base.records() {
        if in_scope(rec, &pattern, plan) && target.get(&rec.name).is_none() {
            failures.push(TensorFailure {
                tensor: rec.name.clone(),
                reason: "missing from target checkpoint".into(),
            });
        }
    }
    for rec in &scoped {
        match base.get(&rec.name) {
            None => failures.push(TensorFailure {
                tensor: rec.name.clone(),
                reason: "missing from base checkpoint".into(),
            }),
            Some(b) if b.shape != rec.shape => failures.push(TensorFailure {
                tensor: rec.name.clone(),
                reason: format!("shape mismatch: base {:?} vs target {:?}", b.shape, rec.shape),
            }),
            Some(_) => {}
        }
    }
    if !failures.is_empty() {
        return Err(SurgeryError::Aggregate(failures));
    }
    if scoped.is_empty() {
        return Err(SurgeryError::Plan(format!(
            "pattern {:?} with the given layer scope matches no matrix in both checkpoints",
            plan.pattern
        )));
    }

    let results: Vec<Result<MergedTensor, TensorFailure>> = scoped
        .par_iter()
        .map(|rec| {
            let fail = |e: SurgeryError| TensorFailure {
                tensor: rec.name.clone(),
                reason: e.to_string(),
            };
            let dir = dir_ck.get(&rec.name).expect("checked above");
            let val = val_ck.get(&rec.name).expect("checked above");
            let (m, n) = rec.matrix_dims().expect("in-scope tensors are matrices");
            let ks = resolve_rank_scope(&plan.rank, m.min(n)).map_err(fail)?;
            let mut merged = if ks == (0, 0) {
                (*rec).clone()
            } else {
                merge_spectral(dir, val, ks.0, ks.1).map_err(fail)?
            };
            merged.source_dtype = rec.source_dtype;
            Ok((rec.name.clone(), merged, ks))
        })
        .collect();

    let mut merged = BTreeMap::new();
    let mut ranks = BTreeMap::new();
    for r in results {
        match r {
            Ok((name, rec, ks)) => {
                ranks.insert(name.clone(), [ks.0, ks.1]);
                merged.insert(name, rec);
            }
            Err(f) => failures.push(f),
        }
    }
    if !failures.is_empty() {
        return Err(SurgeryError::Aggregate(failures));
    }

    let records = target
        .records()
        .iter()
        .map(|r| merged.remove(&r.name).unwrap_or_else(|| r.clone()))
        .collect();
    let mut metadata = target.metadata.clone();
    metadata.insert("surgery.plan".into(), plan.to_json());
    metadata.insert("surgery.tool_version".into(), env!("CARGO_PKG_VERSION").into());
    metadata.insert(
        "surgery.ranks".into(),
        serde_json::to_string(&ranks).expect("ranks serialize"),
    );
    Ok(Checkpoint::new(records, metadata)?)
}
