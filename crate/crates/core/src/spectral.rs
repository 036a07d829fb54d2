//! Base-vs-target comparisons of weight matrices: singular-value shifts,
//! spectral energy and rotation of singular subspaces.
//!
//! Spectra are aligned by rank index. Two angle families are reported per
//! rank index `i`:
//!
//! * `theta_*`: the `i`-th smallest principal angle between the full thin
//!   singular subspaces (sorted, so not tied to a particular vector);
//! * `vec_angle_*`: `acos |⟨x_iᵇᵃˢᵉ, x_iᵗᵍᵗ⟩|`, the rotation of the `i`-th
//!   singular vector itself. Head/tail localization reads this column.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{compute_svd, LinalgError, PrincipalAngleSpectrum, SvdFactors};
use crate::store::{select_tensors, Checkpoint, StoreError, TensorRecord};

pub const DEFAULT_BUCKET_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("tensor {tensor}: {source}")]
    Linalg {
        tensor: String,
        #[source]
        source: LinalgError,
    },
    #[error("tensor {tensor}: shape mismatch, base {base:?} vs target {target:?}")]
    ShapeMismatch {
        tensor: String,
        base: Vec<usize>,
        target: Vec<usize>,
    },
    #[error("tensor {tensor}: not a 2-D matrix (shape {shape:?})")]
    NotMatrix { tensor: String, shape: Vec<usize> },
    #[error("tensor {0} is missing from the target checkpoint")]
    MissingCounterpart(String),
    #[error("pattern {0:?} matched no matrices")]
    NoMatch(String),
    #[error("no report rows to summarize")]
    Empty,
    #[error("bucket fraction {0} outside [0, 0.5]")]
    BadBucketFraction(f64),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One `(tensor, rank index)` row of an angle report. Angles in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReportRow {
    pub tensor_name: String,
    pub layer_index: Option<usize>,
    pub rank_index: usize,
    pub sigma_base: f64,
    pub sigma_tgt: f64,
    pub delta_sigma: f64,
    pub theta_left: f64,
    pub theta_right: f64,
    pub per_index_left: f64,
    pub per_index_right: f64,
}

fn svd_of(rec: &TensorRecord) -> Result<SvdFactors<f64>, SpectralError> {
    let m = rec.to_matrix().ok_or_else(|| SpectralError::NotMatrix {
        tensor: rec.name.clone(),
        shape: rec.shape.clone(),
    })?;
    compute_svd(&m).map_err(|source| SpectralError::Linalg {
        tensor: rec.name.clone(),
        source,
    })
}

fn check_shapes(base: &TensorRecord, tgt: &TensorRecord) -> Result<(), SpectralError> {
    if base.shape != tgt.shape {
        return Err(SpectralError::ShapeMismatch {
            tensor: base.name.clone(),
            base: base.shape.clone(),
            target: tgt.shape.clone(),
        });
    }
    Ok(())
}

/// `σᵗᵍᵗ − σᵇᵃˢᵉ` by rank index.
pub fn delta_sigma(base: &TensorRecord, tgt: &TensorRecord) -> Result<Vec<f64>, SpectralError> {
    check_shapes(base, tgt)?;
    let sb = svd_of(base)?.sigma;
    let st = svd_of(tgt)?.sigma;
    Ok(st.iter().zip(&sb).map(|(t, b)| t - b).collect())
}

/// `Σ σ_i²`, which equals the squared Frobenius norm.
pub fn spectral_energy(rec: &TensorRecord) -> Result<f64, SpectralError> {
    Ok(svd_of(rec)?.sigma.iter().map(|s| s * s).sum())
}

/// Rows for one matched tensor pair.
pub fn tensor_rows(base: &TensorRecord, tgt: &TensorRecord) -> Result<Vec<SpectralReportRow>, SpectralError> {
    check_shapes(base, tgt)?;
    let fb = svd_of(base)?;
    let ft = svd_of(tgt)?;
    let angles = PrincipalAngleSpectrum::between(&fb, &ft).map_err(|source| SpectralError::Linalg {
        tensor: base.name.clone(),
        source,
    })?;
    let layer = base.layer_index();
    Ok((0..fb.sigma.len())
        .map(|i| SpectralReportRow {
            tensor_name: base.name.clone(),
            layer_index: layer,
            rank_index: i,
            sigma_base: fb.sigma[i],
            sigma_tgt: ft.sigma[i],
            delta_sigma: ft.sigma[i] - fb.sigma[i],
            theta_left: angles.theta_left[i],
            theta_right: angles.theta_right[i],
            per_index_left: angles.per_index_left[i],
            per_index_right: angles.per_index_right[i],
        })
        .collect())
}

/// Matched `(base, target)` pairs for a pattern, in base checkpoint order.
pub fn matched_pairs<'a>(
    base: &'a Checkpoint,
    tgt: &'a Checkpoint,
    pattern: &str,
) -> Result<Vec<(&'a TensorRecord, &'a TensorRecord)>, SpectralError> {
    let sel = select_tensors(base, pattern)?;
    if sel.matched.is_empty() {
        return Err(SpectralError::NoMatch(pattern.to_string()));
    }
    sel.matched
        .into_iter()
        .map(|b| {
            let t = tgt
                .get(&b.name)
                .ok_or_else(|| SpectralError::MissingCounterpart(b.name.clone()))?;
            check_shapes(b, t)?;
            Ok((b, t))
        })
        .collect()
}

/// Computes the report in batches of `batch` tensors (each batch in
/// parallel on the current rayon pool) and hands every tensor's rows to
/// `sink` in base checkpoint order.
pub fn angle_report_streaming(
    base: &Checkpoint,
    tgt: &Checkpoint,
    pattern: &str,
    batch: usize,
    mut sink: impl FnMut(Vec<SpectralReportRow>) -> Result<(), SpectralError>,
) -> Result<(), SpectralError> {
    let pairs = matched_pairs(base, tgt, pattern)?;
    for chunk in pairs.chunks(batch.max(1)) {
        let computed: Vec<_> = chunk.par_iter().map(|(b, t)| tensor_rows(b, t)).collect();
        for rows in computed {
            sink(rows?)?;
        }
    }
    Ok(())
}

/// One row per `(tensor, rank index)` for every matrix matching `pattern`.
pub fn angle_report(base: &Checkpoint, tgt: &Checkpoint, pattern: &str) -> Result<Vec<SpectralReportRow>, SpectralError> {
    let mut out = Vec::new();
    angle_report_streaming(base, tgt, pattern, rayon::current_num_threads(), |rows| {
        out.extend(rows);
        Ok(())
    })?;
    Ok(out)
}

/// `⌈f·r⌉`, snapping products within 1e-9 of an integer so that e.g.
/// `0.1 · 30` resolves to 3 rather than 4.
pub fn ceil_fraction(f: f64, r: usize) -> usize {
    let x = f * r as f64;
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}

/// `(head_end, tail_start)` so that head = `[0, head_end)`, tail =
/// `[tail_start, r)` and bulk is what remains. The buckets never overlap.
pub fn bucket_bounds(r: usize, fraction: f64) -> (usize, usize) {
    let k = ceil_fraction(fraction, r).min(r);
    let tail = k.min(r - k);
    (k, r - tail)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default)]
struct Acc {
    count: usize,
    sum: f64,
    max: f64,
}

impl Acc {
    fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.max = if self.count == 1 { x } else { self.max.max(x) };
    }

    fn stats(&self) -> BucketStats {
        if self.count == 0 {
            BucketStats::default()
        } else {
            BucketStats {
                count: self.count,
                mean: Some(self.sum / self.count as f64),
                max: Some(self.max),
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Buckets {
    pub head: BucketStats,
    pub bulk: BucketStats,
    pub tail: BucketStats,
}

/// Head/bulk/tail statistics for each angle column, in degrees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AngleBuckets {
    pub theta_left_deg: Buckets,
    pub theta_right_deg: Buckets,
    pub vec_angle_left_deg: Buckets,
    pub vec_angle_right_deg: Buckets,
}

#[derive(Clone, Copy, Default)]
struct AngleAcc([[Acc; 3]; 4]);

impl AngleAcc {
    fn push(&mut self, bucket: usize, row: &SpectralReportRow) {
        let cols = [row.theta_left, row.theta_right, row.per_index_left, row.per_index_right];
        for (c, v) in cols.into_iter().enumerate() {
            self.0[c][bucket].push(v.to_degrees());
        }
    }

    fn finish(&self) -> AngleBuckets {
        let b = |c: usize| Buckets {
            head: self.0[c][0].stats(),
            bulk: self.0[c][1].stats(),
            tail: self.0[c][2].stats(),
        };
        AngleBuckets {
            theta_left_deg: b(0),
            theta_right_deg: b(1),
            vec_angle_left_deg: b(2),
            vec_angle_right_deg: b(3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorSummary {
    pub tensor: String,
    pub layer: Option<usize>,
    pub rank: usize,
    pub energy_base: f64,
    pub energy_tgt: f64,
    pub max_abs_delta_sigma: f64,
    pub angles: AngleBuckets,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: Option<usize>,
    pub tensors: usize,
    pub energy_base: f64,
    pub energy_tgt: f64,
    pub max_abs_delta_sigma: f64,
    pub angles: AngleBuckets,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub bucket_fraction: f64,
    pub tensors: Vec<TensorSummary>,
    pub layers: Vec<LayerSummary>,
    pub notes: BTreeMap<String, String>,
}

struct GroupAcc {
    layer: Option<usize>,
    tensors: usize,
    energy_base: f64,
    energy_tgt: f64,
    max_abs_delta: f64,
    angles: AngleAcc,
}

/// Aggregates report rows into per-tensor and per-layer bucket statistics.
///
/// Rows of one tensor must be contiguous (as produced by [`angle_report`]).
pub fn summarize(rows: &[SpectralReportRow], bucket_fraction: f64) -> Result<SpectralSummary, SpectralError> {
    if rows.is_empty() {
        return Err(SpectralError::Empty);
    }
    if !(0.0..=0.5).contains(&bucket_fraction) {
        return Err(SpectralError::BadBucketFraction(bucket_fraction));
    }
    let mut tensors = Vec::new();
    let mut layers: BTreeMap<Option<usize>, GroupAcc> = BTreeMap::new();

    let mut start = 0;
    while start < rows.len() {
        let name = &rows[start].tensor_name;
        let end = start + rows[start..].iter().take_while(|r| &r.tensor_name == name).count();
        let group = &rows[start..end];
        let r = group.len();
        let (head_end, tail_start) = bucket_bounds(r, bucket_fraction);

        let mut acc = AngleAcc::default();
        let layer = group[0].layer_index;
        let entry = layers.entry(layer).or_insert_with(|| GroupAcc {
            layer,
            tensors: 0,
            energy_base: 0.0,
            energy_tgt: 0.0,
            max_abs_delta: 0.0,
            angles: AngleAcc::default(),
        });
        let (mut eb, mut et, mut md) = (0.0, 0.0, 0.0f64);
        for (i, row) in group.iter().enumerate() {
            let bucket = if i < head_end {
                0
            } else if i >= tail_start {
                2
            } else {
                1
            };
            acc.push(bucket, row);
            entry.angles.push(bucket, row);
            eb += row.sigma_base * row.sigma_base;
            et += row.sigma_tgt * row.sigma_tgt;
            md = md.max(row.delta_sigma.abs());
        }
        entry.tensors += 1;
        entry.energy_base += eb;
        entry.energy_tgt += et;
        entry.max_abs_delta = entry.max_abs_delta.max(md);
        tensors.push(TensorSummary {
            tensor: name.clone(),
            layer,
            rank: r,
            energy_base: eb,
            energy_tgt: et,
            max_abs_delta_sigma: md,
            angles: acc.finish(),
        });
        start = end;
    }

    let layers = layers
        .into_values()
        .map(|g| LayerSummary {
            layer: g.layer,
            tensors: g.tensors,
            energy_base: g.energy_base,
            energy_tgt: g.energy_tgt,
            max_abs_delta_sigma: g.max_abs_delta,
            angles: g.angles.finish(),
        })
        .collect();

    let mut notes = BTreeMap::new();
    notes.insert("alignment".into(), "spectra aligned by rank index".into());
    notes.insert(
        "theta".into(),
        "principal angles between full thin singular subspaces, ascending; row i holds the i-th smallest".into(),
    );
    notes.insert(
        "vec_angle".into(),
        "angle between same-index singular vectors, sign-insensitive".into(),
    );
    notes.insert(
        "buckets".into(),
        format!("head = first ceil({bucket_fraction}*r) ranks, tail = last ceil({bucket_fraction}*r), bulk = rest"),
    );
    Ok(SpectralSummary {
        bucket_fraction,
        tensors,
        layers,
        notes,
    })
}

pub const CSV_COLUMNS: [&str; 10] = [
    "tensor",
    "layer",
    "rank",
    "sigma_base",
    "sigma_tgt",
    "delta_sigma",
    "theta_left_deg",
    "theta_right_deg",
    "vec_angle_left_deg",
    "vec_angle_right_deg",
];

/// Column subset for angle-only output.
pub const ANGLE_CSV_COLUMNS: [&str; 7] = [
    "tensor",
    "layer",
    "rank",
    "theta_left_deg",
    "theta_right_deg",
    "vec_angle_left_deg",
    "vec_angle_right_deg",
];

/// Streaming CSV emitter for report rows.
pub struct ReportWriter<W: Write> {
    inner: csv::Writer<W>,
    angles_only: bool,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(out: W, angles_only: bool) -> Result<Self, SpectralError> {
        let mut inner = csv::Writer::from_writer(out);
        if angles_only {
            inner.write_record(ANGLE_CSV_COLUMNS)?;
        } else {
            inner.write_record(CSV_COLUMNS)?;
        }
        Ok(Self { inner, angles_only })
    }

    pub fn write_rows(&mut self, rows: &[SpectralReportRow]) -> Result<(), SpectralError> {
        for r in rows {
            let layer = r.layer_index.map(|l| l.to_string()).unwrap_or_default();
            let rank = r.rank_index.to_string();
            let angles = [
                r.theta_left.to_degrees().to_string(),
                r.theta_right.to_degrees().to_string(),
                r.per_index_left.to_degrees().to_string(),
                r.per_index_right.to_degrees().to_string(),
            ];
            if self.angles_only {
                self.inner.write_record([
                    r.tensor_name.as_str(),
                    &layer,
                    &rank,
                    &angles[0],
                    &angles[1],
                    &angles[2],
                    &angles[3],
                ])?;
            } else {
                self.inner.write_record([
                    r.tensor_name.as_str(),
                    &layer,
                    &rank,
                    &r.sigma_base.to_string(),
                    &r.sigma_tgt.to_string(),
                    &r.delta_sigma.to_string(),
                    &angles[0],
                    &angles[1],
                    &angles[2],
                    &angles[3],
                ])?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, SpectralError> {
        self.inner.flush().map_err(csv::Error::from)?;
        self.inner
            .into_inner()
            .map_err(|e| SpectralError::Csv(csv::Error::from(e.into_error())))
    }
}

#[derive(Deserialize)]
struct CsvRow {
    tensor: String,
    layer: Option<usize>,
    rank: usize,
    sigma_base: f64,
    sigma_tgt: f64,
    delta_sigma: f64,
    theta_left_deg: f64,
    theta_right_deg: f64,
    vec_angle_left_deg: f64,
    vec_angle_right_deg: f64,
}

/// Reads a full-column report back into rows (angles converted to radians).
pub fn read_report_csv(input: impl Read) -> Result<Vec<SpectralReportRow>, SpectralError> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize::<CsvRow>()
        .map(|r| {
            let r = r?;
            Ok(SpectralReportRow {
                tensor_name: r.tensor,
                layer_index: r.layer,
                rank_index: r.rank,
                sigma_base: r.sigma_base,
                sigma_tgt: r.sigma_tgt,
                delta_sigma: r.delta_sigma,
                theta_left: r.theta_left_deg.to_radians(),
                theta_right: r.theta_right_deg.to_radians(),
                per_index_left: r.vec_angle_left_deg.to_radians(),
                per_index_right: r.vec_angle_right_deg.to_radians(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::store::DType;

    fn rec(name: &str, m: Matrix<f64>) -> TensorRecord {
        TensorRecord::from_matrix(name, &m, DType::F64)
    }

    fn diag(d: &[f64]) -> TensorRecord {
        rec("w", Matrix::from_diag(d))
    }

    #[test]
    fn delta_sigma_cases() {
        let b = diag(&[3.0, 2.0, 1.0]);
        assert_eq!(delta_sigma(&b, &b).unwrap(), vec![0.0; 3]);
        let doubled = rec("w", Matrix::from_diag(&[3.0, 2.0, 1.0]).scale(2.0));
        assert_eq!(delta_sigma(&b, &doubled).unwrap(), vec![3.0, 2.0, 1.0]);
        let t = diag(&[3.004, 2.0, 1.0]);
        let d = delta_sigma(&b, &t).unwrap();
        assert!((d[0] - 0.004).abs() < 1e-15);
        assert_eq!(&d[1..], &[0.0, 0.0]);
        // antisymmetry
        let back = delta_sigma(&t, &b).unwrap();
        for (x, y) in d.iter().zip(&back) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn delta_sigma_shape_mismatch_names_both() {
        let err = delta_sigma(&diag(&[1.0, 2.0]), &diag(&[1.0, 2.0, 3.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 2]") && msg.contains("[3, 3]"), "{msg}");
    }

    #[test]
    fn energy_cases() {
        assert!((spectral_energy(&diag(&[3.0, 2.0, 1.0])).unwrap() - 14.0).abs() < 1e-12);
        assert_eq!(spectral_energy(&rec("z", Matrix::zeros(3, 2))).unwrap(), 0.0);
    }

    #[test]
    fn bucket_bounds_partition() {
        assert_eq!(bucket_bounds(10, 0.2), (2, 8));
        assert_eq!(bucket_bounds(3, 0.2), (1, 2));
        assert_eq!(bucket_bounds(1, 0.2), (1, 1));
        assert_eq!(bucket_bounds(30, 0.1), (3, 27));
        assert_eq!(bucket_bounds(5, 0.0), (0, 5));
        assert_eq!(ceil_fraction(0.2, 3584), 717);
    }

    fn row(name: &str, layer: Option<usize>, i: usize, theta: f64) -> SpectralReportRow {
        SpectralReportRow {
            tensor_name: name.into(),
            layer_index: layer,
            rank_index: i,
            sigma_base: 1.0,
            sigma_tgt: 1.0,
            delta_sigma: 0.0,
            theta_left: 0.0,
            theta_right: 0.0,
            per_index_left: theta,
            per_index_right: theta,
        }
    }

    #[test]
    fn summary_of_zero_angles() {
        let rows: Vec<_> = (0..10).map(|i| row("a", Some(0), i, 0.0)).collect();
        let s = summarize(&rows, 0.2).unwrap();
        let b = s.tensors[0].angles.vec_angle_left_deg;
        assert_eq!(b.head.mean, Some(0.0));
        assert_eq!(b.bulk.mean, Some(0.0));
        assert_eq!(b.tail.mean, Some(0.0));
        assert_eq!(b.head.count + b.bulk.count + b.tail.count, 10);
    }

    #[test]
    fn single_tensor_layer_aggregate_equals_tensor() {
        let rows: Vec<_> = (0..7).map(|i| row("a", Some(3), i, 0.01 * i as f64)).collect();
        let s = summarize(&rows, 0.2).unwrap();
        assert_eq!(s.layers.len(), 1);
        assert_eq!(s.layers[0].angles, s.tensors[0].angles);
        assert_eq!(s.layers[0].energy_base, s.tensors[0].energy_base);
        assert_eq!(s.layers[0].max_abs_delta_sigma, s.tensors[0].max_abs_delta_sigma);
    }

    #[test]
    fn summary_rejects_empty() {
        assert!(matches!(summarize(&[], 0.2), Err(SpectralError::Empty)));
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let rows = vec![row("a.layers.0.q", Some(0), 0, 0.25), row("lm_head", None, 0, 0.5)];
        let mut w = ReportWriter::new(Vec::new(), false).unwrap();
        w.write_rows(&rows).unwrap();
        let bytes = w.finish().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("tensor,layer,rank,sigma_base,sigma_tgt,delta_sigma,theta_left_deg,"));
        let back = read_report_csv(bytes.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].layer_index, None);
        assert!((back[0].per_index_left - 0.25).abs() < 1e-15);
    }
}
