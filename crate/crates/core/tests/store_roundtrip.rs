mod common;

use std::collections::BTreeMap;

use common::{gaussian, rng};
use proptest::prelude::*;
use spectral_surgery::store::{
    from_bytes, load_checkpoint, save_checkpoint, select_tensors, to_bytes, Checkpoint, DType, StoreError,
    TensorRecord,
};

fn mixed_checkpoint(seed: u64) -> Checkpoint {
    let mut g = rng(seed);
    let mut records = Vec::new();
    for (i, dtype) in DType::ALL.iter().enumerate() {
        let m = gaussian(6 + i, 5, &mut g);
        let data: Vec<f64> = m.as_slice().iter().map(|&x| dtype.quantize(x).unwrap()).collect();
        records.push(TensorRecord::new(format!("model.layers.{i}.mlp.up_proj.weight"), vec![6 + i, 5], *dtype, data).unwrap());
        let v: Vec<f64> = (0..7).map(|k| dtype.quantize(0.1 * k as f64 - 0.3).unwrap()).collect();
        records.push(TensorRecord::new(format!("model.layers.{i}.input_layernorm.weight"), vec![7], *dtype, v).unwrap());
    }
    records.push(TensorRecord::new("scalar", vec![], DType::F32, vec![1.5]).unwrap());
    let mut meta = BTreeMap::new();
    meta.insert("format".to_string(), "pt".to_string());
    Checkpoint::new(records, meta).unwrap()
}

#[test]
fn save_load_save_is_byte_identical_for_every_dtype() {
    let dir = tempfile::tempdir().unwrap();
    let ck = mixed_checkpoint(1);
    let p1 = dir.path().join("a.safetensors");
    let p2 = dir.path().join("b.safetensors");
    save_checkpoint(&ck, &p1).unwrap();
    let loaded = load_checkpoint(&p1).unwrap();
    assert_eq!(loaded, ck);
    save_checkpoint(&loaded, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(loaded.metadata["format"], "pt");
    let names: Vec<&str> = loaded.records().iter().map(|r| r.name.as_str()).collect();
    let orig: Vec<&str> = ck.records().iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, orig);
}

#[test]
fn narrowing_rounds_to_nearest_even() {
    // 1 + 2^-8 is exactly halfway between two bf16 neighbours; ties go to the even mantissa.
    assert_eq!(DType::BF16.quantize(1.0 + 2f64.powi(-8)), Some(1.0));
    assert_eq!(DType::BF16.quantize(1.0 + 3.0 * 2f64.powi(-8)), Some(1.0 + 2f64.powi(-6)));
    // A hair above the midpoint must round up even though truncation would not.
    assert_eq!(DType::BF16.quantize(1.0 + 2f64.powi(-8) + 2f64.powi(-40)), Some(1.0 + 2f64.powi(-7)));
    assert_eq!(DType::F16.quantize(1.0 + 2f64.powi(-11)), Some(1.0));
    assert_eq!(DType::F16.quantize(65504.0), Some(65504.0));
    assert_eq!(DType::F16.quantize(70000.0), None);
    assert_eq!(DType::F16.quantize(2f64.powi(-24)), Some(2f64.powi(-24)));
}

#[test]
fn overflowing_value_is_refused_on_save() {
    let rec = TensorRecord::new("w", vec![1, 2], DType::F16, vec![1.0, 1e6]).unwrap();
    let ck = Checkpoint::new(vec![rec], BTreeMap::new()).unwrap();
    match to_bytes(&ck) {
        Err(StoreError::Overflow { tensor, .. }) => assert_eq!(tensor, "w"),
        other => panic!("{other:?}"),
    }
}

fn image(header: &str, data: &[u8]) -> Vec<u8> {
    let mut out = (header.len() as u64).to_le_bytes().to_vec();
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(data);
    out
}

#[test]
fn malformed_corpus() {
    let good = to_bytes(&mixed_checkpoint(2)).unwrap();

    for len in [0, 3, 7] {
        assert!(matches!(from_bytes(&good[..len]), Err(StoreError::Truncated { .. })));
    }

    let mut overrun = good[..8].to_vec();
    overrun.extend_from_slice(b"{}");
    let e = from_bytes(&overrun).unwrap_err();
    assert!(matches!(e, StoreError::HeaderOverrun { .. }));
    assert!(e.to_string().contains("header overruns file"));

    let cut = from_bytes(&good[..good.len() - 3]).unwrap_err();
    assert!(matches!(cut, StoreError::OffsetsOutOfBounds { .. }), "{cut}");

    let f = 1.0f64.to_le_bytes();
    let two: Vec<u8> = f.iter().chain(&f).copied().collect();
    let overlap = image(
        r#"{"a":{"dtype":"F64","shape":[2],"data_offsets":[0,16]},"b":{"dtype":"F64","shape":[1],"data_offsets":[8,16]}}"#,
        &two,
    );
    assert!(matches!(from_bytes(&overlap), Err(StoreError::Overlap { .. })));

    let gap = image(r#"{"a":{"dtype":"F64","shape":[1],"data_offsets":[8,16]}}"#, &two);
    assert!(matches!(from_bytes(&gap), Err(StoreError::Gap { .. })));

    let trailing = image(r#"{"a":{"dtype":"F64","shape":[1],"data_offsets":[0,8]}}"#, &two);
    assert!(matches!(from_bytes(&trailing), Err(StoreError::Uncovered(8))));

    let nan = f64::NAN.to_le_bytes();
    let bad_value = image(r#"{"weird.tensor":{"dtype":"F64","shape":[1],"data_offsets":[0,8]}}"#, &nan);
    let e = from_bytes(&bad_value).unwrap_err();
    assert!(matches!(e, StoreError::NonFinite { ref tensor, index: 0 } if tensor == "weird.tensor"));
    assert!(e.to_string().contains("weird.tensor"));

    let span = image(r#"{"a":{"dtype":"F32","shape":[3],"data_offsets":[0,16]}}"#, &two);
    assert!(matches!(from_bytes(&span), Err(StoreError::BadTensor { .. })));

    let rank3 = image(r#"{"a":{"dtype":"F64","shape":[1,1,2],"data_offsets":[0,16]}}"#, &two);
    assert!(matches!(from_bytes(&rank3), Err(StoreError::BadTensor { .. })));

    let dtype = image(r#"{"a":{"dtype":"I8","shape":[16],"data_offsets":[0,16]}}"#, &two);
    assert!(matches!(from_bytes(&dtype), Err(StoreError::BadTensor { .. })));

    for header in ["not json", "[1,2]", r#"{"__metadata__":{"k":3}}"#] {
        assert!(matches!(from_bytes(&image(header, &[])), Err(StoreError::MalformedHeader(_))), "{header}");
    }
}

#[test]
fn missing_file_names_the_path() {
    let e = load_checkpoint("/nonexistent/ckpt.safetensors").unwrap_err();
    assert!(e.to_string().contains("/nonexistent/ckpt.safetensors"));
}

#[test]
fn selection_by_glob() {
    let ck = mixed_checkpoint(3);
    let sel = select_tensors(&ck, "*.mlp.*").unwrap();
    assert_eq!(sel.matched.len(), 4);
    let all = select_tensors(&ck, "*").unwrap();
    assert_eq!(all.matched.len(), 4);
    assert_eq!(all.skipped.len(), 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_values_survive_after_first_narrowing(
        values in prop::collection::vec(-6.0e4f64..6.0e4, 1..40),
        d in 0usize..4,
    ) {
        let dtype = DType::ALL[d];
        let rec = TensorRecord::new("t", vec![values.len()], dtype, values).unwrap();
        let bytes = to_bytes(&Checkpoint::new(vec![rec], BTreeMap::new()).unwrap()).unwrap();
        let again = to_bytes(&from_bytes(&bytes).unwrap()).unwrap();
        prop_assert_eq!(bytes, again);
    }
}
