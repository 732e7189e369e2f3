use debtaversion::choice::ErrorSpec;
use debtaversion::data::{
    load_catalog, read_catalog, read_choices, read_prospects_jsonl, simulate, write_catalog, write_choices,
    write_prospects_jsonl, Population, ALL_MPLS,
};
use debtaversion::model::{ModelSpec, ParamVector, Prospect};
use tempfile::TempDir;

const CATALOG_SHA256: &str = "53a2be861c3f621204aa8e29f04bd866305b5b72b1e9496aea17e46aaa69643c";

#[test]
fn catalog_fingerprint_is_pinned() {
    let catalog = load_catalog();
    assert_eq!(catalog.len(), 120);
    assert_eq!(catalog.fingerprint(), CATALOG_SHA256);
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("catalog.csv");
    write_catalog(&path, &catalog).unwrap();
    let back = read_catalog(&path).unwrap();
    assert_eq!(back, catalog);
    assert_eq!(back.fingerprint(), CATALOG_SHA256);
}

#[test]
fn last_debt_row_pays_three_now_for_fifteen_later() {
    let catalog = load_catalog();
    let design = catalog.row(7, 15).unwrap();
    let p = design.option_b.branches()[0].stream.payments();
    assert_eq!((p[0].period, p[0].amount), (1, 3.0));
    assert_eq!((p[1].period, p[1].amount), (2, -15.0));
    assert_eq!(design.option_a, Prospect::zero());
}

#[test]
fn full_sample_round_trips_through_both_formats() {
    let spec = ModelSpec::default();
    let th = ParamVector::baseline(0.643, 0.0359, 1.0535, 1.1074, 1.0);
    let mut data = simulate(
        &spec,
        &ErrorSpec::default(),
        &Population::Fixed(th),
        127,
        &ALL_MPLS,
        2024,
    )
    .unwrap();
    assert_eq!(data.n_records(), 127 * 120);
    let covs = (0..127).map(|i| vec![(i % 3) as f64, 18.0 + (i % 11) as f64]).collect();
    data.set_covariates(vec!["major".into(), "age".into()], covs).unwrap();

    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("choices.csv");
    write_choices(&csv, &data).unwrap();
    let back = read_choices(&csv).unwrap();
    assert_eq!(back.n_records(), data.n_records());
    assert_eq!(back.subject_ids(), data.subject_ids());
    assert_eq!(back.covariate_names(), data.covariate_names());
    for (a, b) in data.records().iter().zip(back.records()) {
        assert_eq!((a.mpl_id, a.row, a.chosen_b), (b.mpl_id, b.row, b.chosen_b));
        assert_eq!(data.design(a), back.design(b));
        assert_eq!(data.subject_id(a), back.subject_id(b));
    }
    for s in 0..127 {
        assert_eq!(data.covariates(s).unwrap(), back.covariates(s).unwrap());
    }

    let jsonl = dir.path().join("choices.jsonl");
    write_prospects_jsonl(&jsonl, &data).unwrap();
    let back = read_prospects_jsonl(&jsonl).unwrap();
    assert_eq!(back.n_records(), data.n_records());
    for (a, b) in data.records().iter().zip(back.records()) {
        assert_eq!((a.mpl_id, a.row, a.chosen_b), (b.mpl_id, b.row, b.chosen_b));
        assert_eq!(data.design(a), back.design(b));
    }
    for s in 0..127 {
        assert_eq!(data.covariates(s).unwrap(), back.covariates(s).unwrap());
    }
}

#[test]
fn malformed_rows_report_line_numbers() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "subject_id,mpl_id,row,accepted,chose_b\ns1,4,1,1,\ns1,4,99,1,\n").unwrap();
    let err = read_choices(&path).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}
