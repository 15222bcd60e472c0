use std::path::{Path, PathBuf};

use peelkit_core::io::{read_node_table, read_table};
use peelkit_core::metric::{classify_negative_type, validate_metric, NegativeType, DEFAULT_TOL_EIG, DEFAULT_TOL_TRI};
use peelkit_core::paths::{synthetic_config, synthetic_dataset, PipelineConfig, SYNTHETIC_SEED};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

#[test]
fn bundled_synthetic_files_match_the_generator() {
    let table = read_node_table(&data("synthetic/nodes.csv"), &data("synthetic/features.csv")).unwrap();
    assert_eq!(table, synthetic_dataset(SYNTHETIC_SEED));
    let text = std::fs::read_to_string(data("synthetic/config.toml")).unwrap();
    let config: PipelineConfig = toml::from_str(&text).unwrap();
    assert_eq!(config, synthetic_config());
}

#[test]
fn example_fixture_is_the_isosceles_metric() {
    let t = read_table(&data("example1.json"), None).unwrap();
    let (d, _) = validate_metric(&t.rows, DEFAULT_TOL_TRI).unwrap();
    assert_eq!(d, peelkit_core::metric::isosceles_example(0.5));
}

#[test]
fn sphere_fixture_is_exactly_the_geodesic_metric() {
    use std::f64::consts::{FRAC_PI_2, PI};
    let t = read_table(&data("sphere_antipodal.csv"), None).unwrap();
    assert_eq!(t.labels.as_deref().unwrap(), ["N", "S", "E", "W"]);
    let expected = [
        [0.0, PI, FRAC_PI_2, FRAC_PI_2],
        [PI, 0.0, FRAC_PI_2, FRAC_PI_2],
        [FRAC_PI_2, FRAC_PI_2, 0.0, PI],
        [FRAC_PI_2, FRAC_PI_2, PI, 0.0],
    ];
    for (row, e) in t.rows.iter().zip(expected) {
        assert_eq!(row.as_slice(), e.as_slice());
    }
    let (d, _) = validate_metric(&t.rows, DEFAULT_TOL_TRI).unwrap();
    assert_eq!(classify_negative_type(&d, DEFAULT_TOL_EIG).unwrap().class, NegativeType::NegativeTypeOnly);
}
