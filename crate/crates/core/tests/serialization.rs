//! External-surface round trips: the JSON/CSV formats other tooling reads.

use dirichlet_heat::biortho::{build_family, BiorthoFamily};
use dirichlet_heat::forward::{sample, uniform_grid, DirichletSample, ExactSeries, NoiseNorm};
use dirichlet_heat::inverse_heat::{sample_hyperplane, HyperplaneSample};
use dirichlet_heat::lab::{records_from_csv, records_to_csv, Record};
use dirichlet_heat::peeling::{recover_peeling, PeelConfig};
use dirichlet_heat::precision::Prec;
use dirichlet_heat::sensor::{propose_point, verify_point, Strategy};
use dirichlet_heat::sequences::{CoefficientSequence, EigenvalueSequence};
use rug::Float;

fn p() -> Prec {
    Prec::new(256)
}

#[test]
fn eigenvalue_family_json_shapes() {
    let power = EigenvalueSequence::power(0.5, 1.0, 4, p()).unwrap();
    let v = power.to_json();
    assert_eq!(v["family"], "power");
    assert_eq!(v["alpha"], 0.5);
    assert_eq!(v["count"], 4);
    let back = EigenvalueSequence::from_json(&v, p()).unwrap();
    assert_eq!(back.values(), power.values());

    // Numeric literals are accepted for explicit values.
    let v: serde_json::Value =
        serde_json::from_str(r#"{"family":"explicit","values":[1.0, 2.5, 4]}"#).unwrap();
    let seq = EigenvalueSequence::from_json(&v, p()).unwrap();
    assert_eq!(seq.len(), 3);
    assert_eq!(*seq.value(2), p().from_f64(2.5));
}

#[test]
fn biortho_family_json_reuse() {
    let seq = EigenvalueSequence::power(1.0, 1.0, 4, p()).unwrap();
    let fam = build_family(&seq, &p().one(), 4, p()).unwrap();
    let text = serde_json::to_string(&fam.to_json()).unwrap();
    let back = BiorthoFamily::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back.combo(), fam.combo());
    assert_eq!(back.precision_bits(), fam.precision_bits());
}

#[test]
fn sample_csv_sidecar_roundtrip() {
    let a = CoefficientSequence::from_entries(vec![p().one(), p().from_f64(-0.5)], p());
    let seq = EigenvalueSequence::power(1.0, 1.0, 2, p()).unwrap();
    let truth = ExactSeries {
        coeffs: &a,
        exponents: &seq,
        prec: p(),
    };
    let times = uniform_grid(0.0, 1.0, 17, p());
    let s = sample(&truth, &times, 1e-4, NoiseNorm::L2, 1.0, Some(9), p()).unwrap();
    let dir = std::env::temp_dir().join("dirichlet_heat_serialization");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("series.csv");
    s.write_csv(&path).unwrap();
    assert!(path.with_extension("meta.json").exists());
    let back = DirichletSample::read_csv(&path, p()).unwrap();
    assert_eq!(back.values(), s.values());
    assert_eq!(back.noise_norm, NoiseNorm::L2);
    assert_eq!(back.horizon, 1.0);
}

#[test]
fn peeling_trace_csv_shape() {
    let seq = EigenvalueSequence::power(0.5, 1.0, 8, p()).unwrap();
    let truth = CoefficientSequence::from_entries(vec![p().from_f64(0.5), p().from_f64(0.2)], p());
    let f = ExactSeries {
        coeffs: &truth,
        exponents: &seq,
        prec: p(),
    };
    let data = dirichlet_heat::forward::SeriesData::Evaluator {
        f: &f,
        noise: Some(0.0),
    };
    let (_, trace) = recover_peeling(&data, &seq, 1.0, 1.0, &PeelConfig::default(), p()).unwrap();
    let csv = trace.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,s_k,estimate_k,bound_k"));
    let first = lines.next().expect("at least one step");
    assert!(first.starts_with("1,"));
    assert_eq!(first.split(',').count(), 4);
}

#[test]
fn records_csv_is_stable_and_reimportable() {
    let recs = vec![
        Record {
            epsilon: 1e-2,
            trial: 0,
            error: p().from_f64(0.25),
            n_used: 3,
            runtime_ms: Some(12),
        },
        Record {
            epsilon: 1e-4,
            trial: 1,
            error: p().one() / p().from_f64(3.0),
            n_used: 5,
            runtime_ms: Some(30),
        },
    ];
    let csv = records_to_csv(&recs);
    // Runtime deliberately excluded so identical runs give identical bytes.
    assert_eq!(csv.lines().next(), Some("epsilon,trial,error,n"));
    let back = records_from_csv(&csv, p()).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].error, recs[0].error);
    assert_eq!(back[1].error, recs[1].error);
    assert_eq!(records_to_csv(&back), csv);
}

#[test]
fn hyperplane_json_roundtrip() {
    use dirichlet_heat::forward::{InitialDatum, TensorDatum};
    let f1 = InitialDatum::new(
        CoefficientSequence::from_entries(vec![p().from_f64(0.7), p().from_f64(0.2)], p()),
        1.0,
    )
    .unwrap();
    let f2 = InitialDatum::new(CoefficientSequence::unit(1, p().from_f64(0.9), p()), 1.0).unwrap();
    let td = TensorDatum::new(vec![f1, f2], true).unwrap();
    let sensor = verify_point(&propose_point(Strategy::Golden, 1.0, p()).unwrap(), 16, p())
        .unwrap();
    let times = uniform_grid(0.0, 1.0, 33, p());
    let hs = sample_hyperplane(&td, 0, &sensor, 1.0, &times, 0.0, 1, 1.0, 8, p()).unwrap();
    let back = HyperplaneSample::from_json(&hs.to_json(), p()).unwrap();
    assert_eq!(back.axis, hs.axis);
    assert_eq!(back.times, hs.times);
    assert_eq!(back.values, hs.values);
    let diff = Float::with_val(p().bits(), back.sensor.x0() - hs.sensor.x0()).abs();
    assert!(diff < 1e-70);
}
