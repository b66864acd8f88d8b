mod common;

use thinning_core::io::{read_counts, write_counts, SolutionRecord};
use thinning_core::stats::{mean, variance};
use thinning_core::study::{run_block, StudyConfig};
use thinning_core::{
    asymptotic_covariance, simulate_direct, simulate_mechanistic, solve_moment_system, sufficient_stats, BeamConfig,
    CovarianceRecord, ModelParams, RngSeed,
};

fn reference() -> ModelParams<f64> {
    ModelParams::new(vec![0.6, 0.4], vec![0.7, 0.3]).unwrap()
}

fn columns(data: &thinning_core::CountMatrix) -> Vec<Vec<f64>> {
    (0..data.layers()).map(|i| (0..data.replications()).map(|j| data.get(i, j) as f64).collect()).collect()
}

#[test]
fn direct_layer_means_match_forward_moments() {
    let cfg = BeamConfig::new(1000.0, 10_000, 3).unwrap();
    let data = simulate_direct(&reference(), &cfg, RngSeed::new(17)).unwrap();
    let m = reference().forward_moments(3).0;
    for (i, col) in columns(&data).iter().enumerate() {
        let mu = 1000.0 * m[i];
        let se = (mu / col.len() as f64).sqrt();
        assert!((mean(col) - mu).abs() <= 3.0 * se, "layer {}: {} vs {mu}", i + 1, mean(col));
    }
}

#[test]
fn mechanistic_and_direct_agree() {
    let cfg = BeamConfig::new(1000.0, 10_000, 3).unwrap();
    let a = columns(&simulate_direct(&reference(), &cfg, RngSeed::new(1)).unwrap());
    let b = columns(&simulate_mechanistic(&reference(), &cfg, RngSeed::new(2)).unwrap());
    for (x, y) in a.iter().zip(&b) {
        let se = ((variance(x) + variance(y)) / x.len() as f64).sqrt();
        assert!((mean(x) - mean(y)).abs() <= 4.0 * se);
    }
}

#[test]
fn sufficient_stats_are_unbiased() {
    let cfg = BeamConfig::new(50.0, 20_000, 5).unwrap();
    let params = ModelParams::new(vec![0.5, 0.3, 0.2], vec![0.9, 0.5, 0.1]).unwrap();
    let stats = sufficient_stats(&simulate_direct(&params, &cfg, RngSeed::new(4)).unwrap()).unwrap();
    let m = params.forward_moments(5).0;
    for (b, mi) in stats.b_hat.iter().zip(&m) {
        let se = (mi / (cfg.n as f64 * cfg.lambda_t)).sqrt();
        assert!((b - mi).abs() <= 4.0 * se);
    }
    assert_eq!(stats.a_hat[0], 1.0);
    for i in 0..5 {
        assert_eq!(stats.a_hat[i + 1], stats.a_hat[i] - stats.b_hat[i]);
    }
}

#[test]
fn estimates_converge_as_n_grows() {
    let mut cfg = StudyConfig::new(reference(), 1000.0, 100, 50, RngSeed::new(99));
    cfg.n_grid = vec![100, 1_000, 10_000];
    let errors: Vec<f64> = (0..3)
        .map(|g| {
            let block = run_block(&cfg, g).unwrap();
            assert_eq!(block.solved(), 50);
            block.rmse()
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    assert!(errors[2] <= 5.0 / 10_000f64.sqrt());
}

#[test]
fn simulated_csv_is_reproducible_and_round_trips() {
    let cfg = BeamConfig::new(1000.0, 200, 3).unwrap();
    let write = |seed| {
        let mut buf = Vec::new();
        write_counts(&mut buf, &simulate_direct(&reference(), &cfg, RngSeed::new(seed)).unwrap()).unwrap();
        buf
    };
    let first = write(5);
    assert_eq!(first, write(5));
    assert_ne!(first, write(6));
    let back = read_counts(&first[..], 1000.0).unwrap();
    let mut again = Vec::new();
    write_counts(&mut again, &back).unwrap();
    assert_eq!(first, again);
}

#[test]
fn reports_round_trip_through_json() {
    let cfg = BeamConfig::new(1000.0, 1_000, 3).unwrap();
    let stats = sufficient_stats(&simulate_direct(&reference(), &cfg, RngSeed::new(8)).unwrap()).unwrap();
    let sol = solve_moment_system::<f64>(&stats, 2).unwrap();
    let rec = SolutionRecord::from(&sol);
    let json = serde_json::to_string(&rec).unwrap();
    assert!(json.starts_with(r#"{"q":["#));
    assert_eq!(serde_json::from_str::<SolutionRecord>(&json).unwrap(), rec);

    let cov = asymptotic_covariance(&reference(), 1000.0).unwrap().to_record();
    let back: CovarianceRecord = serde_json::from_str(&serde_json::to_string(&cov).unwrap()).unwrap();
    assert_eq!(back, cov);
    assert_eq!((back.sigma_sq.rows, back.sigma_sq.cols), (4, 4));
    assert_eq!((back.sigma_a.rows, back.sigma_a.cols), (3, 3));
}
