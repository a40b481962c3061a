use std::sync::OnceLock;

use filterlab::gap::{self, GapReport};
use filterlab::harness::Scenario;
use filterlab::network::weight_power;
use filterlab::{linalg, spps};

fn paper() -> &'static (Scenario, GapReport) {
    static CELL: OnceLock<(Scenario, GapReport)> = OnceLock::new();
    CELL.get_or_init(|| {
        let s = Scenario::paper(1).unwrap();
        let d = s.diameter();
        let l: Vec<usize> = (d..=d + 10).collect();
        let report = gap::gap_report(&s.plant, &s.graph, &s.weights, &l, spps::DEFAULT_TOL, Some(1)).unwrap();
        (s, report)
    })
}

#[test]
fn distributed_error_covariance_dominates_centralized() {
    let (s, _) = paper();
    let central = gap::ckf_dpre(&s.plant, spps::DEFAULT_TOL).unwrap();
    let d = s.diameter();
    for l in [d, d + 3, d + 8] {
        let power = weight_power(&s.weights, l);
        for i in 0..s.plant.sensor_count() {
            let node = gap::solve_node(&s.plant, &power, i, spps::DEFAULT_TOL).unwrap();
            for k in 0..s.plant.period() {
                let diff = node.error.at(k) - central.at(k);
                assert!(linalg::min_eigenvalue(&diff) >= -1e-8, "sensor {i}, L {l}, k {k}");
            }
        }
    }
}

#[test]
fn gap_shrinks_with_more_consensus() {
    let (s, report) = paper();
    let d = s.diameter();
    for i in 0..s.plant.sensor_count() {
        for l in d..d + 10 {
            let now = report.cell(i, l).unwrap().gap_cov;
            let next = report.cell(i, l + 1).unwrap().gap_cov;
            assert!(next <= now + 1e-8, "sensor {i}: gap {now} at L={l}, {next} at L={}", l + 1);
        }
    }
}

#[test]
fn gap_envelope_decays_no_slower_than_second_eigenvalue() {
    let (_, report) = paper();
    for (i, rate) in report.envelope_rates.iter().enumerate() {
        let rate = rate.expect("gaps are above the floor");
        assert!(rate <= report.sigma2 + 0.02, "sensor {i}: {rate} vs sigma2 {}", report.sigma2);
    }
}

#[test]
fn series_forms_match_direct_differences_at_the_diameter() {
    let (s, _) = paper();
    let d = s.diameter();
    for i in 0..s.plant.sensor_count() {
        let ric = gap::gap_series_ric(&s.plant, &s.weights, d, i, 500, spps::DEFAULT_TOL).unwrap();
        let cov = gap::gap_series_cov(&s.plant, &s.weights, d, i, 500, spps::DEFAULT_TOL).unwrap();
        assert!(ric.defect < 1e-6, "sensor {i}: {}", ric.defect);
        assert!(cov.defect < 1e-6, "sensor {i}: {}", cov.defect);
    }
}

#[test]
fn centralized_average_is_finite_and_below_every_node() {
    let (_, report) = paper();
    assert!(report.centralized_avg.is_finite() && report.centralized_avg > 0.0);
    for c in &report.cells {
        assert!(c.avg_perf >= report.centralized_avg - 1e-9);
    }
}
