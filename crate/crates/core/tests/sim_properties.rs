use interfere_core::monotone::{CiSettings, NeighborhoodConfig};
use interfere_core::sim::{
    generate_scenario, run_coverage_experiment, synthetic_layout, LayoutKind, Scenario, ScenarioKind, ScenarioParams,
};

fn scenario(kind: ScenarioKind, layout: LayoutKind, seed: u64) -> Scenario {
    let layout = synthetic_layout(layout, 49, 3).unwrap();
    Scenario::new(kind, layout.coords, ScenarioParams::default(), seed).unwrap()
}

#[test]
fn adversarial_singletons_ignore_geometry() {
    let configs = [NeighborhoodConfig::new(1, 1)];
    let settings = CiSettings::default();
    let tables: Vec<_> = [LayoutKind::UniformSquare, LayoutKind::TwoCluster, LayoutKind::Line]
        .into_iter()
        .map(|l| run_coverage_experiment(&scenario(ScenarioKind::Adversarial, l, 5), &configs, &settings, 300).unwrap())
        .collect();
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[0], tables[2]);
}

#[test]
fn counterfactuals_never_exceed_outcomes() {
    for kind in ScenarioKind::ALL {
        for layout in [LayoutKind::UniformSquare, LayoutKind::TwoCluster] {
            let s = scenario(kind, layout, 8);
            for idx in 0..100 {
                let g = generate_scenario(&s, idx).unwrap();
                for (t, y) in g.theta.as_slice().iter().zip(g.population.outcomes()) {
                    assert!(*t >= 0.0 && *t <= y);
                }
            }
        }
    }
}

#[test]
fn recommended_configurations_cover() {
    let configs = [NeighborhoodConfig::new(2, 3), NeighborhoodConfig::new(3, 6), NeighborhoodConfig::new(4, 10)];
    let settings = CiSettings::default();
    for kind in ScenarioKind::ALL {
        let s = scenario(kind, LayoutKind::TwoCluster, 11);
        let table = run_coverage_experiment(&s, &configs, &settings, 1000).unwrap();
        for cell in &table.cells {
            let coverage = cell.coverage.expect("condition met in some replicate");
            assert!(coverage >= 0.93, "{kind:?} ({},{}): {coverage} {cell:?}", cell.d_min, cell.d);
        }
    }
}
