use std::path::Path;
use std::sync::Arc;

use equicity::analytics::{analyze, DecisionPanel, ScorePanel, Section};
use equicity::engine::{
    load_state, read_decisions_csv, save_state, simulate, write_decisions_csv, ActorPolicy, DecisionDataset, Game,
    GameConfig, ManualClock, Phase,
};

fn workshop() -> GameConfig {
    GameConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/workshop.json")).unwrap()
}

#[test]
fn round_survives_a_restart_mid_collection() {
    let clock = Arc::new(ManualClock::new(0));
    let mut game = Game::create(workshop(), clock.clone()).unwrap();
    let m = game.config().actors.len();
    for i in 0..m - 1 {
        let (x, w) = (game.context().agenda.actor(i), game.context().default_weights.column(i));
        clock.advance(1_000);
        game.submit(i, &x, &w, "").unwrap();
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("game.json");
    save_state(game.state(), &path).unwrap();
    let mut resumed = Game::from_state(load_state(&path).unwrap(), clock.clone()).unwrap();
    assert_eq!(resumed.state(), game.state());

    let last = m - 1;
    let (x, w) = (resumed.context().agenda.actor(last), resumed.context().default_weights.column(last));
    let outcome = resumed.submit(last, &x, &w, "last").unwrap();
    assert_eq!(outcome.phase, Phase::Processing);
    let record = resumed.advance().unwrap().clone();
    assert_eq!(resumed.phase(), Phase::Reporting);
    assert_eq!(record.comments[last], "last");
    for k in 0..record.outputs.allocation.cols() {
        let s: f64 = record.outputs.allocation.column(k).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    resumed.acknowledge().unwrap();
    assert_eq!((resumed.round(), resumed.phase()), (1, Phase::Collecting));
}

#[test]
fn simulated_history_feeds_the_dashboard() {
    let config = workshop();
    let policies = vec![ActorPolicy::Random { seed: None }; config.actors.len()];
    let records = simulate(&config, &policies, 4, 11).unwrap();

    let dataset = DecisionDataset {
        rounds: records.iter().map(|r| r.interests.clone()).collect(),
    };
    let mut bytes = Vec::new();
    write_decisions_csv(&dataset, &mut bytes).unwrap();
    assert_eq!(read_decisions_csv(bytes.as_slice()).unwrap(), dataset);

    let report = analyze(&DecisionPanel::from_records(&records), Some(&ScorePanel::from_records(&records)));
    assert_eq!(report.rounds, 4);
    assert!(matches!(report.cell_levene, Section::Ok(_)), "{:?}", report.cell_levene);
    let anova = report.cell_anova.ok().unwrap();
    let closure: f64 = anova.rows.iter().map(|r| r.ss).sum::<f64>() - anova.ss_total;
    assert!(closure.abs() <= 1e-9 * anova.ss_total);
    assert!(!report.time_correlation.is_empty());
}
