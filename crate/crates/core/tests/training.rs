use tracker_core::ppo::{train, TrainOptions, TrainingScenarios};
use tracker_core::scenario::figure8_scenario;
use tracker_core::PpoConfig;

fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        num += (i as f64 - mx) * (y - my);
        den += (i as f64 - mx) * (i as f64 - mx);
    }
    num / den
}

#[test]
fn obstacle_free_return_trends_upward() {
    let scenarios = TrainingScenarios::obstacle_free(figure8_scenario().unwrap());
    let config = PpoConfig {
        total_timesteps: 60 * 1024,
        eval_interval: 0,
        ..PpoConfig::default()
    };
    let out = train(&scenarios, &config, 0, &TrainOptions::default()).unwrap();
    let returns: Vec<f64> = out
        .log
        .iter()
        .map(|r| r.mean_episode_return)
        .filter(|r| r.is_finite())
        .collect();
    assert!(returns.len() > 40, "only {} logged returns", returns.len());
    // moving average over 10 updates
    let smooth: Vec<f64> = returns.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    let s = slope(&smooth);
    assert!(s > 0.0, "moving-average slope {s}: {smooth:?}");
}
