//! Scratch tuning harness (not part of the deliverable).

use flowcast::data::{prepare_supervised, synth_corpus_with, SynthOptions};
use flowcast::evalsuite::{compare, fit_baseline, BaselineConfig, BaselineKind, Forecaster, GcnForecaster};
use flowcast::graph::{availability_scores, build_adjacency, KernelMode, TravelTimeMatrix};
use flowcast::neural::{train, Activation, ModelConfig, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let stations: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let days: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let noise: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(8.0);
    let epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(40);
    let hidden: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(24);
    let gcn_dim: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(4);
    let look_back: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(96);
    let intraday: f64 = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(4.0);

    println!("stations={stations} days={days} noise={noise} epochs={epochs} hidden={hidden} gcn={gcn_dim} lb={look_back} intraday={intraday}");

    let opts = SynthOptions { noise_std: noise, intraday_sigma: intraday, ..SynthOptions::default() };
    let mut orderings = 0;
    for seed in 0..5u64 {
        let t0 = Instant::now();
        let corpus = synth_corpus_with(stations, days, 1000 + seed, &opts).unwrap();
        let prep = prepare_supervised(&corpus.frame, look_back, 1, (0.7, 0.15, 0.15)).unwrap();
        let avail = availability_scores(&corpus.meta).unwrap();
        let tmat = TravelTimeMatrix::from_seconds(corpus.travel_seconds.clone()).unwrap();
        let adj = build_adjacency(&tmat, &avail, KernelMode::Gaussian, 0.1, 1e-6).unwrap();

        let model_cfg = ModelConfig {
            stations,
            look_back,
            horizon: 1,
            gcn_dims: vec![gcn_dim],
            gcn_activation: Activation::Relu,
            lstm_hidden: vec![hidden],
        };
        let train_cfg = TrainConfig { epochs, seed, ..TrainConfig::default() };
        let t_train = Instant::now();
        let (params, report, _q) = train(&prep.train, &prep.val, &adj, &model_cfg, &train_cfg).unwrap();
        let proposed_time = t_train.elapsed().as_secs_f64();
        let proposed = GcnForecaster::new(params, model_cfg, &adj);

        let bl_cfg = BaselineConfig {
            lstm_hidden: hidden,
            train: TrainConfig { epochs, seed, ..TrainConfig::default() },
            ..BaselineConfig::default()
        };
        let t_lstm = Instant::now();
        let lstm = fit_baseline(BaselineKind::Lstm, &prep.train, &prep.val, &bl_cfg, seed).unwrap();
        let lstm_time = t_lstm.elapsed().as_secs_f64();
        let ha = fit_baseline(BaselineKind::Ha, &prep.train, &prep.val, &bl_cfg, seed).unwrap();

        let models: Vec<(&str, &dyn Forecaster)> =
            vec![("proposed", &proposed), ("lstm", &lstm), ("ha", &ha)];
        let rows = compare(&models, &prep.test).unwrap();
        let mae: Vec<f64> = rows.iter().map(|r| r.report.mae).collect();
        let ok = mae[0] < mae[1] && mae[1] < mae[2];
        if ok {
            orderings += 1;
        }
        // window-5 smoothed train loss non-increasing?
        let smooth: Vec<f64> = report
            .train_loss
            .windows(5)
            .map(|w| w.iter().sum::<f64>() / 5.0)
            .collect();
        let mono = smooth.windows(2).all(|p| p[1] <= p[0]);
        println!(
            "seed {seed}: proposed {:.4} ({proposed_time:.0}s, {} ep, best {}) lstm {:.4} ({lstm_time:.0}s) ha {:.4} | ordered={ok} mono={mono} total {:.0}s",
            mae[0],
            report.epochs_run(),
            report.best_epoch,
            mae[1],
            mae[2],
            t0.elapsed().as_secs_f64()
        );
    }
    println!("orderings: {orderings}/5");
}
