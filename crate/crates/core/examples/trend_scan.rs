//! Scratch driver for trend calibration runs.

use aadit_core::data::{generate, DatasetConfig};
use aadit_core::probe::{class_accuracy, extract_features, train_probe, ProbeConfig};
use aadit_core::trainer::{train_loop, Mode, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let mu: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.08);
    let lambda: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let window: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(5);
    let delta: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let score: aadit_core::attention::ScoreType = args
        .get(6)
        .map(|s| s.parse().unwrap())
        .unwrap_or(aadit_core::attention::ScoreType::DotProduct);
    let gamma_mode = args.get(7).map(|s| s.as_str()).unwrap_or("ramp");
    let probe_hidden: Vec<usize> = match args.get(8).map(|s| s.as_str()) {
        None | Some("mlp") => vec![32],
        Some("linear") => vec![],
        Some(other) => vec![other.parse().unwrap()],
    };
    let sigma: f64 = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(0.3);

    let mut data_config = DatasetConfig {
        domain_shift: delta,
        noise_sigma: sigma,
        ..DatasetConfig::default()
    };
    if gamma_mode == "bimodal" {
        data_config.susceptibility = vec![0.0, 0.0, 0.05, 0.05, 0.1, 0.9, 0.95, 0.95, 1.0, 1.0];
    } else if gamma_mode == "sparse" {
        data_config.susceptibility = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0];
    } else if gamma_mode == "sparse3" {
        data_config.susceptibility = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.9, 1.0, 1.0];
    }
    let dataset = generate(&data_config).unwrap();
    println!(
        "dataset: {} train seqs, {} test seqs; epochs={epochs} mu={mu} lambda={lambda} window={window} delta={delta}",
        dataset.train.len(),
        dataset.test.len()
    );

    let train_domains: Vec<u16> = dataset.train.iter().map(|s| s.domain).collect();
    let test_domains: Vec<u16> = dataset.test.iter().map(|s| s.domain).collect();

    for mode in [Mode::Baseline, Mode::Adit, Mode::Aadit] {
        let mut probe_accs = Vec::new();
        let mut class_accs = Vec::new();
        for seed in 1..=5u64 {
            let start = std::time::Instant::now();
            let mut config = TrainConfig {
                mode,
                lambda,
                mu,
                epochs,
                seed,
                ..TrainConfig::default()
            };
            config.attention.left = window;
            config.attention.right = window;
            config.attention.score = score;
            let (model, metrics) = train_loop(&config, &dataset, None).unwrap();
            let train_f = extract_features(&model, &dataset.train, 4).unwrap();
            let test_f = extract_features(&model, &dataset.test, 4).unwrap();
            let probe_acc = train_probe(
                data_config.domain_count,
                &train_f,
                &train_domains,
                &test_f,
                &test_domains,
                &ProbeConfig {
                    seed,
                    hidden_dims: probe_hidden.clone(),
                    ..ProbeConfig::default()
                },
            )
            .unwrap();
            let class_acc = class_accuracy(&model, &dataset.test).unwrap();
            let last = metrics.last().unwrap();
            println!(
                "  {mode} seed {seed}: probe={probe_acc:.4} class={class_acc:.4} l_senone={:.4} l_domain={:?} ({:.1}s)",
                last.l_senone.unwrap(),
                last.l_domain.map(|v| format!("{v:.4}")),
                start.elapsed().as_secs_f64()
            );
            probe_accs.push(probe_acc);
            class_accs.push(class_acc);
        }
        probe_accs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        class_accs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "  {mode} median: probe={:.4} class={:.4}",
            probe_accs[2], class_accs[2]
        );
    }
}
