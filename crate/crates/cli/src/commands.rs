use std::path::Path;

use aadit_core::data::{dataset_load, dataset_save, generate, Dataset};
use aadit_core::gradcheck::{run_suite, tolerance_for_step, GradCheckOptions};
use aadit_core::metrics::{append_metrics_row, write_metrics_csv, MetricsRow, CSV_HEADER};
use aadit_core::probe::{attention_trace, class_accuracy, export_attention as export_trace, extract_features, train_probe};
use aadit_core::trainer::{checkpoint_load, evaluate_split, Trainer};
use aadit_core::{Error, Result};

use crate::config::RunConfig;
use crate::{EvalArgs, ExportAttentionArgs, GenDataArgs, GradcheckArgs, TrainArgs};

fn echo(cfg: &RunConfig) {
    print!("{}", cfg.to_kv_string());
    println!();
}

fn parse_list(raw: &str, what: &str) -> Result<Vec<usize>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{what}: cannot parse {p:?}")))
        })
        .collect()
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
        ));
    }
    dataset_load(path)
}

pub fn gen_data(args: GenDataArgs) -> Result<u8> {
    let mut cfg = crate::resolve_config(&args.common)?;
    if let Some(v) = args.domains {
        cfg.data.domain_count = v;
    }
    if let Some(v) = args.classes {
        cfg.data.class_count = v;
        cfg.data.susceptibility = aadit_core::data::susceptibility_ramp(v);
    }
    if let Some(v) = args.frames {
        cfg.data.frames_per_sequence = v;
    }
    if let Some(v) = args.seqs_per_domain {
        cfg.data.train_sequences_per_domain = v;
    }
    if let Some(v) = args.test_seqs_per_domain {
        cfg.data.test_sequences_per_domain = v;
    }
    if let Some(v) = args.input_dim {
        cfg.data.input_dim = v;
    }
    if let Some(v) = args.sigma {
        cfg.data.noise_sigma = v;
    }
    if let Some(v) = args.delta {
        cfg.data.domain_shift = v;
    }
    if let Some(raw) = &args.susceptibility {
        cfg.data.susceptibility = raw
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("susceptibility: cannot parse {p:?}")))
            })
            .collect::<Result<_>>()?;
    }
    cfg.finalize();
    echo(&cfg);

    cfg.data.validate()?;
    let dataset = generate(&cfg.data)?;
    if let Some(parent) = cfg.dataset.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    dataset_save(&dataset, &cfg.dataset)?;

    println!(
        "wrote {} ({} train + {} test sequences, {} frames each)",
        cfg.dataset.display(),
        dataset.train.len(),
        dataset.test.len(),
        cfg.data.frames_per_sequence
    );
    let mut class_counts = vec![0usize; cfg.data.class_count];
    let mut domain_counts = vec![0usize; cfg.data.domain_count];
    for seq in dataset.train.iter().chain(&dataset.test) {
        domain_counts[seq.domain as usize] += seq.frames_len();
        for &l in &seq.class_labels {
            class_counts[l as usize] += 1;
        }
    }
    println!("frames per domain: {domain_counts:?}");
    println!("frames per class:  {class_counts:?}");
    Ok(0)
}

pub fn train(args: TrainArgs) -> Result<u8> {
    let mut cfg = crate::resolve_config(&args.common)?;
    if let Some(v) = &args.mode {
        cfg.train.mode = v.parse()?;
    }
    if let Some(v) = args.lambda {
        cfg.train.lambda = v;
    }
    if let Some(v) = args.mu {
        cfg.train.mu = v;
    }
    if let Some(v) = args.split_depth {
        cfg.train.split_depth = v;
    }
    if let Some(v) = args.window {
        cfg.train.attention.left = v;
        cfg.train.attention.right = v;
    }
    if let Some(v) = args.ra {
        cfg.train.attention.key_dim = v;
    }
    if let Some(v) = args.heads {
        cfg.train.attention.heads = v;
    }
    if let Some(v) = &args.score {
        cfg.train.attention.score = v.parse()?;
    }
    if let Some(v) = &args.pos_enc {
        cfg.train.attention.positional_encoding = match v.as_str() {
            "on" | "true" => true,
            "off" | "false" => false,
            other => return Err(Error::Config(format!("--pos-enc expects on/off, got {other:?}"))),
        };
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.batch {
        cfg.train.batch_size = v;
    }
    cfg.finalize();
    echo(&cfg);

    let dataset = load_dataset(&cfg.dataset)?;
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = checkpoint_load(path)?;
            Trainer::from_checkpoint(ckpt)?
        }
        None => {
            // dims always come from the dataset actually on disk
            cfg.train.input_dim = dataset.config.input_dim;
            cfg.train.class_count = dataset.config.class_count;
            cfg.train.domain_count = dataset.config.domain_count;
            cfg.train.validate()?;
            Trainer::new(cfg.train.clone())?
        }
    };

    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let metrics = trainer.run(&dataset, Some(&cfg.out))?;
    let metrics_path = cfg.out.join("metrics.csv");
    write_metrics_csv(&metrics_path, &metrics)?;

    match metrics.last() {
        Some(last) => println!(
            "trained {} steps; final l_senone={} l_domain={} -> {}",
            last.step,
            last.l_senone.map(|v| format!("{v:.6}")).unwrap_or_default(),
            last.l_domain.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
            metrics_path.display()
        ),
        None => println!("no training steps (epochs already complete)"),
    }
    println!("final checkpoint: {}", cfg.out.join("final.ckpt").display());
    Ok(0)
}

pub fn eval(args: EvalArgs) -> Result<u8> {
    let mut cfg = crate::resolve_config(&args.common)?;
    if let Some(v) = &args.checkpoint {
        cfg.checkpoint = v.clone();
    }
    if let Some(v) = args.probe_epochs {
        cfg.probe.epochs = v;
    }
    if let Some(v) = args.probe_mu {
        cfg.probe.mu = v;
    }
    if let Some(raw) = &args.probe_hidden {
        cfg.probe.hidden_dims = parse_list(raw, "probe_hidden")?;
    }
    cfg.finalize();
    echo(&cfg);

    let ckpt_path = cfg.checkpoint_path();
    if !ckpt_path.exists() {
        return Err(Error::io(
            &ckpt_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
        ));
    }
    let ckpt = checkpoint_load(&ckpt_path)?;
    let dataset = load_dataset(&cfg.dataset)?;

    let stats = evaluate_split(&ckpt.model, &dataset.test)?;
    let class_acc = class_accuracy(&ckpt.model, &dataset.test)?;

    let train_features = extract_features(&ckpt.model, &dataset.train, cfg.jobs)?;
    let test_features = extract_features(&ckpt.model, &dataset.test, cfg.jobs)?;
    let train_domains: Vec<u16> = dataset.train.iter().map(|s| s.domain).collect();
    let test_domains: Vec<u16> = dataset.test.iter().map(|s| s.domain).collect();
    let probe_acc = train_probe(
        dataset.config.domain_count,
        &train_features,
        &train_domains,
        &test_features,
        &test_domains,
        &cfg.probe,
    )?;

    let row = MetricsRow {
        step: ckpt.step,
        l_senone: Some(stats.l_senone),
        l_domain: stats.l_domain,
        class_acc: Some(class_acc),
        domain_acc: stats.domain_acc,
        probe_acc: Some(probe_acc),
    };
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let eval_path = cfg.out.join("eval.csv");
    append_metrics_row(&eval_path, &row)?;
    println!("{CSV_HEADER}");
    println!("{}", row.to_csv_line());
    println!("appended to {}", eval_path.display());
    Ok(0)
}

pub fn gradcheck(args: GradcheckArgs) -> Result<u8> {
    let tolerance = args.tol.unwrap_or_else(|| tolerance_for_step(args.h));
    let options = GradCheckOptions {
        h: args.h,
        tolerance,
        seed: args.seed,
        grl_sign_flip: false,
    };
    let report = run_suite(&options)?;
    print!("{}", report.format_table());
    if report.passed() {
        println!("gradcheck: all groups within tolerance");
        Ok(0)
    } else {
        let failing: Vec<String> = report
            .failing()
            .iter()
            .map(|r| format!("{} [{}]", r.group, r.configuration))
            .collect();
        println!("gradcheck FAILED: {}", failing.join(", "));
        Ok(5)
    }
}

pub fn export_attention(args: ExportAttentionArgs) -> Result<u8> {
    let mut cfg = crate::resolve_config(&args.common)?;
    if let Some(v) = &args.checkpoint {
        cfg.checkpoint = v.clone();
    }
    cfg.finalize();
    echo(&cfg);

    let ckpt_path = cfg.checkpoint_path();
    if !ckpt_path.exists() {
        return Err(Error::io(
            &ckpt_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
        ));
    }
    let ckpt = checkpoint_load(&ckpt_path)?;
    if ckpt.model.attention.is_none() {
        return Err(Error::Config(format!(
            "checkpoint {} is {} mode; export-attention needs an aadit checkpoint",
            ckpt_path.display(),
            ckpt.config.mode
        )));
    }
    let dataset = load_dataset(&cfg.dataset)?;
    let split = dataset.split(&args.split)?;
    let indices = parse_list(&args.sequences, "sequences")?;

    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let left = ckpt.config.attention.left;
    let right = ckpt.config.attention.right;
    for idx in indices {
        let seq = split.get(idx).ok_or_else(|| {
            Error::Input(format!(
                "sequence index {idx} out of range for {} split of {} sequences",
                args.split,
                split.len()
            ))
        })?;
        let trace = attention_trace(&ckpt.model, seq)?;
        let path = cfg.out.join(format!("attn_{}_{idx}.csv", args.split));
        export_trace(&trace, left, right, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}
