use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tvfl_core::bounds::{sweep_thresholds, LatencyConfig, SweepRow};
use tvfl_core::experiment::{
    alpha_sweep, fusion_pair, init_network, mean_server_share, power_rows, uplink_channel,
    Preset, ScaleProfile, ALPHAS,
};
use tvfl_core::nn::{load_checkpoint, save_checkpoint, Activation, NetSpec};
use tvfl_core::scenario::{generate_dataset, load_dataset, persist_dataset, write_csv, Dataset, ScenarioConfig};
use tvfl_core::trainer::{evaluate, train as run_training, write_metrics_csv, ComputeModel, TrainConfig};

use crate::config::{bounds_text, render, BoundsFile, ConfigFile};
use crate::fail::Failure;
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::{BoundsArgs, EvalArgs, ExperimentArgs, GenDataArgs, PrintConfigArgs, TrainArgs};

type Res = Result<(), Failure>;

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn ensure_dir(dir: &Path) -> Res {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::new("E_IO", format!("path={} msg={:?}", dir.display(), e.to_string())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::new("E_IO", format!("path={} msg={:?}", path.display(), e.to_string())))
}

fn load(path: &Path) -> Result<Dataset, Failure> {
    load_dataset(path).map_err(|e| {
        let f = Failure::from(e);
        Failure::new(f.code, format!("path={} {}", path.display(), f.detail))
    })
}

fn read_config(path: Option<&PathBuf>) -> Result<ConfigFile, Failure> {
    match path {
        Some(p) => ConfigFile::read(p),
        None => Ok(ConfigFile::default()),
    }
}

pub fn gen_data(root: &Path, a: GenDataArgs) -> Res {
    let file = read_config(a.config.as_ref())?;
    let mut cfg = file.scenario(ScenarioConfig::default())?;
    if let Some(k) = a.num_su {
        cfg.num_su = k;
        cfg.su_regions = tvfl_core::scenario::default_su_regions(k, cfg.area_side);
    }
    if let Some(m) = a.samples {
        cfg.num_samples = m;
    }
    if let Some(t) = a.train {
        cfg.train_count = t;
    }
    if let Some(s) = a.seed {
        cfg.rng_seed = s;
    }
    let path = resolve(root, &a.out);
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut manifest = RunManifest::new(
        "gen-data",
        format!("[scenario]\n{}", cfg.canonical_text()),
        cfg.rng_seed,
        path.parent().unwrap_or(Path::new(".")),
    );
    let ds = generate_dataset(&cfg)?;
    persist_dataset(&ds, &path)?;
    if let Some(csv) = &a.csv {
        let mut w = create(&resolve(root, csv))?;
        write_csv(&ds, &mut w)?;
        w.flush()?;
    }
    manifest.dataset_path = Some(path.display().to_string());
    manifest.dataset_digest = Some(cfg.digest_hex());
    let mut mpath = path.clone().into_os_string();
    mpath.push(".manifest.json");
    manifest.finish_and_write(Path::new(&mpath))?;
    println!(
        "dataset={} samples={} train={} num_su={} digest={}",
        path.display(),
        ds.len(),
        ds.train_count,
        ds.num_su(),
        cfg.digest_hex()
    );
    Ok(())
}

fn parse_widths(flag: &str, v: Option<&String>) -> Result<Vec<usize>, Failure> {
    let v = v.ok_or_else(|| Failure::new("E_USAGE", format!("msg=\"--{flag} is required for the custom preset\"")))?;
    v.split(',')
        .map(|x| x.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::new("E_USAGE", format!("msg=\"--{flag}: bad width list {v:?}\"")))
}

fn resolve_spec(a: &TrainArgs, num_su: usize) -> Result<(Preset, NetSpec), Failure> {
    let auto = match a.central_input.as_str() {
        "auto" => true,
        "fixed" => false,
        other => {
            return Err(Failure::new(
                "E_USAGE",
                format!("msg=\"--central-input must be auto or fixed, got {other}\""),
            ))
        }
    };
    let preset = match a.preset.as_str() {
        "custom" => Preset::Custom(NetSpec {
            local_arch: parse_widths("local-arch", a.local_arch.as_ref())?,
            central_arch: parse_widths("central-arch", a.central_arch.as_ref())?,
            num_su,
            hidden: Activation::Relu,
        }),
        name => Preset::parse(name).ok_or_else(|| {
            Failure::new("E_UNKNOWN_PRESET", format!("preset={name}"))
        })?,
    };
    let spec = preset.spec(num_su, a.local_hidden, auto);
    Ok((preset, spec))
}

fn describe_spec(spec: &NetSpec) -> String {
    let w = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    format!("# local_arch = {}\n# central_arch = {}\n", w(&spec.local_arch), w(&spec.central_arch))
}

pub fn train(root: &Path, a: TrainArgs) -> Res {
    let ds = load(&a.data)?;
    let k = ds.num_su();
    let file = read_config(a.config.as_ref())?;
    let mut cfg = file.train(TrainConfig::default())?;
    cfg.compute = file.compute(ComputeModel::default())?;
    let channel = file.channel(uplink_channel(k))?;
    if let Some(v) = a.alpha {
        cfg.activation_ratio = v;
    }
    if let Some(v) = a.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.eta {
        cfg.step_size = v;
    }
    if let Some(v) = a.batch {
        cfg.batch_size = Some(v);
    }
    if let Some(v) = a.lambda {
        cfg.loss.lambda = v;
    }
    if let Some(v) = a.target_mse {
        cfg.target_mse = Some(v);
    }
    if let Some(v) = a.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = a.probe_every {
        cfg.v_probe_every = v;
    }
    let (preset, spec) = resolve_spec(&a, k)?;
    spec.validate_for(ds.config.feature_dim(), tvfl_core::scenario::LABEL_DIM)?;

    let out = resolve(
        root,
        &a.out.clone().unwrap_or_else(|| {
            PathBuf::from(format!("train-{}-a{}-s{}", preset.name(), cfg.activation_ratio, cfg.seed))
        }),
    );
    ensure_dir(&out)?;
    let resolved = format!(
        "# preset = {}\n{}{}",
        preset.name(),
        describe_spec(&spec),
        render(&ds.config, &cfg, &channel, &cfg.compute)
    );
    let mut manifest = RunManifest::new("train", resolved, cfg.seed, &out);
    manifest.preset = preset.name().to_string();
    manifest.activation_ratios = vec![cfg.activation_ratio];
    manifest.dataset_path = Some(a.data.display().to_string());
    manifest.dataset_digest = Some(ds.config.digest_hex());

    let mut net = init_network(spec, &ds, cfg.seed)?;
    let report = run_training(&ds, &mut net, &cfg, &channel)?;
    let mut w = create(&out.join("metrics.csv"))?;
    write_metrics_csv(&mut w, &report.metrics, k)?;
    w.flush()?;
    save_checkpoint(&net, out.join("checkpoint.tvflck"))?;
    manifest.finish_and_write(&out.join(MANIFEST_FILE))?;
    let final_mse = report
        .final_test_mse()
        .map_or_else(|| "none".to_string(), |v| format!("{v:.6}"));
    println!(
        "out={} rounds={} final_test_mse={} cumulative_latency_s={:.6} rounds_to_target={}",
        out.display(),
        report.metrics.len(),
        final_mse,
        report.total_latency(),
        report.rounds_to_target.map_or_else(|| "none".to_string(), |r| r.to_string())
    );
    Ok(())
}

pub fn eval(root: &Path, a: EvalArgs) -> Res {
    let ds = load(&a.data)?;
    let net = load_checkpoint(&a.checkpoint)?;
    let e = evaluate(&net, &ds)?;
    let med: Vec<String> = e
        .location_errors
        .iter()
        .map(|v| format!("{:.6}", tvfl_core::experiment::median(v).unwrap_or(f64::NAN)))
        .collect();
    println!(
        "mse={:.6} power_accuracy_pu1={:.6} power_accuracy_pu2={:.6} median_location_error_pu1={} median_location_error_pu2={}",
        e.mse, e.power_accuracy[0], e.power_accuracy[1], med[0], med[1]
    );
    if let Some(out) = &a.out {
        let path = resolve(root, out);
        let mut w = csv::Writer::from_writer(create(&path)?);
        let cols = ["p1", "p2", "x1", "y1", "z1", "x2", "y2", "z2"];
        let mut header = vec!["sample".to_string()];
        header.extend(cols.iter().map(|c| format!("pred_{c}")));
        header.extend(cols.iter().map(|c| format!("label_{c}")));
        w.write_record(&header).map_err(csv_fail)?;
        for (r, i) in ds.test_indices().into_iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(e.predictions.row(r).iter().map(|v| v.to_string()));
            rec.extend(ds.labels.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_fail)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn csv_fail(e: csv::Error) -> Failure {
    Failure::new("E_IO", format!("msg={:?}", e.to_string()))
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Failure> {
    s.split(',')
        .map(|x| x.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::new("E_USAGE", format!("msg=\"bad seed list {s:?}\"")))
}

fn gnuplot_script(fig: &str, x: &str, data: &str, xlabel: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key outside");
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    let _ = writeln!(s, "set ylabel 'test MSE'");
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{fig}_{x}.png'");
    let alphas = ALPHAS.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(
        s,
        "plot for [a in \"{alphas}\"] '{data}' using (strcol(1) eq a ? column(3) : 1/0):4 with lines title 'alpha='.a"
    );
    s
}

pub fn experiment(root: &Path, a: ExperimentArgs) -> Res {
    let profile = ScaleProfile::by_name(&a.profile)
        .ok_or_else(|| Failure::new("E_UNKNOWN_PROFILE", format!("profile={}", a.profile)))?;
    if !["fig2", "fig3", "fig4", "fig5"].contains(&a.figure.as_str()) {
        return Err(Failure::new("E_UNKNOWN_FIGURE", format!("figure={}", a.figure)));
    }
    let seeds = parse_seeds(&a.seeds)?;
    let out = resolve(
        root,
        &a.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}-{}", a.figure, profile.name))),
    );
    ensure_dir(&out)?;
    let num_su = if a.figure == "fig5" { 8 } else { 4 };
    let scenario = profile.scenario(num_su, a.data_seed);
    let mut base = profile.train_config(0.9, seeds[0]);
    if let Some(r) = a.rounds {
        base.rounds = r;
    }
    let preset = if a.figure == "fig2" {
        Preset::NetworkI
    } else {
        Preset::NetworkII
    };
    let spec = profile.spec(&preset, 4);
    let resolved = format!(
        "# figure = {}\n# profile = {}\n# preset = {}\n# seeds = {}\n{}{}",
        a.figure,
        profile.name,
        preset.name(),
        a.seeds,
        describe_spec(&spec),
        render(&scenario, &base, &uplink_channel(num_su), &base.compute)
    );
    let mut manifest = RunManifest::new("experiment", resolved, seeds[0], &out);
    manifest.preset = preset.name().to_string();
    manifest.dataset_digest = Some(scenario.digest_hex());
    let ds = generate_dataset(&scenario)?;

    match a.figure.as_str() {
        "fig2" | "fig3" => {
            manifest.activation_ratios = ALPHAS.to_vec();
            let runs = alpha_sweep(&ds, &spec, &ALPHAS, &seeds, &base, &uplink_channel(4))?;
            let fig = &a.figure;
            let mut rounds = csv::Writer::from_writer(create(&out.join(format!("{fig}_rounds.csv")))?);
            rounds
                .write_record(["alpha", "seed", "round", "test_mse", "train_mse"])
                .map_err(csv_fail)?;
            let mut lat = csv::Writer::from_writer(create(&out.join(format!("{fig}_latency.csv")))?);
            lat.write_record(["alpha", "seed", "t_cum_s", "test_mse"]).map_err(csv_fail)?;
            let mut summary = csv::Writer::from_writer(create(&out.join(format!("{fig}_summary.csv")))?);
            summary
                .write_record(["alpha", "seed", "rounds", "final_test_mse", "total_latency_s", "mean_v0"])
                .map_err(csv_fail)?;
            for run in &runs {
                let (al, sd) = (run.alpha.to_string(), run.seed.to_string());
                for m in &run.report.metrics {
                    if let Some(t) = m.test_mse {
                        let r = (m.round + 1).to_string();
                        rounds
                            .write_record([&al, &sd, &r, &t.to_string(), &m.train_mse.to_string()])
                            .map_err(csv_fail)?;
                        lat.write_record([&al, &sd, &m.t_cum.to_string(), &t.to_string()])
                            .map_err(csv_fail)?;
                    }
                }
                let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
                summary
                    .write_record([
                        al.clone(),
                        sd.clone(),
                        run.report.metrics.len().to_string(),
                        opt(run.report.final_test_mse()),
                        run.report.total_latency().to_string(),
                        opt(mean_server_share(&run.report.metrics)),
                    ])
                    .map_err(csv_fail)?;
                println!(
                    "alpha={} seed={} final_test_mse={} total_latency_s={:.6}",
                    run.alpha,
                    run.seed,
                    opt(run.report.final_test_mse()),
                    run.report.total_latency()
                );
            }
            rounds.flush()?;
            lat.flush()?;
            summary.flush()?;
            fs::write(
                out.join(format!("{fig}_rounds.gp")),
                gnuplot_script(fig, "rounds", &format!("{fig}_rounds.csv"), "rounds"),
            )?;
            fs::write(
                out.join(format!("{fig}_latency.gp")),
                gnuplot_script(fig, "latency", &format!("{fig}_latency.csv"), "training latency (s)"),
            )?;
        }
        "fig4" => {
            manifest.activation_ratios = vec![base.activation_ratio];
            let mut net = init_network(spec, &ds, base.seed)?;
            run_training(&ds, &mut net, &base, &uplink_channel(4))?;
            let e = evaluate(&net, &ds)?;
            let mut w = csv::Writer::from_writer(create(&out.join("fig4_power.csv"))?);
            w.write_record(["pu", "sample", "label", "prediction", "rounded"])
                .map_err(csv_fail)?;
            for r in power_rows(&e, &ds, 20) {
                w.write_record([
                    (r.pu + 1).to_string(),
                    r.sample.to_string(),
                    r.label.to_string(),
                    r.prediction.to_string(),
                    r.rounded.to_string(),
                ])
                .map_err(csv_fail)?;
            }
            w.flush()?;
            println!(
                "test_mse={:.6} power_accuracy_pu1={:.6} power_accuracy_pu2={:.6}",
                e.mse, e.power_accuracy[0], e.power_accuracy[1]
            );
        }
        _ => {
            manifest.activation_ratios = vec![base.activation_ratio];
            let f = fusion_pair(&ds, &preset, profile.network_i_hidden, &base)?;
            let mut w = csv::Writer::from_writer(create(&out.join("fig5_location.csv"))?);
            w.write_record([
                "sample".to_string(),
                "pu".to_string(),
                format!("error_{}su", f.few_su),
                format!("error_{}su", f.many_su),
            ])
            .map_err(csv_fail)?;
            let test = ds.test_indices();
            for pu in 0..f.few.location_errors.len() {
                for (r, &i) in test.iter().enumerate() {
                    w.write_record([
                        i.to_string(),
                        (pu + 1).to_string(),
                        f.few.location_errors[pu][r].to_string(),
                        f.many.location_errors[pu][r].to_string(),
                    ])
                    .map_err(csv_fail)?;
                }
            }
            w.flush()?;
            let (few, many) = f.medians();
            println!(
                "median_error_{}su={few:.6} median_error_{}su={many:.6}",
                f.few_su, f.many_su
            );
        }
    }
    manifest.finish_and_write(&out.join(MANIFEST_FILE))
}

fn parse_sweep(s: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::new("E_USAGE", format!("msg=\"--g1 expects start:end:points, got {s:?}\""));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].parse().map_err(|_| bad())?;
    let end: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || start.is_nan() || end.is_nan() || start <= 0.0 || end < start {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![start]);
    }
    Ok((0..n)
        .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
        .collect())
}

fn bounds_rows(b: &BoundsFile, thresholds: &[f64]) -> Result<Vec<SweepRow>, Failure> {
    let lat = LatencyConfig {
        bits_per_symbol: b.bits_per_symbol,
        samples_per_round: b.samples_per_round,
        local_output_dim: b.local_output_dim,
        bandwidth: b.bandwidth,
        power_budget: b.power_budget,
        noise_power: b.noise_power,
        su_speed: b.su_speed,
        server_speed: b.server_speed,
        local_ops_per_sample: b.local_ops_per_sample,
        central_ops_per_sample: b.central_ops_per_sample,
    };
    lat.validate()?;
    let fixed = b.params.activation_level;
    let v_model = |g: f64| match b.v_server {
        Some(s) => s + (1.0 - s) * (-g).exp(),
        None => fixed,
    };
    Ok(sweep_thresholds(&b.params, &lat, b.num_su, b.rho_weakest, thresholds, v_model)?)
}

pub fn bounds(root: &Path, a: BoundsArgs) -> Res {
    let b = ConfigFile::read(&a.params)?.bounds()?;
    let thresholds = match &a.g1 {
        Some(s) => parse_sweep(s)?,
        None => vec![b.g_weakest],
    };
    let rows = bounds_rows(&b, &thresholds)?;
    let show = |v: Option<f64>| v.map_or_else(|| "unreachable".to_string(), |x| format!("{x:.6}"));
    println!(
        "{:>12} {:>12} {:>10} {:>14} {:>16} {:>16}",
        "g1", "eps", "v", "t_comm_s", "n_expect", "t_expect_s"
    );
    for r in &rows {
        println!(
            "{:>12.6} {:>12.6} {:>10.6} {:>14.6} {:>16} {:>16}",
            r.g_weakest,
            r.activation_ratio,
            r.activation_level,
            r.t_comm,
            show(r.n_expect),
            show(r.t_expect)
        );
    }
    if let Some(out) = &a.out {
        let dir = resolve(root, out);
        ensure_dir(&dir)?;
        let mut w = csv::Writer::from_writer(create(&dir.join("bounds.csv"))?);
        w.write_record(["g1", "eps", "v", "t_comm_s", "n_expect", "t_expect_s"])
            .map_err(csv_fail)?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for r in &rows {
            w.write_record([
                r.g_weakest.to_string(),
                r.activation_ratio.to_string(),
                r.activation_level.to_string(),
                r.t_comm.to_string(),
                opt(r.n_expect),
                opt(r.t_expect),
            ])
            .map_err(csv_fail)?;
        }
        w.flush()?;
        let mut m = RunManifest::new("bounds", format!("[bounds]\n{}", bounds_text(&b)), 0, &dir);
        m.activation_ratios = rows.iter().map(|r| r.activation_ratio).collect();
        m.finish_and_write(&dir.join(MANIFEST_FILE))?;
    }
    Ok(())
}

pub fn print_config(a: PrintConfigArgs) -> Res {
    let mut scenario = ScenarioConfig::default();
    let mut train = TrainConfig::default();
    if let Some(name) = &a.profile {
        let p = ScaleProfile::by_name(name)
            .ok_or_else(|| Failure::new("E_UNKNOWN_PROFILE", format!("profile={name}")))?;
        scenario = p.scenario(scenario.num_su, scenario.rng_seed);
        train = p.train_config(train.activation_ratio, train.seed);
    }
    let channel = uplink_channel(scenario.num_su);
    let full = format!(
        "{}\n[bounds]\n{}",
        render(&scenario, &train, &channel, &train.compute),
        bounds_text(&BoundsFile::default())
    );
    match &a.section {
        None => print!("{full}"),
        Some(name) => {
            let header = format!("[{name}]");
            let body: Vec<&str> = full
                .split("\n[")
                .map(|s| s.trim_start_matches('['))
                .filter(|s| s.starts_with(&format!("{name}]")))
                .collect();
            if body.is_empty() {
                return Err(Failure::new("E_CONFIG_SECTION", format!("section={name}")));
            }
            let text = body[0].trim_start_matches(&format!("{name}]"));
            print!("{header}{}", text.trim_end().to_string() + "\n");
        }
    }
    Ok(())
}
