//! `dhlab` — command-line lab for Dirichlet-series recovery and
//! heat-equation initial-data inversion.
//!
//! Subcommands:
//! * `forward`      tabulate a series / point / flux / hyperplane observation
//! * `recover`      run a recovery pipeline on recorded data
//! * `sensor-check` certify a sensor location
//! * `experiment`   run a noise sweep and fit stability rates
//! * `fit`          fit a rate model to an exported records CSV

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

use dirichlet_heat::forward::{
    sample, uniform_grid, DirichletSample, ExactSeries, InitialDatum, NoiseNorm, SeriesData,
    TensorDatum,
};
use dirichlet_heat::inverse_heat::{
    recover_initial_boundary, recover_initial_point, recover_tensor, sample_hyperplane,
    HyperplaneSample, InverseConfig,
};
use dirichlet_heat::lab::{
    export, fit_rate, import_records, run_experiment, DatumSpec, ExperimentConfig, RateModel,
    Scenario,
};
use dirichlet_heat::precision::{to_decimal_string, Prec};
use dirichlet_heat::report::Method;
use dirichlet_heat::sensor::{explicit_point, propose_point, verify_point, SensorPoint, Strategy};
use dirichlet_heat::sequences::{CoefficientSequence, EigenvalueSequence};

#[derive(Parser)]
#[command(name = "dhlab", about = "Dirichlet-series recovery and heat-equation inversion lab")]
struct Cli {
    /// Working precision in bits (overrides config files).
    #[arg(long, global = true)]
    precision_bits: Option<u32>,
    /// Seed override for randomized subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate an observation of a known initial datum.
    Forward {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover coefficients / an initial datum from recorded data.
    Recover {
        /// series | point | flux | tensor
        #[arg(long)]
        channel: String,
        /// biortho | peeling | vandermonde
        #[arg(long)]
        method: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify a sensor location x0 up to mode K.
    SensorCheck {
        /// golden | silver | a decimal | pi*<p>/<q> | pi*<x>
        #[arg(long)]
        x0: String,
        #[arg(long, default_value_t = 100_000)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
    },
    /// Run a noise sweep and fit the three rate models.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Fit a rate model to an exported records CSV.
    Fit {
        #[arg(long)]
        records: PathBuf,
        /// log | doublelog | holder
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Forward { config, out } => forward_cmd(&config, &out, cli.precision_bits, cli.seed),
        Command::Recover {
            channel,
            method,
            config,
            out,
        } => recover_cmd(&channel, &method, &config, &out, cli.precision_bits),
        Command::SensorCheck { x0, k, mu } => sensor_check_cmd(&x0, k, mu, cli.precision_bits),
        Command::Experiment { config, out_dir } => {
            experiment_cmd(&config, &out_dir, cli.precision_bits, cli.seed)
        }
        Command::Fit {
            records,
            model,
            out,
        } => fit_cmd(&records, &model, out.as_deref(), cli.precision_bits),
    }
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    let body = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&body)?)
}

fn precision_from(cfg: &Value, flag: Option<u32>) -> Prec {
    let bits = flag
        .or_else(|| cfg.get("precision_bits").and_then(Value::as_u64).map(|b| b as u32))
        .unwrap_or(dirichlet_heat::precision::DEFAULT_PRECISION_BITS);
    Prec::new(bits)
}

fn f64_field(cfg: &Value, name: &str, default: f64) -> f64 {
    cfg.get(name).and_then(Value::as_f64).unwrap_or(default)
}

fn coeffs_from(cfg: &Value, key: &str, prec: Prec) -> anyhow::Result<CoefficientSequence> {
    let raw = cfg
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| anyhow!("config needs a `{key}` array"))?;
    let entries = raw
        .iter()
        .map(|x| match x {
            Value::String(s) => Ok(prec.parse(s)?),
            Value::Number(n) => Ok(prec.parse(&n.to_string())?),
            other => bail!("cannot read coefficient from {other}"),
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(CoefficientSequence::from_entries(entries, prec))
}

fn family_from(cfg: &Value, alpha: f64, mu: f64, count: usize, prec: Prec) -> anyhow::Result<EigenvalueSequence> {
    match cfg.get("family") {
        Some(fam) => Ok(EigenvalueSequence::from_json(fam, prec)?),
        None => Ok(EigenvalueSequence::power(alpha, mu, count, prec)?),
    }
}

fn sensor_from(cfg: &Value, mu: f64, k_range: usize, prec: Prec) -> anyhow::Result<SensorPoint> {
    let spec = cfg.get("x0").and_then(Value::as_str).unwrap_or("golden");
    let pt = parse_sensor(spec, mu, prec)?;
    Ok(verify_point(&pt, k_range, prec)?)
}

fn parse_sensor(spec: &str, mu: f64, prec: Prec) -> anyhow::Result<SensorPoint> {
    let spec = spec.trim();
    match spec {
        "golden" => Ok(propose_point(Strategy::Golden, mu, prec)?),
        "silver" => Ok(propose_point(Strategy::Silver, mu, prec)?),
        _ => {
            let x0 = if let Some(rest) = spec.strip_prefix("pi*") {
                // The fraction must be formed at working precision; an f64
                // ratio would smear a rational blind spot past detection.
                let factor = if let Some((p, q)) = rest.split_once('/') {
                    prec.parse(p.trim())? / prec.parse(q.trim())?
                } else {
                    prec.parse(rest.trim())?
                };
                prec.pi() * factor
            } else {
                prec.parse(spec)?
            };
            Ok(explicit_point(x0, mu, prec)?)
        }
    }
}

fn forward_cmd(
    config: &Path,
    out: &Path,
    bits: Option<u32>,
    seed_flag: Option<u64>,
) -> anyhow::Result<()> {
    let cfg = read_json(config)?;
    let prec = precision_from(&cfg, bits);
    let channel = cfg.get("channel").and_then(Value::as_str).unwrap_or("series");
    let alpha = f64_field(&cfg, "alpha", 1.0);
    let mu = f64_field(&cfg, "mu", 1.0);
    let horizon = f64_field(&cfg, "T", 1.0);
    let epsilon = f64_field(&cfg, "epsilon", 0.0);
    let noise_norm: NoiseNorm = cfg
        .get("noise_norm")
        .and_then(Value::as_str)
        .unwrap_or("sup")
        .parse()?;
    let seed = seed_flag.or_else(|| cfg.get("seed").and_then(Value::as_u64));
    let times = match cfg.get("times") {
        Some(t) => {
            let t0 = f64_field(t, "t0", 0.0);
            let t1 = f64_field(t, "t1", horizon);
            let n = f64_field(t, "n", 257.0) as usize;
            uniform_grid(t0, t1, n, prec)
        }
        None => uniform_grid(0.0, horizon, 257, prec),
    };

    if channel == "hyperplane" {
        // Tensor observation: factors + axis.
        let factors_json = cfg
            .get("factors")
            .and_then(Value::as_array)
            .ok_or_else(|| anyhow!("hyperplane forward needs `factors`"))?;
        let mut factors = Vec::new();
        for f in factors_json {
            let c = coeffs_from(f, "coeffs", prec)?;
            let fmu = f64_field(f, "mu", 1.0);
            factors.push(InitialDatum::new(c, fmu)?);
        }
        let td = TensorDatum::new(factors, true)?;
        let axis = f64_field(&cfg, "axis", 0.0) as usize;
        let axis_mu = td.factors()[axis].domain_scale();
        let k_range = f64_field(&cfg, "K", 64.0) as usize;
        let sensor = sensor_from(&cfg, axis_mu, k_range, prec)?;
        let transverse = f64_field(&cfg, "transverse_points", 24.0) as usize;
        let hs = sample_hyperplane(
            &td,
            axis,
            &sensor,
            alpha,
            &times,
            epsilon,
            seed.unwrap_or(0),
            horizon,
            transverse,
            prec,
        )?;
        std::fs::write(out, serde_json::to_string_pretty(&hs.to_json())?)?;
        println!("wrote hyperplane observation to {}", out.display());
        return Ok(());
    }

    let coeffs = coeffs_from(&cfg, "coeffs", prec)?;
    let datum = InitialDatum::new(coeffs.clone(), mu)?;
    let count = coeffs.support().max(8) * 2;
    let sampled = match channel {
        "series" => {
            let seq = family_from(&cfg, alpha, mu, count, prec)?;
            let truth = ExactSeries {
                coeffs: &coeffs,
                exponents: &seq,
                prec,
            };
            sample(&truth, &times, epsilon, noise_norm, horizon, seed, prec)?
        }
        "point" => {
            let k_range = f64_field(&cfg, "K", 1000.0) as usize;
            let sensor = sensor_from(&cfg, mu, k_range.max(coeffs.support()), prec)?;
            let a = dirichlet_heat::sensor::mode_to_series(&datum, &sensor, prec)?;
            let seq = family_from(&cfg, alpha, mu, count, prec)?;
            let truth = ExactSeries {
                coeffs: &a,
                exponents: &seq,
                prec,
            };
            sample(&truth, &times, epsilon, noise_norm, horizon, seed, prec)?
        }
        "flux" => {
            let b = dirichlet_heat::forward::flux_coefficients(&datum, prec);
            let seq = family_from(&cfg, alpha, mu, count, prec)?;
            let truth = ExactSeries {
                coeffs: &b,
                exponents: &seq,
                prec,
            };
            sample(&truth, &times, epsilon, noise_norm, horizon, seed, prec)?
        }
        other => bail!("unknown forward channel `{other}`"),
    };
    sampled.write_csv(out)?;
    println!("wrote {} samples to {}", sampled.len(), out.display());
    Ok(())
}

fn recover_cmd(
    channel: &str,
    method: &str,
    config: &Path,
    out: &Path,
    bits: Option<u32>,
) -> anyhow::Result<()> {
    let start = std::time::Instant::now();
    let cfg = read_json(config)?;
    let prec = precision_from(&cfg, bits);
    let method: Method = method.parse()?;
    let alpha = f64_field(&cfg, "alpha", 1.0);
    let mu = f64_field(&cfg, "mu", 1.0);
    let horizon = f64_field(&cfg, "T", 1.0);
    let theta = f64_field(&cfg, "theta", 1.0);
    let m = f64_field(&cfg, "m", 1.0);
    let icfg = inverse_config_from(&cfg, horizon);

    let report_json = match channel {
        "tensor" => {
            let files = cfg
                .get("hyperplane_files")
                .and_then(Value::as_array)
                .ok_or_else(|| anyhow!("tensor recovery needs `hyperplane_files`"))?;
            let mut channels = Vec::new();
            for f in files {
                let path = f
                    .as_str()
                    .ok_or_else(|| anyhow!("hyperplane_files entries must be paths"))?;
                channels.push(HyperplaneSample::from_json(&read_json(Path::new(path))?, prec)?);
            }
            let eta = f64_field(&cfg, "eta", 1e-6);
            let result =
                recover_tensor(&channels, alpha, eta, theta, m, method, &icfg, None, prec)?;
            result.to_json()
        }
        "series" | "point" | "flux" => {
            let csv = cfg
                .get("sample_csv")
                .and_then(Value::as_str)
                .ok_or_else(|| anyhow!("recovery needs `sample_csv`"))?;
            let sampled = DirichletSample::read_csv(Path::new(csv), prec)?;
            let data = SeriesData::Sample(&sampled);
            match channel {
                "series" => {
                    let count = f64_field(&cfg, "modes", icfg.max_modes as f64) as usize;
                    let seq = family_from(&cfg, alpha, mu, count, prec)?;
                    let report = match method {
                        Method::Biortho => dirichlet_heat::biortho::recover_log(
                            &data,
                            &seq,
                            horizon,
                            theta,
                            m,
                            &icfg.biortho,
                            prec,
                        )?,
                        Method::Peeling => {
                            let (report, trace) = dirichlet_heat::peeling::recover_peeling(
                                &data, &seq, theta, m, &icfg.peel, prec,
                            )?;
                            let trace_path = out.with_extension("trace.csv");
                            std::fs::write(&trace_path, trace.to_csv())?;
                            println!("wrote peeling trace to {}", trace_path.display());
                            report
                        }
                        Method::Vandermonde => dirichlet_heat::vandermonde::recover_holder(
                            &data,
                            &seq,
                            m,
                            icfg.holder_alpha,
                            icfg.holder_beta,
                            &icfg.vandermonde,
                            prec,
                        )?,
                    };
                    report.to_json()
                }
                "point" => {
                    let k_range = f64_field(&cfg, "K", 1000.0) as usize;
                    let sensor = sensor_from(&cfg, mu, k_range, prec)?;
                    let result = recover_initial_point(
                        &sensor, alpha, &data, horizon, theta, m, method, &icfg, None, prec,
                    )?;
                    result.to_json()
                }
                _ => {
                    let beta = f64_field(&cfg, "beta", 1.0);
                    let result = recover_initial_boundary(
                        alpha, mu, &data, horizon, beta, m, method, &icfg, None, prec,
                    )?;
                    result.to_json()
                }
            }
        }
        other => bail!("unknown recovery channel `{other}`"),
    };
    let mut report_json = report_json;
    if let Value::Object(map) = &mut report_json {
        map.insert(
            "elapsed_ms".into(),
            Value::from(start.elapsed().as_millis() as u64),
        );
    }
    std::fs::write(out, serde_json::to_string_pretty(&report_json)?)?;
    println!("wrote report to {}", out.display());
    Ok(())
}

fn inverse_config_from(cfg: &Value, horizon: f64) -> InverseConfig {
    let mut icfg = InverseConfig::default().with_horizon(horizon);
    if let Some(n) = cfg.get("max_truncation").and_then(Value::as_u64) {
        icfg.biortho.max_truncation = n as usize;
        icfg.vandermonde.max_truncation = n as usize;
    }
    if let Some(n) = cfg.get("max_modes").and_then(Value::as_u64) {
        icfg.max_modes = n as usize;
    }
    if let Some(d) = cfg.get("dilation").and_then(Value::as_f64) {
        icfg.vandermonde.dilation = d;
    }
    if let Some(a) = cfg.get("holder_alpha").and_then(Value::as_f64) {
        icfg.holder_alpha = a;
    }
    if let Some(b) = cfg.get("holder_beta").and_then(Value::as_f64) {
        icfg.holder_beta = b;
    }
    icfg
}

fn sensor_check_cmd(x0: &str, k: usize, mu: f64, bits: Option<u32>) -> anyhow::Result<()> {
    let prec = Prec::new(bits.unwrap_or(dirichlet_heat::precision::DEFAULT_PRECISION_BITS));
    let pt = parse_sensor(x0, mu, prec)?;
    match verify_point(&pt, k, prec) {
        Ok(verified) => {
            let cert = verified.verification().unwrap();
            println!("x0 = {}", to_decimal_string(verified.x0()));
            println!("d0_empirical = {}", to_decimal_string(&cert.d0_empirical));
            println!("argmin_k = {}", cert.argmin_k);
            println!("verified_K = {}", cert.k_range);
            Ok(())
        }
        Err(e) => {
            println!("verification FAILED: {e}");
            std::process::exit(1);
        }
    }
}

fn experiment_cmd(
    config: &Path,
    out_dir: &Path,
    bits: Option<u32>,
    seed_flag: Option<u64>,
) -> anyhow::Result<()> {
    let cfg_json = read_json(config)?;
    let scenario: Scenario = cfg_json
        .get("scenario")
        .and_then(Value::as_str)
        .unwrap_or("series_recovery")
        .parse()?;
    let method: Method = cfg_json
        .get("method")
        .and_then(Value::as_str)
        .unwrap_or("biortho")
        .parse()?;
    let mut cfg = ExperimentConfig::new(scenario, method);
    cfg.alpha = f64_field(&cfg_json, "alpha", cfg.alpha);
    cfg.mu = f64_field(&cfg_json, "mu", cfg.mu);
    cfg.horizon = f64_field(&cfg_json, "T", cfg.horizon);
    cfg.theta = f64_field(&cfg_json, "theta", cfg.theta);
    cfg.m = f64_field(&cfg_json, "m", cfg.m);
    cfg.beta = f64_field(&cfg_json, "beta", cfg.beta);
    if let Some(bits) = bits {
        cfg.precision_bits = bits;
    } else if let Some(b) = cfg_json.get("precision_bits").and_then(Value::as_u64) {
        cfg.precision_bits = b as u32;
    }
    if let Some(seed) = seed_flag.or_else(|| cfg_json.get("seed").and_then(Value::as_u64)) {
        cfg.seed = seed;
    }
    if let Some(grid) = cfg_json.get("noise_grid").and_then(Value::as_array) {
        cfg.noise_grid = grid.iter().filter_map(Value::as_f64).collect();
    }
    if let Some(t) = cfg_json.get("trials").and_then(Value::as_u64) {
        cfg.trials = t as usize;
    }
    if let Some(datum) = cfg_json.get("datum") {
        if let Some(support) = datum.get("random_support").and_then(Value::as_u64) {
            cfg.datum = DatumSpec::Random {
                support: support as usize,
            };
        } else if let Some(fixed) = datum.get("fixed").and_then(Value::as_array) {
            cfg.datum = DatumSpec::Fixed(fixed.iter().filter_map(Value::as_f64).collect());
        }
    }

    let records = run_experiment(&cfg)?;
    let mut fits = Vec::new();
    for model in [RateModel::Log, RateModel::DoubleLog, RateModel::Holder] {
        if let Ok(fit) = fit_rate(&records, model) {
            fits.push(fit);
        }
    }
    let (csv_path, fits_path) = export(&records, &fits, &cfg.echo_json(), out_dir)?;
    println!("wrote {} and {}", csv_path.display(), fits_path.display());
    for fit in &fits {
        println!(
            "{}: exponent {:.4}, C {:.4}, R² {:.4}{}",
            fit.model,
            fit.exponent,
            fit.constant,
            fit.r_squared,
            if fit.flagged { " (flagged)" } else { "" }
        );
    }
    Ok(())
}

fn fit_cmd(
    records: &Path,
    model: &str,
    out: Option<&Path>,
    bits: Option<u32>,
) -> anyhow::Result<()> {
    let prec = Prec::new(bits.unwrap_or(dirichlet_heat::precision::DEFAULT_PRECISION_BITS));
    let model: RateModel = model.parse()?;
    let recs = import_records(records, prec)?;
    let fit = fit_rate(&recs, model)?;
    println!(
        "{}: exponent {:.6}, C {:.6}, R² {:.6}{}",
        fit.model,
        fit.exponent,
        fit.constant,
        fit.r_squared,
        if fit.flagged { " (flagged)" } else { "" }
    );
    if let Some(path) = out {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&json!({"fit": fit.to_json()}))?,
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
