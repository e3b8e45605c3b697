//! Implementations of the four subcommands.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sdm_core::channels::{
    dpcm_rd, dual_noise_variance, post_scaling, rate_lower_bound, sigma_delta_rd,
};
use sdm_core::filter_design::{
    design_fir_predictor, design_fwmse_predictor, design_unconstrained_on_grid, DesignResult,
};
use sdm_core::simulate::{
    monte_carlo, trace_block, NoiseModel, QuantizerSpec, SimConfig, SimReport,
};
use sdm_core::spectra::{BandSpec, FirFilter, DEFAULT_GRID_SIZE};

use crate::files::{
    read_filter, read_weight_csv, write_filter, write_filter_csv, write_text, CliError, FilterFile,
};
use crate::manifest::RunManifest;
use crate::{AnalyzeArgs, DesignArgs, SimulateArgs, SweepArgs, SweepAxis};

fn default_transition(l: f64) -> f64 {
    // pi/(8L), kept clear of the opposite band edge; collapses to a hard
    // step at L = 1 where no out-of-band region exists.
    let max_width = 0.999 * 0.5 * PI * (1.0 - 1.0 / l);
    (PI / (8.0 * l)).min(max_width).max(0.0)
}

pub fn run_design(args: &DesignArgs) -> Result<(), CliError> {
    let spec = BandSpec::new(args.l, args.sigma2x)?;
    let bound = rate_lower_bound(&spec, args.distortion)?;
    let mut manifest = RunManifest::new("design", None);

    let weight = match &args.weight {
        Some(path) => {
            manifest.digest_input(path)?;
            Some(read_weight_csv(path, args.grid)?)
        }
        None => None,
    };

    let (result, method): (DesignResult, &str) = match (args.order, args.unconstrained) {
        (Some(order), false) => match &weight {
            Some(w) => (
                design_fwmse_predictor(&spec, w, args.distortion, order)?,
                "fwmse_predictor",
            ),
            None => (
                design_fir_predictor(&spec, args.distortion, order)?,
                "fir_predictor",
            ),
        },
        (None, true) => {
            if weight.is_some() {
                return Err(CliError::usage(
                    "--weight applies to predictor designs; use --order with --weight",
                ));
            }
            let grid = match args.grid {
                Some(g) => g,
                None => DEFAULT_GRID_SIZE.max((8 * args.taps).next_power_of_two()),
            };
            let transition = args
                .transition
                .unwrap_or_else(|| default_transition(args.l));
            (
                design_unconstrained_on_grid(&spec, args.distortion, args.taps, transition, grid)?,
                "spectral_factorization",
            )
        }
        (None, false) => {
            return Err(CliError::usage(
                "choose a design: --order <p> or --unconstrained",
            ))
        }
        (Some(_), true) => unreachable!("clap rejects --order with --unconstrained"),
    };

    let gap = result.rate_bits - bound;
    if gap < -1e-9 {
        return Err(CliError::Invariant(format!(
            "designed rate {} fell below the lower bound {bound}",
            result.rate_bits
        )));
    }

    let mut meta = serde_json::json!({
        "method": method,
        "sigma2_x": args.sigma2x,
        "distortion": args.distortion,
        "pred_error_var": result.pred_error_var,
        "rate_bits": result.rate_bits,
        "rate_bound_bits": bound,
        "rate_gap_bits": gap,
    });
    if let Some(f) = &result.diagnostics.factorization {
        meta["transition_half_width"] = f.transition_half_width.into();
        meta["log_integral"] = f.log_integral.into();
        meta["leading_coeff_error"] = f.leading_coeff_error.into();
        meta["max_level_deviation"] = f.max_level_deviation.into();
        meta["truncation_tail_energy"] = f.truncation_tail_energy.into();
    }
    let file = FilterFile {
        taps: result.filter.taps().to_vec(),
        l: args.l,
        meta,
    };
    write_filter(&args.output, &file)?;
    if let Some(csv) = &args.csv {
        write_filter_csv(csv, &result.filter)?;
    }
    manifest.write_for(&args.output)?;

    println!("method:          {method}");
    println!("order:           {}", result.filter.order());
    println!("pred_error_var:  {:.9}", result.pred_error_var);
    println!("rate_bits:       {:.6}", result.rate_bits);
    println!("rate_bound_bits: {bound:.6}");
    println!("rate_gap_bits:   {gap:.6}");
    if result.filter.order() <= 8 {
        println!("taps:            {:?}", result.filter.taps());
    }
    Ok(())
}

fn distortion_grid(dmin: f64, dmax: f64, points: usize) -> Result<Vec<f64>, CliError> {
    if !(dmin > 0.0 && dmax >= dmin) {
        return Err(CliError::usage("need 0 < dmin <= dmax"));
    }
    if points == 0 {
        return Err(CliError::usage("need at least one grid point"));
    }
    if points == 1 {
        return Ok(vec![dmin]);
    }
    let ratio = dmax / dmin;
    Ok((0..points)
        .map(|i| dmin * ratio.powf(i as f64 / (points - 1) as f64))
        .collect())
}

pub fn run_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let spec = BandSpec::new(args.l, args.sigma2x)?;
    let mut manifest = RunManifest::new("analyze", None);
    manifest.digest_input(&args.filter)?;
    let file = read_filter(&args.filter)?;
    if (file.l - args.l).abs() > 1e-12 {
        return Err(CliError::usage(format!(
            "filter was designed for L = {}, but --L is {}",
            file.l, args.l
        )));
    }
    let filter = file.filter()?;

    let mut csv = String::from("D,rate_sd,rate_dpcm,rate_bound,rate_postscaled\n");
    for d in distortion_grid(args.dmin, args.dmax, args.points)? {
        let mapping = dual_noise_variance(&spec, &filter, d)?;
        let sd = sigma_delta_rd(&spec, &filter, mapping.sigma2_sd, None)?;
        let dp = dpcm_rd(&spec, &filter, mapping.sigma2_dpcm)?;
        let bound = rate_lower_bound(&spec, d)?;
        let scaled = post_scaling(&spec, d)?;
        // The two architectures are kept as separate columns precisely so
        // this equality is re-checked on every run.
        if (sd.mutual_info_bits - dp.mutual_info_bits).abs() > 1e-10 {
            return Err(CliError::Invariant(format!(
                "sigma-delta and DPCM rates diverged at D = {d}: {} vs {}",
                sd.mutual_info_bits, dp.mutual_info_bits
            )));
        }
        writeln!(
            csv,
            "{},{},{},{},{}",
            d, sd.mutual_info_bits, dp.mutual_info_bits, bound, scaled.rate_bits
        )
        .expect("string write");
    }
    write_text(&args.output, &csv)?;
    manifest.write_for(&args.output)?;
    println!("wrote {} rows to {}", args.points, args.output.display());
    Ok(())
}

fn check_report(report: &SimReport) -> Result<(), CliError> {
    let rates_ok = (0.0..=1.0).contains(&report.overload_block_rate)
        && (0.0..=1.0).contains(&report.overload_sample_rate);
    let mses_ok = report.mse_all >= 0.0 && report.mse_conditional.is_none_or(|m| m >= 0.0);
    let consistent = report.overloaded_blocks <= report.blocks
        && (report.overloaded_blocks == 0) == (report.overload_block_rate == 0.0);
    if !(rates_ok && mses_ok && consistent) {
        return Err(CliError::Invariant(format!(
            "inconsistent report: {report:?}"
        )));
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("malformed config {}: {e}", path.display())))
}

fn write_report(path: &Path, report: &SimReport) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::usage(format!("cannot encode report: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("simulate", None);
    manifest.digest_input(&args.config)?;
    let mut cfg = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    manifest.seed = Some(cfg.seed);

    let report = monte_carlo(&cfg)?;
    check_report(&report)?;
    write_report(&args.output, &report)?;
    manifest.write_for(&args.output)?;

    if let Some(trace_path) = &args.trace {
        let mut out = String::from("n,x,u,nq,xhat,overload\n");
        for b in 0..cfg.num_blocks {
            let (x, trace) = trace_block(&cfg, b)?;
            for i in 0..cfg.block_len {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    b * cfg.block_len + i,
                    x[i],
                    trace.quantizer_input[i],
                    trace.noise[i],
                    trace.reconstruction[i],
                    u8::from(trace.overload[i])
                )
                .expect("string write");
            }
        }
        write_text(trace_path, &out)?;
    }

    println!("blocks:              {}", report.blocks);
    println!(
        "mse_all:             {:.6e} (stderr {:.2e})",
        report.mse_all, report.mse_all_stderr
    );
    match report.mse_conditional {
        Some(m) => println!("mse_conditional:     {m:.6e}"),
        None => println!("mse_conditional:     n/a (all blocks overloaded)"),
    }
    println!("analytic_d:          {:.6e}", report.analytic_d);
    println!("overload_block_rate: {:.6e}", report.overload_block_rate);
    if let Some(bound) = report.bound_pol {
        println!("bound_pol:           {bound:.6e}");
    }
    Ok(())
}

fn axis_values(args: &SweepArgs) -> Result<Vec<f64>, CliError> {
    if args.step <= 0.0 || !args.step.is_finite() {
        return Err(CliError::usage("--step must be positive"));
    }
    if args.to < args.from {
        return Err(CliError::usage("--to must be >= --from"));
    }
    let mut values = Vec::new();
    let mut v = args.from;
    while v <= args.to + 1e-9 * args.step {
        values.push(v);
        v += args.step;
    }
    Ok(values)
}

fn require<T: Copy>(opt: Option<T>, flag: &str, axis: &str) -> Result<T, CliError> {
    opt.ok_or_else(|| CliError::usage(format!("--{flag} is required for the {axis} axis")))
}

fn opt_cell(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

pub fn run_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("sweep", args.seed);
    let values = axis_values(args)?;
    let mut csv = String::new();

    match args.axis {
        SweepAxis::Order => {
            let l = require(args.l, "L", "order")?;
            let sigma2x = require(args.sigma2x, "sigma2x", "order")?;
            let d = require(args.distortion, "distortion", "order")?;
            let spec = BandSpec::new(l, sigma2x)?;
            let bound = rate_lower_bound(&spec, d)?;
            csv.push_str("p,pred_error_var,rate_bits,rate_bound_bits,rate_gap_bits\n");
            for &v in &values {
                let p = v.round() as usize;
                let r = design_fir_predictor(&spec, d, p.max(1))?;
                writeln!(
                    csv,
                    "{},{},{},{},{}",
                    p,
                    r.pred_error_var,
                    r.rate_bits,
                    bound,
                    r.rate_bits - bound
                )
                .expect("string write");
            }
        }
        SweepAxis::Oversampling => {
            let sigma2x = require(args.sigma2x, "sigma2x", "oversampling")?;
            let sigma2_sd = require(args.sigma2_sd, "sigma2-sd", "oversampling")?;
            let filter = match &args.filter {
                Some(path) => {
                    manifest.digest_input(path)?;
                    read_filter(path)?.filter()?
                }
                None => FirFilter::zero(),
            };
            csv.push_str("L,analytic_d,rate_sd,rate_bound\n");
            for &l in &values {
                let spec = BandSpec::new(l, sigma2x)?;
                let sd = sigma_delta_rd(&spec, &filter, sigma2_sd, None)?;
                let bound = rate_lower_bound(&spec, sd.distortion)?;
                writeln!(
                    csv,
                    "{},{},{},{}",
                    l, sd.distortion, sd.mutual_info_bits, bound
                )
                .expect("string write");
            }
        }
        SweepAxis::Rate => {
            let config_path = args
                .config
                .as_ref()
                .ok_or_else(|| CliError::usage("--config is required for the rate axis"))?;
            manifest.digest_input(config_path)?;
            let mut cfg = read_config(config_path)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let sigma2 = match &cfg.noise_model {
                NoiseModel::Dithered(q) => q.sigma2(),
                NoiseModel::Awgn { .. } => {
                    return Err(CliError::usage(
                        "the rate axis needs a dithered noise model in the base config",
                    ))
                }
            };
            csv.push_str(
                "R,delta_bits,bound_pol,overload_block_rate,overload_block_rate_stderr,\
                 overload_sample_rate,mse_conditional,mse_all\n",
            );
            for &v in &values {
                let r = v.round() as u32;
                let mut run = cfg.clone();
                run.noise_model = NoiseModel::Dithered(QuantizerSpec::new(r.max(1), sigma2)?);
                let report = monte_carlo(&run)?;
                check_report(&report)?;
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{}",
                    r,
                    r as f64 - report.scalar_info_bits,
                    opt_cell(report.bound_pol),
                    report.overload_block_rate,
                    report.overload_block_rate_stderr,
                    report.overload_sample_rate,
                    opt_cell(report.mse_conditional),
                    report.mse_all
                )
                .expect("string write");
            }
        }
        SweepAxis::Block => {
            let config_path = args
                .config
                .as_ref()
                .ok_or_else(|| CliError::usage("--config is required for the block axis"))?;
            manifest.digest_input(config_path)?;
            let mut cfg = read_config(config_path)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            csv.push_str(
                "N,mse_all,mse_all_stderr,mse_conditional,mse_conditional_stderr,\
                 overload_block_rate,bound_pol\n",
            );
            for &v in &values {
                let mut run = cfg.clone();
                run.block_len = v.round() as usize;
                let report = monte_carlo(&run)?;
                check_report(&report)?;
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    run.block_len,
                    report.mse_all,
                    report.mse_all_stderr,
                    opt_cell(report.mse_conditional),
                    opt_cell(report.mse_conditional_stderr),
                    report.overload_block_rate,
                    opt_cell(report.bound_pol)
                )
                .expect("string write");
            }
        }
    }

    write_text(&args.output, &csv)?;
    manifest.write_for(&args.output)?;
    println!("wrote {} rows to {}", values.len(), args.output.display());
    Ok(())
}
