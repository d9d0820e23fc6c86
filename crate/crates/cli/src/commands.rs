use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use leadlag_core::io::{
    load_panel, load_results, save_panel, save_results, CurveSet, FitSet, LoadOptions,
};
use leadlag_core::model::DEFAULT_BURN_IN_TOLERANCE;
use leadlag_core::pipeline::{check_scales, dyadic_scales};
use leadlag_core::{
    eigencurves, fit_eigencurve, gamma_matrix, simulate_panel, stationary_burn_in, EigenCurve,
    FitResult, ModelSpec,
};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::args::{FitArgs, PlotArgs, SimulateArgs, SpectrumArgs};
use crate::svg;
use crate::{NotConverged, UsageError};

pub const DEFAULT_MAX_TAU: u64 = 128;

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Runs `f` on a pool of `workers` threads, or on rayon's default pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(0) => Err(usage("--workers must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("starting worker pool")?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

pub fn scale_grid(taus: Option<Vec<u64>>) -> Result<Vec<u64>> {
    let taus = taus.unwrap_or_else(|| dyadic_scales(DEFAULT_MAX_TAU));
    if taus.is_empty() || taus.contains(&0) {
        return Err(usage("--taus must list scales of at least 1"));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("--taus must be strictly ascending"));
    }
    Ok(taus)
}

fn broadcast(flag: &str, values: &[f64], len: usize, what: &str) -> Result<Vec<f64>> {
    let v = match values.len() {
        0 => vec![1.0; len],
        1 => vec![values[0]; len],
        n if n == len => values.to_vec(),
        n => {
            return Err(usage(format!(
                "{flag} takes 1 or {len} values ({what}), got {n}"
            )))
        }
    };
    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(usage(format!("{flag} values must be positive, got {x}")));
    }
    Ok(v)
}

fn read_beta_file(path: &Path, n: usize, nf: usize) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("--beta-file {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| usage(format!("--beta-file line {}: {e}", k + 1)))?;
        if row.len() != nf {
            return Err(usage(format!(
                "--beta-file line {}: expected {nf} values (one per factor), got {}",
                k + 1,
                row.len()
            )));
        }
        if let Some(x) = row.iter().find(|x| !x.is_finite()) {
            return Err(usage(format!(
                "--beta-file line {}: non-finite value {x}",
                k + 1
            )));
        }
        rows.extend(row);
    }
    if rows.len() != n * nf {
        return Err(usage(format!(
            "--beta-file has {} rows, expected {n} (one per asset)",
            rows.len() / nf.max(1)
        )));
    }
    Ok(DMatrix::from_row_slice(n, nf, &rows))
}

/// Builds the model from `--spec` or from the individual flags.
pub fn build_spec(args: &SimulateArgs) -> Result<ModelSpec> {
    if let Some(path) = &args.spec {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("--spec {}: {e}", path.display())))?;
        let mut spec: ModelSpec = serde_json::from_str(&text)
            .map_err(|e| usage(format!("--spec {}: {e}", path.display())))?;
        if let Some(seed) = args.seed {
            spec.seed = seed;
        }
        spec.validate()
            .map_err(|e| usage(format!("--spec {}: {e}", path.display())))?;
        return Ok(spec);
    }
    let n = args
        .assets
        .ok_or_else(|| usage("--assets is required (or give --spec)"))?;
    if n == 0 {
        return Err(usage("--assets must be at least 1"));
    }
    let nf = args.factors;
    if nf == 0 {
        return Err(usage("--factors must be at least 1"));
    }
    let alpha = args
        .alpha
        .ok_or_else(|| usage("--alpha is required (or give --spec)"))?;
    if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
        return Err(usage(format!(
            "--alpha must satisfy 0 <= alpha < 1, got {alpha}"
        )));
    }
    let sigma = broadcast("--sigma", &args.sigma, n, "one per asset")?;
    let factor_sigma = broadcast("--factor-sigma", &args.factor_sigma, nf, "one per factor")?;
    let beta = match (&args.beta_file, args.beta) {
        (Some(path), _) => read_beta_file(path, n, nf)?,
        (None, Some(b)) if !b.is_finite() => {
            return Err(usage(format!("--beta must be finite, got {b}")))
        }
        (None, b) => DMatrix::from_element(n, nf, b.unwrap_or(0.0)),
    };
    let spec = ModelSpec {
        n_assets: n,
        n_factors: nf,
        alpha,
        sigma,
        factor_sigma,
        beta,
        seed: args.seed.unwrap_or(0),
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let spec = build_spec(&args)?;
    if args.steps == 0 {
        return Err(usage("--steps must be at least 1"));
    }
    let burn_in = match args.burn_in {
        Some(b) => b,
        None => stationary_burn_in(spec.alpha, DEFAULT_BURN_IN_TOLERANCE)?,
    };
    let panel = simulate_panel(&spec, args.steps, burn_in)?;
    save_panel(&panel, &args.out)?;
    let gammas = gamma_matrix(&spec)?.eigenvalues()?;
    println!(
        "model: N = {}, F = {}, alpha = {}, seed = {}",
        spec.n_assets, spec.n_factors, spec.alpha, spec.seed
    );
    let list: Vec<String> = gammas.iter().map(|g| format!("{g:.6}")).collect();
    println!("factor strengths gamma_f: {}", list.join(", "));
    println!("burn-in: {burn_in} steps discarded");
    println!(
        "wrote {} x {} panel to {}",
        panel.n_steps(),
        panel.n_assets(),
        args.out.display()
    );
    Ok(())
}

pub fn spectrum(args: SpectrumArgs) -> Result<()> {
    let taus = scale_grid(args.taus)?;
    let options = LoadOptions {
        compounding: args.compounding.into(),
        base_scale_minutes: args.base_minutes,
    };
    if !(args.base_minutes.is_finite() && args.base_minutes > 0.0) {
        return Err(usage(format!(
            "--base-minutes must be positive, got {}",
            args.base_minutes
        )));
    }
    let panel = load_panel(&args.input, &options)?;
    if args.top_k == 0 || args.top_k > panel.n_assets() {
        return Err(usage(format!(
            "--top-k must lie in 1..={} for this panel, got {}",
            panel.n_assets(),
            args.top_k
        )));
    }
    check_scales(&taus, panel.n_steps())?;
    let kind = args.kind.into();
    let curves = with_workers(args.workers, || {
        eigencurves(&panel, &taus, kind, args.top_k)
    })??;
    print_curves(&curves);
    let set = CurveSet {
        n_assets: panel.n_assets(),
        base_scale_minutes: panel.base_scale_minutes,
        kind,
        curves,
    };
    save_results(&set, &args.out)?;
    println!(
        "wrote {} curves to {}",
        set.curves.len(),
        args.out.display()
    );
    Ok(())
}

pub fn print_curves(curves: &[EigenCurve]) {
    let Some(first) = curves.first() else { return };
    let mut header = format!("{:>8}", "tau");
    for c in curves {
        header.push_str(&format!(" {:>14}", format!("lambda_{}", c.rank)));
    }
    println!("{header}");
    for (k, tau) in first.taus.iter().enumerate() {
        let mut line = format!("{tau:>8}");
        for c in curves {
            line.push_str(&format!(" {:>14.6}", c.values[k]));
        }
        println!("{line}");
    }
}

/// Fits each curve independently; failures are kept per rank.
pub fn fit_curves(curves: &[EigenCurve], n_assets: usize, base_minutes: f64) -> FitSet {
    let results: Vec<(usize, std::result::Result<FitResult, leadlag_core::Error>)> = curves
        .par_iter()
        .map(|c| (c.rank, fit_eigencurve(c, n_assets, base_minutes)))
        .collect();
    let mut set = FitSet::default();
    for (rank, r) in results {
        match r {
            Ok(fit) => {
                set.fits.insert(rank, fit);
            }
            Err(e) => {
                set.failures.insert(rank, e.to_string());
            }
        }
    }
    set
}

pub fn print_fits(set: &FitSet) {
    println!(
        "{:>4} {:>12} {:>10} {:>12} {:>12} {:>12} {:>9}",
        "rank", "gamma_f", "alpha", "t_alpha_min", "N_gamma_f", "rss", "converged"
    );
    for (rank, f) in &set.fits {
        let t = f.t_alpha.map_or("-".to_string(), |t| format!("{t:.4}"));
        println!(
            "{rank:>4} {:>12.6} {:>10.6} {t:>12} {:>12.6} {:>12.4e} {:>9}",
            f.gamma_f, f.alpha, f.amplitude, f.rss, f.converged
        );
    }
    for (rank, msg) in &set.failures {
        println!("{rank:>4} failed: {msg}");
    }
}

pub fn fit(args: FitArgs) -> Result<()> {
    let set: CurveSet = load_results(&args.input)?;
    let n_assets = args.assets.unwrap_or(set.n_assets);
    let base = args.base_minutes.unwrap_or(set.base_scale_minutes);
    if n_assets == 0 {
        return Err(usage("--assets must be at least 1"));
    }
    if !(base.is_finite() && base > 0.0) {
        return Err(usage(format!(
            "--base-minutes must be positive, got {base}"
        )));
    }
    let curves: Vec<EigenCurve> = match &args.ranks {
        Some(ranks) => {
            let have: BTreeSet<usize> = set.curves.iter().map(|c| c.rank).collect();
            let missing: Vec<usize> = ranks
                .iter()
                .copied()
                .filter(|r| !have.contains(r))
                .collect();
            if !missing.is_empty() {
                return Err(usage(format!(
                    "--ranks not present in the curves file: {missing:?}"
                )));
            }
            set.curves
                .into_iter()
                .filter(|c| ranks.contains(&c.rank))
                .collect()
        }
        None => set.curves,
    };
    let fits = with_workers(args.workers, || fit_curves(&curves, n_assets, base))?;
    print_fits(&fits);
    save_results(&fits, &args.out)?;
    println!("wrote {} fits to {}", fits.fits.len(), args.out.display());
    check_fit_outcome(&fits)
}

/// Maps per-rank failures and non-convergence onto the exit status.
pub fn check_fit_outcome(fits: &FitSet) -> Result<()> {
    if !fits.failures.is_empty() {
        let ranks: Vec<&usize> = fits.failures.keys().collect();
        return Err(usage(format!("could not fit ranks {ranks:?}")));
    }
    let stuck: Vec<usize> = fits
        .fits
        .iter()
        .filter(|(_, f)| !f.converged)
        .map(|(r, _)| *r)
        .collect();
    if !stuck.is_empty() {
        return Err(anyhow::Error::new(NotConverged(stuck)));
    }
    Ok(())
}

/// Writes one `rank-<k>.svg` per curve into `dir`.
pub fn write_plots(
    dir: &Path,
    curves: &[EigenCurve],
    fits: Option<&FitSet>,
    axis: crate::args::Axis,
) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for curve in curves {
        let fit = fits.and_then(|f| f.fits.get(&curve.rank));
        let title = format!("Eigenvalue rank {} vs aggregation scale", curve.rank);
        let body = svg::render(curve, fit, axis, &title);
        let path = dir.join(format!("rank-{}.svg", curve.rank));
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

pub fn plot(args: PlotArgs) -> Result<()> {
    let set: CurveSet = load_results(&args.curves)?;
    let fits: Option<FitSet> = match &args.fits {
        Some(p) => Some(load_results(p)?),
        None => None,
    };
    if let Some(f) = &fits {
        let curve_ranks: BTreeSet<usize> = set.curves.iter().map(|c| c.rank).collect();
        let fit_ranks: BTreeSet<usize> = f.fits.keys().chain(f.failures.keys()).copied().collect();
        let no_fit: Vec<&usize> = curve_ranks.difference(&fit_ranks).collect();
        let no_curve: Vec<&usize> = fit_ranks.difference(&curve_ranks).collect();
        if !no_fit.is_empty() || !no_curve.is_empty() {
            return Err(usage(format!(
                "rank sets differ: missing from fits {no_fit:?}, missing from curves {no_curve:?}"
            )));
        }
    }
    let written = write_plots(&args.out, &set.curves, fits.as_ref(), args.axis)?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
