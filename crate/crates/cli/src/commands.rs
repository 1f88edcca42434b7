//! Subcommand implementations. Every artifact embeds the resolved
//! configuration, the command name and the master seed.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::json;
use shiftfield::{
    build_source, dehaan_sample, exponent_estimate, integer_lattice, pilot_sup_bound,
    run_identity, validate_representor, ExponentQuery, PointSet, SourceSpec, Verdict,
};

use crate::config::ExperimentConfig;

pub struct Invocation {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub overrides: serde_json::Value,
}

impl Invocation {
    fn pool(&self) -> rayon::ThreadPool {
        shiftfield::make_pool(self.config.mc.workers)
    }

    fn artifact(&self, name: &str, command: &str, body: serde_json::Value) -> anyhow::Result<PathBuf> {
        let mut object = serde_json::Map::new();
        object.insert("command".into(), json!(command));
        match body {
            serde_json::Value::Object(map) => object.extend(map),
            other => {
                object.insert("result".into(), other);
            }
        }
        object.insert("seed".into(), json!(self.config.mc.master_seed));
        object.insert("config".into(), serde_json::to_value(&self.config)?);
        object.insert("cli_overrides".into(), self.overrides.clone());
        let path = self.out_dir.join(name);
        std::fs::create_dir_all(&self.out_dir)?;
        std::fs::write(&path, serde_json::to_string_pretty(&object)?)
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(path)
    }
}

fn sites_from(raw: &[Vec<f64>], dim_l: usize) -> anyhow::Result<PointSet> {
    Ok(PointSet::new(dim_l, raw.to_vec())?)
}

pub fn run_verify(inv: &Invocation) -> anyhow::Result<i32> {
    let ctx = inv.config.model_context()?;
    let spec = inv.config.identity_spec()?;
    let pool = inv.pool();
    let report = run_identity(&ctx, &spec, inv.config.mc.master_seed, &pool)?;
    let verdict = report.verdict;
    inv.artifact("verify_report.json", "verify", serde_json::to_value(&report)?)?;
    match verdict {
        Verdict::Pass => Ok(0),
        Verdict::Inconclusive => {
            eprintln!("verdict: inconclusive (standard errors too large for a decision)");
            Ok(0)
        }
        Verdict::Fail => {
            eprintln!("verdict: FAIL (z = {:.3}, p = {:.2e})", report.z, report.p_value);
            Ok(1)
        }
    }
}

pub fn run_exponent(inv: &Invocation) -> anyhow::Result<i32> {
    let ctx = inv.config.model_context()?;
    let section = inv
        .config
        .exponent
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config lacks an [exponent] section"))?;
    let source = build_source(&ctx, &section.source)?;
    let query = ExponentQuery::new(
        sites_from(&section.sites, ctx.field.dim_l)?,
        section.thresholds.clone(),
    )?;
    let pool = inv.pool();
    let est = exponent_estimate(
        source.as_ref(),
        &query,
        inv.config.mc.n,
        inv.config.mc.master_seed,
        shiftfield::stream::lane::LEFT,
        &pool,
    )?;
    inv.artifact(
        "exponent.json",
        "exponent",
        json!({
            "mean": est.value.mean,
            "se": est.value.se,
            "n": est.value.n,
            "fidi_cdf": est.fidi_cdf,
            "diagnostics": est.diag,
            "query": { "sites": section.sites, "thresholds": section.thresholds },
        }),
    )?;
    Ok(0)
}

pub fn run_transform(inv: &Invocation) -> anyhow::Result<i32> {
    let ctx = inv.config.model_context()?;
    let section = inv
        .config
        .transform
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config lacks a [transform] section"))?;
    let spec = SourceSpec::Transformed {
        variant: section.variant,
        base: Box::new(section.base.clone()),
        tilt: section.tilt,
    };
    let source = build_source(&ctx, &spec)?;
    let pool = inv.pool();
    let preflight = source.preflight(inv.config.mc.master_seed, &pool)?;

    let sites = sites_from(&section.sites, ctx.field.dim_l)?;
    let prepared = source.prepare(&sites)?;
    let dim_d = ctx.field.dim_d;
    std::fs::create_dir_all(&inv.out_dir)?;
    let csv_path = inv.out_dir.join("transform_paths.csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    let mut header = vec!["replicate".to_string()];
    header.extend((1..=ctx.field.dim_l).map(|k| format!("t_{k}")));
    header.extend((1..=dim_d).map(|k| format!("x_{k}")));
    header.push("snap_error".into());
    writer.write_record(&header)?;
    let mut max_snap: f64 = 0.0;
    for rep in 0..section.replicates {
        let mut rng = shiftfield::derive_stream(
            inv.config.mc.master_seed,
            shiftfield::stream::lane::SIMULATE,
            rep,
        );
        let draw = prepared.draw(&mut rng)?;
        max_snap = max_snap.max(draw.diag.snap_error);
        for (i, site) in sites.iter().enumerate() {
            let mut record = vec![rep.to_string()];
            record.extend(site.iter().map(|c| format!("{c}")));
            record.extend(draw.path.row(i).iter().map(|v| format!("{v}")));
            record.push(format!("{}", draw.diag.snap_error));
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    println!("wrote {}", csv_path.display());

    let separant = integer_lattice(&ctx.window, ctx.field.dim_l);
    let validation = validate_representor(
        source.as_ref(),
        &separant,
        inv.config.mc.n,
        inv.config.mc.master_seed,
        &pool,
    )?;
    let passed = validation.passed();
    inv.artifact(
        "transform_validation.json",
        "transform",
        json!({
            "validation": validation,
            "preflight": preflight,
            "max_snap_error": max_snap,
            "paths_csv": csv_path.file_name().and_then(|s| s.to_str()),
        }),
    )?;
    Ok(if passed { 0 } else { 1 })
}

pub fn run_simulate(inv: &Invocation) -> anyhow::Result<i32> {
    let ctx = inv.config.model_context()?;
    let section = inv
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config lacks a [simulate] section"))?;
    let source = build_source(&ctx, &section.source)?;
    let sites = sites_from(&section.sites, ctx.field.dim_l)?;
    let dcfg = inv.config.dehaan_config();
    let sup_bound = match dcfg.sup_bound_estimate {
        Some(b) => b,
        None => pilot_sup_bound(source.as_ref(), &sites, &dcfg, 2000, inv.config.mc.master_seed)?,
    };
    let prepared = source.prepare(&sites)?;
    let alpha = ctx.field.alpha;

    std::fs::create_dir_all(&inv.out_dir)?;
    let csv_path = inv.out_dir.join("maxstable_paths.csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    let mut header = vec!["replicate".to_string()];
    header.extend((1..=ctx.field.dim_l).map(|k| format!("t_{k}")));
    header.extend((1..=ctx.field.dim_d).map(|k| format!("x_{k}")));
    header.push("truncation_diag".into());
    writer.write_record(&header)?;

    let mut truncations = Vec::with_capacity(section.replicates as usize);
    let mut warned = 0u64;
    for rep in 0..section.replicates {
        let mut rng = shiftfield::derive_stream(
            inv.config.mc.master_seed,
            shiftfield::stream::lane::SIMULATE,
            rep,
        );
        let sample = dehaan_sample(prepared.as_ref(), alpha, &dcfg, sup_bound, &mut rng)?;
        warned += sample.warned as u64;
        truncations.push(sample.truncation);
        for (i, site) in sites.iter().enumerate() {
            let mut record = vec![rep.to_string()];
            record.extend(site.iter().map(|c| format!("{c}")));
            record.extend(sample.path.row(i).iter().map(|v| format!("{v}")));
            record.push(format!("{}", sample.truncation));
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    println!("wrote {}", csv_path.display());

    let mut sorted = truncations.clone();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| sorted[((q * sorted.len() as f64) as usize).min(sorted.len() - 1)];
    inv.artifact(
        "maxstable_diagnostics.json",
        "simulate-maxstable",
        json!({
            "replicates": section.replicates,
            "sup_bound_estimate": sup_bound,
            "truncation_warnings": warned,
            "truncation_p50": quantile(0.5),
            "truncation_p90": quantile(0.9),
            "truncation_max": sorted.last(),
            "paths_csv": csv_path.file_name().and_then(|s| s.to_str()),
        }),
    )?;
    Ok(0)
}

pub fn run_integrate(inv: &Invocation) -> anyhow::Result<i32> {
    let ctx = inv.config.model_context()?;
    let section = inv
        .config
        .integrate
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config lacks an [integrate] section"))?;
    // Unit-mass shape: normalized at alpha = 1 regardless of the field's
    // homogeneity index.
    let unit_cfg = shiftfield::FieldConfig::new(
        1.0,
        1,
        ctx.field.dim_l,
        ctx.field.norm,
    )?;
    let profile = shiftfield::Profile::normalized(section.integrand, &unit_cfg)?;
    let window = shiftfield::Window::new(section.half_width)?;
    let mut rng = shiftfield::derive_stream(
        inv.config.mc.master_seed,
        shiftfield::stream::lane::INTEGRATE,
        0,
    );
    let est = shiftfield::mc_integral(
        |t| profile.eval(t),
        &window,
        ctx.field.dim_l,
        inv.config.mc.n,
        &mut rng,
    );
    inv.artifact(
        "integrate.json",
        "integrate",
        json!({
            "mean": est.mean,
            "se": est.se(),
            "n": est.n,
            "integrand": section.integrand,
            "half_width": section.half_width,
        }),
    )?;
    Ok(0)
}

pub fn run_validate(inv: &Invocation) -> anyhow::Result<i32> {
    let ctx = inv.config.model_context()?;
    let section = inv
        .config
        .validate
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config lacks a [validate] section"))?;
    let source = build_source(&ctx, &section.source)?;
    let pool = inv.pool();
    let separant = integer_lattice(&ctx.window, ctx.field.dim_l);
    let report = validate_representor(
        source.as_ref(),
        &separant,
        inv.config.mc.n,
        inv.config.mc.master_seed,
        &pool,
    )?;
    let passed = report.passed();
    inv.artifact("validate.json", "validate", json!({ "validation": report }))?;
    if !passed {
        eprintln!(
            "validation FAILED: margin {} +- {}, positivity failures {}",
            report.margin.mean, report.margin.se, report.positivity_failures
        );
    }
    Ok(if passed { 0 } else { 1 })
}

pub fn dispatch(command: &str, inv: &Invocation) -> anyhow::Result<i32> {
    match command {
        "verify" => run_verify(inv),
        "exponent" => run_exponent(inv),
        "transform" => run_transform(inv),
        "simulate-maxstable" => run_simulate(inv),
        "integrate" => run_integrate(inv),
        "validate" => run_validate(inv),
        other => anyhow::bail!("unknown subcommand {other}"),
    }
}

pub fn out_dir_or_default(dir: Option<PathBuf>) -> PathBuf {
    dir.unwrap_or_else(|| Path::new(".").to_path_buf())
}
