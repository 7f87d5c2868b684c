use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context, Result};
use log::{info, warn};
use serde::Serialize;

use trslab::analysis::{
    self, check_universal_bounds, classify_rate, directional_config, evaluate_cloud, fit_by_radius_band, fit_exponent,
    isotropic_config, sample_cloud, shell_stats, verify_rate_bound, BandFit, CloudConfig, ExponentFit, FitTarget,
    PointEval, RateBoundReport, RateFit, UniversalCheck,
};
use trslab::generators::generate;
use trslab::io::{instance_hash, planted_from_json, planted_to_json, InstanceFile};
use trslab::model::{self, kkt_report_with, Tolerances};
use trslab::pgm::{self, X0Policy};
use trslab::solver::solve_default;
use trslab::{GroundTruth, IterateTrace, KktReport, SpectralData, TrsInstance};

use crate::config::{ExperimentConfig, Start};

const PLANTED_SUFFIX: &str = ".planted.json";
const SIDE_SUFFIXES: [&str; 3] = [PLANTED_SUFFIX, ".meta.json", ".truth.json"];

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

fn to_json<S: Serialize>(v: &S) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Expands directories to their instance files, sorted by name.
pub fn collect_instances(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = fs::read_dir(p).with_context(|| format!("listing {}", p.display()))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    name.ends_with(".json") && !SIDE_SUFFIXES.iter().any(|s| name.ends_with(s))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(anyhow!("no such file or directory: {}", p.display()));
        }
    }
    Ok(out)
}

pub struct Loaded {
    pub path: PathBuf,
    pub stem: String,
    pub family: String,
    pub seed: Option<u64>,
    pub inst: TrsInstance,
    pub hash: String,
    pub planted: Option<GroundTruth>,
}

fn stem_of(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("instance");
    name.strip_suffix(".json").unwrap_or(name).to_string()
}

/// `<family>_s<seed>` file stems name their family; other stems are their own family.
fn family_of(stem: &str) -> String {
    match stem.rsplit_once("_s") {
        Some((fam, seed)) if !fam.is_empty() && !seed.is_empty() && seed.bytes().all(|b| b.is_ascii_digit()) => {
            fam.to_string()
        }
        _ => stem.to_string(),
    }
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = InstanceFile::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    let inst: TrsInstance = file.to_instance().with_context(|| format!("building instance from {}", path.display()))?;
    let stem = stem_of(path);
    let planted_path = path.with_file_name(format!("{stem}{PLANTED_SUFFIX}"));
    let planted = if planted_path.exists() {
        let t = fs::read_to_string(&planted_path).with_context(|| format!("reading {}", planted_path.display()))?;
        Some(planted_from_json(&t).with_context(|| format!("parsing {}", planted_path.display()))?)
    } else {
        None
    };
    Ok(Loaded {
        family: family_of(&stem),
        stem,
        seed: file.seed,
        hash: instance_hash(&inst),
        inst,
        planted,
        path: path.to_path_buf(),
    })
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<Loaded>> {
    let files = collect_instances(paths)?;
    if files.is_empty() {
        warn!("no instance files found");
    }
    files.iter().map(|p| load(p)).collect()
}

fn solve(l: &Loaded) -> Result<(SpectralData, GroundTruth)> {
    solve_default(&l.inst).with_context(|| format!("solving {}", l.path.display()))
}

// ---------------------------------------------------------------------------

pub fn generate_cmd(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.families.is_empty() {
        warn!("config lists no families; nothing to generate");
        return Ok(());
    }
    let dir = cfg.output_dir.join("instances");
    ensure_dir(&dir)?;
    let mut count = 0;
    for fam in &cfg.families {
        let label = fam.label();
        for seed in cfg.seeds.iter() {
            let spec = trslab::generators::GenSpec { seed, ..fam.spec.clone() };
            let p = generate::<f64>(&spec).with_context(|| format!("generating {label} seed {seed}"))?;
            let stem = format!("{label}_s{seed}");
            let file = InstanceFile::from_instance(&p.inst, Some(seed), Some(spec.case_target));
            write_file(&dir.join(format!("{stem}.json")), &(file.to_json() + "\n"))?;
            write_file(&dir.join(format!("{stem}{PLANTED_SUFFIX}")), &(planted_to_json(&p.planted) + "\n"))?;
            count += 1;
        }
    }
    info!("wrote {count} instances to {}", dir.display());
    println!("generated {count} instances in {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct Agreement {
    f_star_diff: f64,
    lambda_star_diff: f64,
    planted_case: String,
    solved_case: String,
    ok: bool,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    instance: String,
    instance_hash: &'a str,
    seed: Option<u64>,
    n: usize,
    truth: &'a GroundTruth,
    kkt: KktReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement: Option<Agreement>,
}

fn agreement(planted: &GroundTruth, t: &GroundTruth) -> Agreement {
    let df = (planted.f_star - t.f_star).abs();
    let dl = (planted.lambda_star - t.lambda_star).abs();
    Agreement {
        f_star_diff: df,
        lambda_star_diff: dl,
        planted_case: planted.case.kind.to_string(),
        solved_case: t.case.kind.to_string(),
        ok: df <= 1e-8 * t.f_star.abs().max(1.0)
            && dl <= 1e-8 * t.lambda_star.abs().max(1.0)
            && planted.case.kind == t.case.kind,
    }
}

pub fn solve_cmd(cfg: &ExperimentConfig, paths: &[PathBuf]) -> Result<()> {
    let items = load_all(paths)?;
    let dir = cfg.output_dir.join("solve");
    ensure_dir(&dir)?;
    let mut disagreements = 0;
    for l in &items {
        let (s, t) = solve(l)?;
        let kkt = kkt_report_with(&l.inst, &s, &t.x_star, t.lambda_star);
        let agree = l.planted.as_ref().map(|p| agreement(p, &t));
        if agree.as_ref().is_some_and(|a| !a.ok) {
            disagreements += 1;
            warn!("{}: solver disagrees with planted truth", l.stem);
        }
        let agree_txt = agree.as_ref().map_or("", |a| if a.ok { "  planted: agree" } else { "  planted: DISAGREE" });
        println!(
            "{}: case {} f* = {:.12} λ* = {:.12} kkt = {:.2e}{agree_txt}",
            l.stem,
            t.case.kind,
            t.f_star,
            t.lambda_star,
            kkt.max_residual()
        );
        let rep = SolveReport {
            instance: l.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            instance_hash: &l.hash,
            seed: l.seed,
            n: l.inst.n(),
            truth: &t,
            kkt,
            agreement: agree,
        };
        write_file(&dir.join(format!("{}.truth.json", l.stem)), &to_json(&rep))?;
    }
    if disagreements > 0 {
        warn!("{disagreements} instance(s) disagree with their planted truth");
    }
    Ok(())
}

#[derive(Serialize)]
struct ClassifyRow<'a> {
    family: &'a str,
    seed: Option<u64>,
    n: usize,
    case: String,
    trs_ill: Option<bool>,
    lambda1: f64,
    lambda_star: f64,
    anchor_norm: f64,
    null_component: f64,
    planted_case: Option<String>,
    instance_hash: &'a str,
}

pub fn classify_cmd(cfg: &ExperimentConfig, paths: &[PathBuf]) -> Result<()> {
    let items = load_all(paths)?;
    ensure_dir(&cfg.output_dir)?;
    let mut w = csv_writer(&cfg.output_dir.join("classify.csv"))?;
    for l in &items {
        let (s, t) = solve(l)?;
        let (case, ill) = match model::classify(&l.inst, &s, &t, &Tolerances::default()) {
            Ok(c) => (c.kind.to_string(), Some(c.trs_ill)),
            Err(e) => {
                warn!("{}: {e}", l.stem);
                ("Ambiguous".to_string(), None)
            }
        };
        println!("{}: {case}", l.stem);
        w.serialize(ClassifyRow {
            family: &l.family,
            seed: l.seed,
            n: l.inst.n(),
            case,
            trs_ill: ill,
            lambda1: t.lambda1,
            lambda_star: t.lambda_star,
            anchor_norm: t.anchor_norm,
            null_component: t.null_component,
            planted_case: l.planted.as_ref().map(|p| p.case.kind.to_string()),
            instance_hash: &l.hash,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn run_pgm(cfg: &ExperimentConfig, l: &Loaded, s: &SpectralData, t: &GroundTruth) -> Result<IterateTrace> {
    let mut pc = cfg.pgm.clone();
    if let Start::Perturbed { radius } = cfg.start {
        pc.x0_policy = X0Policy::Given(analysis::rate_start(s, t, radius, l.seed.unwrap_or(0)));
    }
    pgm::run(&l.inst, s, t, &pc).with_context(|| format!("running projected gradient on {}", l.path.display()))
}

#[derive(Serialize)]
struct TraceRow<'a> {
    k: usize,
    gap: f64,
    residual: f64,
    step_len: f64,
    instance_hash: &'a str,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct TraceMeta<'a> {
    instance: String,
    instance_hash: &'a str,
    seed: Option<u64>,
    pgm: &'a trslab::PgmConfig,
    start: Start,
    iterations: usize,
    n_loc: Option<usize>,
    converged_to_global: bool,
    max_iter_exceeded: bool,
    norm_a: f64,
    f_star: f64,
    generated_at_unix: u64,
}

fn write_trace(dir: &Path, cfg: &ExperimentConfig, l: &Loaded, tr: &IterateTrace) -> Result<()> {
    let mut w = csv_writer(&dir.join(format!("{}.csv", l.stem)))?;
    for r in &tr.records {
        w.serialize(TraceRow {
            k: r.k,
            gap: r.gap,
            residual: r.residual,
            step_len: r.step_len,
            instance_hash: &l.hash,
            seed: l.seed,
        })?;
    }
    w.flush()?;
    let meta = TraceMeta {
        instance: l.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        instance_hash: &l.hash,
        seed: l.seed,
        pgm: &cfg.pgm,
        start: cfg.start,
        iterations: tr.records.len().saturating_sub(1),
        n_loc: tr.n_loc,
        converged_to_global: tr.converged_to_global,
        max_iter_exceeded: tr.max_iter_exceeded,
        norm_a: tr.norm_a,
        f_star: tr.f_star,
        generated_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    write_file(&dir.join(format!("{}.meta.json", l.stem)), &to_json(&meta))
}

pub fn pgm_cmd(cfg: &ExperimentConfig, paths: &[PathBuf]) -> Result<()> {
    let items = load_all(paths)?;
    let dir = cfg.output_dir.join("traces");
    ensure_dir(&dir)?;
    for l in &items {
        let (s, t) = solve(l)?;
        let tr = run_pgm(cfg, l, &s, &t)?;
        let rate = classify_rate(&tr, &cfg.rate);
        println!(
            "{}: {} iterations, final gap {:.3e}, rate {}",
            l.stem,
            tr.records.len() - 1,
            tr.last().gap,
            rate.class.name()
        );
        write_trace(&dir, cfg, l, &tr)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

struct Analysis {
    evals: Vec<PointEval>,
    eb: Option<ExponentFit>,
    kl: Option<ExponentFit>,
    iso_eb: Option<ExponentFit>,
    iso_kl: Option<ExponentFit>,
    bands: Vec<BandFit>,
    cloud: CloudConfig,
    trace: IterateTrace,
    rate: RateFit,
    errors: Vec<String>,
}

fn cloud_config(cfg: &ExperimentConfig, t: &GroundTruth, seed: u64) -> CloudConfig {
    match cfg.cloud {
        Some(c) => CloudConfig { seed, ..c },
        None => directional_config(t, seed),
    }
}

fn analyze(cfg: &ExperimentConfig, l: &Loaded, s: &SpectralData, t: &GroundTruth) -> Result<Analysis> {
    let seed = l.seed.unwrap_or(0);
    let mut errors = Vec::new();
    let mut keep = |r: Result<ExponentFit, analysis::AnalysisError>, what: &str| match r {
        Ok(f) => Some(f),
        Err(e) => {
            warn!("{}: {what}: {e}", l.stem);
            errors.push(format!("{what}: {e}"));
            None
        }
    };
    let cloud_cfg = cloud_config(cfg, t, seed);
    let cloud = sample_cloud(&l.inst, s, t, &cloud_cfg).with_context(|| format!("sampling {}", l.stem))?;
    let evals = evaluate_cloud(&l.inst, s, t, &cloud);
    let eb = keep(fit_exponent(&evals, FitTarget::ErrorBound, &cfg.fit), "error-bound fit");
    let kl = keep(fit_exponent(&evals, FitTarget::Kl, &cfg.fit), "KL fit");
    let iso_cfg = CloudConfig { direction: analysis::Direction::Isotropic, ..isotropic_config(t, seed) };
    let iso = sample_cloud(&l.inst, s, t, &CloudConfig { r_max: cloud_cfg.r_max, r_min: cloud_cfg.r_min, ..iso_cfg })
        .with_context(|| format!("sampling {}", l.stem))?;
    let iso_evals = evaluate_cloud(&l.inst, s, t, &iso);
    let iso_eb = keep(fit_exponent(&iso_evals, FitTarget::ErrorBound, &cfg.fit), "isotropic error-bound fit");
    let iso_kl = keep(fit_exponent(&iso_evals, FitTarget::Kl, &cfg.fit), "isotropic KL fit");
    let bands = fit_by_radius_band(&evals, cfg.radius_bands, &cfg.fit);
    let trace = run_pgm(cfg, l, s, t)?;
    let rate = classify_rate(&trace, &cfg.rate);
    Ok(Analysis { evals, eb, kl, iso_eb, iso_kl, bands, cloud: cloud_cfg, trace, rate, errors })
}

#[derive(Serialize)]
struct FitReport<'a> {
    instance: String,
    instance_hash: &'a str,
    seed: Option<u64>,
    family: &'a str,
    case: String,
    trs_ill: bool,
    cloud: CloudConfig,
    error_bound: &'a Option<ExponentFit>,
    kl: &'a Option<ExponentFit>,
    isotropic_error_bound: &'a Option<ExponentFit>,
    isotropic_kl: &'a Option<ExponentFit>,
    radius_bands: &'a [BandFit],
    rate: &'a RateFit,
    errors: &'a [String],
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    family: &'a str,
    n: usize,
    seed: Option<u64>,
    case: String,
    trs_ill: bool,
    #[serde(rename = "f*")]
    f_star: f64,
    #[serde(rename = "λ*")]
    lambda_star: f64,
    #[serde(rename = "ρ̂")]
    rho: Option<f64>,
    #[serde(rename = "ϱ̂")]
    varrho: Option<f64>,
    rate_class: &'static str,
    rate_param: Option<f64>,
    #[serde(rename = "r²")]
    r2: Option<f64>,
    instance_hash: &'a str,
}

#[derive(Serialize)]
struct ShellRow<'a> {
    shell: usize,
    radius: f64,
    n: usize,
    median_gap: f64,
    median_dist: f64,
    median_residual: f64,
    instance_hash: &'a str,
    seed: Option<u64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    Some(if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

pub fn fit_cmd(cfg: &ExperimentConfig, paths: &[PathBuf]) -> Result<()> {
    let items = load_all(paths)?;
    let dir = cfg.output_dir.join("fits");
    ensure_dir(&dir)?;
    let mut summary = csv_writer(&cfg.output_dir.join("summary.csv"))?;
    let mut table: Vec<(String, Option<f64>, Option<f64>, &'static str)> = Vec::new();
    for l in &items {
        let (s, t) = solve(l)?;
        let a = analyze(cfg, l, &s, &t)?;
        let rep = FitReport {
            instance: l.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            instance_hash: &l.hash,
            seed: l.seed,
            family: &l.family,
            case: t.case.kind.to_string(),
            trs_ill: t.case.trs_ill,
            cloud: a.cloud,
            error_bound: &a.eb,
            kl: &a.kl,
            isotropic_error_bound: &a.iso_eb,
            isotropic_kl: &a.iso_kl,
            radius_bands: &a.bands,
            rate: &a.rate,
            errors: &a.errors,
        };
        write_file(&dir.join(format!("{}.json", l.stem)), &to_json(&rep))?;
        let mut sw = csv_writer(&dir.join(format!("{}.shells.csv", l.stem)))?;
        for st in shell_stats(&a.evals) {
            sw.serialize(ShellRow {
                shell: st.shell,
                radius: st.radius,
                n: st.n,
                median_gap: st.median_gap,
                median_dist: st.median_dist,
                median_residual: st.median_residual,
                instance_hash: &l.hash,
                seed: l.seed,
            })?;
        }
        sw.flush()?;
        let rho = a.eb.as_ref().map(|f| f.exponent);
        let varrho = a.kl.as_ref().map(|f| f.exponent);
        let r2 = match a.rate.class {
            analysis::RateClass::Linear { .. } => Some(a.rate.r2_linear),
            analysis::RateClass::Sublinear { .. } => Some(a.rate.r2_power),
            analysis::RateClass::Undetermined { .. } => None,
        };
        summary.serialize(SummaryRow {
            family: &l.family,
            n: l.inst.n(),
            seed: l.seed,
            case: t.case.kind.to_string(),
            trs_ill: t.case.trs_ill,
            f_star: t.f_star,
            lambda_star: t.lambda_star,
            rho,
            varrho,
            rate_class: a.rate.class.name(),
            rate_param: a.rate.class.param(),
            r2,
            instance_hash: &l.hash,
        })?;
        table.push((l.family.clone(), rho, varrho, a.rate.class.name()));
    }
    summary.flush()?;

    let mut families: Vec<&str> = table.iter().map(|r| r.0.as_str()).collect();
    families.dedup();
    println!("{:<24} {:>5} {:>8} {:>8}  rates", "family", "count", "med ρ̂", "med ϱ̂");
    for fam in families {
        let rows: Vec<_> = table.iter().filter(|r| r.0 == fam).collect();
        let rho = median(rows.iter().filter_map(|r| r.1).collect());
        let varrho = median(rows.iter().filter_map(|r| r.2).collect());
        let mut classes: Vec<&str> = rows.iter().map(|r| r.3).collect();
        classes.sort_unstable();
        let mut counts: Vec<String> = Vec::new();
        for c in ["linear", "sublinear", "undetermined"] {
            let k = classes.iter().filter(|&&x| x == c).count();
            if k > 0 {
                counts.push(format!("{c} {k}"));
            }
        }
        println!("{fam:<24} {:>5} {:>8} {:>8}  {}", rows.len(), fmt_opt(rho), fmt_opt(varrho), counts.join(", "));
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyRow<'a> {
    family: &'a str,
    seed: Option<u64>,
    case: String,
    eb_violations: usize,
    kl_violations: usize,
    decrease_min_slack: f64,
    rate_bound_checked: usize,
    rate_bound_violations: usize,
    rate_bound_worst_margin: Option<f64>,
    pass: bool,
    instance_hash: &'a str,
}

/// Inflation applied to the fitted constants in the universal-bound check.
const TAU_INFLATION: f64 = 2.0;
const DECREASE_SLACK: f64 = -1e-12;

pub fn verify_cmd(cfg: &ExperimentConfig, paths: &[PathBuf]) -> Result<bool> {
    let items = load_all(paths)?;
    ensure_dir(&cfg.output_dir)?;
    let mut w = csv_writer(&cfg.output_dir.join("verify.csv"))?;
    let mut all_ok = true;
    for l in &items {
        let (s, t) = solve(l)?;
        let a = analyze(cfg, l, &s, &t)?;
        let (Some(eb), Some(kl)) = (&a.eb, &a.kl) else {
            return Err(anyhow!("{}: exponent fits failed: {}", l.stem, a.errors.join("; ")));
        };
        let uni: UniversalCheck = check_universal_bounds(&a.evals, eb.tau_fit, kl.tau_fit, TAU_INFLATION);
        let slack = a.trace.decrease_slacks().into_iter().fold(f64::INFINITY, f64::min);
        let rate: Option<RateBoundReport> = match (t.case.trs_ill, a.trace.records.first().map(|r| r.t)) {
            (true, Some(step)) if step > 0.0 => {
                Some(verify_rate_bound(&a.trace, pgm::rate_constant(kl.tau_fit, a.trace.norm_a, step)))
            }
            _ => None,
        };
        let rate_ok = rate.is_none_or(|r| r.violations == 0);
        let pass = uni.eb_violations == 0 && uni.kl_violations == 0 && slack >= DECREASE_SLACK && rate_ok;
        all_ok &= pass;
        println!("{}: {}", l.stem, if pass { "pass" } else { "FAIL" });
        w.serialize(VerifyRow {
            family: &l.family,
            seed: l.seed,
            case: t.case.kind.to_string(),
            eb_violations: uni.eb_violations,
            kl_violations: uni.kl_violations,
            decrease_min_slack: if slack.is_finite() { slack } else { 0.0 },
            rate_bound_checked: rate.map_or(0, |r| r.checked),
            rate_bound_violations: rate.map_or(0, |r| r.violations),
            rate_bound_worst_margin: rate.filter(|r| r.checked > 0).map(|r| r.worst_margin),
            pass,
            instance_hash: &l.hash,
        })?;
    }
    w.flush()?;
    Ok(all_ok)
}
