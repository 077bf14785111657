use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use blindcrb::channel::io::{parse_channel, H1_JSON, H2_JSON};
use blindcrb::channel::{common_zeros, reducible_decompose, subchannel_zeros, DEFAULT_ZERO_TOL};
use blindcrb::constraint::{
    constrained_crb, known_coeff_constraint, linear_constraint, minimal_crb, norm_constraint, norm_only_constraint,
    phase_constraint, reducible_constraints, ConstraintSpec, ReducibleVariant,
};
use blindcrb::fim::{
    analyze_singularities, deterministic_fim, deterministic_reduced_fim, gaussian_fim_complex, gaussian_fim_real,
    schur_reduce,
};
use blindcrb::identifiability::{deterministic_verdict, gaussian_verdict, verdict_vs_fim};
use blindcrb::sim::{mse_vs_crb_experiment, score_covariance_fim, BurstSimulator, ExperimentConfig, ScoreModel};
use blindcrb::{Channel64, CrbResult, Field, FieldScalar, FimResult64, GaussianModelConfig, IdentifiableUpTo, Model, SymbolBurst, C};
use nalgebra::DMatrix;

use crate::manifest::{emit, num, RunManifest, Table};
use crate::ModelOpts;

pub enum Status {
    Ok,
    CheckFailed,
}

pub struct Gates {
    pub trials: usize,
    pub trace_tol: f64,
    pub z_max: f64,
}

/// Loads the channel named on the command line and returns it with the raw
/// bytes it came from.
fn load_channel(spec: &str) -> Result<(Channel64, Vec<u8>)> {
    let src = match spec.to_ascii_lowercase().as_str() {
        "h1" => H1_JSON.to_string(),
        "h2" => H2_JSON.to_string(),
        _ => std::fs::read_to_string(spec).with_context(|| format!("reading channel file {spec}"))?,
    };
    let ch = parse_channel(&src).with_context(|| format!("in channel {spec}"))?;
    Ok((ch, src.into_bytes()))
}

fn symbols<S: FieldScalar<f64>>(ch: &Channel64, o: &ModelOpts) -> Result<SymbolBurst<S>> {
    let sim = BurstSimulator::<f64, S>::new(ch, Model::Deterministic, o.burst, o.sigma_a2, o.sigma_v2, o.seed)?;
    Ok(sim.fixed_symbols().expect("deterministic model fixes the burst").clone())
}

fn gaussian_config(o: &ModelOpts) -> Result<GaussianModelConfig<f64>> {
    Ok(GaussianModelConfig::new(o.sigma_a2, o.sigma_v2, o.burst)?)
}

fn full_fim(ch: &Channel64, o: &ModelOpts) -> Result<FimResult64> {
    Ok(match (o.model, o.field) {
        (Model::Deterministic, Field::Real) => deterministic_fim(ch, &symbols::<f64>(ch, o)?, o.sigma_v2, o.burst)?,
        (Model::Deterministic, Field::Complex) => {
            deterministic_fim(ch, &symbols::<C<f64>>(ch, o)?, o.sigma_v2, o.burst)?
        }
        (Model::Gaussian, Field::Real) => gaussian_fim_real(ch, &gaussian_config(o)?)?,
        (Model::Gaussian, Field::Complex) => gaussian_fim_complex(ch, &gaussian_config(o)?)?,
        (Model::Generic, _) => bail!("the generic model has no channel FIM; use deterministic or gaussian"),
    })
}

/// FIM on `h` alone, with the nuisance parameters (symbols or noise
/// variance) profiled out.
fn channel_fim(ch: &Channel64, o: &ModelOpts) -> Result<DMatrix<f64>> {
    Ok(match (o.model, o.field) {
        (Model::Deterministic, Field::Real) => {
            deterministic_reduced_fim(ch, &symbols::<f64>(ch, o)?, o.sigma_v2, o.burst)?.fim.real_fim().clone()
        }
        (Model::Deterministic, Field::Complex) => {
            deterministic_reduced_fim(ch, &symbols::<C<f64>>(ch, o)?, o.sigma_v2, o.burst)?.fim.real_fim().clone()
        }
        _ => schur_reduce(&full_fim(ch, o)?, "h")?,
    })
}

fn fmt_c(z: C<f64>) -> String {
    if z.im.abs() < 1e-12 {
        format!("{:.6}", z.re)
    } else {
        format!("{:.6}{:+.6}j", z.re, z.im)
    }
}

fn fmt_zeros(zs: &[C<f64>]) -> String {
    if zs.is_empty() {
        "none".into()
    } else {
        zs.iter().map(|&z| fmt_c(z)).collect::<Vec<_>>().join(", ")
    }
}

pub fn analyze(o: &ModelOpts) -> Result<Status> {
    let (ch, _) = load_channel(&o.channel)?;
    let mut r = String::new();
    writeln!(r, "channel {}: m = {}, N = {}, {} coefficients", ch.name(), ch.m(), ch.taps(), ch.field())?;
    for (l, zs) in subchannel_zeros(&ch).iter().enumerate() {
        writeln!(r, "  zeros of subchannel {l}: {}", fmt_zeros(zs))?;
    }
    writeln!(r, "common zeros: {}", fmt_zeros(&common_zeros(&ch, DEFAULT_ZERO_TOL)))?;
    let dec = reducible_decompose(&ch, DEFAULT_ZERO_TOL)?;
    writeln!(
        r,
        "reducible: {} (N_I = {}, N_c = {}, residual {:.2e})",
        if dec.is_reducible() { "yes" } else { "no" },
        dec.n_i(),
        dec.n_c(),
        dec.residual
    )?;
    writeln!(r, "model: {} symbols, {} field, M = {}, sigma_a2 = {}, sigma_v2 = {}", o.model, o.field, o.burst, o.sigma_a2, o.sigma_v2)?;

    let verdict = match (o.model, o.field) {
        (Model::Deterministic, Field::Real) => deterministic_verdict(&ch, &symbols::<f64>(&ch, o)?)?,
        (Model::Deterministic, Field::Complex) => deterministic_verdict(&ch, &symbols::<C<f64>>(&ch, o)?)?,
        (Model::Gaussian, f) => gaussian_verdict(&ch, &gaussian_config(o)?, f, None)?,
        (Model::Generic, _) => bail!("analyze needs the deterministic or gaussian model"),
    };
    let pred = verdict.predicted_nullity.map_or("none".to_string(), |k| k.to_string());
    let up_to = match verdict.identifiable_up_to {
        IdentifiableUpTo::No => "not identifiable".to_string(),
        IdentifiableUpTo::Indeterminate => "undecided by the rules".to_string(),
        IdentifiableUpTo::Full => "identifiable".to_string(),
        other => format!("identifiable up to {other}"),
    };
    writeln!(r, "verdict: {up_to}; predicted nullity {pred}")?;
    for reason in &verdict.reasons {
        writeln!(r, "  - {reason}")?;
    }
    if verdict.depends_on_min_burst {
        writeln!(r, "  - assumes the minimal burst of the irreducible part is N_I")?;
    }

    let fim = full_fim(&ch, o)?;
    let rep = analyze_singularities(&fim, &[], None);
    let gap = rep.regular_gap().map_or("n/a".into(), |g| format!("{g:.2e}"));
    writeln!(
        r,
        "FIM: {0}x{0} real, rank {1}, nullity {2}, regular gap {gap}",
        fim.real_fim().nrows(),
        rep.rank,
        rep.nullity
    )?;
    if o.model == Model::Gaussian && rep.nullity > 0 {
        let s = rep.null_basis.nrows() - 1;
        let weight = rep.null_basis.row(s).norm();
        if weight > 1e-6 {
            writeln!(r, "noise variance: sigma_v2 lies in the FIM null space (component {weight:.3})")?;
        }
    }
    let check = verdict_vs_fim(&verdict, &rep);
    let status = serde_json::to_value(&check.status)?;
    writeln!(r, "consistency: {} ({})", status.as_str().unwrap_or("?"), check.diagnostic)?;
    print!("{r}");
    Ok(if check.passed() { Status::Ok } else { Status::CheckFailed })
}

/// Reads `linear:<file>`: a JSON array of constraint columns, each a list of
/// numbers or `[re, im]` pairs of the stacked channel length.
fn read_linear(path: &str, len: usize) -> Result<(DMatrix<C<f64>>, Vec<u8>)> {
    let src = std::fs::read(path).with_context(|| format!("reading constraint file {path}"))?;
    let cols: Vec<Vec<serde_json::Value>> =
        serde_json::from_slice(&src).with_context(|| format!("{path}: expected an array of columns"))?;
    let mut m = DMatrix::zeros(len, cols.len());
    for (k, col) in cols.iter().enumerate() {
        if col.len() != len {
            bail!("{path}: column {k} has {} entries, channel has {len} coefficients", col.len());
        }
        for (i, v) in col.iter().enumerate() {
            m[(i, k)] = match v {
                serde_json::Value::Number(x) => C::new(x.as_f64().unwrap_or(f64::NAN), 0.0),
                serde_json::Value::Array(p) if p.len() == 2 => {
                    C::new(p[0].as_f64().unwrap_or(f64::NAN), p[1].as_f64().unwrap_or(f64::NAN))
                }
                other => bail!("{path}: column {k}, entry {i}: expected a number or [re, im], got {other}"),
            };
        }
    }
    Ok((m, src))
}

fn constraint_crb(
    spec: &ConstraintSpec,
    j: &DMatrix<f64>,
    ch: &Channel64,
    field: Field,
    manifest: &mut RunManifest,
) -> Result<CrbResult<f64>> {
    let h = ch.h();
    let cs = match spec {
        ConstraintSpec::Minimal => return Ok(minimal_crb(j)?),
        ConstraintSpec::Norm => norm_only_constraint(&h, field)?,
        ConstraintSpec::NormPhase => norm_constraint(&h, field)?,
        ConstraintSpec::Phase => phase_constraint(&h, field)?,
        ConstraintSpec::Known(i) => known_coeff_constraint(h.len(), *i, field)?,
        ConstraintSpec::Linear(path) => {
            let (c, src) = read_linear(path, h.len())?;
            manifest.input(path, &src);
            linear_constraint(&c, field)?
        }
        ConstraintSpec::ReducibleTI | ConstraintSpec::ReducibleProjector => {
            let dec = reducible_decompose(ch, DEFAULT_ZERO_TOL)?;
            let variant = if *spec == ConstraintSpec::ReducibleTI {
                ReducibleVariant::TI
            } else {
                ReducibleVariant::Projector
            };
            reducible_constraints(&dec, field, variant)?
        }
    };
    Ok(constrained_crb(j, &cs)?)
}

/// Per-coefficient variance from the real-representation diagonal.
fn coefficient_variances(res: &CrbResult<f64>, n: usize, field: Field) -> Vec<f64> {
    let d = res.diagonal();
    (0..n).map(|k| if field == Field::Complex { d[k] + d[k + n] } else { d[k] }).collect()
}

fn start_manifest(command: &str, config: &str, o: &ModelOpts, src: &[u8]) -> RunManifest {
    let mut m = RunManifest::new(command, config);
    m.input(&o.channel, src);
    m
}

pub fn crb(o: &ModelOpts, specs: &[ConstraintSpec], output: Option<&Path>) -> Result<Status> {
    let (ch, src) = load_channel(&o.channel)?;
    let mut manifest = start_manifest("crb", &format!("{o:?} {specs:?}"), o, &src);
    let j = channel_fim(&ch, o)?;
    let n = ch.len();
    let mut header = vec!["constraint".to_string(), "trace".into(), "bounded".into()];
    header.extend((1..=n).map(|k| format!("var_h{k}")));
    let mut table = Table::new(header);
    for spec in specs {
        let res = constraint_crb(spec, &j, &ch, o.field, &mut manifest)?;
        let mut row = vec![spec.to_string(), num(res.trace), res.bounded.to_string()];
        if res.bounded {
            row.extend(coefficient_variances(&res, n, o.field).into_iter().map(num));
        } else {
            row.extend(std::iter::repeat_n(String::new(), n));
            manifest.note(format!("unbounded: {spec}{}", res.warning.map(|w| format!(" ({w})")).unwrap_or_default()));
        }
        table.push(row);
    }
    emit(&table.render(&manifest)?, output)?;
    Ok(Status::Ok)
}

pub fn sweep_known(o: &ModelOpts, output: Option<&Path>) -> Result<Status> {
    let (ch, src) = load_channel(&o.channel)?;
    let manifest = start_manifest("sweep-known", &format!("{o:?}"), o, &src);
    let j = channel_fim(&ch, o)?;
    let baseline = minimal_crb(&j)?.trace;
    let h = ch.h();
    let m = ch.m();
    let mut table = Table::new(["index", "subchannel", "tap", "abs_h", "trace_known", "trace_minimal", "bounded"]);
    for k in 0..h.len() {
        let res = constrained_crb(&j, &known_coeff_constraint(h.len(), k + 1, o.field)?)?;
        table.push(vec![
            (k + 1).to_string(),
            (k % m).to_string(),
            (k / m).to_string(),
            num(h[k].norm()),
            num(res.trace),
            num(baseline),
            res.bounded.to_string(),
        ]);
    }
    emit(&table.render(&manifest)?, output)?;
    Ok(Status::Ok)
}

fn score_check<S: FieldScalar<f64>>(
    ch: &Channel64,
    o: &ModelOpts,
    trials: usize,
    analytic_sigma_v2: f64,
) -> Result<(DMatrix<f64>, blindcrb::sim::McFimEstimate<f64>)> {
    let sim = BurstSimulator::<f64, S>::new(ch, o.model, o.burst, o.sigma_a2, o.sigma_v2, o.seed)?;
    let (score_model, analytic) = match o.model {
        Model::Deterministic => {
            let a = sim.fixed_symbols().expect("deterministic model fixes the burst");
            let fim = deterministic_fim(ch, a, analytic_sigma_v2, o.burst)?;
            (ScoreModel::deterministic(ch, a, o.sigma_v2)?, fim.real_fim().clone())
        }
        _ => {
            let cfg = gaussian_config(o)?;
            let wrong = GaussianModelConfig::new(o.sigma_a2, analytic_sigma_v2, o.burst)?;
            let fim = match S::FIELD {
                Field::Real => gaussian_fim_real(ch, &wrong)?,
                Field::Complex => gaussian_fim_complex(ch, &wrong)?,
            };
            (ScoreModel::<f64, S>::gaussian(ch, &cfg)?, fim.real_fim().clone())
        }
    };
    let est = score_covariance_fim(&sim, &score_model, trials)?;
    Ok((analytic, est))
}

pub fn fim_check(o: &ModelOpts, g: &Gates, corrupt: Option<f64>, output: Option<&Path>) -> Result<Status> {
    let (ch, src) = load_channel(&o.channel)?;
    let mut manifest = start_manifest("fim-check", &format!("{o:?} trials={} corrupt={corrupt:?}", g.trials), o, &src);
    if o.model == Model::Generic {
        bail!("fim-check needs the deterministic or gaussian model");
    }
    let analytic_sv2 = o.sigma_v2 * corrupt.unwrap_or(1.0);
    let (j, est) = match o.field {
        Field::Real => score_check::<f64>(&ch, o, g.trials, analytic_sv2)?,
        Field::Complex => score_check::<C<f64>>(&ch, o, g.trials, analytic_sv2)?,
    };
    let z = est.z_scores(&j);
    let trace_err = est.trace_rel_error(&j);
    let max_z = z.iter().fold(0.0f64, |m, v| if v.is_nan() { m } else { m.max(v.abs()) });
    let pass = trace_err < g.trace_tol && max_z < g.z_max;
    manifest.note(format!(
        "result: {} trace_rel_error={} (gate {}) max_abs_z={} (gate {}) trials={}",
        if pass { "PASS" } else { "FAIL" },
        num(trace_err),
        g.trace_tol,
        num(max_z),
        g.z_max,
        g.trials
    ));
    let mut table = Table::new(["row", "col", "analytic", "monte_carlo", "std_error", "z"]);
    for r in 0..j.nrows() {
        for c in r..j.ncols() {
            table.push(vec![
                r.to_string(),
                c.to_string(),
                num(j[(r, c)]),
                num(est.j_hat[(r, c)]),
                num(est.se[(r, c)]),
                num(z[(r, c)]),
            ]);
        }
    }
    emit(&table.render(&manifest)?, output)?;
    eprintln!(
        "fim-check {}: trace relative error {trace_err:.3e}, max |z| {max_z:.2} over {} trials",
        if pass { "passed" } else { "FAILED" },
        g.trials
    );
    Ok(if pass { Status::Ok } else { Status::CheckFailed })
}

pub fn mse(config: &Path, seed: Option<u64>, output: Option<&Path>) -> Result<Status> {
    let src = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = ExperimentConfig::parse(&src).with_context(|| format!("in {}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let ch: Channel64 = cfg.load_channel(config.parent())?;
    let canonical = serde_json::to_string(&cfg)?;
    let mut manifest = RunManifest::new("mse", &canonical);
    manifest.input(&config.display().to_string(), src.as_bytes());
    manifest.note(format!("config: {canonical}"));
    let report = mse_vs_crb_experiment(&cfg, &ch)?;
    for w in &report.warnings {
        manifest.note(format!("warning: {w}"));
    }
    let mut table = Table::new([
        "snr_db",
        "sigma_v2",
        "rule",
        "mse",
        "mse_se",
        "crb_trace",
        "mse_over_crb",
        "trials",
        "nonconverged",
        "degenerate",
    ]);
    for r in &report.rows {
        table.push(vec![
            num(r.snr_db),
            num(r.sigma_v2),
            r.rule.to_string(),
            num(r.mse),
            num(r.mse_se),
            num(r.crb_trace),
            num(r.mse / r.crb_trace),
            r.trials.to_string(),
            r.nonconverged.to_string(),
            r.degenerate.to_string(),
        ]);
    }
    emit(&table.render(&manifest)?, output)?;
    Ok(Status::Ok)
}
