use std::path::Path;

use anyhow::{bail, Context, Result};
use markov_hoeffding::bounds::{
    bound_report, half_width, log_bound, sample_size, BoundForm, BoundSpec, ChainParams, InitialBias, Tail,
};
use markov_hoeffding::oracle::{run_suite, InstanceFailure};
use markov_hoeffding::simulate::{
    append_csv, run_tail_experiment, shipped_experiments, BaseSampler, ChainConfig, FSpec, TailExperiment, TailResult,
};
use markov_hoeffding::spectral::{reversible_rho, spectral_norm_gap, stationary, ChainFile, FiniteKernel};
use markov_hoeffding::{Error, ErrorClass};
use serde::Serialize;

use crate::args::{
    BiasArgs, BoundArgs, ChainKind, FKind, FormArg, GapArgs, InvertEpsArgs, InvertNArgs, SimulateArgs, VerifyArgs,
};
use crate::{class_code, Outcome};

fn bias(args: &BiasArgs) -> Result<Option<InitialBias>> {
    match args.p {
        None => Ok(None),
        Some(p) => Ok(Some(InitialBias::new(p, args.nu_norm.unwrap_or(1.0))?)),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x}"))
}

#[derive(Debug, Serialize)]
struct BoundOutput {
    mu: f64,
    lambda: f64,
    eps: f64,
    n: u64,
    tail: Tail,
    p: Option<f64>,
    nu_norm: Option<f64>,
    log_bound_sharp: Option<f64>,
    log_bound_loose: Option<f64>,
    bound_sharp: Option<f64>,
    bound_loose: Option<f64>,
    t_star: Option<f64>,
    theta_star: Option<f64>,
    delta: Option<f64>,
    boundary_limit: bool,
    degenerate_mean: bool,
}

pub fn bound(a: &BoundArgs, json: bool) -> Result<Outcome> {
    let params = ChainParams::new(a.chain.mu, a.chain.lambda)?;
    let bias = bias(&a.bias)?;
    let tail: Tail = a.tail.into();
    let want_sharp = a.form != FormArg::Loose;
    let want_loose = a.form != FormArg::Sharp;

    let mut degenerate_mean = false;
    let log_bound_sharp = if want_sharp {
        match log_bound(&params, a.eps, a.n, &BoundSpec::new(BoundForm::Sharp, tail, bias)) {
            Ok(v) => Some(v),
            Err(Error::DegenerateMean { .. }) if a.allow_degenerate => {
                degenerate_mean = true;
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    let log_bound_loose = if want_loose || degenerate_mean {
        Some(log_bound(&params, a.eps, a.n, &BoundSpec::new(BoundForm::Loose, tail, bias))?)
    } else {
        None
    };

    // optimiser diagnostics exist for one-sided tails with an interior mean
    let one_sided = match tail {
        Tail::Upper => Some(params),
        Tail::Lower => Some(params.reflected()),
        Tail::TwoSided => None,
    };
    let report = match one_sided {
        Some(p) if want_sharp && !degenerate_mean => Some(bound_report(&p, a.eps, a.n, false)?),
        _ => None,
    };

    let out = BoundOutput {
        mu: params.mu(),
        lambda: params.lambda(),
        eps: a.eps,
        n: a.n,
        tail,
        p: bias.map(|b| b.p()),
        nu_norm: bias.map(|b| b.nu_norm()),
        log_bound_sharp,
        log_bound_loose,
        bound_sharp: log_bound_sharp.map(f64::exp),
        bound_loose: log_bound_loose.map(f64::exp),
        t_star: report.as_ref().and_then(|r| r.t_star),
        theta_star: report.as_ref().and_then(|r| r.theta_star),
        delta: report.as_ref().and_then(|r| r.delta),
        boundary_limit: report.as_ref().is_some_and(|r| r.boundary_limit),
        degenerate_mean,
    };
    if json {
        print_json(&out)?;
    } else {
        if let Some(v) = out.log_bound_sharp {
            println!("log_bound_sharp {v}");
            println!("bound_sharp     {:e}", v.exp());
        }
        if let Some(v) = out.log_bound_loose {
            println!("log_bound_loose {v}");
            println!("bound_loose     {:e}", v.exp());
        }
        if report.is_some() {
            println!("t_star          {}", fmt_opt(out.t_star));
            println!("theta_star      {}", fmt_opt(out.theta_star));
            println!("delta           {}", fmt_opt(out.delta));
        }
        if out.boundary_limit {
            println!("note: eps = 1 - mu, the sharp value is the limit as t -> infinity");
        }
        if degenerate_mean {
            println!("note: mu is 0 or 1, only the loose bound applies");
        }
    }
    Ok(Outcome::Success)
}

pub fn invert_n(a: &InvertNArgs, json: bool) -> Result<Outcome> {
    let params = ChainParams::new(a.chain.mu, a.chain.lambda)?;
    let spec = BoundSpec::new(a.form.into(), a.tail.into(), bias(&a.bias)?);
    let n = sample_size(&params, a.eps, a.delta, &spec)?;
    if json {
        print_json(&serde_json::json!({
            "mu": params.mu(), "lambda": params.lambda(), "eps": a.eps, "delta": a.delta,
            "tail": spec.tail, "form": spec.form, "n": n,
        }))?;
    } else {
        println!("{n}");
    }
    Ok(Outcome::Success)
}

pub fn invert_eps(a: &InvertEpsArgs, json: bool) -> Result<Outcome> {
    let params = ChainParams::new(a.chain.mu, a.chain.lambda)?;
    let spec = BoundSpec::new(a.form.into(), a.tail.into(), bias(&a.bias)?);
    let hw = half_width(&params, a.n, a.delta, &spec)?;
    if json {
        print_json(&serde_json::json!({
            "mu": params.mu(), "lambda": params.lambda(), "n": a.n, "delta": a.delta,
            "tail": spec.tail, "form": spec.form, "eps": hw.epsilon, "saturated": hw.saturated,
        }))?;
    } else {
        println!("{}", hw.epsilon);
        if hw.saturated {
            eprintln!("note: no feasible eps reaches delta; reporting the largest feasible deviation");
        }
    }
    Ok(Outcome::Success)
}

fn read_chain(path: &Path) -> Result<ChainFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ChainFile = serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(file)
}

#[derive(Debug, Serialize)]
struct GapOutput {
    n_states: usize,
    pi: Vec<f64>,
    lambda: f64,
    assumption_violated: bool,
    rho: Option<f64>,
    lambda_vb: Option<f64>,
}

pub fn gap(a: &GapArgs, json: bool) -> Result<Outcome> {
    let kernel = FiniteKernel::from_file(read_chain(&a.chain)?)?;
    let pi = stationary(&kernel)?;
    let gap = spectral_norm_gap(&kernel, &pi)?;
    let rev = if a.reversible {
        Some(reversible_rho(&kernel, &pi)?)
    } else {
        None
    };
    let out = GapOutput {
        n_states: kernel.n_states(),
        pi: pi.as_slice().to_vec(),
        lambda: gap.lambda,
        assumption_violated: gap.assumption_violated,
        rho: rev.map(|r| r.rho),
        lambda_vb: rev.map(|r| r.lambda_vb),
    };
    if json {
        print_json(&out)?;
    } else {
        let pis: Vec<String> = out.pi.iter().map(|v| v.to_string()).collect();
        println!("pi     [{}]", pis.join(", "));
        println!("lambda {}", out.lambda);
        if let (Some(rho), Some(lvb)) = (out.rho, out.lambda_vb) {
            println!("rho    {rho}");
            println!("max(0, rho) {lvb}");
        }
    }
    if gap.assumption_violated && !a.allow_violation {
        return Err(Error::AssumptionViolated { lambda: gap.lambda }.into());
    }
    Ok(Outcome::Success)
}

pub fn verify(a: &VerifyArgs) -> Result<Outcome> {
    let outcome = run_suite(a.suite, a.seed, a.instances);
    for r in &outcome.records {
        print_json(r)?;
    }
    for f in &outcome.failures {
        eprintln!("{}", serde_json::to_string(f)?);
    }
    eprintln!(
        "verify {}: {} passed, {} failed, {} instance errors",
        a.suite,
        outcome.passed(),
        outcome.failed(),
        outcome.failures.len()
    );
    if outcome.has_numerical_failure() {
        std::process::exit(class_code(ErrorClass::Numerical) as i32);
    }
    if outcome.failed() > 0 {
        return Ok(Outcome::Falsified);
    }
    if let Some(InstanceFailure { class, .. }) = outcome.failures.first() {
        std::process::exit(class_code(*class) as i32);
    }
    Ok(Outcome::Success)
}

fn inline_experiment(a: &SimulateArgs) -> Result<TailExperiment> {
    let Some(kind) = a.chain else {
        bail!("simulate needs --config, --shipped or --chain");
    };
    let (Some(n), Some(epsilon)) = (a.n, a.eps) else {
        bail!("--n and --eps are required with --chain");
    };
    let continuous_f = || -> Result<FSpec> {
        match a.f {
            Some(FKind::IndicatorPositive) => Ok(FSpec::IndicatorPositive),
            Some(FKind::AffineClamp) => Ok(FSpec::AffineClamp {
                a: a.a.unwrap_or(0.0),
                b: a.b.unwrap_or(1.0),
            }),
            None => bail!("--f is required for doeblin and ar1 chains"),
        }
    };
    let (chain, f_spec) = match kind {
        ChainKind::Finite => {
            let Some(path) = &a.chain_file else {
                bail!("--chain finite needs --chain-file");
            };
            if a.f.is_some() {
                bail!("finite chains take f from the chain file");
            }
            let file = read_chain(path)?;
            (ChainConfig::Finite { p: file.p }, FSpec::Vector { values: file.f })
        }
        ChainKind::Doeblin => {
            let Some(lambda) = a.lambda else {
                bail!("--chain doeblin needs --lambda");
            };
            let base = BaseSampler::from_id(a.base.as_deref().unwrap_or("uniform"))?;
            (ChainConfig::Doeblin { lambda, base }, continuous_f()?)
        }
        ChainKind::Ar1 => {
            let Some(rho) = a.rho else {
                bail!("--chain ar1 needs --rho");
            };
            (ChainConfig::Ar1 { rho }, continuous_f()?)
        }
    };
    Ok(TailExperiment {
        chain,
        f_spec,
        n,
        epsilon,
        replicates: a.replicates,
        seed: a.seed,
        estimate_mu: a.estimate_mu,
    })
}

fn read_experiments(path: &Path) -> Result<Vec<TailExperiment>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
    let list = if value.is_array() {
        serde_json::from_value(value).map_err(Error::from)?
    } else {
        vec![serde_json::from_value(value).map_err(Error::from)?]
    };
    Ok(list)
}

fn describe(r: &TailResult) -> String {
    format!(
        "{} f={} n={} eps={} mu={} lambda={} R={} p_hat={:e} ci=[{:e}, {:e}] bound_sharp={:e} bound_loose={:e} violation={}",
        r.chain,
        r.f_spec,
        r.n,
        r.epsilon,
        r.mu,
        r.lambda,
        r.replicates,
        r.p_hat,
        r.ci_low,
        r.ci_high,
        r.bound_sharp,
        r.bound_loose,
        r.violation
    )
}

pub fn simulate(a: &SimulateArgs, json: bool) -> Result<Outcome> {
    let experiments = if let Some(path) = &a.config {
        read_experiments(path)?
    } else if a.shipped {
        shipped_experiments(a.replicates, a.seed)
    } else {
        vec![inline_experiment(a)?]
    };
    let mut results = Vec::with_capacity(experiments.len());
    for exp in &experiments {
        let r = run_tail_experiment(exp)?;
        for w in &r.warnings {
            eprintln!("warning: {w}");
        }
        if json {
            print_json(&r)?;
        } else {
            println!("{}", describe(&r));
        }
        results.push(r);
    }
    if let Some(path) = &a.csv {
        append_csv(path, &results)?;
    }
    let violations = results.iter().filter(|r| r.violation).count();
    if violations > 0 {
        eprintln!("{violations} of {} experiments violate the sharp bound", results.len());
        return Ok(Outcome::Falsified);
    }
    Ok(Outcome::Success)
}
